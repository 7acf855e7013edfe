#pragma once

// JSON wire encoding and closed-schema validation for every contract type.
//
// Decoding is total: it never throws on bad input and reports each problem as
// a FieldError with a dotted path ("trace[2].proposal.setting_updates").
// Unknown object keys are errors; contracts are closed.

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vdss/contracts.hpp"

namespace vdss {

using nlohmann::json;

class ModeRegistry;

struct ValidationContext {
    const ModeRegistry* registry = nullptr;  // enables mode/bounds/applicability checks
    int max_setting_updates = 3;             // proposal compactness bound
    int k_max = 0;                           // when > 0, bounds CycleRecord rounds
};

struct FieldError {
    enum class Code { unknown_schema, type_mismatch, missing, unknown_field, invariant };
    Code code = Code::invariant;
    std::string path;
    std::string expected;
    std::string found;

    std::string to_string() const;
};

template <class T>
struct Validated {
    std::optional<T> value;
    std::vector<FieldError> errors;

    bool ok() const { return value.has_value(); }
};

/// Decodes and validates `j` as T.
template <class T>
Validated<T> decode(const json& j, const ValidationContext& ctx = {});

[[noreturn]] void throw_contract_error(const std::string& msg);

/// Decodes or throws ContractError listing every field error.
template <class T>
T decode_or_throw(const json& j, const ValidationContext& ctx = {}) {
    auto v = decode<T>(j, ctx);
    if (!v.ok()) {
        std::string msg = "contract violation:";
        for (const auto& e : v.errors) msg += " " + e.to_string() + ";";
        throw_contract_error(msg);
    }
    return std::move(*v.value);
}

// Encoders (ADL hooks for nlohmann::json).
void to_json(json& j, const PatientState& v);
void to_json(json& j, const VentilatorSettings& v);
void to_json(json& j, const WaveformCues& v);
void to_json(json& j, const Abnormality& v);
void to_json(json& j, const StateSummary& v);
void to_json(json& j, const PhaseGoals& v);
void to_json(json& j, const BranchDecision& v);
void to_json(json& j, const StrategyChoice& v);
void to_json(json& j, const ModeDecision& v);
void to_json(json& j, const Proposal& v);
void to_json(json& j, const ClinicianFeedback& v);
void to_json(json& j, const Constraint& v);
void to_json(json& j, const RevisionDirective& v);
void to_json(json& j, const Violation& v);
void to_json(json& j, const SafetyReport& v);
void to_json(json& j, const PreferenceSignal& v);
void to_json(json& j, const CategoryScores& v);
void to_json(json& j, const CycleContext& v);
void to_json(json& j, const TraceEntry& v);
void to_json(json& j, const CycleEvidence& v);
void to_json(json& j, const CycleRecord& v);
void to_json(json& j, const WaveformSegment& v);
void to_json(json& j, const WaveformRequest& v);
void to_json(json& j, const DetectionRequest& v);
void to_json(json& j, const PhaseRequest& v);
void to_json(json& j, const GateRequest& v);
void to_json(json& j, const StrategyRequest& v);
void to_json(json& j, const ModeRequest& v);
void to_json(json& j, const PlanRequest& v);
void to_json(json& j, const CandidateSet& v);
void to_json(json& j, const ReflectRequest& v);
void to_json(json& j, const NoteRequest& v);
void to_json(json& j, const NoteOutput& v);

template <class T>
json encode(const T& v) {
    json j;
    to_json(j, v);
    return j;
}

using Message = std::variant<PatientState, VentilatorSettings, WaveformCues, StateSummary, PhaseGoals,
                             BranchDecision, StrategyChoice, ModeDecision, Proposal, ClinicianFeedback,
                             RevisionDirective, SafetyReport, PreferenceSignal, CategoryScores, CycleContext,
                             CycleRecord, WaveformRequest, DetectionRequest, PhaseRequest, GateRequest,
                             StrategyRequest, ModeRequest, PlanRequest, CandidateSet, ReflectRequest,
                             NoteRequest, NoteOutput>;

/// Registered schema ids: one per domain type ("proposal", "cycle_record", ...)
/// plus "<role>.input" / "<role>.output" for each agent role.
const std::vector<std::string>& schema_ids();
std::string input_schema(AgentRole role);
std::string output_schema(AgentRole role);

/// Validates an untyped payload against a registered schema. Unknown schema
/// ids yield a single FieldError with code unknown_schema.
Validated<Message> validate_message(std::string_view schema_id, const json& payload,
                                    const ValidationContext& ctx = {});

}  // namespace vdss
