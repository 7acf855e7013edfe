#pragma once

// Domain types exchanged between agents, the engine, memory and the service.
// All are plain values; JSON encoding and closed-schema validation live in
// contracts_json.hpp.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vdss/enums.hpp"

namespace vdss {

using ModeId = std::string;

/// Length of the preference context vector x_t.
inline constexpr std::size_t kFeatureDim = 12;

/// Bedside measurements (state variables). Physiological fields are optional
/// because real records are frequently incomplete.
struct PatientState {
    double timestamp = 0.0;
    std::optional<double> spo2;
    std::optional<double> heart_rate;
    std::optional<double> map;
    std::optional<double> ph;
    std::optional<double> paco2;
    std::optional<double> pao2;
    std::optional<double> tidal_volume_obs;
    std::optional<double> resp_rate_obs;
    std::optional<double> weight_kg;
    std::optional<std::string> waveform_ref;

    /// Lookup by wire name ("spo2", "ph", ...). Unknown names yield nullopt.
    std::optional<double> field(std::string_view name) const;
    static const std::vector<std::string_view>& numeric_fields();

    bool operator==(const PatientState&) const = default;
};

/// Action variables: a mode plus the numeric settings applicable to it.
struct VentilatorSettings {
    ModeId mode;
    std::array<std::optional<double>, kParamCount> values{};

    std::optional<double> get(Param p) const { return values[index_of(p)]; }
    void set(Param p, double v) { values[index_of(p)] = v; }
    void clear(Param p) { values[index_of(p)].reset(); }
    bool has(Param p) const { return values[index_of(p)].has_value(); }

    bool operator==(const VentilatorSettings&) const = default;
};

struct WaveformCues {
    CueQuality quality = CueQuality::good;
    std::vector<Pattern> asynchrony_patterns{Pattern::none};  // sorted, unique
    std::vector<std::string> suspicious_events;
    std::string observed_state;
    double uncertainty = 0.0;

    bool has(Pattern p) const;
    bool operator==(const WaveformCues&) const = default;
};

struct Abnormality {
    AbnormalityCode code{};
    Severity severity = Severity::none;
    std::vector<std::string> evidence;  // "state.spo2", "settings.fio2", "cues.sawtooth"

    bool operator==(const Abnormality&) const = default;
};

struct StateSummary {
    std::vector<Abnormality> abnormalities;
    bool evidence_sufficient = true;
    std::string narrative;

    Severity max_severity() const;
    bool operator==(const StateSummary&) const = default;
};

struct PhaseGoals {
    Phase phase = Phase::stabilization;
    Goal primary_goal = Goal::maintain_stability;
    std::vector<Goal> secondary_goals;

    bool operator==(const PhaseGoals&) const = default;
};

struct BranchDecision {
    Branch branch = Branch::hold;
    std::string reason;

    bool operator==(const BranchDecision&) const = default;
};

struct StrategyChoice {
    Priority strategy = Priority::oxygenation;
    std::string rationale;

    bool operator==(const StrategyChoice&) const = default;
};

struct ModeDecision {
    std::optional<ModeId> mode_change;
    std::string rationale;

    bool operator==(const ModeDecision&) const = default;
};

/// One round's executable recommendation.
struct Proposal {
    std::string cycle_id;
    int round_index = 1;
    Priority strategy = Priority::oxygenation;
    std::optional<ModeId> mode_change;
    std::map<Param, double> setting_updates;
    std::vector<Category> category_tags;  // sorted, unique
    std::string rationale;

    bool operator==(const Proposal&) const = default;
};

struct ClinicianFeedback {
    Decision decision = Decision::accept;
    std::optional<ReasonCategory> reason_category;
    std::vector<Param> disputed_parameters;
    std::string rationale;

    bool operator==(const ClinicianFeedback&) const = default;
};

/// Structured revision constraint produced from a rejection.
struct Constraint {
    ConstraintKind kind = ConstraintKind::forbid_param;
    std::optional<Param> param;
    std::optional<double> value;
    std::optional<ModeId> mode;
    std::optional<Priority> strategy;

    bool operator==(const Constraint&) const = default;
};

struct RevisionDirective {
    ResumeStage resume_stage = ResumeStage::parameter_plan;
    std::vector<Constraint> constraints;
    std::string rationale;

    bool operator==(const RevisionDirective&) const = default;
};

struct Violation {
    std::string check_id;
    std::optional<Param> parameter;
    std::optional<double> limit;
    std::optional<double> proposed_value;

    bool operator==(const Violation&) const = default;
};

struct SafetyReport {
    std::vector<Violation> violations;
    std::vector<std::string> warnings;

    bool pass() const { return violations.empty(); }
    bool operator==(const SafetyReport&) const = default;
};

struct PreferenceSignal {
    std::vector<Category> evidenced_by_accept;       // sorted, unique
    std::vector<Category> evidenced_only_by_reject;  // sorted, unique, disjoint from the above

    bool operator==(const PreferenceSignal&) const = default;
};

/// Per-arm preference context handed to planning agents.
struct CategoryScores {
    std::array<double, kArmCount> score{};
    std::array<double, kArmCount> mean{};
    std::array<double, kArmCount> uncertainty{};

    double of(Category c) const { return score[index_of(c)]; }
    bool operator==(const CategoryScores&) const = default;
};

struct CycleContext {
    PatientState current_state;
    VentilatorSettings current_settings;
    std::vector<std::string> short_term;
    std::vector<std::uint64_t> long_term_refs;
    std::vector<double> feature_vector;

    bool operator==(const CycleContext&) const = default;
};

struct TraceEntry {
    Proposal proposal;
    ClinicianFeedback feedback;
    SafetyReport safety;

    bool operator==(const TraceEntry&) const = default;
};

/// Intermediate agent outputs retained for the evidence trail.
struct CycleEvidence {
    std::optional<WaveformCues> cues;
    std::optional<StateSummary> summary;
    std::optional<PhaseGoals> goals;
    std::optional<BranchDecision> branch;
    std::vector<StrategyChoice> strategies;
    std::vector<ModeDecision> modes;
    std::vector<RevisionDirective> directives;
    std::vector<WaveformCues> refreshed_cues;
    std::optional<std::string> failure;

    bool operator==(const CycleEvidence&) const = default;
};

struct CycleRecord {
    std::string cycle_id;
    std::string clinician_id;
    std::string encounter_id;
    double timestamp = 0.0;
    CycleContext context;
    std::vector<TraceEntry> trace;
    int rounds = 0;
    std::optional<VentilatorSettings> accepted_settings;
    std::string note;
    PreferenceSignal preference_signal;
    CycleStatus status = CycleStatus::hold;
    CycleEvidence evidence;
    bool bandit_updated = false;

    bool operator==(const CycleRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Agent request/response envelopes.

/// Fixed-rate pressure/flow series. Missing samples are NaN (null on the wire).
struct WaveformSegment {
    double sample_rate_hz = 50.0;
    std::vector<double> pressure;
    std::vector<double> flow;
};

struct WaveformRequest {
    WaveformSegment segment;
};

struct DetectionRequest {
    PatientState state;
    VentilatorSettings settings;
    std::optional<WaveformCues> cues;

    bool operator==(const DetectionRequest&) const = default;
};

struct PhaseRequest {
    StateSummary summary;
    VentilatorSettings settings;

    bool operator==(const PhaseRequest&) const = default;
};

struct GateRequest {
    StateSummary summary;
    PhaseGoals goals;

    bool operator==(const GateRequest&) const = default;
};

struct StrategyRequest {
    StateSummary summary;
    PhaseGoals goals;
    std::vector<Constraint> constraints;

    bool operator==(const StrategyRequest&) const = default;
};

struct ModeRequest {
    Priority strategy = Priority::oxygenation;
    PhaseGoals goals;
    VentilatorSettings settings;
    std::vector<Constraint> constraints;
    CategoryScores preference;

    bool operator==(const ModeRequest&) const = default;
};

struct PlanRequest {
    std::string cycle_id;
    int round_index = 1;
    Priority strategy = Priority::oxygenation;
    PhaseGoals goals;
    ModeDecision mode;
    VentilatorSettings settings;
    CategoryScores preference;
    std::vector<Constraint> constraints;
    std::vector<Proposal> rejected;

    bool operator==(const PlanRequest&) const = default;
};

struct CandidateSet {
    std::vector<Proposal> candidates;

    bool operator==(const CandidateSet&) const = default;
};

struct ReflectRequest {
    ClinicianFeedback feedback;
    Proposal rejected;
    VentilatorSettings settings;

    bool operator==(const ReflectRequest&) const = default;
};

struct NoteRequest {
    CycleRecord record;

    bool operator==(const NoteRequest&) const = default;
};

struct NoteOutput {
    std::string note;
    PreferenceSignal signal;

    bool operator==(const NoteOutput&) const = default;
};

// ---------------------------------------------------------------------------

/// Sorts and deduplicates a tag or pattern list in place.
template <class E>
void normalize_set(std::vector<E>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

bool is_disjoint(const PreferenceSignal& s);

}  // namespace vdss
