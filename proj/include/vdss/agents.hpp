#pragma once

// Deterministic scripted implementations of every agent role. Each is a pure
// function of its request and the rule tables in config/agents.json.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdss/contracts.hpp"
#include "vdss/registry.hpp"
#include "vdss/waveform.hpp"

namespace vdss {

struct DetectionCondition {
    enum class Op { lt, le, gt, ge, present };
    std::string field;  // "state.spo2", "settings.fio2", "cues.sawtooth", "derived.tidal_volume_per_kg"
    Op op = Op::lt;
    double value = 0.0;
};

struct DetectionRule {
    AbnormalityCode code{};
    Severity severity = Severity::none;
    std::vector<DetectionCondition> all;
};

struct PlanTemplate {
    std::map<Param, double> steps;
    std::vector<Category> tags;
};

struct AgentConfig {
    std::vector<std::string> required_fields;
    int max_missing_required = 2;
    std::vector<DetectionRule> rules;  // per code, most severe first

    double weaning_max_fio2 = 40;
    double weaning_max_peep = 8;

    std::array<Goal, enum_count<AbnormalityCode>()> goal_by_abnormality{};
    std::array<Priority, enum_count<Goal>()> priority_by_goal{};
    std::vector<Priority> fallback_order;
    std::array<std::vector<ModeId>, enum_count<Priority>()> preferred_modes;
    std::array<std::vector<PlanTemplate>, enum_count<Goal>()> templates;

    std::array<ResumeStage, enum_count<ReasonCategory>()> routes{};
    double step_fraction = 0.5;

    CueThresholds cue_thresholds;
    int max_setting_updates = 3;

    static AgentConfig from_json(const nlohmann::json& j);
    static AgentConfig load(const std::filesystem::path& config_dir);
};

StateSummary scripted_detection(const AgentConfig& cfg, const DetectionRequest& req);
PhaseGoals scripted_phase_goals(const AgentConfig& cfg, const PhaseRequest& req);

/// adjust iff some abnormality is at least moderate and evidence is sufficient.
BranchDecision gate_decision(const StateSummary& summary, const PhaseGoals& goals);

/// Throws FeasibilityExhausted when every priority is forbidden.
StrategyChoice scripted_strategy(const AgentConfig& cfg, const StrategyRequest& req);
ModeDecision scripted_mode_select(const AgentConfig& cfg, const ModeRegistry& registry, const ModeRequest& req);

/// Candidate proposals ranked by preference. Throws FeasibilityExhausted when
/// no template yields a feasible, non-trivial update.
std::vector<Proposal> scripted_parameter_plan(const AgentConfig& cfg, const ModeRegistry& registry,
                                              const PlanRequest& req);

/// Maps a rejection to the stage to resume and the constraints to add.
/// Throws ContractError for accept feedback.
RevisionDirective reflect_route(const AgentConfig& cfg, const ModeRegistry& registry, const ReflectRequest& req);

/// Note s_t and preference signal p_t for a resolved cycle.
NoteOutput close_cycle(const CycleRecord& record);
std::string render_note(const CycleRecord& record);
PreferenceSignal preference_signal_for(const CycleRecord& record);

/// Whether the proposal honors every accumulated revision constraint.
bool satisfies(const Proposal& proposal, const std::vector<Constraint>& constraints,
               const VentilatorSettings& current);

std::string describe(const Constraint& c);

}  // namespace vdss
