#pragma once

// One adjustment cycle as a resumable state machine:
//   waveform -> detection -> phase/goals -> gate
//   -> (strategy -> mode -> plan -> safety -> review)* -> closure
// A rejection is routed by the reflect agent to the minimal stage to revisit;
// upstream outputs are reused.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdss/agent_runtime.hpp"
#include "vdss/bandit.hpp"
#include "vdss/contracts.hpp"
#include "vdss/memory_store.hpp"
#include "vdss/registry.hpp"

namespace vdss {

struct EngineConfig {
    int k_max = 5;
    bool enable_waveform = true;
    bool enable_preference = true;
    std::uint64_t seed = 0;
    int max_internal_replans = 4;  // safety-driven replans per round; never shown to the clinician
    std::size_t context_notes = 3;

    void validate() const;
    static EngineConfig from_json(const nlohmann::json& j);
    static EngineConfig load(const std::filesystem::path& config_dir);
};

/// Everything a cycle needs from the encounter.
struct CycleInput {
    std::string encounter_id;
    std::string clinician_id;
    std::string cycle_id;
    PatientState state;
    VentilatorSettings settings;
    std::optional<WaveformSegment> waveform;  // overrides state.waveform_ref when set
};

struct PendingReview {
    std::string cycle_id;
    int round = 0;
    int k_max = 0;
    Proposal proposal;
    SafetyReport safety;
    VentilatorSettings current_settings;
    std::vector<std::pair<Category, double>> top_preferences;  // top 3 by score
    std::vector<std::string> evidence_refs;

    nlohmann::json to_json() const;
};

class Engine;

class CycleSession {
public:
    CycleSession(Engine& engine, CycleInput input);

    /// Runs until a review is pending or the cycle resolves. Idempotent while
    /// a review is pending. Throws PersistenceError if closure could not be
    /// written (the cycle then leaves no trace in memory).
    void advance();

    const PendingReview* pending() const { return pending_ ? &*pending_ : nullptr; }
    /// Records the clinician's decision on the pending round. Throws
    /// ContractError when nothing is pending or the feedback is invalid.
    void submit(const ClinicianFeedback& feedback);

    bool done() const { return done_; }
    const CycleRecord& record() const { return record_; }
    const std::vector<Constraint>& constraints() const { return constraints_; }

private:
    void prepare();
    void plan_round();
    void resolve(CycleStatus status);
    void fail(const std::string& why);

    Engine& engine_;
    CycleInput input_;
    CycleRecord record_;
    PreferenceState pref_;
    CategoryScores scores_;
    FeatureVector x_{};
    bool prepared_ = false;
    bool done_ = false;

    std::optional<WaveformSegment> segment_;
    std::optional<StrategyChoice> strategy_;
    std::optional<ModeDecision> mode_;
    std::vector<Constraint> constraints_;
    std::vector<Proposal> rejected_;
    std::optional<PendingReview> pending_;
    std::optional<ResumeStage> resume_;  // nullopt: nothing cached yet
    bool feedback_unprocessed_ = false;
};

using Reviewer = std::function<ClinicianFeedback(const PendingReview&)>;

class Engine {
public:
    Engine(const ModeRegistry& registry, AgentRuntime& runtime, BanditConfig bandit, EngineConfig config,
           MemoryStore& memory);

    CycleSession start(CycleInput input) { return CycleSession(*this, std::move(input)); }
    /// Synchronous driver: answers every review with `reviewer`.
    CycleRecord run_cycle(CycleInput input, const Reviewer& reviewer);

    const ModeRegistry& registry() const { return registry_; }
    AgentRuntime& runtime() { return runtime_; }
    const BanditConfig& bandit() const { return bandit_; }
    const EngineConfig& config() const { return config_; }
    MemoryStore& memory() { return memory_; }

    /// Resolves a waveform reference to samples; defaults to the synthetic
    /// generator's reference format.
    std::function<std::optional<WaveformSegment>(const std::string&)> waveform_source;

private:
    const ModeRegistry& registry_;
    AgentRuntime& runtime_;
    BanditConfig bandit_;
    EngineConfig config_;
    MemoryStore& memory_;
};

/// Deterministic cycle id within an encounter: "<encounter>-c<n>".
std::string make_cycle_id(const std::string& encounter_id, std::uint64_t n);

/// Turns safety violations into constraints for an internal replan.
std::vector<Constraint> constraints_from_violations(const SafetyReport& report, const Proposal& proposal,
                                                    const VentilatorSettings& current, const ModeRegistry& registry);

}  // namespace vdss
