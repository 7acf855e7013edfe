#pragma once

// Simulated-clinician regret studies and their ablation variants.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vdss/agent_runtime.hpp"
#include "vdss/agents.hpp"
#include "vdss/bandit.hpp"
#include "vdss/clinician_sim.hpp"
#include "vdss/memory_store.hpp"
#include "vdss/registry.hpp"
#include "vdss/workflow.hpp"

namespace vdss {

enum class Variant { full, nopref, noimg, both };
VDSS_ENUM_NAMES(Variant, "full", "nopref", "noimg", "both");

struct RegretPoint {
    int cycle_index = 0;  // 1-based
    std::string cycle_id;
    CycleStatus status = CycleStatus::hold;
    std::optional<int> regret;  // nullopt for failed cycles
    double rolling_mean_10 = 0.0;  // over the last ten scored cycles
};

struct RegretSeries {
    Variant variant = Variant::full;
    std::uint64_t seed = 0;
    std::vector<RegretPoint> points;

    /// Mean regret over cycles [first, last] (1-based, inclusive), skipping
    /// failed cycles; 0 when none are scored.
    double window_mean(int first, int last) const;
    /// cycle_index,regret,rolling_mean_10 with a header; failed cycles leave
    /// the regret cell empty.
    std::string to_csv() const;
};

/// Trailing mean over up to `window` scored values, one entry per point.
std::vector<double> rolling_mean(const std::vector<std::optional<int>>& regrets, std::size_t window = 10);

/// The bedside situation for cycle `index` of a study seeded with `seed`.
CycleInput study_scenario(std::uint64_t seed, int index, const std::string& clinician_id);

struct StudyOptions {
    int n_cycles = 100;
    std::uint64_t seed = 7;
    Variant variant = Variant::full;
    ClinicianProfile profile = ClinicianProfile::default_profile();
    EngineConfig engine;  // waveform/preference switches come from the variant
    double fault_rate = 0.0;
    RetryPolicy retry;
};

/// Runs the study against `store` (a fresh in-memory log when null).
RegretSeries run_regret_study(const StudyOptions& options, const ModeRegistry& registry, const AgentConfig& agents,
                              const BanditConfig& bandit, MemoryStore* store = nullptr);

/// Regret series for a clinician as recorded in the log, in log order.
RegretSeries regret_from_log(const MemoryStore& store, const std::string& clinician_id, int k_max);

}  // namespace vdss
