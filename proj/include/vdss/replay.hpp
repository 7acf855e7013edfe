#pragma once

// Retrospective replay: trajectory ingestion, the synthetic (non-clinical)
// cohort generator, and next-step setting prediction metrics.

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
#include "vdss/agents.hpp"
#include "vdss/bandit.hpp"
#include "vdss/contracts.hpp"
#include "vdss/registry.hpp"
#include "vdss/workflow.hpp"

namespace vdss {

struct TrajectoryRecord {
    PatientState state;
    VentilatorSettings settings;
};

struct Encounter {
    std::string id;
    std::vector<TrajectoryRecord> records;  // time-ordered
};

struct ParamStats {
    double mean = 0.0;
    double std = 1.0;  // population std, > 0
    std::size_t n = 0;
};

struct TrajectoryDataset {
    std::vector<Encounter> encounters;
    std::array<std::optional<ParamStats>, kParamCount> stats;  // nullopt: parameter never recorded
    std::size_t skipped_rows = 0;
    std::vector<std::size_t> skipped_lines;  // 1-based
    std::vector<std::string> skip_reasons;   // parallel to skipped_lines
    std::vector<std::string> dropped_encounters;  // fewer than two records

    const Encounter* find(const std::string& encounter_id) const;
    std::size_t n_pairs() const;
};

/// Per-parameter mean/std over every record carrying the parameter. Throws
/// DatasetError "zero variance for <param>".
std::array<std::optional<ParamStats>, kParamCount> compute_param_stats(const std::vector<Encounter>& encounters);

/// Groups records by encounter (file order), sorts each by timestamp and
/// computes statistics. Malformed rows are skipped and reported.
TrajectoryDataset build_dataset(std::vector<std::pair<std::string, TrajectoryRecord>> rows,
                                std::vector<std::size_t> skipped_lines = {},
                                std::vector<std::string> skip_reasons = {});

/// JSON lines: {"encounter_id": ..., "state": {...}, "settings": {...}} per
/// line. CSV (by extension .csv): a header naming encounter_id, timestamp,
/// state fields, mode and parameter columns; empty cells are missing.
/// Throws DatasetError when no valid encounter remains.
TrajectoryDataset load_trajectories(const std::filesystem::path& path, const ModeRegistry* registry = nullptr);
TrajectoryDataset parse_jsonl(std::istream& in, const ModeRegistry* registry = nullptr);
TrajectoryDataset parse_csv(std::istream& in, const ModeRegistry* registry = nullptr);

void write_jsonl(std::ostream& out, const std::vector<Encounter>& encounters);

/// Non-clinical stochastic cohort: five modes, a hidden shunt that resolves
/// over time, and a rule-following recorded clinician with noise.
std::vector<Encounter> synthesize_cohort(std::size_t n_encounters, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct MetricSample {
    Param param{};
    double predicted = 0.0;
    double actual = 0.0;
};

struct ParamMetrics {
    double mse = 0.0;
    double mae = 0.0;
    std::optional<double> r2;  // nullopt when the actuals have no spread
    std::size_t n = 0;
};

struct ReplayMetrics {
    double mse = 0.0;  // z-scored units
    double mae = 0.0;
    std::optional<double> r2;  // mean of per-parameter R^2
    std::size_t n_samples = 0;
    std::array<std::optional<ParamMetrics>, kParamCount> per_param;

    std::size_t n_pairs = 0;  // evaluated pairs
    std::size_t attempted_pairs = 0;
    std::size_t failed_pairs = 0;
    double completion_failure_rate = 0.0;
    std::size_t mode_matches = 0;
    double mode_accuracy = 0.0;
    std::size_t accepted = 0;
    std::size_t held = 0;
    nlohmann::json agent_stats = nlohmann::json::object();

    nlohmann::json to_json() const;
};

/// MSE/MAE over all samples in z-space; R^2 per parameter in raw units
/// against the mean of that parameter's actuals, then averaged.
ReplayMetrics compute_metrics(const std::vector<MetricSample>& samples,
                              const std::array<std::optional<ParamStats>, kParamCount>& stats);

struct ReplayOptions {
    EngineConfig engine;  // enable_waveform/enable_preference are overridden by the ablation flags
    bool no_img = false;
    bool no_pref = false;
    double fault_rate = 0.0;
    RetryPolicy retry;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string clinician_id = "replay";
};

/// Backend for one encounter (index in dataset order). Default: scripted.
using BackendFactory = std::function<std::shared_ptr<Backend>(std::size_t encounter_index)>;

/// Autonomous replay: every consecutive pair runs one cycle whose first
/// safety-passing proposal is accepted; the resulting settings are compared
/// with the next recorded settings.
ReplayMetrics replay_next_step(const TrajectoryDataset& dataset, const ModeRegistry& registry,
                               const AgentConfig& agents, const BanditConfig& bandit, const ReplayOptions& options,
                               const BackendFactory& backend_factory = {});

}  // namespace vdss
