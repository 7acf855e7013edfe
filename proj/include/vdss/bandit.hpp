#pragma once

// Per-clinician contextual bandit over the twelve preference arms.
//
// Each arm a keeps a ridge system (A_a, b_a) over the cycle context x:
//   theta_a = A_a^{-1} b_a
//   score_a = x^T theta_a + alpha * sqrt(x^T A_a^{-1} x)
// A cycle-end update adds x x^T to every arm named in the preference signal,
// with response +1 for arms evidenced by the accepted proposal and -beta for
// arms evidenced only by rejected ones.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdss/contracts.hpp"
#include "vdss/linalg.hpp"

namespace vdss {

using FeatureVector = std::array<double, kFeatureDim>;

struct BanditHyperparams {
    double lambda = 1.0;  // ridge prior, A = lambda * I at initialization
    double alpha = 1.0;   // exploration weight
    double beta = 0.5;    // weight of negative evidence from rejected proposals

    bool operator==(const BanditHyperparams&) const = default;
};

struct ArmState {
    linalg::Mat<kFeatureDim> A;
    linalg::Vec<kFeatureDim> b{};
    std::uint64_t pulls = 0;

    bool operator==(const ArmState&) const = default;
};

struct PreferenceState {
    std::string clinician_id;
    BanditHyperparams hyper;
    std::array<ArmState, kArmCount> arms;
    std::uint64_t update_count = 0;   // total arm updates applied
    std::uint64_t cycle_updates = 0;  // number of cycle-end updates

    static PreferenceState fresh(std::string clinician_id, const BanditHyperparams& hyper);
    const ArmState& arm(Category c) const { return arms[index_of(c)]; }

    bool operator==(const PreferenceState&) const = default;
};

/// Reference statistics used to z-score context features.
struct FeaturizerConfig {
    struct Stat {
        double mean = 0.0;
        double std = 1.0;
    };
    Stat spo2{94, 4}, fio2{45, 15}, peep{8, 3}, resp_rate_obs{20, 6}, ph{7.38, 0.07}, paco2{42, 8};
};

struct BanditConfig {
    BanditHyperparams hyper;
    FeaturizerConfig featurizer;
    bool apply_hold_signal = false;  // hold cycles record a defer signal; applying it is opt-in

    static BanditConfig from_json(const nlohmann::json& j);
    static BanditConfig load(const std::filesystem::path& config_dir);
};

/// F = 12 context features: z-scored spo2, fio2, peep, resp_rate_obs, ph,
/// paco2 (missing -> 0); one-hot phase (3); asynchrony flag; evidence
/// sufficiency flag; constant 1.
FeatureVector featurize(const FeaturizerConfig& cfg, const PatientState& state, const VentilatorSettings& settings,
                        Phase phase, bool asynchrony, bool evidence_sufficient);

/// Throws ContractError for a wrong dimension, non-finite entries or a
/// non-SPD design matrix.
CategoryScores preference_scores(const PreferenceState& state, std::span<const double> x);

/// Uniform scores of a fresh state at x (used when preference is disabled).
CategoryScores uniform_scores(const BanditHyperparams& hyper, std::span<const double> x);

/// The raw rank-1 arithmetic behind bandit_update, without the acceptance
/// precondition. Returns a new state; the input is unmodified.
PreferenceState apply_signal(const PreferenceState& state, std::span<const double> x, const PreferenceSignal& signal);

/// Single cycle-end update. Throws ContractError unless the cycle was accepted
/// (accepted settings present, trace ending in accept) and the signal's two
/// sets are disjoint.
PreferenceState bandit_update(const PreferenceState& state, std::span<const double> x,
                              const std::optional<VentilatorSettings>& accepted, const std::vector<TraceEntry>& trace,
                              const PreferenceSignal& signal);

/// Mean of score over the candidate's tags.
double candidate_key(const Proposal& candidate, const CategoryScores& scores);

/// Sort by key descending; ties by fewer setting updates, then input order.
std::vector<Proposal> rank_candidates(std::vector<Proposal> candidates, const CategoryScores& scores);

/// Rejected proposals in the cycle: K_t - 1 when accepted, K_max when
/// exhausted, 0 on hold. Failed cycles have no regret (nullopt).
std::optional<int> cycle_regret(const CycleRecord& record, int k_max);

nlohmann::json encode_preference_state(const PreferenceState& s);
/// Throws ContractError on malformed snapshots.
PreferenceState decode_preference_state(const nlohmann::json& j);

}  // namespace vdss
