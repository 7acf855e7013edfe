#include "vdss/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vdss/errors.hpp"
#include "vdss/util.hpp"

namespace vdss {

namespace {

using Span = std::span<const double, kFeatureDim>;

Span checked_context(std::span<const double> x) {
    if (x.size() != kFeatureDim)
        throw ContractError("context vector has dimension " + std::to_string(x.size()) + ", expected 12");
    for (double v : x)
        if (!std::isfinite(v)) throw ContractError("context vector has a non-finite entry");
    return Span(x.data(), kFeatureDim);
}

}  // namespace

PreferenceState PreferenceState::fresh(std::string clinician_id, const BanditHyperparams& hyper) {
    if (!(hyper.lambda > 0)) throw ContractError("ridge prior lambda must be positive");
    PreferenceState s;
    s.clinician_id = std::move(clinician_id);
    s.hyper = hyper;
    for (auto& arm : s.arms) arm.A = linalg::Mat<kFeatureDim>::identity(hyper.lambda);
    return s;
}

BanditConfig BanditConfig::from_json(const nlohmann::json& j) {
    BanditConfig c;
    c.hyper.lambda = j.value("lambda", c.hyper.lambda);
    c.hyper.alpha = j.value("alpha", c.hyper.alpha);
    c.hyper.beta = j.value("beta", c.hyper.beta);
    c.apply_hold_signal = j.value("apply_hold_signal", false);
    if (!(c.hyper.lambda > 0)) throw ConfigError("bandit: lambda must be positive");
    if (c.hyper.alpha < 0 || c.hyper.beta < 0) throw ConfigError("bandit: alpha and beta must be non-negative");
    if (auto f = j.find("featurizer"); f != j.end()) {
        auto stat = [&](const char* key, FeaturizerConfig::Stat& out) {
            if (auto it = f->find(key); it != f->end()) {
                out.mean = it->value("mean", out.mean);
                out.std = it->value("std", out.std);
                if (!(out.std > 0)) throw ConfigError(std::string("bandit featurizer: std for ") + key + " must be positive");
            }
        };
        stat("spo2", c.featurizer.spo2);
        stat("fio2", c.featurizer.fio2);
        stat("peep", c.featurizer.peep);
        stat("resp_rate_obs", c.featurizer.resp_rate_obs);
        stat("ph", c.featurizer.ph);
        stat("paco2", c.featurizer.paco2);
    }
    return c;
}

BanditConfig BanditConfig::load(const std::filesystem::path& config_dir) {
    return from_json(read_json_file(config_dir / "bandit.json"));
}

FeatureVector featurize(const FeaturizerConfig& cfg, const PatientState& state, const VentilatorSettings& settings,
                        Phase phase, bool asynchrony, bool evidence_sufficient) {
    auto z = [](std::optional<double> v, const FeaturizerConfig::Stat& s) {
        return v ? (*v - s.mean) / s.std : 0.0;
    };
    FeatureVector x{};
    x[0] = z(state.spo2, cfg.spo2);
    x[1] = z(settings.get(Param::fio2), cfg.fio2);
    x[2] = z(settings.get(Param::peep), cfg.peep);
    x[3] = z(state.resp_rate_obs, cfg.resp_rate_obs);
    x[4] = z(state.ph, cfg.ph);
    x[5] = z(state.paco2, cfg.paco2);
    x[6 + index_of(phase)] = 1.0;
    x[9] = asynchrony ? 1.0 : 0.0;
    x[10] = evidence_sufficient ? 1.0 : 0.0;
    x[11] = 1.0;
    return x;
}

CategoryScores preference_scores(const PreferenceState& state, std::span<const double> xs) {
    const Span x = checked_context(xs);
    CategoryScores out;
    for (std::size_t a = 0; a < kArmCount; ++a) {
        const auto& arm = state.arms[a];
        auto l = linalg::cholesky(arm.A);
        if (!l) throw ContractError("design matrix for arm " + std::string(to_string(static_cast<Category>(a))) +
                                    " is not positive definite");
        const auto theta = linalg::cholesky_solve<kFeatureDim>(*l, arm.b);
        // x^T A^{-1} x = |L^{-1} x|^2
        const auto y = linalg::forward_solve<kFeatureDim>(*l, x);
        double q = 0.0;
        for (double v : y) q += v * v;
        out.mean[a] = linalg::dot<kFeatureDim>(x, theta);
        out.uncertainty[a] = std::sqrt(q);
        out.score[a] = out.mean[a] + state.hyper.alpha * out.uncertainty[a];
    }
    return out;
}

CategoryScores uniform_scores(const BanditHyperparams& hyper, std::span<const double> x) {
    return preference_scores(PreferenceState::fresh("", hyper), x);
}

PreferenceState apply_signal(const PreferenceState& state, std::span<const double> xs, const PreferenceSignal& signal) {
    const Span x = checked_context(xs);
    if (!is_disjoint(signal)) throw ContractError("preference signal accept/reject sets overlap");
    PreferenceState next = state;
    auto update = [&](Category c, double reward) {
        auto& arm = next.arms[index_of(c)];
        linalg::add_outer<kFeatureDim>(arm.A, x);
        for (std::size_t i = 0; i < kFeatureDim; ++i) arm.b[i] += reward * x[i];
        ++arm.pulls;
        ++next.update_count;
    };
    for (auto c : signal.evidenced_by_accept) update(c, 1.0);
    for (auto c : signal.evidenced_only_by_reject) update(c, -state.hyper.beta);
    ++next.cycle_updates;
    return next;
}

PreferenceState bandit_update(const PreferenceState& state, std::span<const double> x,
                              const std::optional<VentilatorSettings>& accepted, const std::vector<TraceEntry>& trace,
                              const PreferenceSignal& signal) {
    if (!accepted) throw ContractError("bandit update requires an accepted configuration");
    if (trace.empty() || trace.back().feedback.decision != Decision::accept)
        throw ContractError("bandit update requires a trace ending in an accepted proposal");
    return apply_signal(state, x, signal);
}

double candidate_key(const Proposal& candidate, const CategoryScores& scores) {
    if (candidate.category_tags.empty()) return 0.0;
    double s = 0.0;
    for (auto c : candidate.category_tags) s += scores.of(c);
    return s / static_cast<double>(candidate.category_tags.size());
}

std::vector<Proposal> rank_candidates(std::vector<Proposal> candidates, const CategoryScores& scores) {
    std::vector<std::pair<double, std::size_t>> keys;
    keys.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) keys.emplace_back(candidate_key(candidates[i], scores), i);
    std::stable_sort(keys.begin(), keys.end(), [&](const auto& l, const auto& r) {
        if (l.first != r.first) return l.first > r.first;
        return candidates[l.second].setting_updates.size() < candidates[r.second].setting_updates.size();
    });
    std::vector<Proposal> out;
    out.reserve(candidates.size());
    for (const auto& [_, i] : keys) out.push_back(std::move(candidates[i]));
    return out;
}

std::optional<int> cycle_regret(const CycleRecord& record, int k_max) {
    switch (record.status) {
        case CycleStatus::accepted: return record.rounds - 1;
        case CycleStatus::exhausted: return k_max;
        case CycleStatus::hold: return 0;
        case CycleStatus::failed: return std::nullopt;
    }
    return std::nullopt;
}

nlohmann::json encode_preference_state(const PreferenceState& s) {
    nlohmann::json arms = nlohmann::json::array();
    for (std::size_t a = 0; a < kArmCount; ++a) {
        const auto& arm = s.arms[a];
        arms.push_back({{"category", to_string(static_cast<Category>(a))},
                        {"A", arm.A.a},
                        {"b", arm.b},
                        {"pulls", arm.pulls}});
    }
    return {{"clinician_id", s.clinician_id},
            {"lambda", s.hyper.lambda},
            {"alpha", s.hyper.alpha},
            {"beta", s.hyper.beta},
            {"update_count", s.update_count},
            {"cycle_updates", s.cycle_updates},
            {"arms", arms}};
}

PreferenceState decode_preference_state(const nlohmann::json& j) {
    try {
        PreferenceState s;
        s.clinician_id = j.at("clinician_id").get<std::string>();
        s.hyper.lambda = j.at("lambda").get<double>();
        s.hyper.alpha = j.at("alpha").get<double>();
        s.hyper.beta = j.at("beta").get<double>();
        s.update_count = j.at("update_count").get<std::uint64_t>();
        s.cycle_updates = j.at("cycle_updates").get<std::uint64_t>();
        const auto& arms = j.at("arms");
        if (!arms.is_array() || arms.size() != kArmCount) throw ContractError("preference state needs 12 arms");
        std::uint64_t pulls = 0;
        for (std::size_t a = 0; a < kArmCount; ++a) {
            const auto& e = arms[a];
            if (e.at("category").get<std::string>() != to_string(static_cast<Category>(a)))
                throw ContractError("preference state arms out of order at index " + std::to_string(a));
            auto& arm = s.arms[a];
            arm.A.a = e.at("A").get<std::array<double, kFeatureDim * kFeatureDim>>();
            arm.b = e.at("b").get<linalg::Vec<kFeatureDim>>();
            arm.pulls = e.at("pulls").get<std::uint64_t>();
            if (!linalg::is_symmetric(arm.A)) throw ContractError("design matrix not symmetric");
            pulls += arm.pulls;
        }
        if (pulls != s.update_count) throw ContractError("update_count does not match per-arm pulls");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("malformed preference state: ") + e.what());
    }
}

}  // namespace vdss
