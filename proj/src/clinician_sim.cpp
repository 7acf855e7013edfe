#include "vdss/clinician_sim.hpp"

#include <cmath>
#include <numeric>

#include "vdss/errors.hpp"

namespace vdss {

using nlohmann::json;

void ClinicianProfile::validate() const {
    bool nonzero = false;
    for (double w : weights) {
        if (!std::isfinite(w)) throw ConfigError("clinician weights must be finite");
        nonzero = nonzero || w != 0.0;
    }
    if (!nonzero) throw ConfigError("clinician profile needs at least one nonzero weight");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
    double mass = 0.0;
    for (double w : reason_weights) {
        if (!(w >= 0.0)) throw ConfigError("reason weights must be non-negative");
        mass += w;
    }
    if (!(mass > 0.0)) throw ConfigError("reason weights need positive mass");
}

ClinicianProfile ClinicianProfile::default_profile(std::uint64_t seed) {
    ClinicianProfile p;
    p.seed = seed;
    auto set = [&](Category c, double w) { p.weights[index_of(c)] = w; };
    set(Category::target_driven_assertive, 1.0);
    set(Category::stay_in_mode, 0.6);
    set(Category::mode_level_change, 0.1);
    set(Category::conservative_small_step, 0.0);
    set(Category::single_key_parameter_first, 0.1);
    set(Category::defer_when_insufficient, 0.5);
    for (auto pr : all_values<Priority>()) set(priority_category(pr), 0.5);
    return p;
}

ClinicianProfile ClinicianProfile::from_json(const json& j) {
    ClinicianProfile p = default_profile(j.value("seed", std::uint64_t{1}));
    p.clinician_id = j.value("clinician_id", p.clinician_id);
    if (j.contains("weights")) {
        p.weights.fill(0.0);
        for (const auto& [k, v] : j.at("weights").items()) {
            auto c = parse_enum<Category>(k);
            if (!c) throw ConfigError("unknown category '" + k + "' in clinician weights");
            p.weights[index_of(*c)] = v.get<double>();
        }
    }
    if (j.contains("acceptance")) {
        const auto a = j.at("acceptance").get<std::string>();
        if (a == "deterministic")
            p.acceptance = Acceptance::deterministic;
        else if (a == "logistic")
            p.acceptance = Acceptance::logistic;
        else
            throw ConfigError("acceptance must be deterministic or logistic");
    }
    p.tau = j.value("tau", p.tau);
    p.gamma0 = j.value("gamma0", p.gamma0);
    p.gamma1 = j.value("gamma1", p.gamma1);
    if (j.contains("reason_weights")) {
        p.reason_weights.fill(0.0);
        for (const auto& [k, v] : j.at("reason_weights").items()) {
            auto r = parse_enum<ReasonCategory>(k);
            if (!r) throw ConfigError("unknown reason category '" + k + "'");
            p.reason_weights[index_of(*r)] = v.get<double>();
        }
    }
    p.validate();
    return p;
}

json ClinicianProfile::to_json() const {
    json w = json::object();
    for (auto c : all_values<Category>()) w[std::string(to_string(c))] = weights[index_of(c)];
    json r = json::object();
    for (auto c : all_values<ReasonCategory>()) r[std::string(to_string(c))] = reason_weights[index_of(c)];
    return json{{"clinician_id", clinician_id},
                {"weights", w},
                {"acceptance", acceptance == Acceptance::deterministic ? "deterministic" : "logistic"},
                {"tau", tau},
                {"gamma0", gamma0},
                {"gamma1", gamma1},
                {"reason_weights", r},
                {"seed", seed}};
}

double alignment(const ClinicianProfile& profile, const std::vector<Category>& tags) {
    if (tags.empty()) return 0.0;
    double s = 0.0;
    for (auto c : tags) s += profile.weights[index_of(c)];
    return s / static_cast<double>(tags.size());
}

SimulatedClinician::SimulatedClinician(ClinicianProfile profile) : profile_(std::move(profile)), rng_(profile_.seed) {
    profile_.validate();
}

double SimulatedClinician::u01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

ClinicianFeedback SimulatedClinician::review(const Proposal& proposal, const SafetyReport& safety) {
    if (!safety.pass()) throw ContractError("simulated clinician was shown a proposal that failed safety checks");
    const double a = alignment(profile_, proposal.category_tags);
    bool accept = false;
    if (profile_.acceptance == ClinicianProfile::Acceptance::deterministic) {
        accept = a >= profile_.tau;
    } else {
        const double p = 1.0 / (1.0 + std::exp(-(profile_.gamma0 + profile_.gamma1 * a)));
        accept = u01() < p;
    }
    ClinicianFeedback fb;
    if (accept) {
        fb.decision = Decision::accept;
        fb.rationale = "agrees with proposal";
        return fb;
    }
    fb.decision = Decision::reject;
    const double total = std::accumulate(profile_.reason_weights.begin(), profile_.reason_weights.end(), 0.0);
    double draw = u01() * total;
    ReasonCategory reason = ReasonCategory::other;
    for (auto r : all_values<ReasonCategory>()) {
        const double w = profile_.reason_weights[index_of(r)];
        if (w > 0.0 && draw < w) {
            reason = r;
            break;
        }
        draw -= w;
    }
    fb.reason_category = reason;
    if (!proposal.setting_updates.empty()) {
        auto it = proposal.setting_updates.begin();
        std::advance(it, static_cast<long>(rng_() % proposal.setting_updates.size()));
        fb.disputed_parameters = {it->first};
    }
    fb.rationale = "prefers a different approach (" + std::string(to_string(reason)) + ")";
    return fb;
}

}  // namespace vdss
