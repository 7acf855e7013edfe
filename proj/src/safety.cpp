#include "vdss/safety.hpp"

namespace vdss {

namespace {

void merge(SafetyReport& into, SafetyReport&& from) {
    for (auto& v : from.violations) into.violations.push_back(std::move(v));
    for (auto& w : from.warnings) into.warnings.push_back(std::move(w));
}

}  // namespace

SafetyReport check_bounds(const Proposal& proposal, const VentilatorSettings& current, const ModeRegistry& registry) {
    SafetyReport report;
    if (proposal.setting_updates.empty() && proposal.mode_change) report.warnings.push_back("mode change only");
    const ModeSpec* spec = registry.find(target_mode(current, proposal));
    if (!spec) return report;  // reported by check_mode_compatibility
    // Updated values, plus values carried into a new mode whose bounds may be narrower.
    for (auto p : all_values<Param>()) {
        std::optional<double> value;
        if (auto it = proposal.setting_updates.find(p); it != proposal.setting_updates.end()) {
            value = it->second;
        } else if (proposal.mode_change && spec->applies(p)) {
            value = current.get(p);
        }
        if (!value) continue;
        const auto& lim = spec->limit(p);
        if (*value > lim.max) {
            report.violations.push_back({"bounds", p, lim.max, *value});
        } else if (*value < lim.min) {
            report.violations.push_back({"bounds", p, lim.min, *value});
        }
    }
    return report;
}

SafetyReport check_mode_compatibility(const Proposal& proposal, const ModeRegistry& registry,
                                      const std::optional<ModeId>& current_mode) {
    SafetyReport report;
    const auto mode = proposal.mode_change ? proposal.mode_change : current_mode;
    if (!mode) return report;
    const ModeSpec* spec = registry.find(*mode);
    if (!spec) {
        report.violations.push_back({"unknown_mode", std::nullopt, std::nullopt, std::nullopt});
        return report;
    }
    for (const auto& [p, value] : proposal.setting_updates) {
        if (!spec->applies(p)) report.violations.push_back({"inapplicable_parameter", p, std::nullopt, value});
    }
    return report;
}

SafetyReport check_delta_limits(const Proposal& proposal, const VentilatorSettings& current,
                                const ModeRegistry& registry) {
    SafetyReport report;
    const ModeSpec* spec = registry.find(target_mode(current, proposal));
    if (!spec) return report;
    for (const auto& [p, value] : proposal.setting_updates) {
        auto prev = current.get(p);
        if (!prev) continue;  // newly applicable parameter: no previous value to step from
        const double delta = spec->limit(p).max_delta;
        if (value - *prev > delta) {
            report.violations.push_back({"delta_limit", p, *prev + delta, value});
        } else if (*prev - value > delta) {
            report.violations.push_back({"delta_limit", p, *prev - delta, value});
        }
    }
    return report;
}

SafetyReport check_all(const Proposal& proposal, const VentilatorSettings& current, const ModeRegistry& registry) {
    SafetyReport report;
    merge(report, check_mode_compatibility(proposal, registry, current.mode));
    merge(report, check_bounds(proposal, current, registry));
    merge(report, check_delta_limits(proposal, current, registry));
    return report;
}

}  // namespace vdss
