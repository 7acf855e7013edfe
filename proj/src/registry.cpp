#include "vdss/registry.hpp"

#include <algorithm>

#include "vdss/errors.hpp"
#include "vdss/util.hpp"

namespace vdss {

namespace {

double number_at(const nlohmann::json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number()) throw ConfigError(where + ": missing numeric '" + key + "'");
    return it->get<double>();
}

}  // namespace

ModeRegistry ModeRegistry::from_json(const nlohmann::json& registry, const nlohmann::json& limits) {
    std::array<ParamLimits, kParamCount> defaults{};
    const auto& params = limits.at("parameters");
    for (auto p : all_values<Param>()) {
        const std::string name(to_string(p));
        if (!params.contains(name)) throw ConfigError("safety limits: no entry for parameter '" + name + "'");
        const auto& e = params.at(name);
        const std::string where = "safety limits '" + name + "'";
        defaults[index_of(p)] = ParamLimits{number_at(e, "min", where), number_at(e, "max", where),
                                            number_at(e, "max_delta", where), number_at(e, "entry_value", where)};
    }

    ModeRegistry reg;
    for (const auto& m : registry.at("modes")) {
        ModeSpec spec;
        spec.id = m.at("id").get<std::string>();
        spec.display_name = m.value("display_name", spec.id);
        spec.brand = m.value("brand", "");
        spec.limits = defaults;
        for (const auto& a : m.at("applicable")) {
            auto p = parse_enum<Param>(a.get<std::string>());
            if (!p) throw ConfigError("mode " + spec.id + ": unknown parameter '" + a.get<std::string>() + "'");
            spec.applicable[index_of(*p)] = true;
        }
        if (auto ov = m.find("overrides"); ov != m.end()) {
            for (auto it = ov->begin(); it != ov->end(); ++it) {
                auto p = parse_enum<Param>(it.key());
                if (!p) throw ConfigError("mode " + spec.id + ": unknown override '" + it.key() + "'");
                auto& lim = spec.limits[index_of(*p)];
                lim.min = it->value("min", lim.min);
                lim.max = it->value("max", lim.max);
                lim.max_delta = it->value("max_delta", lim.max_delta);
                lim.entry_value = it->value("entry_value", lim.entry_value);
            }
        }
        for (auto p : all_values<Param>()) {
            const auto& lim = spec.limit(p);
            const std::string where = "mode " + spec.id + " parameter " + std::string(to_string(p));
            if (!(lim.min < lim.max)) throw ConfigError(where + ": bounds require min < max");
            if (!(lim.max_delta > 0)) throw ConfigError(where + ": max_delta must be positive");
            if (lim.entry_value < lim.min || lim.entry_value > lim.max)
                throw ConfigError(where + ": entry_value outside bounds");
        }
        if (reg.find(spec.id)) throw ConfigError("duplicate mode id " + spec.id);
        reg.modes_.push_back(std::move(spec));
    }
    if (reg.modes_.size() < 4) throw ConfigError("mode registry must define at least 4 modes");
    return reg;
}

ModeRegistry ModeRegistry::load(const std::filesystem::path& config_dir) {
    return from_json(read_json_file(config_dir / "mode_registry.json"),
                     read_json_file(config_dir / "safety_limits.json"));
}

const ModeSpec* ModeRegistry::find(std::string_view mode) const {
    auto it = std::find_if(modes_.begin(), modes_.end(), [&](const ModeSpec& m) { return m.id == mode; });
    return it == modes_.end() ? nullptr : &*it;
}

const ModeSpec& ModeRegistry::at(std::string_view mode) const {
    if (const auto* m = find(mode)) return *m;
    throw UnknownModeError(std::string(mode));
}

VentilatorSettings mask_settings(const VentilatorSettings& settings, const ModeRegistry& registry) {
    const auto& spec = registry.at(settings.mode);
    VentilatorSettings out = settings;
    for (auto p : all_values<Param>()) {
        if (!spec.applies(p)) out.clear(p);
    }
    return out;
}

ModeId target_mode(const VentilatorSettings& current, const Proposal& proposal) {
    return proposal.mode_change.value_or(current.mode);
}

VentilatorSettings apply_proposal(const VentilatorSettings& current, const Proposal& proposal,
                                  const ModeRegistry& registry) {
    VentilatorSettings out = current;
    out.mode = target_mode(current, proposal);
    const auto& spec = registry.at(out.mode);
    for (const auto& [p, v] : proposal.setting_updates) out.set(p, v);
    for (auto p : all_values<Param>()) {
        if (spec.applies(p) && !out.has(p)) out.set(p, spec.limit(p).entry_value);
    }
    return mask_settings(out, registry);
}

}  // namespace vdss
