#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vdss/contracts.hpp"

namespace vdss {

struct ParamLimits {
    double min = 0.0;
    double max = 0.0;
    double max_delta = 0.0;    // per-cycle absolute change
    double entry_value = 0.0;  // value used when a mode change makes the parameter applicable
};

struct ModeSpec {
    ModeId id;
    std::string display_name;
    std::string brand;
    std::array<bool, kParamCount> applicable{};
    std::array<ParamLimits, kParamCount> limits{};

    bool applies(Param p) const { return applicable[index_of(p)]; }
    const ParamLimits& limit(Param p) const { return limits[index_of(p)]; }
};

/// Device/mode control semantics: which parameters each mode exposes, their
/// bounds and per-cycle delta limits. Built from config/mode_registry.json and
/// config/safety_limits.json.
class ModeRegistry {
public:
    static ModeRegistry from_json(const nlohmann::json& registry, const nlohmann::json& limits);
    static ModeRegistry load(const std::filesystem::path& config_dir);

    const ModeSpec* find(std::string_view mode) const;
    /// Throws UnknownModeError.
    const ModeSpec& at(std::string_view mode) const;
    bool contains(std::string_view mode) const { return find(mode) != nullptr; }
    const std::vector<ModeSpec>& modes() const { return modes_; }

private:
    std::vector<ModeSpec> modes_;
};

/// Drops parameters the mode does not expose. Throws UnknownModeError.
VentilatorSettings mask_settings(const VentilatorSettings& settings, const ModeRegistry& registry);

/// Settings that would result from applying the proposal: mode switched,
/// updates applied, newly applicable parameters seeded with their entry value,
/// then masked. Throws UnknownModeError.
VentilatorSettings apply_proposal(const VentilatorSettings& current, const Proposal& proposal,
                                  const ModeRegistry& registry);

ModeId target_mode(const VentilatorSettings& current, const Proposal& proposal);

}  // namespace vdss
