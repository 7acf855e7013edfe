#pragma once

// Deterministic pre-review checks. Every proposal shown to a clinician has
// passed all three; the composition is a logical AND.

#include "vdss/contracts.hpp"
#include "vdss/registry.hpp"

namespace vdss {

/// Resulting absolute values must lie within the target mode's [min,max]:
/// updated parameters and, on a mode change, values carried into the new mode.
SafetyReport check_bounds(const Proposal& proposal, const VentilatorSettings& current, const ModeRegistry& registry);

/// Target mode (the proposal's mode_change, else `current_mode`) must be
/// registered and every updated parameter applicable in it.
SafetyReport check_mode_compatibility(const Proposal& proposal, const ModeRegistry& registry,
                                      const std::optional<ModeId>& current_mode = std::nullopt);

/// |proposed - current| must not exceed the per-cycle delta for the parameter.
SafetyReport check_delta_limits(const Proposal& proposal, const VentilatorSettings& current,
                                const ModeRegistry& registry);

SafetyReport check_all(const Proposal& proposal, const VentilatorSettings& current, const ModeRegistry& registry);

}  // namespace vdss
