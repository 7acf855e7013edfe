#pragma once

// Closed vocabularies shared by every message contract. The string tables are
// the wire spelling; config/vocabulary.json mirrors them and is checked in tests.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace vdss {

template <class E>
struct EnumNames;

#define VDSS_ENUM_NAMES(Enum, ...)                                              \
    template <>                                                                 \
    struct EnumNames<Enum> {                                                    \
        static constexpr auto names = std::to_array<std::string_view>({__VA_ARGS__}); \
    }

template <class E>
constexpr std::size_t enum_count() {
    return EnumNames<E>::names.size();
}

template <class E>
constexpr std::string_view to_string(E e) {
    return EnumNames<E>::names[static_cast<std::size_t>(e)];
}

template <class E>
constexpr std::optional<E> parse_enum(std::string_view s) {
    const auto& names = EnumNames<E>::names;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == s) return static_cast<E>(i);
    }
    return std::nullopt;
}

template <class E>
constexpr std::size_t index_of(E e) {
    return static_cast<std::size_t>(e);
}

template <class E>
constexpr std::array<E, enum_count<E>()> all_values() {
    std::array<E, enum_count<E>()> out{};
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<E>(i);
    return out;
}

/// Clinician-adjustable numeric settings (the action variables besides mode).
enum class Param { peep, fio2, pressure_support, inspiratory_pressure, resp_rate_set };
VDSS_ENUM_NAMES(Param, "peep", "fio2", "pressure_support", "inspiratory_pressure", "resp_rate_set");
inline constexpr std::size_t kParamCount = enum_count<Param>();

enum class CueQuality { good, degraded, unusable };
VDSS_ENUM_NAMES(CueQuality, "good", "degraded", "unusable");

enum class Pattern { sawtooth, scooped_plateau, double_trigger, ineffective_effort, none };
VDSS_ENUM_NAMES(Pattern, "sawtooth", "scooped_plateau", "double_trigger", "ineffective_effort", "none");

enum class Severity { none, mild, moderate, severe };
VDSS_ENUM_NAMES(Severity, "none", "mild", "moderate", "severe");

// Abnormality vocabulary used by detection and the scripted agents.
enum class AbnormalityCode {
    hypoxemia,
    high_oxygen_exposure,
    respiratory_acidosis,
    respiratory_alkalosis,
    hypotension,
    tachypnea,
    asynchrony,
    auto_peep_risk,
    high_tidal_volume
};
VDSS_ENUM_NAMES(AbnormalityCode, "hypoxemia", "high_oxygen_exposure", "respiratory_acidosis",
                "respiratory_alkalosis", "hypotension", "tachypnea", "asynchrony", "auto_peep_risk",
                "high_tidal_volume");

enum class Phase { acute, stabilization, weaning };
VDSS_ENUM_NAMES(Phase, "acute", "stabilization", "weaning");

enum class Goal {
    improve_oxygenation,
    deescalate_fio2,
    correct_acidosis,
    correct_alkalosis,
    support_hemodynamics,
    improve_synchrony,
    reduce_auto_peep,
    limit_lung_stress,
    progress_weaning,
    maintain_stability
};
VDSS_ENUM_NAMES(Goal, "improve_oxygenation", "deescalate_fio2", "correct_acidosis", "correct_alkalosis",
                "support_hemodynamics", "improve_synchrony", "reduce_auto_peep", "limit_lung_stress",
                "progress_weaning", "maintain_stability");

/// Adjustment priority chosen by the strategy selector.
enum class Priority { oxygenation, ventilation_acid_base, lung_protection, hemodynamics, synchrony_comfort, weaning };
VDSS_ENUM_NAMES(Priority, "oxygenation", "ventilation_acid_base", "lung_protection", "hemodynamics",
                "synchrony_comfort", "weaning");

enum class Branch { hold, adjust };
VDSS_ENUM_NAMES(Branch, "hold", "adjust");

enum class Decision { accept, reject };
VDSS_ENUM_NAMES(Decision, "accept", "reject");

enum class ReasonCategory { wrong_priority, wrong_mode, parameter_magnitude, feasibility, other };
VDSS_ENUM_NAMES(ReasonCategory, "wrong_priority", "wrong_mode", "parameter_magnitude", "feasibility", "other");

/// The twelve preference arms, in fixed order.
enum class Category {
    mode_level_change,
    stay_in_mode,
    conservative_small_step,
    target_driven_assertive,
    prio_oxygenation,
    prio_ventilation_acid_base,
    prio_lung_protection,
    prio_hemodynamics,
    prio_synchrony_comfort,
    prio_weaning,
    single_key_parameter_first,
    defer_when_insufficient
};
VDSS_ENUM_NAMES(Category, "mode_level_change", "stay_in_mode", "conservative_small_step",
                "target_driven_assertive", "prio_oxygenation", "prio_ventilation_acid_base",
                "prio_lung_protection", "prio_hemodynamics", "prio_synchrony_comfort", "prio_weaning",
                "single_key_parameter_first", "defer_when_insufficient");
inline constexpr std::size_t kArmCount = enum_count<Category>();
static_assert(kArmCount == 12);

enum class CycleStatus { accepted, hold, exhausted, failed };
VDSS_ENUM_NAMES(CycleStatus, "accepted", "hold", "exhausted", "failed");

enum class AgentRole {
    waveform_analyzer,
    detection,
    phase_goal_manager,
    gate,
    strategy_selector,
    mode_select,
    parameter_planner,
    reflect,
    note_generator
};
VDSS_ENUM_NAMES(AgentRole, "waveform_analyzer", "detection", "phase_goal_manager", "gate", "strategy_selector",
                "mode_select", "parameter_planner", "reflect", "note_generator");
inline constexpr std::size_t kRoleCount = enum_count<AgentRole>();

enum class ResumeStage { strategy, mode_select, parameter_plan };
VDSS_ENUM_NAMES(ResumeStage, "strategy", "mode_select", "parameter_plan");

enum class ConstraintKind { ceiling, floor, forbid_mode, forbid_param, max_step, forbid_strategy };
VDSS_ENUM_NAMES(ConstraintKind, "ceiling", "floor", "forbid_mode", "forbid_param", "max_step", "forbid_strategy");

/// Category tag that corresponds to an adjustment priority.
constexpr Category priority_category(Priority p) {
    switch (p) {
        case Priority::oxygenation: return Category::prio_oxygenation;
        case Priority::ventilation_acid_base: return Category::prio_ventilation_acid_base;
        case Priority::lung_protection: return Category::prio_lung_protection;
        case Priority::hemodynamics: return Category::prio_hemodynamics;
        case Priority::synchrony_comfort: return Category::prio_synchrony_comfort;
        case Priority::weaning: return Category::prio_weaning;
    }
    return Category::prio_oxygenation;
}

}  // namespace vdss
