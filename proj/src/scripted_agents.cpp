#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "vdss/agents.hpp"
#include "vdss/bandit.hpp"
#include "vdss/errors.hpp"

namespace vdss {

namespace {

constexpr double kEps = 1e-9;

std::string fmt(double v) {
    std::ostringstream os;
    os << std::round(v * 100.0) / 100.0;
    return os.str();
}

std::string evidence_ref(const std::string& field) {
    if (field.rfind("derived.", 0) == 0) return "state." + field.substr(8);
    return field;
}

std::optional<double> field_value(const DetectionRequest& req, const std::string& field) {
    auto dot = field.find('.');
    if (dot == std::string::npos) return std::nullopt;
    const std::string head = field.substr(0, dot);
    const std::string tail = field.substr(dot + 1);
    if (head == "state") return req.state.field(tail);
    if (head == "settings") {
        auto p = parse_enum<Param>(tail);
        return p ? req.settings.get(*p) : std::nullopt;
    }
    if (head == "cues") {
        auto pat = parse_enum<Pattern>(tail);
        if (!pat || !req.cues || req.cues->quality == CueQuality::unusable) return std::nullopt;
        return req.cues->has(*pat) ? std::optional<double>(1.0) : std::nullopt;
    }
    if (head == "derived" && tail == "tidal_volume_per_kg") {
        if (req.state.tidal_volume_obs && req.state.weight_kg && *req.state.weight_kg > 0)
            return *req.state.tidal_volume_obs / *req.state.weight_kg;
    }
    return std::nullopt;
}

bool holds(const DetectionCondition& c, const DetectionRequest& req) {
    auto v = field_value(req, c.field);
    if (!v) return false;
    using Op = DetectionCondition::Op;
    switch (c.op) {
        case Op::lt: return *v < c.value;
        case Op::le: return *v <= c.value;
        case Op::gt: return *v > c.value;
        case Op::ge: return *v >= c.value;
        case Op::present: return true;
    }
    return false;
}

bool forbids_strategy(const std::vector<Constraint>& cs, Priority p) {
    return std::any_of(cs.begin(), cs.end(), [&](const Constraint& c) {
        return c.kind == ConstraintKind::forbid_strategy && c.strategy == p;
    });
}

bool forbids_mode(const std::vector<Constraint>& cs, const ModeId& m) {
    return std::any_of(cs.begin(), cs.end(), [&](const Constraint& c) {
        return c.kind == ConstraintKind::forbid_mode && c.mode == m;
    });
}

bool forbids_param(const std::vector<Constraint>& cs, Param p) {
    return std::any_of(cs.begin(), cs.end(), [&](const Constraint& c) {
        return c.kind == ConstraintKind::forbid_param && c.param == p;
    });
}

std::string settings_text(const VentilatorSettings& s) {
    std::string out = s.mode;
    for (auto p : all_values<Param>())
        if (auto v = s.get(p)) out += " " + std::string(to_string(p)) + "=" + fmt(*v);
    return out;
}

std::string proposal_text(const Proposal& p, const VentilatorSettings& current) {
    std::string out;
    if (p.mode_change) out += "mode " + current.mode + "->" + *p.mode_change;
    for (const auto& [param, v] : p.setting_updates) {
        if (!out.empty()) out += ", ";
        out += std::string(to_string(param)) + " ";
        if (auto cur = current.get(param)) out += fmt(*cur) + "->";
        out += fmt(v);
    }
    return out.empty() ? "no change" : out;
}

}  // namespace

// ---------------------------------------------------------------------------

StateSummary scripted_detection(const AgentConfig& cfg, const DetectionRequest& req) {
    StateSummary out;
    std::vector<std::string> abnormal;
    for (auto code : all_values<AbnormalityCode>()) {
        Abnormality a;
        a.code = code;
        const DetectionRule* hit = nullptr;
        for (const auto& r : cfg.rules) {
            if (r.code != code) continue;
            if (std::all_of(r.all.begin(), r.all.end(), [&](const DetectionCondition& c) { return holds(c, req); })) {
                hit = &r;
                break;
            }
        }
        if (hit) {
            a.severity = hit->severity;
            for (const auto& c : hit->all) a.evidence.push_back(evidence_ref(c.field));
            abnormal.push_back(std::string(to_string(code)) + " (" + std::string(to_string(a.severity)) + ")");
        } else {
            for (const auto& r : cfg.rules)
                if (r.code == code)
                    for (const auto& c : r.all) a.evidence.push_back(evidence_ref(c.field));
        }
        std::sort(a.evidence.begin(), a.evidence.end());
        a.evidence.erase(std::unique(a.evidence.begin(), a.evidence.end()), a.evidence.end());
        if (a.evidence.empty()) a.evidence.push_back("state.timestamp");
        out.abnormalities.push_back(std::move(a));
    }
    int missing = 0;
    std::string missing_names;
    for (const auto& f : cfg.required_fields) {
        if (!req.state.field(f)) {
            ++missing;
            missing_names += (missing_names.empty() ? "" : ", ") + f;
        }
    }
    out.evidence_sufficient = missing <= cfg.max_missing_required;

    std::string narrative = abnormal.empty() ? "no abnormality detected" : "abnormal: ";
    for (std::size_t i = 0; i < abnormal.size(); ++i) narrative += (i ? ", " : "") + abnormal[i];
    if (missing > 0) narrative += "; missing: " + missing_names;
    if (req.cues) narrative += "; waveform " + std::string(to_string(req.cues->quality));
    out.narrative = narrative;
    return out;
}

PhaseGoals scripted_phase_goals(const AgentConfig& cfg, const PhaseRequest& req) {
    PhaseGoals out;
    const Severity top = req.summary.max_severity();
    const auto fio2 = req.settings.get(Param::fio2);
    const auto peep = req.settings.get(Param::peep);
    if (top == Severity::severe) {
        out.phase = Phase::acute;
    } else if (top <= Severity::mild && fio2 && *fio2 <= cfg.weaning_max_fio2 && peep &&
               *peep <= cfg.weaning_max_peep) {
        out.phase = Phase::weaning;
    } else {
        out.phase = Phase::stabilization;
    }

    // Goals ordered by severity (desc), then vocabulary order of the abnormality.
    std::vector<const Abnormality*> ranked;
    for (const auto& a : req.summary.abnormalities)
        if (a.severity >= Severity::mild) ranked.push_back(&a);
    std::stable_sort(ranked.begin(), ranked.end(), [](const Abnormality* a, const Abnormality* b) {
        if (a->severity != b->severity) return a->severity > b->severity;
        return a->code < b->code;
    });
    std::vector<Goal> goals;
    for (const auto* a : ranked) {
        Goal g = cfg.goal_by_abnormality[index_of(a->code)];
        if (std::find(goals.begin(), goals.end(), g) == goals.end()) goals.push_back(g);
    }
    if (goals.empty()) goals.push_back(out.phase == Phase::weaning ? Goal::progress_weaning : Goal::maintain_stability);
    out.primary_goal = goals.front();
    out.secondary_goals.assign(goals.begin() + 1, goals.end());
    return out;
}

BranchDecision gate_decision(const StateSummary& summary, const PhaseGoals&) {
    if (summary.max_severity() < Severity::moderate) return {Branch::hold, "stable"};
    if (!summary.evidence_sufficient) return {Branch::hold, "insufficient evidence"};
    return {Branch::adjust, "abnormality at or above moderate severity with sufficient evidence"};
}

StrategyChoice scripted_strategy(const AgentConfig& cfg, const StrategyRequest& req) {
    std::vector<std::pair<Priority, std::string>> order;
    order.emplace_back(cfg.priority_by_goal[index_of(req.goals.primary_goal)],
                       "primary goal " + std::string(to_string(req.goals.primary_goal)));
    for (auto g : req.goals.secondary_goals)
        order.emplace_back(cfg.priority_by_goal[index_of(g)], "secondary goal " + std::string(to_string(g)));
    for (auto p : cfg.fallback_order) order.emplace_back(p, "fallback");
    for (const auto& [p, why] : order) {
        if (!forbids_strategy(req.constraints, p)) return {p, std::string(to_string(p)) + " from " + why};
    }
    throw FeasibilityExhausted("every adjustment priority has been ruled out");
}

ModeDecision scripted_mode_select(const AgentConfig& cfg, const ModeRegistry& registry, const ModeRequest& req) {
    const ModeId& current = req.settings.mode;
    const bool current_forbidden = forbids_mode(req.constraints, current);
    const auto& preferred = cfg.preferred_modes[index_of(req.strategy)];

    std::optional<ModeId> target;
    for (const auto& m : preferred) {
        if (m != current && registry.contains(m) && !forbids_mode(req.constraints, m)) {
            target = m;
            break;
        }
    }
    const bool current_preferred =
        preferred.empty() || std::find(preferred.begin(), preferred.end(), current) != preferred.end();

    if (!current_forbidden) {
        const bool leaning = req.preference.of(Category::mode_level_change) > req.preference.of(Category::stay_in_mode);
        if (target && !current_preferred && leaning)
            return {target, "switch to " + *target + " suits " + std::string(to_string(req.strategy))};
        return {std::nullopt, "stay in " + current};
    }
    if (!target) {
        for (const auto& m : registry.modes()) {
            if (m.id != current && !forbids_mode(req.constraints, m.id)) {
                target = m.id;
                break;
            }
        }
    }
    if (!target) throw FeasibilityExhausted("every registered mode has been ruled out");
    return {target, current + " ruled out; switch to " + *target};
}

bool satisfies(const Proposal& proposal, const std::vector<Constraint>& constraints,
               const VentilatorSettings& current) {
    const ModeId target = proposal.mode_change.value_or(current.mode);
    for (const auto& c : constraints) {
        switch (c.kind) {
            case ConstraintKind::forbid_mode:
                if (c.mode == target) return false;
                break;
            case ConstraintKind::forbid_strategy:
                if (c.strategy == proposal.strategy) return false;
                break;
            case ConstraintKind::forbid_param:
                if (c.param && proposal.setting_updates.count(*c.param)) return false;
                break;
            case ConstraintKind::ceiling:
            case ConstraintKind::floor:
            case ConstraintKind::max_step: {
                if (!c.param || !c.value) break;
                auto it = proposal.setting_updates.find(*c.param);
                if (it == proposal.setting_updates.end()) break;
                const double v = it->second;
                if (c.kind == ConstraintKind::ceiling && v > *c.value + kEps) return false;
                if (c.kind == ConstraintKind::floor && v < *c.value - kEps) return false;
                if (c.kind == ConstraintKind::max_step) {
                    auto cur = current.get(*c.param);
                    if (cur && std::abs(v - *cur) > *c.value + kEps) return false;
                }
                break;
            }
        }
    }
    return true;
}

std::vector<Proposal> scripted_parameter_plan(const AgentConfig& cfg, const ModeRegistry& registry,
                                              const PlanRequest& req) {
    const auto& current = req.settings;
    const ModeId target = req.mode.mode_change.value_or(current.mode);
    const auto& spec = registry.at(target);
    const Category mode_tag = req.mode.mode_change ? Category::mode_level_change : Category::stay_in_mode;
    const Category prio_tag = priority_category(req.strategy);

    // Templates for the primary goal when it serves the chosen strategy, else
    // for the first goal that does, else the strategy's own goal family.
    std::vector<Goal> goal_order{req.goals.primary_goal};
    goal_order.insert(goal_order.end(), req.goals.secondary_goals.begin(), req.goals.secondary_goals.end());
    for (auto g : all_values<Goal>()) goal_order.push_back(g);
    Goal goal = req.goals.primary_goal;
    for (auto g : goal_order) {
        if (cfg.priority_by_goal[index_of(g)] == req.strategy) {
            goal = g;
            break;
        }
    }

    auto same_action = [](const Proposal& a, const Proposal& b) {
        return a.mode_change == b.mode_change && a.setting_updates == b.setting_updates;
    };

    // Values carried into a narrower mode are pulled back inside its bounds.
    auto fit_carried = [&](Proposal& p) {
        if (!p.mode_change) return true;
        for (auto param : all_values<Param>()) {
            if (!spec.applies(param) || p.setting_updates.count(param)) continue;
            auto cur = current.get(param);
            if (!cur) continue;
            const auto& lim = spec.limit(param);
            const double v = std::clamp(*cur, lim.min, lim.max);
            if (v == *cur) continue;
            if (std::abs(v - *cur) > lim.max_delta + kEps || forbids_param(req.constraints, param)) return false;
            p.setting_updates[param] = v;
        }
        return true;
    };

    std::vector<Proposal> out;
    auto push = [&](Proposal p) {
        if (!fit_carried(p)) return;
        if (p.setting_updates.empty() && !p.mode_change) return;
        if (static_cast<int>(p.setting_updates.size()) > cfg.max_setting_updates) return;
        if (!satisfies(p, req.constraints, current)) return;
        for (const auto& r : req.rejected)
            if (same_action(p, r)) return;
        for (const auto& q : out)
            if (same_action(p, q)) return;
        normalize_set(p.category_tags);
        out.push_back(std::move(p));
    };

    for (const auto& t : cfg.templates[index_of(goal)]) {
        Proposal p;
        p.cycle_id = req.cycle_id;
        p.round_index = req.round_index;
        p.strategy = req.strategy;
        p.mode_change = req.mode.mode_change;
        p.category_tags = t.tags;
        p.category_tags.push_back(prio_tag);
        p.category_tags.push_back(mode_tag);
        for (const auto& [param, delta] : t.steps) {
            if (!spec.applies(param) || forbids_param(req.constraints, param)) continue;
            const auto& lim = spec.limit(param);
            const auto cur = current.get(param);
            const double base = cur.value_or(lim.entry_value);
            double step = std::clamp(delta, -lim.max_delta, lim.max_delta);
            for (const auto& c : req.constraints)
                if (c.kind == ConstraintKind::max_step && c.param == param && c.value)
                    step = std::clamp(step, -*c.value, *c.value);
            double v = std::clamp(base + step, lim.min, lim.max);
            for (const auto& c : req.constraints) {
                if (c.param != param || !c.value) continue;
                if (c.kind == ConstraintKind::ceiling) v = std::min(v, *c.value);
                if (c.kind == ConstraintKind::floor) v = std::max(v, *c.value);
            }
            if (v < lim.min || v > lim.max) continue;
            if (std::abs(v - base) < kEps) continue;
            p.setting_updates[param] = v;
        }
        if (p.setting_updates.empty()) continue;
        std::string what = proposal_text(p, current);
        p.rationale = std::string(to_string(goal)) + ": " + what;
        push(std::move(p));
    }
    if (req.mode.mode_change) {
        Proposal p;
        p.cycle_id = req.cycle_id;
        p.round_index = req.round_index;
        p.strategy = req.strategy;
        p.mode_change = req.mode.mode_change;
        p.category_tags = {Category::mode_level_change, Category::conservative_small_step, prio_tag};
        p.rationale = "mode change only: " + current.mode + "->" + *req.mode.mode_change;
        push(std::move(p));
    }
    if (out.empty())
        throw FeasibilityExhausted("no feasible " + std::string(to_string(goal)) + " adjustment from " +
                                   settings_text(current));
    return rank_candidates(std::move(out), req.preference);
}

RevisionDirective reflect_route(const AgentConfig& cfg, const ModeRegistry& registry, const ReflectRequest& req) {
    const auto& fb = req.feedback;
    if (fb.decision != Decision::reject || !fb.reason_category)
        throw ContractError("reflect_route requires reject feedback with a reason category");
    const auto& rej = req.rejected;
    const ReasonCategory reason = *fb.reason_category;

    RevisionDirective d;
    d.resume_stage = cfg.routes[index_of(reason)];
    const ModeId target = rej.mode_change.value_or(req.settings.mode);

    std::vector<Param> disputed;
    for (auto p : fb.disputed_parameters)
        if (rej.setting_updates.count(p)) disputed.push_back(p);
    std::vector<Param> updated;
    for (const auto& [p, _] : rej.setting_updates) updated.push_back(p);

    auto forbid_mode = [&] {
        Constraint c;
        c.kind = ConstraintKind::forbid_mode;
        c.mode = target;
        d.constraints.push_back(c);
    };
    auto shrink_steps = [&](const std::vector<Param>& params) {
        const ModeSpec* spec = registry.find(target);
        for (auto p : params) {
            double base = req.settings.get(p).value_or(spec ? spec->limit(p).entry_value : 0.0);
            double prev = std::abs(rej.setting_updates.at(p) - base);
            if (prev <= kEps) continue;
            Constraint c;
            c.kind = ConstraintKind::max_step;
            c.param = p;
            c.value = prev * cfg.step_fraction;
            d.constraints.push_back(c);
        }
    };
    auto forbid_params = [&](const std::vector<Param>& params) {
        for (auto p : params) {
            Constraint c;
            c.kind = ConstraintKind::forbid_param;
            c.param = p;
            d.constraints.push_back(c);
        }
    };

    switch (reason) {
        case ReasonCategory::wrong_priority: {
            Constraint c;
            c.kind = ConstraintKind::forbid_strategy;
            c.strategy = rej.strategy;
            d.constraints.push_back(c);
            break;
        }
        case ReasonCategory::wrong_mode:
            forbid_mode();
            break;
        case ReasonCategory::parameter_magnitude:
            shrink_steps(disputed.empty() ? updated : disputed);
            break;
        case ReasonCategory::feasibility:
            forbid_params(disputed.empty() ? updated : disputed);
            break;
        case ReasonCategory::other:
            if (disputed.empty()) shrink_steps(updated);
            else forbid_params(disputed);
            break;
    }
    if (d.constraints.empty()) {
        // Nothing parameter-level to constrain (mode change only): rule out the mode.
        forbid_mode();
        if (d.resume_stage == ResumeStage::parameter_plan) d.resume_stage = ResumeStage::mode_select;
    }
    d.rationale = std::string(to_string(reason)) + " -> resume at " + std::string(to_string(d.resume_stage));
    for (const auto& c : d.constraints) d.rationale += "; " + describe(c);
    return d;
}

std::string describe(const Constraint& c) {
    const std::string p = c.param ? std::string(to_string(*c.param)) : "?";
    switch (c.kind) {
        case ConstraintKind::ceiling: return p + " <= " + fmt(c.value.value_or(0));
        case ConstraintKind::floor: return p + " >= " + fmt(c.value.value_or(0));
        case ConstraintKind::max_step: return p + " step <= " + fmt(c.value.value_or(0));
        case ConstraintKind::forbid_param: return "do not change " + p;
        case ConstraintKind::forbid_mode: return "avoid mode " + c.mode.value_or("?");
        case ConstraintKind::forbid_strategy:
            return "avoid priority " + (c.strategy ? std::string(to_string(*c.strategy)) : std::string("?"));
    }
    return "?";
}

// ---------------------------------------------------------------------------

PreferenceSignal preference_signal_for(const CycleRecord& record) {
    PreferenceSignal s;
    if (record.status == CycleStatus::hold) {
        if (record.evidence.branch && record.evidence.branch->reason == "insufficient evidence")
            s.evidenced_by_accept = {Category::defer_when_insufficient};
        return s;
    }
    if (record.status == CycleStatus::accepted && !record.trace.empty())
        s.evidenced_by_accept = record.trace.back().proposal.category_tags;
    normalize_set(s.evidenced_by_accept);
    std::set<Category> rejected;
    for (const auto& e : record.trace)
        if (e.feedback.decision == Decision::reject) rejected.insert(e.proposal.category_tags.begin(), e.proposal.category_tags.end());
    for (auto c : rejected)
        if (!std::binary_search(s.evidenced_by_accept.begin(), s.evidenced_by_accept.end(), c))
            s.evidenced_only_by_reject.push_back(c);
    return s;
}

std::string render_note(const CycleRecord& r) {
    std::ostringstream os;
    const auto& cur = r.context.current_settings;
    os << "Cycle " << r.cycle_id << " (" << to_string(r.status) << ")";
    if (r.evidence.goals)
        os << ": phase " << to_string(r.evidence.goals->phase) << ", goal " << to_string(r.evidence.goals->primary_goal);
    os << ".";
    switch (r.status) {
        case CycleStatus::hold:
            os << " Hold: " << (r.evidence.branch ? r.evidence.branch->reason : std::string("no branch")) << ".";
            break;
        case CycleStatus::accepted:
            os << " Accepted round " << r.rounds << ": " << proposal_text(r.trace.back().proposal, cur) << ".";
            break;
        case CycleStatus::exhausted:
            os << " No proposal accepted in " << r.rounds << " rounds; settings unchanged.";
            break;
        case CycleStatus::failed:
            os << " Failed: " << r.evidence.failure.value_or("unknown error") << "; settings unchanged.";
            break;
    }
    for (const auto& e : r.trace) {
        if (e.feedback.decision != Decision::reject) continue;
        os << " Round " << e.proposal.round_index << " rejected ("
           << (e.feedback.reason_category ? to_string(*e.feedback.reason_category) : std::string_view("?")) << "): "
           << proposal_text(e.proposal, cur) << ".";
    }
    if (r.evidence.summary) os << " State: " << r.evidence.summary->narrative << ".";
    return os.str();
}

NoteOutput close_cycle(const CycleRecord& record) { return {render_note(record), preference_signal_for(record)}; }

}  // namespace vdss
