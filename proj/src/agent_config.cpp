#include <string>

#include "vdss/agents.hpp"
#include "vdss/errors.hpp"
#include "vdss/util.hpp"

namespace vdss {

namespace {

template <class E>
E enum_at(const nlohmann::json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError(where + ": expected a string");
    auto e = parse_enum<E>(v.get<std::string>());
    if (!e) throw ConfigError(where + ": unknown value '" + v.get<std::string>() + "'");
    return *e;
}

DetectionCondition::Op parse_op(const std::string& s, const std::string& where) {
    using Op = DetectionCondition::Op;
    if (s == "<") return Op::lt;
    if (s == "<=") return Op::le;
    if (s == ">") return Op::gt;
    if (s == ">=") return Op::ge;
    if (s == "present") return Op::present;
    throw ConfigError(where + ": unknown operator '" + s + "'");
}

}  // namespace

AgentConfig AgentConfig::from_json(const nlohmann::json& j) {
    AgentConfig c;
    try {
        const auto& det = j.at("detection");
        c.required_fields = det.at("required_fields").get<std::vector<std::string>>();
        c.max_missing_required = det.value("max_missing_required", 2);
        for (const auto& f : c.required_fields) {
            bool known = false;
            for (auto n : PatientState::numeric_fields()) known = known || n == f;
            if (!known) throw ConfigError("detection: unknown required field '" + f + "'");
        }
        int i = 0;
        for (const auto& r : det.at("rules")) {
            const std::string where = "detection rule " + std::to_string(i++);
            DetectionRule rule;
            rule.code = enum_at<AbnormalityCode>(r.at("code"), where);
            rule.severity = enum_at<Severity>(r.at("severity"), where);
            for (const auto& cond : r.at("all")) {
                DetectionCondition dc;
                dc.field = cond.at("field").get<std::string>();
                dc.op = parse_op(cond.at("op").get<std::string>(), where);
                if (dc.op != DetectionCondition::Op::present) dc.value = cond.at("value").get<double>();
                rule.all.push_back(std::move(dc));
            }
            if (rule.all.empty()) throw ConfigError(where + ": needs at least one condition");
            c.rules.push_back(std::move(rule));
        }

        const auto& ph = j.at("phase");
        c.weaning_max_fio2 = ph.value("weaning_max_fio2", c.weaning_max_fio2);
        c.weaning_max_peep = ph.value("weaning_max_peep", c.weaning_max_peep);

        const auto& by_abn = j.at("goals").at("by_abnormality");
        for (auto code : all_values<AbnormalityCode>()) {
            const std::string name(to_string(code));
            if (!by_abn.contains(name)) throw ConfigError("goals: no goal for abnormality '" + name + "'");
            c.goal_by_abnormality[index_of(code)] = enum_at<Goal>(by_abn.at(name), "goals." + name);
        }

        const auto& strat = j.at("strategy");
        for (auto g : all_values<Goal>()) {
            const std::string name(to_string(g));
            if (!strat.at("by_goal").contains(name)) throw ConfigError("strategy: no priority for goal '" + name + "'");
            c.priority_by_goal[index_of(g)] = enum_at<Priority>(strat.at("by_goal").at(name), "strategy." + name);
        }
        for (const auto& p : strat.at("fallback_order")) c.fallback_order.push_back(enum_at<Priority>(p, "fallback_order"));

        const auto& prefs = j.at("mode_select").at("preferred_modes");
        for (auto it = prefs.begin(); it != prefs.end(); ++it) {
            auto p = enum_at<Priority>(nlohmann::json(it.key()), "preferred_modes");
            c.preferred_modes[index_of(p)] = it->get<std::vector<ModeId>>();
        }

        const auto& tmpl = j.at("planner").at("templates");
        for (auto g : all_values<Goal>()) {
            const std::string name(to_string(g));
            if (!tmpl.contains(name)) throw ConfigError("planner: no templates for goal '" + name + "'");
            for (const auto& t : tmpl.at(name)) {
                PlanTemplate pt;
                for (auto s = t.at("steps").begin(); s != t.at("steps").end(); ++s) {
                    auto p = enum_at<Param>(nlohmann::json(s.key()), "planner." + name);
                    pt.steps[p] = s->get<double>();
                }
                for (const auto& tag : t.at("tags")) pt.tags.push_back(enum_at<Category>(tag, "planner." + name));
                if (pt.steps.empty() || pt.tags.empty())
                    throw ConfigError("planner." + name + ": template needs steps and tags");
                c.templates[index_of(g)].push_back(std::move(pt));
            }
        }

        const auto& refl = j.at("reflect");
        for (auto rc : all_values<ReasonCategory>()) {
            const std::string name(to_string(rc));
            c.routes[index_of(rc)] = enum_at<ResumeStage>(refl.at("routes").at(name), "reflect.routes." + name);
        }
        c.step_fraction = refl.value("step_fraction", c.step_fraction);
        if (!(c.step_fraction > 0 && c.step_fraction < 1)) throw ConfigError("reflect.step_fraction must be in (0,1)");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("agents config: ") + e.what());
    }
    return c;
}

AgentConfig AgentConfig::load(const std::filesystem::path& config_dir) {
    return from_json(read_json_file(config_dir / "agents.json"));
}

}  // namespace vdss
