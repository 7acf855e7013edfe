#include <doctest.h>

#include "support.hpp"
#include "vdss/contracts_json.hpp"
#include "vdss/safety.hpp"

using namespace vdss;
using namespace testing;

namespace {

Severity severity_of(const StateSummary& s, AbnormalityCode code) {
    for (const auto& a : s.abnormalities)
        if (a.code == code) return a.severity;
    return Severity::none;
}

StateSummary detect(const Fixture& f, const PatientState& st, const VentilatorSettings& s,
                    std::optional<WaveformCues> cues = std::nullopt) {
    return scripted_detection(f.agents, DetectionRequest{st, s, cues});
}

PlanRequest plan_request(const Fixture& f, const PatientState& st, const VentilatorSettings& s) {
    auto summary = detect(f, st, s);
    auto goals = scripted_phase_goals(f.agents, PhaseRequest{summary, s});
    auto strat = scripted_strategy(f.agents, StrategyRequest{summary, goals, {}});
    CategoryScores sc{};
    auto mode = scripted_mode_select(f.agents, f.registry, ModeRequest{strat.strategy, goals, s, {}, sc});
    return PlanRequest{"enc-c1", 1, strat.strategy, goals, mode, s, sc, {}, {}};
}

}  // namespace

TEST_CASE("detection grades hypoxemia") {
    Fixture f;
    CHECK(severity_of(detect(f, hypoxemic_state(86), prvc()), AbnormalityCode::hypoxemia) == Severity::severe);
    CHECK(severity_of(detect(f, hypoxemic_state(90), prvc()), AbnormalityCode::hypoxemia) == Severity::moderate);
    CHECK(severity_of(detect(f, hypoxemic_state(93), prvc()), AbnormalityCode::hypoxemia) == Severity::mild);
    CHECK(severity_of(detect(f, stable_state(), prvc()), AbnormalityCode::hypoxemia) == Severity::none);
}

TEST_CASE("detection output is contract-valid and cites evidence") {
    Fixture f;
    auto s = detect(f, hypoxemic_state(86), prvc());
    CHECK(decode<StateSummary>(encode(s), f.ctx()).ok());
    CHECK(s.abnormalities.size() == enum_count<AbnormalityCode>());
    for (const auto& a : s.abnormalities)
        if (a.code == AbnormalityCode::hypoxemia) CHECK(a.evidence == std::vector<std::string>{"state.spo2"});
    CHECK(s.evidence_sufficient);
}

TEST_CASE("waveform cues feed asynchrony detection") {
    Fixture f;
    WaveformCues cues;
    cues.asynchrony_patterns = {Pattern::sawtooth};
    auto s = detect(f, stable_state(), prvc(), cues);
    CHECK(severity_of(s, AbnormalityCode::asynchrony) == Severity::moderate);
    CHECK(severity_of(s, AbnormalityCode::auto_peep_risk) == Severity::mild);
    CHECK(severity_of(detect(f, stable_state(), prvc()), AbnormalityCode::asynchrony) == Severity::none);
}

TEST_CASE("missing measurements make evidence insufficient") {
    Fixture f;
    auto st = hypoxemic_state(86);
    st.ph.reset();
    st.paco2.reset();
    st.pao2.reset();
    auto s = detect(f, st, prvc());
    CHECK_FALSE(s.evidence_sufficient);
    auto goals = scripted_phase_goals(f.agents, PhaseRequest{s, prvc()});
    auto gate = gate_decision(s, goals);
    CHECK(gate.branch == Branch::hold);
    CHECK(gate.reason == "insufficient evidence");
}

TEST_CASE("phase and goals") {
    Fixture f;
    auto g = scripted_phase_goals(f.agents, PhaseRequest{detect(f, hypoxemic_state(86), prvc()), prvc()});
    CHECK(g.phase == Phase::acute);
    CHECK(g.primary_goal == Goal::improve_oxygenation);
    auto w = scripted_phase_goals(f.agents, PhaseRequest{detect(f, stable_state(), prvc(6, 35)), prvc(6, 35)});
    CHECK(w.phase == Phase::weaning);
    CHECK(w.primary_goal == Goal::progress_weaning);
    auto s = scripted_phase_goals(f.agents, PhaseRequest{detect(f, stable_state(), prvc(10, 50)), prvc(10, 50)});
    CHECK(s.phase == Phase::stabilization);
}

TEST_CASE("gate adjusts only on moderate findings with sufficient evidence") {
    Fixture f;
    auto sum = detect(f, hypoxemic_state(90), prvc());
    auto g = scripted_phase_goals(f.agents, PhaseRequest{sum, prvc()});
    CHECK(gate_decision(sum, g).branch == Branch::adjust);
    auto mild = detect(f, hypoxemic_state(93), prvc());
    CHECK(gate_decision(mild, scripted_phase_goals(f.agents, PhaseRequest{mild, prvc()})).branch == Branch::hold);
}

TEST_CASE("strategy honours forbidden priorities") {
    Fixture f;
    auto sum = detect(f, hypoxemic_state(88), prvc());
    auto goals = scripted_phase_goals(f.agents, PhaseRequest{sum, prvc()});
    CHECK(scripted_strategy(f.agents, StrategyRequest{sum, goals, {}}).strategy == Priority::oxygenation);
    Constraint c;
    c.kind = ConstraintKind::forbid_strategy;
    c.strategy = Priority::oxygenation;
    CHECK(scripted_strategy(f.agents, StrategyRequest{sum, goals, {c}}).strategy != Priority::oxygenation);
    std::vector<Constraint> all;
    for (auto p : all_values<Priority>()) {
        c.strategy = p;
        all.push_back(c);
    }
    CHECK_THROWS_AS(scripted_strategy(f.agents, StrategyRequest{sum, goals, all}), FeasibilityExhausted);
}

TEST_CASE("mode select leaves a forbidden mode") {
    Fixture f;
    auto req = plan_request(f, hypoxemic_state(88), prvc());
    CHECK_FALSE(req.mode.mode_change);
    Constraint c;
    c.kind = ConstraintKind::forbid_mode;
    c.mode = "PRVC";
    auto d = scripted_mode_select(f.agents, f.registry, ModeRequest{req.strategy, req.goals, prvc(), {c}, {}});
    REQUIRE(d.mode_change);
    CHECK(*d.mode_change != "PRVC");
}

TEST_CASE("planner candidates are safe, compact and ranked") {
    Fixture f;
    auto req = plan_request(f, hypoxemic_state(88), prvc(8, 40));
    auto cands = scripted_parameter_plan(f.agents, f.registry, req);
    REQUIRE_FALSE(cands.empty());
    for (const auto& p : cands) {
        CHECK(check_all(p, req.settings, f.registry).pass());
        CHECK(p.setting_updates.size() <= 3);
        CHECK(decode<Proposal>(encode(p), f.ctx()).ok());
        CHECK(std::find(p.category_tags.begin(), p.category_tags.end(), Category::prio_oxygenation) != p.category_tags.end());
        for (const auto& [param, v] : p.setting_updates)
            if (param == Param::fio2) CHECK(v > 40);  // oxygenation templates only raise
    }
    // uniform scores: the first template (conservative, single parameter) leads
    CHECK(cands[0].setting_updates == std::map<Param, double>{{Param::fio2, 50}});
}

TEST_CASE("planner respects max_step constraints and skips rejected actions") {
    Fixture f;
    auto req = plan_request(f, hypoxemic_state(88), prvc(8, 40));
    auto first = scripted_parameter_plan(f.agents, f.registry, req)[0];
    Constraint c;
    c.kind = ConstraintKind::max_step;
    c.param = Param::fio2;
    c.value = 5;
    req.constraints = {c};
    req.rejected = {first};
    for (const auto& p : scripted_parameter_plan(f.agents, f.registry, req)) {
        CHECK(p.setting_updates != first.setting_updates);
        if (p.setting_updates.count(Param::fio2)) CHECK(p.setting_updates.at(Param::fio2) <= 45);
    }
}

TEST_CASE("planner fails when nothing feasible remains") {
    Fixture f;
    auto req = plan_request(f, hypoxemic_state(88), prvc(24, 100));
    CHECK_THROWS_AS(scripted_parameter_plan(f.agents, f.registry, req), FeasibilityExhausted);
}

TEST_CASE("reflect routes rejection reasons") {
    Fixture f;
    auto req = plan_request(f, hypoxemic_state(88), prvc(8, 40));
    auto p = scripted_parameter_plan(f.agents, f.registry, req)[0];  // fio2 40 -> 50

    auto d = reflect_route(f.agents, f.registry, ReflectRequest{reject(ReasonCategory::parameter_magnitude, {Param::fio2}), p, prvc(8, 40)});
    CHECK(d.resume_stage == ResumeStage::parameter_plan);
    REQUIRE(d.constraints.size() == 1);
    CHECK(d.constraints[0].kind == ConstraintKind::max_step);
    CHECK(*d.constraints[0].value == doctest::Approx(5.0));

    d = reflect_route(f.agents, f.registry, ReflectRequest{reject(ReasonCategory::wrong_priority), p, prvc(8, 40)});
    CHECK(d.resume_stage == ResumeStage::strategy);
    CHECK(d.constraints[0].kind == ConstraintKind::forbid_strategy);

    d = reflect_route(f.agents, f.registry, ReflectRequest{reject(ReasonCategory::wrong_mode), p, prvc(8, 40)});
    CHECK(d.resume_stage == ResumeStage::mode_select);
    CHECK(d.constraints[0].mode == "PRVC");

    d = reflect_route(f.agents, f.registry, ReflectRequest{reject(ReasonCategory::feasibility, {Param::fio2}), p, prvc(8, 40)});
    CHECK(d.constraints[0].kind == ConstraintKind::forbid_param);
    CHECK(decode<RevisionDirective>(encode(d)).ok());

    CHECK_THROWS_AS(reflect_route(f.agents, f.registry, ReflectRequest{accept(), p, prvc()}), ContractError);
}

TEST_CASE("preference signal separates accepted and rejected-only tags") {
    CycleRecord r;
    Proposal a, b;
    a.category_tags = {Category::stay_in_mode, Category::conservative_small_step, Category::prio_oxygenation};
    b.category_tags = {Category::stay_in_mode, Category::target_driven_assertive, Category::prio_oxygenation};
    r.trace = {{a, reject(ReasonCategory::other), {}}, {b, accept(), {}}};
    r.rounds = 2;
    r.status = CycleStatus::accepted;
    auto s = preference_signal_for(r);
    CHECK(s.evidenced_by_accept == b.category_tags);
    CHECK(s.evidenced_only_by_reject == std::vector<Category>{Category::conservative_small_step});

    CycleRecord hold;
    hold.status = CycleStatus::hold;
    hold.evidence.branch = BranchDecision{Branch::hold, "insufficient evidence"};
    CHECK(preference_signal_for(hold).evidenced_by_accept == std::vector<Category>{Category::defer_when_insufficient});
    hold.evidence.branch = BranchDecision{Branch::hold, "stable"};
    CHECK(preference_signal_for(hold).evidenced_by_accept.empty());
}

TEST_CASE("notes are deterministic") {
    CycleRecord r;
    r.cycle_id = "enc-c1";
    r.status = CycleStatus::hold;
    r.evidence.branch = BranchDecision{Branch::hold, "stable"};
    CHECK(render_note(r) == render_note(r));
    CHECK_FALSE(render_note(r).empty());
}
