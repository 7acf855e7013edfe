#include <doctest.h>

#include "support.hpp"
#include "vdss/contracts_json.hpp"
#include "vdss/safety.hpp"

using namespace vdss;
using namespace testing;

namespace {

class CountingBackend : public Backend {
public:
    explicit CountingBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}
    nlohmann::json call(AgentRole role, const nlohmann::json& input) override {
        ++counts[index_of(role)];
        if (fail_role && *fail_role == role) return nlohmann::json("broken");
        return inner_->call(role, input);
    }
    std::string id() const override { return "counting"; }
    int count(AgentRole r) const { return counts[index_of(r)]; }
    void reset() { counts.fill(0); }

    std::array<int, kRoleCount> counts{};
    std::optional<AgentRole> fail_role;

private:
    std::shared_ptr<Backend> inner_;
};

struct Harness {
    Fixture f;
    MemoryStore memory;
    std::shared_ptr<CountingBackend> backend = std::make_shared<CountingBackend>(f.scripted());
    std::unique_ptr<AgentRuntime> rt = f.runtime(backend, 0);
    Engine engine{f.registry, *rt, f.bandit, f.engine_cfg, memory};
};

}  // namespace

TEST_CASE("accept on the first round") {
    Harness h;
    auto rec = h.engine.run_cycle(hypoxemia_input(), [](const PendingReview&) { return accept(); });
    CHECK(rec.status == CycleStatus::accepted);
    CHECK(rec.rounds == 1);
    REQUIRE(rec.accepted_settings);
    CHECK(*rec.accepted_settings == apply_proposal(prvc(), rec.trace[0].proposal, h.f.registry));
    CHECK(rec.bandit_updated);
    CHECK(decode<CycleRecord>(encode(rec), h.f.ctx()).ok());

    auto logged = h.memory.find_cycle_record(rec.cycle_id);
    REQUIRE(logged);
    CHECK(*logged == rec);
    auto entries = h.memory.entries_for_cycle(rec.cycle_id);
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].kind == EnvelopeKind::cycle_record);
    CHECK(entries[1].kind == EnvelopeKind::note);
    CHECK(entries[2].kind == EnvelopeKind::preference_snapshot);
    CHECK(h.memory.load_preference_state("dr-a", h.f.bandit.hyper).cycle_updates == 1);
}

TEST_CASE("pending review shape") {
    Harness h;
    auto s = h.engine.start(hypoxemia_input());
    s.advance();
    REQUIRE(s.pending());
    const auto& p = *s.pending();
    CHECK(p.round == 1);
    CHECK(p.k_max == 5);
    CHECK(p.safety.pass());
    CHECK(p.top_preferences.size() == 3);
    CHECK(std::find(p.evidence_refs.begin(), p.evidence_refs.end(), "state.spo2") != p.evidence_refs.end());
    auto j = p.to_json();
    CHECK(j["cycle_id"] == "enc-1-c1");
    CHECK(j["preference_context"].size() == 3);
    s.advance();  // idempotent while pending
    CHECK(s.pending()->round == 1);
    CHECK_THROWS_AS(s.submit(ClinicianFeedback{Decision::reject, std::nullopt, {}, ""}), ContractError);
    CHECK(s.pending());
}

TEST_CASE("parameter magnitude rejection re-invokes only the planner") {
    Harness h;
    auto s = h.engine.start(hypoxemia_input());
    s.advance();
    REQUIRE(s.pending());
    const auto first = s.pending()->proposal;
    h.backend->reset();
    const auto param = first.setting_updates.begin()->first;
    s.submit(reject(ReasonCategory::parameter_magnitude, {param}, "too large"));
    s.advance();
    REQUIRE(s.pending());
    CHECK(h.backend->count(AgentRole::reflect) == 1);
    CHECK(h.backend->count(AgentRole::parameter_planner) == 1);
    for (auto r : {AgentRole::waveform_analyzer, AgentRole::detection, AgentRole::phase_goal_manager, AgentRole::gate,
                   AgentRole::strategy_selector, AgentRole::mode_select, AgentRole::note_generator})
        CHECK(h.backend->count(r) == 0);
    const auto second = s.pending()->proposal;
    CHECK(second.round_index == 2);
    CHECK(second.strategy == first.strategy);
    CHECK(second.mode_change == first.mode_change);
    CHECK(second.setting_updates != first.setting_updates);
    CHECK(satisfies(second, s.constraints(), prvc()));
}

TEST_CASE("wrong priority re-runs strategy and mode but not detection") {
    Harness h;
    auto s = h.engine.start(hypoxemia_input());
    s.advance();
    const auto first = s.pending()->proposal;
    h.backend->reset();
    s.submit(reject(ReasonCategory::wrong_priority));
    s.advance();
    REQUIRE(s.pending());
    CHECK(h.backend->count(AgentRole::strategy_selector) == 1);
    CHECK(h.backend->count(AgentRole::mode_select) == 1);
    CHECK(h.backend->count(AgentRole::detection) == 0);
    CHECK(s.pending()->proposal.strategy != first.strategy);
}

TEST_CASE("wrong mode leaves the current mode") {
    Harness h;
    auto s = h.engine.start(hypoxemia_input());
    s.advance();
    h.backend->reset();
    s.submit(reject(ReasonCategory::wrong_mode));
    s.advance();
    REQUIRE(s.pending());
    CHECK(h.backend->count(AgentRole::strategy_selector) == 0);
    CHECK(h.backend->count(AgentRole::mode_select) == 1);
    REQUIRE(s.pending()->proposal.mode_change);
    CHECK(*s.pending()->proposal.mode_change != "PRVC");
}

TEST_CASE("rejecting every round exhausts at K_max without a bandit update") {
    Harness h;
    int reviews = 0;
    auto rec = h.engine.run_cycle(hypoxemia_input(), [&](const PendingReview& p) {
        ++reviews;
        CHECK(p.round == reviews);
        return reject(ReasonCategory::other);
    });
    CHECK(rec.status == CycleStatus::exhausted);
    CHECK(rec.rounds == 5);
    CHECK(reviews == 5);
    CHECK_FALSE(rec.bandit_updated);
    CHECK_FALSE(rec.accepted_settings);
    CHECK_FALSE(h.memory.latest_snapshot_offset("dr-a"));
    // every proposed action is distinct
    for (std::size_t i = 0; i < rec.trace.size(); ++i)
        for (std::size_t j = i + 1; j < rec.trace.size(); ++j)
            CHECK(rec.trace[i].proposal.setting_updates != rec.trace[j].proposal.setting_updates);
}

TEST_CASE("stable patient holds without a proposal") {
    Harness h;
    auto in = hypoxemia_input();
    in.state = stable_state(3600);
    auto rec = h.engine.run_cycle(in, [](const PendingReview&) -> ClinicianFeedback {
        FAIL("no review expected");
        return accept();
    });
    CHECK(rec.status == CycleStatus::hold);
    CHECK(rec.trace.empty());
    CHECK(rec.rounds == 0);
    CHECK_FALSE(rec.bandit_updated);
    CHECK(h.backend->count(AgentRole::parameter_planner) == 0);
}

TEST_CASE("no feasible plan at round one is a hold with the reason recorded") {
    Harness h;
    auto in = hypoxemia_input();
    in.settings = prvc(24, 100, 16);
    auto rec = h.engine.run_cycle(in, [](const PendingReview&) { return accept(); });
    CHECK(rec.status == CycleStatus::hold);
    REQUIRE(rec.evidence.branch);
    CHECK(rec.evidence.branch->reason.rfind("no feasible adjustment", 0) == 0);
}

TEST_CASE("role failure fails the cycle and leaves a trail") {
    Harness h;
    h.backend->fail_role = AgentRole::parameter_planner;
    auto rec = h.engine.run_cycle(hypoxemia_input(), [](const PendingReview&) { return accept(); });
    CHECK(rec.status == CycleStatus::failed);
    REQUIRE(rec.evidence.failure);
    CHECK(rec.evidence.failure->find("parameter_planner") != std::string::npos);
    CHECK_FALSE(rec.bandit_updated);
    CHECK(h.memory.find_cycle_record(rec.cycle_id));
}

TEST_CASE("note generator failure falls back without losing the decision") {
    Harness h;
    h.backend->fail_role = AgentRole::note_generator;
    auto rec = h.engine.run_cycle(hypoxemia_input(), [](const PendingReview&) { return accept(); });
    CHECK(rec.status == CycleStatus::accepted);
    CHECK(rec.bandit_updated);
    REQUIRE(rec.evidence.failure);
    CHECK(rec.evidence.failure->rfind("note fallback", 0) == 0);
    CHECK_FALSE(rec.note.empty());
}

TEST_CASE("persistence failure at closure leaves no trace") {
    Harness h;
    h.memory.fail_next_write_after(0);
    CHECK_THROWS_AS(h.engine.run_cycle(hypoxemia_input(), [](const PendingReview&) { return accept(); }),
                    PersistenceError);
    CHECK(h.memory.size() == 0);
}

TEST_CASE("waveform cues reach detection and are refreshed on request") {
    Harness h;
    auto in = hypoxemia_input();
    in.state.waveform_ref = make_waveform_ref(WaveTemplate::sawtooth, 20.0, 3);
    auto s = h.engine.start(in);
    s.advance();
    REQUIRE(s.pending());
    REQUIRE(s.record().evidence.cues);
    CHECK(s.record().evidence.cues->has(Pattern::sawtooth));
    CHECK(s.record().context.feature_vector[9] == 1.0);
    s.submit(reject(ReasonCategory::other, {}, "check the waveform again"));
    s.advance();
    CHECK(s.record().evidence.refreshed_cues.size() == 1);
}

TEST_CASE("disabling waveform ignores references") {
    Fixture f;
    MemoryStore m;
    auto rt = f.runtime();
    auto cfg = f.engine_cfg;
    cfg.enable_waveform = false;
    Engine e(f.registry, *rt, f.bandit, cfg, m);
    auto in = hypoxemia_input();
    in.state.waveform_ref = make_waveform_ref(WaveTemplate::sawtooth, 20.0, 3);
    auto rec = e.run_cycle(in, [](const PendingReview&) { return accept(); });
    CHECK_FALSE(rec.evidence.cues);
    CHECK(rt->stats().role(AgentRole::waveform_analyzer).calls == 0);
}

TEST_CASE("short-term context carries prior notes") {
    Harness h;
    h.engine.run_cycle(hypoxemia_input("enc-1", "dr-a", 1), [](const PendingReview&) { return accept(); });
    auto rec = h.engine.run_cycle(hypoxemia_input("enc-1", "dr-a", 2), [](const PendingReview&) { return accept(); });
    REQUIRE(rec.context.short_term.size() == 1);
    CHECK_FALSE(rec.context.long_term_refs.empty());
}

TEST_CASE("engine config validation") {
    EngineConfig c;
    c.k_max = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(EngineConfig::from_json(nlohmann::json{{"k_max", 5}, {"bogus", 1}}), ConfigError);
}

TEST_CASE("constraints from violations") {
    Fixture f;
    Proposal p;
    p.setting_updates = {{Param::fio2, 65}};
    auto report = check_all(p, prvc(8, 40), f.registry);
    auto cs = constraints_from_violations(report, p, prvc(8, 40), f.registry);
    REQUIRE(cs.size() == 1);
    CHECK(cs[0].kind == ConstraintKind::max_step);
    CHECK(cs[0].param == Param::fio2);
}
