// Emits one {"schema": id, "instance": payload} line per sample payload:
// agent messages captured from live cycles, persisted envelopes and service
// responses. check_schemas.py validates them against schemas/v1.

#include <iostream>
#include <set>
#include <sstream>

#include "support.hpp"
#include "vdss/regret_study.hpp"
#include "vdss/replay.hpp"
#include "vdss/service.hpp"

using namespace vdss;
using namespace testing;
using nlohmann::json;

namespace {

class Recorder : public Backend {
public:
    explicit Recorder(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}
    json call(AgentRole role, const json& input) override {
        json out = inner_->call(role, input);
        emit(input_schema(role), input);
        emit(output_schema(role), out);
        return out;
    }
    std::string id() const override { return "recorder"; }

    static void emit(const std::string& schema, const json& instance) {
        std::cout << json{{"schema", schema}, {"instance", instance}}.dump() << "\n";
    }

private:
    std::shared_ptr<Backend> inner_;
};

void emit(const std::string& schema, const json& instance) { Recorder::emit(schema, instance); }

}  // namespace

int main() {
    Fixture f;
    MemoryStore memory;
    auto rt = f.runtime(std::make_shared<Recorder>(f.scripted()));

    // Agent traffic and persisted envelopes from a short regret study, with
    // waveforms, rejections of every kind, holds and exhaustion.
    {
        EngineConfig cfg = f.engine_cfg;
        Engine engine(f.registry, *rt, f.bandit, cfg, memory);
        SimulatedClinician clinician(ClinicianProfile::default_profile());
        std::set<std::string> seen;
        for (int i = 1; i <= 40; ++i) {
            auto in = study_scenario(7, i, "clinician-1");
            engine.run_cycle(in, [&](const PendingReview& p) {
                emit("pending_review", p.to_json());
                return clinician.review(p.proposal, p.safety);
            });
        }
        auto in = hypoxemia_input("enc-x", "clinician-1", 1);
        engine.run_cycle(in, [](const PendingReview&) { return reject(ReasonCategory::other); });
    }
    for (const auto& e : memory.entries()) {
        emit("envelope", e.to_json());
        if (e.kind == EnvelopeKind::preference_snapshot) emit("preference_snapshot", e.payload);
        if (e.kind == EnvelopeKind::cycle_record) emit("cycle_record", e.payload);
        if (e.kind == EnvelopeKind::note) emit("note_payload", e.payload);
    }

    // Dataset rows and replay metrics.
    const auto cohort = synthesize_cohort(4, 2);
    std::ostringstream rows;
    write_jsonl(rows, cohort);
    std::istringstream rows_in(rows.str());
    for (std::string line; std::getline(rows_in, line);) emit("trajectory_row", json::parse(line));
    std::istringstream ds_in(rows.str());
    auto ds = parse_jsonl(ds_in, &f.registry);
    ReplayOptions ro;
    ro.engine = f.engine_cfg;
    emit("replay_metrics", replay_next_step(ds, f.registry, f.agents, f.bandit, ro).to_json());

    emit("clinician_profile", ClinicianProfile::default_profile().to_json());

    // Service requests and responses.
    {
        MemoryStore m;
        auto srt = f.runtime();
        ReviewService svc(f.registry, *srt, f.bandit, f.engine_cfg, m);
        const json load_req{{"format", "jsonl"}, {"content", rows.str()}};
        emit("dataset_load_request", load_req);
        emit("dataset_load_request", json{{"path", "/data/cohort.jsonl"}});
        emit("dataset_load_response", svc.load_dataset(load_req));

        Encounter e;
        e.id = "enc-s";
        e.records.push_back({hypoxemic_state(88, 0), prvc()});
        e.records.push_back({stable_state(3600), prvc()});
        svc.add_encounters({e});
        const json start{{"clinician_id", "dr-a"}, {"window", {{"start", 0}, {"end", 10}}}, {"waveform_enabled", true}};
        emit("start_cycle_request", start);
        const auto id = svc.start_cycle("enc-s", StartOptions::from_json(start));
        emit("start_cycle_response", json{{"cycle_id", id}, {"status", "running"}});
        emit("cycle_status", svc.review(id));  // possibly still running
        svc.wait_settled(id);
        emit("cycle_status", svc.review(id));
        const json reject_req{{"decision", "reject"},
                              {"reason_category", "parameter_magnitude"},
                              {"disputed_parameters", json::array({"fio2"})},
                              {"rationale", "smaller step"},
                              {"round", 1}};
        emit("feedback_request", reject_req);
        emit("feedback_response", svc.submit_feedback(id, reject_req));
        svc.wait_settled(id);
        const json accept_req{{"decision", "accept"}, {"disputed_parameters", json::array()}, {"rationale", "ok"}};
        emit("feedback_request", accept_req);
        svc.submit_feedback(id, accept_req);
        svc.wait_settled(id);
        emit("cycle_status", svc.review(id));
        emit("cycle_trail", svc.trail(id));
        emit("clinician_preferences", svc.preferences("dr-a"));
        emit("clinician_preferences", svc.preferences("nobody"));
        emit("clinician_regret", svc.regret("dr-a"));

        const auto held = svc.start_cycle("enc-s", StartOptions::from_json(json{{"clinician_id", "dr-a"}}));
        svc.wait_settled(held);
        emit("cycle_status", svc.review(held));
        try {
            svc.start_cycle("missing", StartOptions::from_json(json{{"clinician_id", "dr-a"}}));
        } catch (const ServiceError& err) {
            emit("api_error", err.body());
        }
    }
    return 0;
}
