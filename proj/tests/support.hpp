#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "vdss/agent_runtime.hpp"
#include "vdss/agents.hpp"
#include "vdss/bandit.hpp"
#include "vdss/memory_store.hpp"
#include "vdss/registry.hpp"
#include "vdss/waveform.hpp"
#include "vdss/workflow.hpp"

namespace testing {

using namespace vdss;

inline std::filesystem::path config_dir() { return std::filesystem::path(VDSS_SOURCE_DIR) / "config"; }

struct Fixture {
    ModeRegistry registry = ModeRegistry::load(config_dir());
    AgentConfig agents = AgentConfig::load(config_dir());
    BanditConfig bandit = BanditConfig::load(config_dir());
    EngineConfig engine_cfg = EngineConfig::load(config_dir());

    ValidationContext ctx() const {
        ValidationContext c;
        c.registry = &registry;
        c.max_setting_updates = agents.max_setting_updates;
        c.k_max = engine_cfg.k_max;
        return c;
    }
    std::shared_ptr<Backend> scripted() const { return std::make_shared<ScriptedBackend>(agents, registry); }
    std::unique_ptr<AgentRuntime> runtime(std::shared_ptr<Backend> b = nullptr, int retries = 2) const {
        RetryPolicy p;
        p.max_retries = retries;
        return std::make_unique<AgentRuntime>(b ? b : scripted(), p, ctx());
    }
};

inline PatientState stable_state(double t = 0.0) {
    PatientState s;
    s.timestamp = t;
    s.spo2 = 96;
    s.heart_rate = 80;
    s.map = 78;
    s.ph = 7.40;
    s.paco2 = 40;
    s.pao2 = 95;
    s.resp_rate_obs = 18;
    s.weight_kg = 70;
    s.tidal_volume_obs = 450;
    return s;
}

inline PatientState hypoxemic_state(double spo2 = 88.5, double t = 0.0) {
    auto s = stable_state(t);
    s.spo2 = spo2;
    s.pao2 = 58;
    return s;
}

inline VentilatorSettings prvc(double peep = 8, double fio2 = 40, double rr = 16) {
    VentilatorSettings v;
    v.mode = "PRVC";
    v.set(Param::peep, peep);
    v.set(Param::fio2, fio2);
    v.set(Param::resp_rate_set, rr);
    return v;
}

inline CycleInput hypoxemia_input(const std::string& encounter = "enc-1", const std::string& clinician = "dr-a",
                                  int n = 1) {
    return CycleInput{encounter, clinician, make_cycle_id(encounter, static_cast<std::uint64_t>(n)),
                      hypoxemic_state(88.5, 3600.0 * n), prvc(), {}};
}

inline ClinicianFeedback accept() { return ClinicianFeedback{Decision::accept, std::nullopt, {}, "ok"}; }
inline ClinicianFeedback reject(ReasonCategory r, std::vector<Param> disputed = {}, std::string why = "no") {
    return ClinicianFeedback{Decision::reject, r, std::move(disputed), std::move(why)};
}

}  // namespace testing
