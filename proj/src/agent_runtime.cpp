#include "vdss/agent_runtime.hpp"

#include <thread>

namespace vdss {

using nlohmann::json;

ScriptedBackend::ScriptedBackend(AgentConfig config, const ModeRegistry& registry)
    : config_(std::move(config)), registry_(registry) {}

json ScriptedBackend::call(AgentRole role, const json& input) {
    const ValidationContext ctx{&registry_, config_.max_setting_updates, 0};
    switch (role) {
        case AgentRole::waveform_analyzer: {
            auto req = decode_or_throw<WaveformRequest>(input, ctx);
            return encode(scripted_waveform_cues(req.segment, config_.cue_thresholds));
        }
        case AgentRole::detection:
            return encode(scripted_detection(config_, decode_or_throw<DetectionRequest>(input, ctx)));
        case AgentRole::phase_goal_manager:
            return encode(scripted_phase_goals(config_, decode_or_throw<PhaseRequest>(input, ctx)));
        case AgentRole::gate: {
            auto req = decode_or_throw<GateRequest>(input, ctx);
            return encode(gate_decision(req.summary, req.goals));
        }
        case AgentRole::strategy_selector:
            return encode(scripted_strategy(config_, decode_or_throw<StrategyRequest>(input, ctx)));
        case AgentRole::mode_select:
            return encode(scripted_mode_select(config_, registry_, decode_or_throw<ModeRequest>(input, ctx)));
        case AgentRole::parameter_planner: {
            CandidateSet out;
            try {
                out.candidates = scripted_parameter_plan(config_, registry_, decode_or_throw<PlanRequest>(input, ctx));
            } catch (const FeasibilityExhausted&) {
                // An empty set is the wire form of "nothing feasible".
            }
            return encode(out);
        }
        case AgentRole::reflect:
            return encode(reflect_route(config_, registry_, decode_or_throw<ReflectRequest>(input, ctx)));
        case AgentRole::note_generator:
            return encode(close_cycle(decode_or_throw<NoteRequest>(input, ctx).record));
    }
    throw ContractError("unknown agent role");
}

// ---------------------------------------------------------------------------

FaultInjectingBackend::FaultInjectingBackend(std::shared_ptr<Backend> inner, double p, std::uint64_t seed)
    : inner_(std::move(inner)), p_(p), rng_(seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("fault rate must be within [0,1]");
}

json FaultInjectingBackend::call(AgentRole role, const json& input) {
    json out = inner_->call(role, input);
    std::uint64_t variant = 0;
    {
        std::lock_guard lock(mu_);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (!(u(rng_) < p_)) return out;
        variant = corruptions_++;
    }
    switch (variant % 3) {
        case 0:
            return json("not a json object");
        case 1:
            out["unexpected_field"] = true;
            return out;
        default:
            return json::array({out});
    }
}

// ---------------------------------------------------------------------------

void RetryPolicy::validate() const {
    if (max_retries < 0 || max_retries > kMaxRetriesCeiling)
        throw ConfigError("max_retries must be within [0, " + std::to_string(kMaxRetriesCeiling) + "]");
    if (backoff.count() < 0) throw ConfigError("backoff must be non-negative");
}

RoleStats InvocationStats::role(AgentRole r) const {
    const auto& c = roles_[index_of(r)];
    return {c.calls.load(), c.attempts.load(), c.malformed.load(), c.failures.load()};
}

RoleStats InvocationStats::total() const {
    RoleStats t;
    for (auto r : all_values<AgentRole>()) {
        auto s = role(r);
        t.calls += s.calls;
        t.attempts += s.attempts;
        t.malformed_outputs += s.malformed_outputs;
        t.failures_after_retry += s.failures_after_retry;
    }
    return t;
}

void InvocationStats::reset() {
    for (auto& c : roles_) {
        c.calls = 0;
        c.attempts = 0;
        c.malformed = 0;
        c.failures = 0;
    }
}

json InvocationStats::to_json() const {
    auto row = [](const RoleStats& s) {
        return json{{"calls", s.calls},
                    {"attempts", s.attempts},
                    {"malformed_outputs", s.malformed_outputs},
                    {"failures_after_retry", s.failures_after_retry}};
    };
    json roles = json::object();
    for (auto r : all_values<AgentRole>()) roles[std::string(to_string(r))] = row(role(r));
    return json{{"total", row(total())}, {"roles", roles}};
}

// ---------------------------------------------------------------------------

AgentRuntime::AgentRuntime(std::shared_ptr<Backend> default_backend, RetryPolicy policy, ValidationContext ctx)
    : policy_(policy), ctx_(ctx) {
    policy_.validate();
    if (!default_backend) throw ConfigError("agent runtime needs a backend");
    backends_.fill(default_backend);
}

void AgentRuntime::set_backend(AgentRole role, std::shared_ptr<Backend> backend) {
    if (!backend) throw ConfigError("null backend for role " + std::string(to_string(role)));
    backends_[index_of(role)] = std::move(backend);
}

json AgentRuntime::invoke_agent(AgentRole role, const json& input) {
    const auto in_check = validate_message(input_schema(role), input, ctx_);
    if (!in_check.ok()) {
        std::string msg = "invalid input for " + std::string(to_string(role)) + ":";
        for (const auto& e : in_check.errors) msg += " " + e.to_string() + ";";
        throw ContractError(msg);
    }
    stats_.record_call(role);
    const std::string out_schema = output_schema(role);
    const int attempts = policy_.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0 && policy_.backoff.count() > 0) std::this_thread::sleep_for(policy_.backoff * attempt);
        stats_.record_attempt(role);
        json out = backends_[index_of(role)]->call(role, input);
        if (validate_message(out_schema, out, ctx_).ok()) return out;
        stats_.record_malformed(role);
    }
    stats_.record_failure(role);
    throw RoleFailure(std::string(to_string(role)), attempts);
}

}  // namespace vdss
