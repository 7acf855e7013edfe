#pragma once

// Uniform agent invocation: input validation, backend call, output validation
// with bounded retries, and per-role failure accounting.

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <random>
#include <string>

#include <json.hpp>

#include "vdss/agents.hpp"
#include "vdss/contracts_json.hpp"
#include "vdss/errors.hpp"
#include "vdss/registry.hpp"

namespace vdss {

/// A backend maps a role's input payload to an (unvalidated) output payload.
/// Throws BackendUnavailable when it cannot be reached.
class Backend {
public:
    virtual ~Backend() = default;
    virtual nlohmann::json call(AgentRole role, const nlohmann::json& input) = 0;
    virtual std::string id() const = 0;
};

/// Deterministic rule-table agents.
class ScriptedBackend : public Backend {
public:
    ScriptedBackend(AgentConfig config, const ModeRegistry& registry);
    nlohmann::json call(AgentRole role, const nlohmann::json& input) override;
    std::string id() const override { return "scripted"; }
    const AgentConfig& config() const { return config_; }

private:
    AgentConfig config_;
    const ModeRegistry& registry_;
};

/// Wraps another backend and corrupts each output with probability p.
/// Corruptions cycle through: non-object payload, unknown extra key, payload
/// wrapped in an array. Each is a schema violation for every role.
class FaultInjectingBackend : public Backend {
public:
    FaultInjectingBackend(std::shared_ptr<Backend> inner, double malformed_probability, std::uint64_t seed);
    nlohmann::json call(AgentRole role, const nlohmann::json& input) override;
    std::string id() const override { return "fault(" + inner_->id() + ")"; }

private:
    std::shared_ptr<Backend> inner_;
    double p_;
    std::mutex mu_;
    std::mt19937_64 rng_;
    std::uint64_t corruptions_ = 0;
};

/// Generic chat-completion client. Endpoint, key and model come from
/// VDSS_MODEL_ENDPOINT, VDSS_MODEL_API_KEY and VDSS_MODEL_ID unless given.
class RemoteBackend : public Backend {
public:
    struct Options {
        std::string endpoint;  // e.g. http://host:port/v1/chat/completions
        std::string api_key;
        std::string model;
        std::filesystem::path prompt_dir;
        int timeout_s = 60;

        static Options from_env(const std::filesystem::path& prompt_dir);
    };

    explicit RemoteBackend(Options options);
    nlohmann::json call(AgentRole role, const nlohmann::json& input) override;
    std::string id() const override { return "remote:" + options_.model; }

    /// Fills {{input}} in the role's prompt template.
    std::string render_prompt(AgentRole role, const nlohmann::json& input) const;

private:
    Options options_;
    std::array<std::string, kRoleCount> templates_;
};

struct RetryPolicy {
    static constexpr int kMaxRetriesCeiling = 5;
    int max_retries = 2;
    std::chrono::milliseconds backoff{0};

    /// Throws ConfigError when max_retries is outside [0, ceiling].
    void validate() const;
};

struct RoleStats {
    std::uint64_t calls = 0;     // invoke_agent calls
    std::uint64_t attempts = 0;  // backend calls, including retries
    std::uint64_t malformed_outputs = 0;
    std::uint64_t failures_after_retry = 0;
};

class InvocationStats {
public:
    void record_call(AgentRole r) { roles_[index_of(r)].calls.fetch_add(1, std::memory_order_relaxed); }
    void record_attempt(AgentRole r) { roles_[index_of(r)].attempts.fetch_add(1, std::memory_order_relaxed); }
    void record_malformed(AgentRole r) { roles_[index_of(r)].malformed.fetch_add(1, std::memory_order_relaxed); }
    void record_failure(AgentRole r) { roles_[index_of(r)].failures.fetch_add(1, std::memory_order_relaxed); }

    RoleStats role(AgentRole r) const;
    RoleStats total() const;
    void reset();
    nlohmann::json to_json() const;

private:
    struct Counters {
        std::atomic<std::uint64_t> calls{0};
        std::atomic<std::uint64_t> attempts{0};
        std::atomic<std::uint64_t> malformed{0};
        std::atomic<std::uint64_t> failures{0};
    };
    std::array<Counters, kRoleCount> roles_;
};

/// Role -> backend map plus retry policy and stats. Thread-safe provided the
/// backends are.
class AgentRuntime {
public:
    AgentRuntime(std::shared_ptr<Backend> default_backend, RetryPolicy policy, ValidationContext ctx);

    void set_backend(AgentRole role, std::shared_ptr<Backend> backend);
    Backend& backend(AgentRole role) const { return *backends_[index_of(role)]; }

    /// Validates `input` against the role's input schema (ContractError on
    /// failure), then calls the backend until the output validates or the
    /// retry budget is spent (RoleFailure).
    nlohmann::json invoke_agent(AgentRole role, const nlohmann::json& input);

    template <class Out, class In>
    Out invoke(AgentRole role, const In& input) {
        return decode_or_throw<Out>(invoke_agent(role, encode(input)), ctx_);
    }

    InvocationStats& stats() { return stats_; }
    const InvocationStats& stats() const { return stats_; }
    const RetryPolicy& policy() const { return policy_; }
    const ValidationContext& validation() const { return ctx_; }

private:
    std::array<std::shared_ptr<Backend>, kRoleCount> backends_;
    RetryPolicy policy_;
    ValidationContext ctx_;
    InvocationStats stats_;
};

}  // namespace vdss
