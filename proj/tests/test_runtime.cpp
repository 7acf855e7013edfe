#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "support.hpp"

using namespace vdss;
using namespace testing;

namespace {

/// Returns `bad` malformed outputs, then delegates.
class FlakyBackend : public Backend {
public:
    FlakyBackend(std::shared_ptr<Backend> inner, int bad) : inner_(std::move(inner)), bad_(bad) {}
    nlohmann::json call(AgentRole role, const nlohmann::json& input) override {
        ++calls;
        if (bad_ > 0) {
            --bad_;
            return nlohmann::json{{"garbage", 1}};
        }
        return inner_->call(role, input);
    }
    std::string id() const override { return "flaky"; }
    int calls = 0;

private:
    std::shared_ptr<Backend> inner_;
    int bad_;
};

class DownBackend : public Backend {
public:
    nlohmann::json call(AgentRole, const nlohmann::json&) override { throw BackendUnavailable("down"); }
    std::string id() const override { return "down"; }
};

nlohmann::json detection_input() { return encode(DetectionRequest{hypoxemic_state(86), prvc(), std::nullopt}); }

std::filesystem::path prompt_dir() { return std::filesystem::path(VDSS_SOURCE_DIR) / "prompts"; }

}  // namespace

TEST_CASE("valid output passes through on the first attempt") {
    Fixture f;
    auto rt = f.runtime();
    auto out = rt->invoke<StateSummary>(AgentRole::detection, DetectionRequest{hypoxemic_state(86), prvc(), std::nullopt});
    CHECK(out == scripted_detection(f.agents, DetectionRequest{hypoxemic_state(86), prvc(), std::nullopt}));
    auto s = rt->stats().role(AgentRole::detection);
    CHECK(s.calls == 1);
    CHECK(s.attempts == 1);
    CHECK(s.malformed_outputs == 0);
}

TEST_CASE("malformed outputs are retried within budget") {
    Fixture f;
    auto flaky = std::make_shared<FlakyBackend>(f.scripted(), 2);
    auto rt = f.runtime(flaky, 2);
    CHECK_NOTHROW(rt->invoke_agent(AgentRole::detection, detection_input()));
    CHECK(flaky->calls == 3);
    auto s = rt->stats().role(AgentRole::detection);
    CHECK(s.malformed_outputs == 2);
    CHECK(s.failures_after_retry == 0);
}

TEST_CASE("exhausted retries raise RoleFailure") {
    Fixture f;
    auto flaky = std::make_shared<FlakyBackend>(f.scripted(), 3);
    auto rt = f.runtime(flaky, 2);
    try {
        rt->invoke_agent(AgentRole::detection, detection_input());
        FAIL("expected RoleFailure");
    } catch (const RoleFailure& e) {
        CHECK(e.role() == "detection");
        CHECK(e.attempts() == 3);
    }
    CHECK(rt->stats().role(AgentRole::detection).failures_after_retry == 1);
    CHECK(rt->stats().total().failures_after_retry == 1);
}

TEST_CASE("invalid input is rejected before any backend call") {
    Fixture f;
    auto flaky = std::make_shared<FlakyBackend>(f.scripted(), 0);
    auto rt = f.runtime(flaky);
    auto in = detection_input();
    in["bogus"] = 1;
    CHECK_THROWS_AS(rt->invoke_agent(AgentRole::detection, in), ContractError);
    CHECK(flaky->calls == 0);
}

TEST_CASE("backend unavailability propagates without retry") {
    Fixture f;
    auto rt = f.runtime(std::make_shared<DownBackend>());
    CHECK_THROWS_AS(rt->invoke_agent(AgentRole::detection, detection_input()), BackendUnavailable);
}

TEST_CASE("retry policy bounds") {
    RetryPolicy p;
    p.max_retries = 6;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.max_retries = -1;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.max_retries = 0;
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("per-role backends") {
    Fixture f;
    auto rt = f.runtime();
    rt->set_backend(AgentRole::gate, std::make_shared<DownBackend>());
    CHECK_NOTHROW(rt->invoke_agent(AgentRole::detection, detection_input()));
    CHECK(rt->backend(AgentRole::gate).id() == "down");
    CHECK_THROWS_AS(rt->set_backend(AgentRole::gate, nullptr), ConfigError);
}

TEST_CASE("fault injection corrupts at the configured rate and every corruption is invalid") {
    Fixture f;
    auto faulty = std::make_shared<FaultInjectingBackend>(f.scripted(), 0.3, 11);
    auto rt = f.runtime(faulty, 0);
    int failures = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
        try {
            rt->invoke_agent(AgentRole::detection, detection_input());
        } catch (const RoleFailure&) {
            ++failures;
        }
    }
    // binomial(2000, 0.3): sd ~ 20.5
    CHECK(failures > 600 - 4 * 21);
    CHECK(failures < 600 + 4 * 21);
    CHECK(rt->stats().role(AgentRole::detection).malformed_outputs == static_cast<std::uint64_t>(failures));

    CHECK_THROWS_AS(FaultInjectingBackend(f.scripted(), 1.5, 1), ConfigError);
}

TEST_CASE("fault injection with zero rate is transparent") {
    Fixture f;
    FaultInjectingBackend b(f.scripted(), 0.0, 1);
    ScriptedBackend s(f.agents, f.registry);
    CHECK(b.call(AgentRole::detection, detection_input()) == s.call(AgentRole::detection, detection_input()));
}

TEST_CASE("invocation stats json") {
    Fixture f;
    auto rt = f.runtime();
    rt->invoke_agent(AgentRole::detection, detection_input());
    auto j = rt->stats().to_json();
    CHECK(j["total"]["calls"] == 1);
    CHECK(j["roles"]["detection"]["attempts"] == 1);
    rt->stats().reset();
    CHECK(rt->stats().total().calls == 0);
}

TEST_CASE("remote backend renders prompts and parses chat completions") {
    Fixture f;
    httplib::Server srv;
    std::atomic<int> hits{0};
    std::string seen_auth;
    std::string seen_model;
    ScriptedBackend oracle(f.agents, f.registry);
    const auto expected = oracle.call(AgentRole::detection, detection_input());
    srv.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        seen_auth = req.get_header_value("Authorization");
        auto body = nlohmann::json::parse(req.body);
        seen_model = body["model"];
        const int n = hits.load();
        nlohmann::json reply;
        if (n == 1) {
            reply = {{"choices", {{{"message", {{"content", "I think the patient is fine."}}}}}}};
        } else {
            reply = {{"choices", {{{"message", {{"content", expected.dump()}}}}}}};
        }
        res.set_content(reply.dump(), "application/json");
    });
    srv.Post("/down", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    const int port = srv.bind_to_any_port("127.0.0.1");
    std::thread th([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();

    RemoteBackend::Options o;
    o.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    o.api_key = "k";
    o.model = "m1";
    o.prompt_dir = prompt_dir();
    o.timeout_s = 5;
    auto remote = std::make_shared<RemoteBackend>(o);
    CHECK(remote->render_prompt(AgentRole::detection, detection_input()).find("\"spo2\"") != std::string::npos);

    auto rt = f.runtime(remote, 2);
    auto out = rt->invoke_agent(AgentRole::detection, detection_input());
    CHECK(out == expected);
    CHECK(hits == 2);
    CHECK(rt->stats().role(AgentRole::detection).malformed_outputs == 1);
    CHECK(seen_auth == "Bearer k");
    CHECK(seen_model == "m1");

    o.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/down";
    RemoteBackend down(o);
    CHECK_THROWS_AS(down.call(AgentRole::detection, detection_input()), BackendUnavailable);

    srv.stop();
    th.join();
}

TEST_CASE("remote backend configuration errors") {
    RemoteBackend::Options o;
    o.endpoint = "not a url";
    o.model = "m";
    o.prompt_dir = prompt_dir();
    CHECK_THROWS_AS(RemoteBackend{o}, ConfigError);
    o.endpoint = "http://127.0.0.1:1/x";
    o.prompt_dir = "/nonexistent";
    CHECK_THROWS_AS(RemoteBackend{o}, ConfigError);
}
