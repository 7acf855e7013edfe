#pragma once

// Review service: encounter loading, asynchronous cycle lifecycle with
// polling review checkpoints, evidence trails and preference/regret views.
// Transport-independent; http_routes.hpp maps it onto HTTP.

#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vdss/agent_runtime.hpp"
#include "vdss/bandit.hpp"
#include "vdss/memory_store.hpp"
#include "vdss/registry.hpp"
#include "vdss/replay.hpp"
#include "vdss/workflow.hpp"

namespace vdss {

/// Error with a machine-readable code ("not_found", "conflict",
/// "invalid_request", "internal") and the offending field path.
class ServiceError : public Error {
public:
    ServiceError(std::string code, const std::string& message, std::string path = {})
        : Error(message), code_(std::move(code)), path_(std::move(path)) {}
    const std::string& code() const noexcept { return code_; }
    const std::string& path() const noexcept { return path_; }
    nlohmann::json body() const { return {{"code", code_}, {"message", what()}, {"path", path_}}; }

private:
    std::string code_;
    std::string path_;
};

struct StartOptions {
    std::string clinician_id;
    /// Inclusive [start, end] in record timestamps; the latest record inside
    /// the window is the current state. Default: the encounter's last record.
    std::optional<std::pair<double, double>> window;
    bool waveform_enabled = true;

    static StartOptions from_json(const nlohmann::json& body);
};

class ReviewService {
public:
    ReviewService(const ModeRegistry& registry, AgentRuntime& runtime, BanditConfig bandit, EngineConfig config,
                  MemoryStore& memory);
    ~ReviewService();
    ReviewService(const ReviewService&) = delete;
    ReviewService& operator=(const ReviewService&) = delete;

    /// {"path": file} or {"format": "jsonl"|"csv", "content": text}.
    nlohmann::json load_dataset(const nlohmann::json& body);
    void add_encounters(const std::vector<Encounter>& encounters);

    /// Starts a cycle asynchronously and returns its id.
    std::string start_cycle(const std::string& encounter_id, const StartOptions& options);

    /// PendingReview payload while suspended at review, else {cycle_id, status}.
    nlohmann::json review(const std::string& cycle_id);
    /// Body: ClinicianFeedback fields plus an optional "round". Returns the
    /// cycle status after the decision is recorded (processing continues in
    /// the background).
    nlohmann::json submit_feedback(const std::string& cycle_id, const nlohmann::json& body);
    nlohmann::json trail(const std::string& cycle_id);
    nlohmann::json preferences(const std::string& clinician_id);
    nlohmann::json regret(const std::string& clinician_id);

    /// Blocks until the cycle is not running (suspended or terminal).
    void wait_settled(const std::string& cycle_id);
    std::string status(const std::string& cycle_id);

private:
    struct Active {
        std::string cycle_id;
        std::string encounter_id;
        std::unique_ptr<CycleSession> session;
        bool busy = false;
        std::optional<std::string> error;  // set when closure could not be persisted
        std::vector<nlohmann::json> served;  // reviews handed out, in round order
        std::thread worker;
    };

    void launch(const std::shared_ptr<Active>& a);
    std::shared_ptr<Active> find_active(const std::string& cycle_id);
    static std::string status_of(const Active& a);

    const ModeRegistry& registry_;
    AgentRuntime& runtime_;
    BanditConfig bandit_;
    EngineConfig config_;
    MemoryStore& memory_;
    std::unique_ptr<Engine> engine_img_;
    std::unique_ptr<Engine> engine_noimg_;

    std::mutex mu_;
    std::condition_variable settled_;
    std::map<std::string, Encounter> encounters_;
    std::map<std::string, std::shared_ptr<Active>> cycles_;            // by cycle id
    std::map<std::string, std::string> active_by_encounter_;           // encounter -> running cycle
    std::map<std::string, std::uint64_t> next_cycle_number_;
};

}  // namespace vdss
