#include "vdss/service.hpp"

#include <sstream>

#include "vdss/contracts_json.hpp"
#include "vdss/regret_study.hpp"

namespace vdss {

using nlohmann::json;

StartOptions StartOptions::from_json(const json& body) {
    if (!body.is_object()) throw ServiceError("invalid_request", "request body must be a JSON object");
    StartOptions o;
    for (const auto& [k, v] : body.items()) {
        if (k == "clinician_id") {
            if (!v.is_string() || v.get<std::string>().empty())
                throw ServiceError("invalid_request", "clinician_id must be a non-empty string", "clinician_id");
            o.clinician_id = v.get<std::string>();
        } else if (k == "waveform_enabled") {
            if (!v.is_boolean()) throw ServiceError("invalid_request", "waveform_enabled must be a boolean", k);
            o.waveform_enabled = v.get<bool>();
        } else if (k == "window") {
            if (!v.is_object() || !v.contains("start") || !v.contains("end") || !v["start"].is_number() ||
                !v["end"].is_number() || v.size() != 2)
                throw ServiceError("invalid_request", "window must be {start, end} in seconds", "window");
            const double a = v["start"].get<double>(), b = v["end"].get<double>();
            if (a > b) throw ServiceError("invalid_request", "window start is after its end", "window");
            o.window = {a, b};
        } else {
            throw ServiceError("invalid_request", "unknown field '" + k + "'", k);
        }
    }
    if (o.clinician_id.empty()) throw ServiceError("invalid_request", "clinician_id is required", "clinician_id");
    return o;
}

ReviewService::ReviewService(const ModeRegistry& registry, AgentRuntime& runtime, BanditConfig bandit,
                             EngineConfig config, MemoryStore& memory)
    : registry_(registry), runtime_(runtime), bandit_(bandit), config_(config), memory_(memory) {
    EngineConfig with = config_, without = config_;
    with.enable_waveform = true;
    without.enable_waveform = false;
    engine_img_ = std::make_unique<Engine>(registry_, runtime_, bandit_, with, memory_);
    engine_noimg_ = std::make_unique<Engine>(registry_, runtime_, bandit_, without, memory_);
}

ReviewService::~ReviewService() {
    std::vector<std::shared_ptr<Active>> all;
    {
        std::lock_guard lock(mu_);
        for (auto& [_, a] : cycles_) all.push_back(a);
    }
    for (auto& a : all)
        if (a->worker.joinable()) a->worker.join();
}

void ReviewService::add_encounters(const std::vector<Encounter>& encounters) {
    std::lock_guard lock(mu_);
    for (const auto& e : encounters) encounters_[e.id] = e;
}

json ReviewService::load_dataset(const json& body) {
    if (!body.is_object()) throw ServiceError("invalid_request", "request body must be a JSON object");
    for (const auto& [k, v] : body.items())
        if (k != "path" && k != "content" && k != "format")
            throw ServiceError("invalid_request", "unknown field '" + k + "'", k);
    if (body.contains("path") && (body.contains("content") || body.contains("format")))
        throw ServiceError("invalid_request", "path excludes content and format", "path");
    TrajectoryDataset ds;
    try {
        if (body.contains("path")) {
            if (!body["path"].is_string()) throw ServiceError("invalid_request", "path must be a string", "path");
            ds = load_trajectories(body["path"].get<std::string>(), &registry_);
        } else if (body.contains("content")) {
            if (!body["content"].is_string())
                throw ServiceError("invalid_request", "content must be a string", "content");
            const std::string format = body.value("format", std::string("jsonl"));
            std::istringstream in(body["content"].get<std::string>());
            if (format == "jsonl")
                ds = parse_jsonl(in, &registry_);
            else if (format == "csv")
                ds = parse_csv(in, &registry_);
            else
                throw ServiceError("invalid_request", "format must be jsonl or csv", "format");
        } else {
            throw ServiceError("invalid_request", "provide either path or content", "path");
        }
    } catch (const DatasetError& e) {
        throw ServiceError("invalid_request", e.what(), body.contains("path") ? "path" : "content");
    }
    add_encounters(ds.encounters);
    json ids = json::array();
    for (const auto& e : ds.encounters) ids.push_back(e.id);
    json skipped = json::array();
    for (std::size_t i = 0; i < ds.skipped_lines.size(); ++i)
        skipped.push_back({{"line", ds.skipped_lines[i]}, {"reason", ds.skip_reasons[i]}});
    return json{{"encounter_ids", ids},
                {"pairs", ds.n_pairs()},
                {"skipped_rows", ds.skipped_rows},
                {"skipped", skipped},
                {"dropped_encounters", ds.dropped_encounters}};
}

std::string ReviewService::status_of(const Active& a) {
    if (a.busy) return "running";
    if (a.error) return "failed";
    if (a.session->done()) return std::string(to_string(a.session->record().status));
    if (a.session->pending()) return "awaiting_review";
    return "running";
}

std::shared_ptr<ReviewService::Active> ReviewService::find_active(const std::string& cycle_id) {
    auto it = cycles_.find(cycle_id);
    return it == cycles_.end() ? nullptr : it->second;
}

void ReviewService::launch(const std::shared_ptr<Active>& a) {
    // Caller holds mu_. A previous worker has already cleared busy, so it is
    // past its last lock acquisition and joins immediately.
    if (a->worker.joinable()) a->worker.join();
    a->busy = true;
    a->worker = std::thread([this, a] {
        std::optional<std::string> err;
        try {
            a->session->advance();
        } catch (const std::exception& e) {
            err = e.what();
        }
        std::lock_guard lock(mu_);
        a->busy = false;
        if (err) a->error = err;
        if (err || a->session->done()) {
            auto it = active_by_encounter_.find(a->encounter_id);
            if (it != active_by_encounter_.end() && it->second == a->cycle_id) active_by_encounter_.erase(it);
        } else if (const auto* p = a->session->pending()) {
            a->served.push_back(p->to_json());
        }
        settled_.notify_all();
    });
}

std::string ReviewService::start_cycle(const std::string& encounter_id, const StartOptions& options) {
    std::lock_guard lock(mu_);
    auto enc = encounters_.find(encounter_id);
    if (enc == encounters_.end())
        throw ServiceError("not_found", "encounter '" + encounter_id + "' is not loaded", "encounter_id");
    if (auto it = active_by_encounter_.find(encounter_id); it != active_by_encounter_.end())
        throw ServiceError("conflict", "encounter '" + encounter_id + "' already has active cycle " + it->second,
                           "encounter_id");

    const TrajectoryRecord* current = nullptr;
    for (const auto& r : enc->second.records) {
        if (options.window && (r.state.timestamp < options.window->first || r.state.timestamp > options.window->second))
            continue;
        current = &r;
    }
    if (!current) throw ServiceError("invalid_request", "no record inside the requested window", "window");

    auto& next = next_cycle_number_[encounter_id];
    if (next == 0) {
        next = 1;
        for (const auto& env : memory_.entries_for_encounter(encounter_id))
            if (env.kind == EnvelopeKind::cycle_record) ++next;
    }
    std::string cycle_id = make_cycle_id(encounter_id, next++);
    while (cycles_.count(cycle_id) || memory_.find_cycle_record(cycle_id)) cycle_id = make_cycle_id(encounter_id, next++);

    CycleInput input{encounter_id, options.clinician_id, cycle_id, current->state, current->settings, {}};
    Engine& engine = options.waveform_enabled ? *engine_img_ : *engine_noimg_;
    auto a = std::make_shared<Active>();
    a->cycle_id = cycle_id;
    a->encounter_id = encounter_id;
    a->session = std::make_unique<CycleSession>(engine.start(std::move(input)));
    cycles_[cycle_id] = a;
    active_by_encounter_[encounter_id] = cycle_id;
    launch(a);
    return cycle_id;
}

json ReviewService::review(const std::string& cycle_id) {
    {
        std::lock_guard lock(mu_);
        if (auto a = find_active(cycle_id)) {
            json out{{"cycle_id", cycle_id}, {"status", status_of(*a)}};
            if (!a->busy && !a->error) {
                if (const auto* p = a->session->pending()) out["review"] = p->to_json();
                if (a->session->done()) out["note"] = a->session->record().note;
            }
            if (a->error) out["error"] = *a->error;
            return out;
        }
    }
    if (auto rec = memory_.find_cycle_record(cycle_id))
        return json{{"cycle_id", cycle_id}, {"status", to_string(rec->status)}, {"note", rec->note}};
    throw ServiceError("not_found", "unknown cycle '" + cycle_id + "'", "cycle_id");
}

json ReviewService::submit_feedback(const std::string& cycle_id, const json& body) {
    if (!body.is_object()) throw ServiceError("invalid_request", "request body must be a JSON object");
    json fb_json = body;
    std::optional<int> round;
    if (fb_json.contains("round")) {
        if (!fb_json["round"].is_number_integer())
            throw ServiceError("invalid_request", "round must be an integer", "round");
        round = fb_json["round"].get<int>();
        fb_json.erase("round");
    }
    auto fb = decode<ClinicianFeedback>(fb_json);
    if (!fb.ok()) {
        const auto& e = fb.errors.front();
        throw ServiceError("invalid_request", e.to_string(), e.path);
    }

    std::lock_guard lock(mu_);
    auto a = find_active(cycle_id);
    if (!a) {
        if (memory_.find_cycle_record(cycle_id))
            throw ServiceError("conflict", "cycle '" + cycle_id + "' is already resolved", "cycle_id");
        throw ServiceError("not_found", "unknown cycle '" + cycle_id + "'", "cycle_id");
    }
    const auto* pending = a->busy || a->error ? nullptr : a->session->pending();
    if (!pending) throw ServiceError("conflict", "cycle '" + cycle_id + "' is not awaiting review", "cycle_id");
    if (round && *round != pending->round)
        throw ServiceError("conflict",
                           "feedback for round " + std::to_string(*round) + " but round " +
                               std::to_string(pending->round) + " is pending",
                           "round");
    const int r = pending->round;
    try {
        a->session->submit(*fb.value);
    } catch (const ContractError& e) {
        throw ServiceError("invalid_request", e.what());
    }
    launch(a);
    return json{{"cycle_id", cycle_id}, {"round", r}, {"status", "running"}};
}

json ReviewService::trail(const std::string& cycle_id) {
    json served = json::array();
    std::string status;
    std::string encounter;
    {
        std::lock_guard lock(mu_);
        if (auto a = find_active(cycle_id)) {
            served = a->served;
            status = status_of(*a);
            encounter = a->encounter_id;
        }
    }
    json entries = json::array();
    for (const auto& env : memory_.entries_for_cycle(cycle_id)) {
        entries.push_back(env.to_json());
        encounter = env.encounter_id;
        if (env.kind == EnvelopeKind::cycle_record) status = env.payload.value("status", status);
    }
    if (status.empty()) throw ServiceError("not_found", "unknown cycle '" + cycle_id + "'", "cycle_id");
    return json{{"cycle_id", cycle_id},
                {"encounter_id", encounter},
                {"status", status},
                {"entries", entries},
                {"served_reviews", served}};
}

json ReviewService::preferences(const std::string& clinician_id) {
    const auto state = memory_.load_preference_state(clinician_id, bandit_.hyper);
    FeatureVector x{};
    x.back() = 1.0;
    std::string context = "constant";
    const auto records = memory_.cycle_records(clinician_id);
    if (!records.empty() && records.back().context.feature_vector.size() == kFeatureDim) {
        std::copy(records.back().context.feature_vector.begin(), records.back().context.feature_vector.end(),
                  x.begin());
        context = "latest_cycle";
    }
    const auto scores = preference_scores(state, x);
    json arms = json::array();
    for (auto c : all_values<Category>()) {
        const auto i = index_of(c);
        arms.push_back({{"category", to_string(c)},
                        {"score", scores.score[i]},
                        {"mean", scores.mean[i]},
                        {"uncertainty", scores.uncertainty[i]},
                        {"pulls", state.arms[i].pulls}});
    }
    return json{{"clinician_id", clinician_id},
                {"cycle_updates", state.cycle_updates},
                {"update_count", state.update_count},
                {"context", context},
                {"arms", arms}};
}

json ReviewService::regret(const std::string& clinician_id) {
    const auto series = regret_from_log(memory_, clinician_id, config_.k_max);
    json points = json::array();
    for (const auto& p : series.points)
        points.push_back({{"cycle_index", p.cycle_index},
                          {"cycle_id", p.cycle_id},
                          {"status", to_string(p.status)},
                          {"regret", p.regret ? json(*p.regret) : json(nullptr)},
                          {"rolling_mean_10", p.rolling_mean_10}});
    return json{{"clinician_id", clinician_id}, {"k_max", config_.k_max}, {"points", points}, {"csv", series.to_csv()}};
}

void ReviewService::wait_settled(const std::string& cycle_id) {
    std::unique_lock lock(mu_);
    auto a = find_active(cycle_id);
    if (!a) return;
    settled_.wait(lock, [&] { return !a->busy; });
}

std::string ReviewService::status(const std::string& cycle_id) { return review(cycle_id).at("status"); }

}  // namespace vdss
