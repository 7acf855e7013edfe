#include "vdss/workflow.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "vdss/agents.hpp"
#include "vdss/contracts_json.hpp"
#include "vdss/errors.hpp"
#include "vdss/safety.hpp"
#include "vdss/util.hpp"
#include "vdss/waveform.hpp"

namespace vdss {

using nlohmann::json;

void EngineConfig::validate() const {
    if (k_max < 1) throw ConfigError("K_max must be at least 1");
    if (max_internal_replans < 0) throw ConfigError("max_internal_replans must be non-negative");
}

EngineConfig EngineConfig::from_json(const json& j) {
    static const std::set<std::string> known{"k_max", "enable_waveform", "enable_preference", "seed",
                                             "max_internal_replans", "context_notes"};
    if (!j.is_object()) throw ConfigError("engine config must be an object");
    for (const auto& [k, _] : j.items())
        if (!known.count(k)) throw ConfigError("unknown engine config key '" + k + "'");
    EngineConfig c;
    try {
    c.k_max = j.value("k_max", c.k_max);
    c.enable_waveform = j.value("enable_waveform", c.enable_waveform);
    c.enable_preference = j.value("enable_preference", c.enable_preference);
    c.seed = j.value("seed", c.seed);
    c.max_internal_replans = j.value("max_internal_replans", c.max_internal_replans);
    c.context_notes = j.value("context_notes", c.context_notes);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("engine config: ") + e.what());
    }
    c.validate();
    return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& config_dir) {
    return from_json(read_json_file(config_dir / "engine.json"));
}

json PendingReview::to_json() const {
    json prefs = json::array();
    for (const auto& [c, s] : top_preferences) prefs.push_back({{"category", to_string(c)}, {"score", s}});
    return json{{"cycle_id", cycle_id},
                {"round", round},
                {"k_max", k_max},
                {"proposal", encode(proposal)},
                {"safety", encode(safety)},
                {"current_settings", encode(current_settings)},
                {"preference_context", prefs},
                {"evidence_refs", evidence_refs}};
}

std::string make_cycle_id(const std::string& encounter_id, std::uint64_t n) {
    return encounter_id + "-c" + std::to_string(n);
}

std::vector<Constraint> constraints_from_violations(const SafetyReport& report, const Proposal& proposal,
                                                    const VentilatorSettings& current, const ModeRegistry& registry) {
    std::vector<Constraint> out;
    const ModeId target = target_mode(current, proposal);
    for (const auto& v : report.violations) {
        Constraint c;
        if (v.check_id == "unknown_mode") {
            c.kind = ConstraintKind::forbid_mode;
            c.mode = target;
        } else if (v.check_id == "inapplicable_parameter" && v.parameter) {
            c.kind = ConstraintKind::forbid_param;
            c.param = v.parameter;
        } else if (v.check_id == "bounds" && v.parameter && v.limit && v.proposed_value) {
            c.kind = *v.proposed_value > *v.limit ? ConstraintKind::ceiling : ConstraintKind::floor;
            c.param = v.parameter;
            c.value = v.limit;
        } else if (v.check_id == "delta_limit" && v.parameter) {
            const ModeSpec* spec = registry.find(target);
            if (!spec) continue;
            c.kind = ConstraintKind::max_step;
            c.param = v.parameter;
            c.value = spec->limit(*v.parameter).max_delta;
        } else {
            continue;
        }
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
    return out;
}

// ---------------------------------------------------------------------------

Engine::Engine(const ModeRegistry& registry, AgentRuntime& runtime, BanditConfig bandit, EngineConfig config,
               MemoryStore& memory)
    : registry_(registry), runtime_(runtime), bandit_(bandit), config_(config), memory_(memory) {
    config_.validate();
    waveform_source = [](const std::string& ref) { return segment_from_ref(ref); };
}

CycleRecord Engine::run_cycle(CycleInput input, const Reviewer& reviewer) {
    auto session = start(std::move(input));
    session.advance();
    while (const auto* review = session.pending()) {
        session.submit(reviewer(*review));
        session.advance();
    }
    return session.record();
}

// ---------------------------------------------------------------------------

namespace {

bool mentions_waveform(const std::string& text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return lower.find("waveform") != std::string::npos;
}

bool same_action(const Proposal& a, const Proposal& b) {
    return a.mode_change == b.mode_change && a.setting_updates == b.setting_updates;
}

}  // namespace

CycleSession::CycleSession(Engine& engine, CycleInput input) : engine_(engine), input_(std::move(input)) {}

void CycleSession::fail(const std::string& why) {
    record_.evidence.failure = why;
    pending_.reset();
    resolve(CycleStatus::failed);
}

void CycleSession::prepare() {
    const auto& cfg = engine_.config();
    const auto& registry = engine_.registry();
    auto& memory = engine_.memory();

    record_.cycle_id = input_.cycle_id;
    record_.clinician_id = input_.clinician_id;
    record_.encounter_id = input_.encounter_id;
    record_.timestamp = input_.state.timestamp;
    record_.context.current_state = input_.state;
    record_.context.current_settings = mask_settings(input_.settings, registry);

    const auto window = memory.context_window(input_.encounter_id, cfg.context_notes);
    for (const auto& n : window.notes) {
        record_.context.short_term.push_back(n.text);
        record_.context.long_term_refs.push_back(n.offset);
    }
    if (window.last_accepted_offset) record_.context.long_term_refs.push_back(*window.last_accepted_offset);
    std::sort(record_.context.long_term_refs.begin(), record_.context.long_term_refs.end());
    record_.context.long_term_refs.erase(
        std::unique(record_.context.long_term_refs.begin(), record_.context.long_term_refs.end()),
        record_.context.long_term_refs.end());

    const auto& settings = record_.context.current_settings;
    x_ = featurize(engine_.bandit().featurizer, input_.state, settings, Phase::stabilization, false, true);
    record_.context.feature_vector.assign(x_.begin(), x_.end());
    pref_ = cfg.enable_preference ? memory.load_preference_state(input_.clinician_id, engine_.bandit().hyper)
                                  : PreferenceState::fresh(input_.clinician_id, engine_.bandit().hyper);

    auto& rt = engine_.runtime();
    try {
        std::optional<WaveformCues> cues;
        if (cfg.enable_waveform) {
            if (input_.waveform) {
                segment_ = input_.waveform;
            } else if (input_.state.waveform_ref && engine_.waveform_source) {
                segment_ = engine_.waveform_source(*input_.state.waveform_ref);
            }
            if (segment_) cues = rt.invoke<WaveformCues>(AgentRole::waveform_analyzer, WaveformRequest{*segment_});
        }
        record_.evidence.cues = cues;

        auto summary = rt.invoke<StateSummary>(AgentRole::detection, DetectionRequest{input_.state, settings, cues});
        record_.evidence.summary = summary;
        auto goals = rt.invoke<PhaseGoals>(AgentRole::phase_goal_manager, PhaseRequest{summary, settings});
        record_.evidence.goals = goals;

        const bool asynchrony = cues && cues->quality != CueQuality::unusable && !cues->has(Pattern::none);
        x_ = featurize(engine_.bandit().featurizer, input_.state, settings, goals.phase, asynchrony,
                       summary.evidence_sufficient);
        record_.context.feature_vector.assign(x_.begin(), x_.end());
        scores_ = cfg.enable_preference ? preference_scores(pref_, x_) : uniform_scores(engine_.bandit().hyper, x_);

        auto branch = rt.invoke<BranchDecision>(AgentRole::gate, GateRequest{summary, goals});
        record_.evidence.branch = branch;
        if (branch.branch == Branch::hold) resolve(CycleStatus::hold);
    } catch (const RoleFailure& e) {
        fail(e.what());
    } catch (const BackendUnavailable& e) {
        fail(e.what());
    }
}

void CycleSession::advance() {
    if (done_ || pending_) return;
    if (!prepared_) {
        prepared_ = true;
        prepare();
        if (!done_) plan_round();
        return;
    }
    if (!feedback_unprocessed_) return;
    feedback_unprocessed_ = false;

    const auto& last = record_.trace.back();
    if (last.feedback.decision == Decision::accept) {
        resolve(CycleStatus::accepted);
        return;
    }
    if (record_.rounds >= engine_.config().k_max) {
        resolve(CycleStatus::exhausted);
        return;
    }
    auto& rt = engine_.runtime();
    try {
        auto directive = rt.invoke<RevisionDirective>(
            AgentRole::reflect, ReflectRequest{last.feedback, last.proposal, record_.context.current_settings});
        record_.evidence.directives.push_back(directive);
        for (const auto& c : directive.constraints)
            if (std::find(constraints_.begin(), constraints_.end(), c) == constraints_.end()) constraints_.push_back(c);
        rejected_.push_back(last.proposal);
        resume_ = directive.resume_stage;
        if (engine_.config().enable_waveform && segment_ && mentions_waveform(last.feedback.rationale)) {
            record_.evidence.refreshed_cues.push_back(
                rt.invoke<WaveformCues>(AgentRole::waveform_analyzer, WaveformRequest{*segment_}));
        }
    } catch (const RoleFailure& e) {
        fail(e.what());
        return;
    } catch (const BackendUnavailable& e) {
        fail(e.what());
        return;
    }
    plan_round();
}

void CycleSession::submit(const ClinicianFeedback& feedback) {
    if (!pending_) throw ContractError("no review is pending for cycle " + record_.cycle_id);
    auto checked = decode<ClinicianFeedback>(encode(feedback));
    if (!checked.ok()) {
        std::string msg = "invalid feedback:";
        for (const auto& e : checked.errors) msg += " " + e.to_string() + ";";
        throw ContractError(msg);
    }
    record_.trace.push_back({pending_->proposal, feedback, pending_->safety});
    record_.rounds = static_cast<int>(record_.trace.size());
    pending_.reset();
    feedback_unprocessed_ = true;
}

void CycleSession::plan_round() {
    const auto& cfg = engine_.config();
    const auto& registry = engine_.registry();
    const auto& settings = record_.context.current_settings;
    const auto& summary = *record_.evidence.summary;
    const auto& goals = *record_.evidence.goals;
    auto& rt = engine_.runtime();
    const int round = record_.rounds + 1;

    auto infeasible = [&](const std::string& why) {
        if (record_.rounds == 0) {
            const std::string gate = record_.evidence.branch ? record_.evidence.branch->reason : "";
            record_.evidence.branch = BranchDecision{Branch::hold, "no feasible adjustment (" + why + "; gate: " + gate + ")"};
            resolve(CycleStatus::hold);
        } else {
            resolve(CycleStatus::exhausted);
        }
    };

    try {
        if (!resume_ || *resume_ == ResumeStage::strategy) {
            strategy_ = rt.invoke<StrategyChoice>(AgentRole::strategy_selector,
                                                  StrategyRequest{summary, goals, constraints_});
            record_.evidence.strategies.push_back(*strategy_);
        }
        if (!resume_ || *resume_ <= ResumeStage::mode_select) {
            mode_ = rt.invoke<ModeDecision>(
                AgentRole::mode_select, ModeRequest{strategy_->strategy, goals, settings, constraints_, scores_});
            record_.evidence.modes.push_back(*mode_);
        }
        resume_ = ResumeStage::parameter_plan;

        std::vector<Constraint> local = constraints_;
        for (int attempt = 0; attempt <= cfg.max_internal_replans; ++attempt) {
            PlanRequest req{record_.cycle_id, round, strategy_->strategy, goals, *mode_, settings, scores_, local,
                            rejected_};
            auto set = rt.invoke<CandidateSet>(AgentRole::parameter_planner, req);

            // Candidates repeating a rejected tag profile go to the back.
            std::stable_partition(set.candidates.begin(), set.candidates.end(), [&](const Proposal& p) {
                return std::none_of(rejected_.begin(), rejected_.end(),
                                    [&](const Proposal& r) { return r.category_tags == p.category_tags; });
            });

            std::optional<std::pair<Proposal, SafetyReport>> failing;
            for (auto& cand : set.candidates) {
                if (cand.cycle_id != record_.cycle_id || cand.round_index != round) continue;
                if (cand.strategy != strategy_->strategy || cand.mode_change != mode_->mode_change) continue;
                if (!satisfies(cand, local, settings)) continue;
                if (std::any_of(rejected_.begin(), rejected_.end(),
                                [&](const Proposal& r) { return same_action(r, cand); }))
                    continue;
                auto safety = check_all(cand, settings, registry);
                if (!safety.pass()) {
                    if (!failing) failing.emplace(cand, safety);
                    continue;
                }
                PendingReview review;
                review.cycle_id = record_.cycle_id;
                review.round = round;
                review.k_max = cfg.k_max;
                review.proposal = std::move(cand);
                review.safety = std::move(safety);
                review.current_settings = settings;
                std::vector<std::pair<Category, double>> ranked;
                for (auto c : all_values<Category>()) ranked.emplace_back(c, scores_.of(c));
                std::stable_sort(ranked.begin(), ranked.end(),
                                 [](const auto& a, const auto& b) { return a.second > b.second; });
                ranked.resize(3);
                review.top_preferences = std::move(ranked);
                for (const auto& a : summary.abnormalities)
                    if (a.severity >= Severity::moderate)
                        review.evidence_refs.insert(review.evidence_refs.end(), a.evidence.begin(), a.evidence.end());
                pending_ = std::move(review);
                return;
            }
            if (!failing) break;
            auto extra = constraints_from_violations(failing->second, failing->first, settings, registry);
            bool added = false;
            for (const auto& c : extra) {
                if (std::find(local.begin(), local.end(), c) == local.end()) {
                    local.push_back(c);
                    added = true;
                }
            }
            if (!added) break;
        }
        infeasible("no candidate passed constraints and safety checks");
    } catch (const FeasibilityExhausted& e) {
        infeasible(e.what());
    } catch (const RoleFailure& e) {
        fail(e.what());
    } catch (const BackendUnavailable& e) {
        fail(e.what());
    }
}

void CycleSession::resolve(CycleStatus status) {
    const auto& cfg = engine_.config();
    record_.status = status;
    record_.accepted_settings.reset();
    if (status == CycleStatus::accepted)
        record_.accepted_settings =
            apply_proposal(record_.context.current_settings, record_.trace.back().proposal, engine_.registry());

    NoteOutput closing;
    if (status == CycleStatus::failed) {
        closing = close_cycle(record_);
    } else {
        try {
            closing = engine_.runtime().invoke<NoteOutput>(AgentRole::note_generator, NoteRequest{record_});
        } catch (const RoleFailure& e) {
            // The clinician's decision stands; the note falls back to the local template.
            closing = close_cycle(record_);
            record_.evidence.failure = std::string("note fallback: ") + e.what();
        } catch (const BackendUnavailable& e) {
            closing = close_cycle(record_);
            record_.evidence.failure = std::string("note fallback: ") + e.what();
        }
    }
    record_.note = closing.note;
    record_.preference_signal = closing.signal;

    auto& memory = engine_.memory();
    std::lock_guard lock(memory.clinician_mutex(record_.clinician_id));
    std::optional<PreferenceState> updated;
    if (cfg.enable_preference) {
        const auto& hyper = engine_.bandit().hyper;
        if (status == CycleStatus::accepted) {
            updated = bandit_update(memory.load_preference_state(record_.clinician_id, hyper), x_,
                                    record_.accepted_settings, record_.trace, record_.preference_signal);
        } else if (status == CycleStatus::hold && engine_.bandit().apply_hold_signal &&
                   !record_.preference_signal.evidenced_by_accept.empty()) {
            updated = apply_signal(memory.load_preference_state(record_.clinician_id, hyper), x_,
                                   record_.preference_signal);
        }
    }
    record_.bandit_updated = updated.has_value();

    std::vector<EnvelopeDraft> drafts;
    auto draft = [&](EnvelopeKind kind, json payload) {
        drafts.push_back({kind, record_.timestamp, record_.encounter_id, record_.clinician_id, record_.cycle_id,
                          std::move(payload)});
    };
    draft(EnvelopeKind::cycle_record, encode(record_));
    draft(EnvelopeKind::note, json{{"note", record_.note}, {"status", to_string(status)}});
    if (updated) draft(EnvelopeKind::preference_snapshot, encode_preference_state(*updated));
    done_ = true;
    pending_.reset();
    memory.append_batch(drafts);
}

}  // namespace vdss
