#include "vdss/contracts_json.hpp"

#include <cmath>
#include <limits>
#include <functional>
#include <set>
#include <unordered_map>

#include "vdss/errors.hpp"
#include "vdss/registry.hpp"

namespace vdss {

std::string FieldError::to_string() const {
    std::string p = path.empty() ? "<root>" : path;
    return p + ": expected " + expected + ", found " + found;
}

void throw_contract_error(const std::string& msg) { throw ContractError(msg); }

// ===========================================================================
// Encoding

namespace {

template <class E>
json enum_list(const std::vector<E>& v) {
    json a = json::array();
    for (auto e : v) a.push_back(std::string(to_string(e)));
    return a;
}

template <class T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

}  // namespace

void to_json(json& j, const PatientState& v) {
    j = json::object();
    j["timestamp"] = v.timestamp;
    put_opt(j, "spo2", v.spo2);
    put_opt(j, "heart_rate", v.heart_rate);
    put_opt(j, "map", v.map);
    put_opt(j, "ph", v.ph);
    put_opt(j, "paco2", v.paco2);
    put_opt(j, "pao2", v.pao2);
    put_opt(j, "tidal_volume_obs", v.tidal_volume_obs);
    put_opt(j, "resp_rate_obs", v.resp_rate_obs);
    put_opt(j, "weight_kg", v.weight_kg);
    put_opt(j, "waveform_ref", v.waveform_ref);
}

void to_json(json& j, const VentilatorSettings& v) {
    j = json::object();
    j["mode"] = v.mode;
    for (auto p : all_values<Param>()) {
        if (auto x = v.get(p)) j[std::string(to_string(p))] = *x;
    }
}

void to_json(json& j, const WaveformCues& v) {
    j = json{{"quality", to_string(v.quality)},
             {"asynchrony_patterns", enum_list(v.asynchrony_patterns)},
             {"suspicious_events", v.suspicious_events},
             {"observed_state", v.observed_state},
             {"uncertainty", v.uncertainty}};
}

void to_json(json& j, const Abnormality& v) {
    j = json{{"code", to_string(v.code)}, {"severity", to_string(v.severity)}, {"evidence", v.evidence}};
}

void to_json(json& j, const StateSummary& v) {
    j = json{{"abnormalities", v.abnormalities},
             {"evidence_sufficient", v.evidence_sufficient},
             {"narrative", v.narrative}};
}

void to_json(json& j, const PhaseGoals& v) {
    j = json{{"phase", to_string(v.phase)},
             {"primary_goal", to_string(v.primary_goal)},
             {"secondary_goals", enum_list(v.secondary_goals)}};
}

void to_json(json& j, const BranchDecision& v) {
    j = json{{"branch", to_string(v.branch)}, {"reason", v.reason}};
}

void to_json(json& j, const StrategyChoice& v) {
    j = json{{"strategy", to_string(v.strategy)}, {"rationale", v.rationale}};
}

void to_json(json& j, const ModeDecision& v) {
    j = json{{"rationale", v.rationale}};
    put_opt(j, "mode_change", v.mode_change);
}

void to_json(json& j, const Proposal& v) {
    json updates = json::object();
    for (const auto& [p, x] : v.setting_updates) updates[std::string(to_string(p))] = x;
    j = json{{"cycle_id", v.cycle_id},
             {"round_index", v.round_index},
             {"strategy", to_string(v.strategy)},
             {"setting_updates", updates},
             {"category_tags", enum_list(v.category_tags)},
             {"rationale", v.rationale}};
    put_opt(j, "mode_change", v.mode_change);
}

void to_json(json& j, const ClinicianFeedback& v) {
    j = json{{"decision", to_string(v.decision)},
             {"disputed_parameters", enum_list(v.disputed_parameters)},
             {"rationale", v.rationale}};
    if (v.reason_category) j["reason_category"] = to_string(*v.reason_category);
}

void to_json(json& j, const Constraint& v) {
    j = json{{"kind", to_string(v.kind)}};
    if (v.param) j["param"] = to_string(*v.param);
    put_opt(j, "value", v.value);
    put_opt(j, "mode", v.mode);
    if (v.strategy) j["strategy"] = to_string(*v.strategy);
}

void to_json(json& j, const RevisionDirective& v) {
    j = json{{"resume_stage", to_string(v.resume_stage)},
             {"constraints", v.constraints},
             {"rationale", v.rationale}};
}

void to_json(json& j, const Violation& v) {
    j = json{{"check_id", v.check_id}};
    if (v.parameter) j["parameter"] = to_string(*v.parameter);
    put_opt(j, "limit", v.limit);
    put_opt(j, "proposed_value", v.proposed_value);
}

void to_json(json& j, const SafetyReport& v) {
    j = json{{"verdict", v.pass() ? "pass" : "fail"}, {"violations", v.violations}, {"warnings", v.warnings}};
}

void to_json(json& j, const PreferenceSignal& v) {
    j = json{{"evidenced_by_accept", enum_list(v.evidenced_by_accept)},
             {"evidenced_only_by_reject", enum_list(v.evidenced_only_by_reject)}};
}

void to_json(json& j, const CategoryScores& v) {
    j = json{{"score", v.score}, {"mean", v.mean}, {"uncertainty", v.uncertainty}};
}

void to_json(json& j, const CycleContext& v) {
    j = json{{"current_state", v.current_state},
             {"current_settings", v.current_settings},
             {"short_term", v.short_term},
             {"long_term_refs", v.long_term_refs},
             {"feature_vector", v.feature_vector}};
}

void to_json(json& j, const TraceEntry& v) {
    j = json{{"proposal", v.proposal}, {"feedback", v.feedback}, {"safety", v.safety}};
}

void to_json(json& j, const CycleEvidence& v) {
    j = json{{"strategies", v.strategies},
             {"modes", v.modes},
             {"directives", v.directives},
             {"refreshed_cues", v.refreshed_cues}};
    put_opt(j, "cues", v.cues);
    put_opt(j, "summary", v.summary);
    put_opt(j, "goals", v.goals);
    put_opt(j, "branch", v.branch);
    put_opt(j, "failure", v.failure);
}

void to_json(json& j, const CycleRecord& v) {
    j = json{{"cycle_id", v.cycle_id},
             {"clinician_id", v.clinician_id},
             {"encounter_id", v.encounter_id},
             {"timestamp", v.timestamp},
             {"context", v.context},
             {"trace", v.trace},
             {"rounds", v.rounds},
             {"note", v.note},
             {"preference_signal", v.preference_signal},
             {"status", to_string(v.status)},
             {"evidence", v.evidence},
             {"bandit_updated", v.bandit_updated}};
    put_opt(j, "accepted_settings", v.accepted_settings);
}

void to_json(json& j, const WaveformSegment& v) {
    auto series = [](const std::vector<double>& xs) {
        json a = json::array();
        for (double x : xs) {
            if (std::isfinite(x))
                a.push_back(x);
            else
                a.push_back(nullptr);
        }
        return a;
    };
    j = json{{"sample_rate_hz", v.sample_rate_hz}, {"pressure", series(v.pressure)}, {"flow", series(v.flow)}};
}

void to_json(json& j, const WaveformRequest& v) { j = json{{"segment", v.segment}}; }

void to_json(json& j, const DetectionRequest& v) {
    j = json{{"state", v.state}, {"settings", v.settings}};
    put_opt(j, "cues", v.cues);
}

void to_json(json& j, const PhaseRequest& v) { j = json{{"summary", v.summary}, {"settings", v.settings}}; }

void to_json(json& j, const GateRequest& v) { j = json{{"summary", v.summary}, {"goals", v.goals}}; }

void to_json(json& j, const StrategyRequest& v) {
    j = json{{"summary", v.summary}, {"goals", v.goals}, {"constraints", v.constraints}};
}

void to_json(json& j, const ModeRequest& v) {
    j = json{{"strategy", to_string(v.strategy)},
             {"goals", v.goals},
             {"settings", v.settings},
             {"constraints", v.constraints},
             {"preference", v.preference}};
}

void to_json(json& j, const PlanRequest& v) {
    j = json{{"cycle_id", v.cycle_id},       {"round_index", v.round_index},
             {"strategy", to_string(v.strategy)}, {"goals", v.goals},
             {"mode", v.mode},               {"settings", v.settings},
             {"preference", v.preference},   {"constraints", v.constraints},
             {"rejected", v.rejected}};
}

void to_json(json& j, const CandidateSet& v) { j = json{{"candidates", v.candidates}}; }

void to_json(json& j, const ReflectRequest& v) {
    j = json{{"feedback", v.feedback}, {"rejected", v.rejected}, {"settings", v.settings}};
}

void to_json(json& j, const NoteRequest& v) { j = json{{"record", v.record}}; }

void to_json(json& j, const NoteOutput& v) { j = json{{"note", v.note}, {"signal", v.signal}}; }

// ===========================================================================
// Decoding

namespace {

using Code = FieldError::Code;

struct Dec {
    std::vector<FieldError>& errors;
    const ValidationContext& vc;

    void fail(Code code, const std::string& path, std::string expected, std::string found) {
        errors.push_back({code, path, std::move(expected), std::move(found)});
    }
};

std::string describe(const json& j) {
    if (j.is_null()) return "null";
    if (j.is_boolean()) return "boolean";
    if (j.is_number()) return "number " + j.dump();
    if (j.is_string()) {
        auto s = j.get<std::string>();
        if (s.size() > 40) s = s.substr(0, 40) + "...";
        return "string \"" + s + "\"";
    }
    if (j.is_array()) return "array";
    return "object";
}

std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string fmt_num(double x) {
    json j = x;
    return j.dump();
}

// Forward declarations so nested structures can recurse in any order.
void read(const json&, const std::string&, Dec&, double&);
void read(const json&, const std::string&, Dec&, int&);
void read(const json&, const std::string&, Dec&, std::uint64_t&);
void read(const json&, const std::string&, Dec&, bool&);
void read(const json&, const std::string&, Dec&, std::string&);
template <class T>
void read(const json&, const std::string&, Dec&, std::vector<T>&);
template <class T, std::size_t N>
void read(const json&, const std::string&, Dec&, std::array<T, N>&);
void read(const json&, const std::string&, Dec&, PatientState&);
void read(const json&, const std::string&, Dec&, VentilatorSettings&);
void read(const json&, const std::string&, Dec&, WaveformCues&);
void read(const json&, const std::string&, Dec&, Abnormality&);
void read(const json&, const std::string&, Dec&, StateSummary&);
void read(const json&, const std::string&, Dec&, PhaseGoals&);
void read(const json&, const std::string&, Dec&, BranchDecision&);
void read(const json&, const std::string&, Dec&, StrategyChoice&);
void read(const json&, const std::string&, Dec&, ModeDecision&);
void read(const json&, const std::string&, Dec&, Proposal&);
void read(const json&, const std::string&, Dec&, ClinicianFeedback&);
void read(const json&, const std::string&, Dec&, Constraint&);
void read(const json&, const std::string&, Dec&, RevisionDirective&);
void read(const json&, const std::string&, Dec&, Violation&);
void read(const json&, const std::string&, Dec&, SafetyReport&);
void read(const json&, const std::string&, Dec&, PreferenceSignal&);
void read(const json&, const std::string&, Dec&, CategoryScores&);
void read(const json&, const std::string&, Dec&, CycleContext&);
void read(const json&, const std::string&, Dec&, TraceEntry&);
void read(const json&, const std::string&, Dec&, CycleEvidence&);
void read(const json&, const std::string&, Dec&, CycleRecord&);
void read(const json&, const std::string&, Dec&, WaveformSegment&);
void read(const json&, const std::string&, Dec&, WaveformRequest&);
void read(const json&, const std::string&, Dec&, DetectionRequest&);
void read(const json&, const std::string&, Dec&, PhaseRequest&);
void read(const json&, const std::string&, Dec&, GateRequest&);
void read(const json&, const std::string&, Dec&, StrategyRequest&);
void read(const json&, const std::string&, Dec&, ModeRequest&);
void read(const json&, const std::string&, Dec&, PlanRequest&);
void read(const json&, const std::string&, Dec&, CandidateSet&);
void read(const json&, const std::string&, Dec&, ReflectRequest&);
void read(const json&, const std::string&, Dec&, NoteRequest&);
void read(const json&, const std::string&, Dec&, NoteOutput&);

template <class E>
    requires std::is_enum_v<E>
void read(const json& j, const std::string& path, Dec& d, E& out) {
    if (!j.is_string()) {
        d.fail(Code::type_mismatch, path, "string", describe(j));
        return;
    }
    auto v = parse_enum<E>(j.get_ref<const std::string&>());
    if (!v) {
        std::string allowed;
        for (auto n : EnumNames<E>::names) allowed += (allowed.empty() ? "" : "|") + std::string(n);
        d.fail(Code::invariant, path, "one of " + allowed, describe(j));
        return;
    }
    out = *v;
}

void read(const json& j, const std::string& path, Dec& d, double& out) {
    if (!j.is_number()) {
        d.fail(Code::type_mismatch, path, "number", describe(j));
        return;
    }
    out = j.get<double>();
    if (!std::isfinite(out)) d.fail(Code::invariant, path, "finite number", describe(j));
}

void read(const json& j, const std::string& path, Dec& d, int& out) {
    if (!j.is_number_integer()) {
        d.fail(Code::type_mismatch, path, "integer", describe(j));
        return;
    }
    out = j.get<int>();
}

void read(const json& j, const std::string& path, Dec& d, std::uint64_t& out) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
        d.fail(Code::type_mismatch, path, "non-negative integer", describe(j));
        return;
    }
    out = j.get<std::uint64_t>();
}

void read(const json& j, const std::string& path, Dec& d, bool& out) {
    if (!j.is_boolean()) {
        d.fail(Code::type_mismatch, path, "boolean", describe(j));
        return;
    }
    out = j.get<bool>();
}

void read(const json& j, const std::string& path, Dec& d, std::string& out) {
    if (!j.is_string()) {
        d.fail(Code::type_mismatch, path, "string", describe(j));
        return;
    }
    out = j.get<std::string>();
}

template <class T>
void read(const json& j, const std::string& path, Dec& d, std::vector<T>& out) {
    if (!j.is_array()) {
        d.fail(Code::type_mismatch, path, "array", describe(j));
        return;
    }
    out.clear();
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        T v{};
        read(j[i], path + "[" + std::to_string(i) + "]", d, v);
        out.push_back(std::move(v));
    }
}

template <class T, std::size_t N>
void read(const json& j, const std::string& path, Dec& d, std::array<T, N>& out) {
    if (!j.is_array() || j.size() != N) {
        d.fail(Code::type_mismatch, path, "array of length " + std::to_string(N), describe(j));
        return;
    }
    for (std::size_t i = 0; i < N; ++i) read(j[i], path + "[" + std::to_string(i) + "]", d, out[i]);
}

/// Closed-object reader: tracks consumed keys and reports the rest.
class Obj {
public:
    Obj(const json& j, std::string path, Dec& d) : j_(j), path_(std::move(path)), d_(d) {
        ok_ = j.is_object();
        if (!ok_) d_.fail(Code::type_mismatch, path_, "object", describe(j));
    }

    bool ok() const { return ok_; }
    const std::string& path() const { return path_; }
    std::string at(std::string_view key) const { return join(path_, key); }

    template <class T>
    bool req(std::string_view key, T& out) {
        seen_.emplace(key);
        if (!ok_) return false;
        auto it = j_.find(std::string(key));
        if (it == j_.end()) {
            d_.fail(Code::missing, at(key), "required field", "absent");
            return false;
        }
        auto before = d_.errors.size();
        read(*it, at(key), d_, out);
        return d_.errors.size() == before;
    }

    template <class T>
    bool opt(std::string_view key, std::optional<T>& out) {
        seen_.emplace(key);
        out.reset();
        if (!ok_) return false;
        auto it = j_.find(std::string(key));
        if (it == j_.end() || it->is_null()) return true;
        auto before = d_.errors.size();
        T v{};
        read(*it, at(key), d_, v);
        if (d_.errors.size() != before) return false;
        out = std::move(v);
        return true;
    }

    /// A key that is allowed but handled by the caller.
    void allow(std::string_view key) { seen_.emplace(key); }

    const json* raw(std::string_view key) const {
        if (!ok_) return nullptr;
        auto it = j_.find(std::string(key));
        return it == j_.end() ? nullptr : &*it;
    }

    void check(bool cond, std::string_view key, std::string expected, std::string found) {
        if (ok_ && !cond) d_.fail(Code::invariant, key.empty() ? path_ : at(key), std::move(expected), std::move(found));
    }

    void close() {
        if (!ok_) return;
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) d_.fail(Code::unknown_field, at(it.key()), "no such field", describe(*it));
        }
    }

private:
    const json& j_;
    std::string path_;
    Dec& d_;
    bool ok_ = false;
    std::set<std::string, std::less<>> seen_;
};

void check_range(Obj& o, std::string_view key, const std::optional<double>& v, double lo, double hi) {
    if (v) o.check(*v >= lo && *v <= hi, key, "value in [" + fmt_num(lo) + "," + fmt_num(hi) + "]", fmt_num(*v));
}

template <class E>
void read_set(Obj& o, std::string_view key, std::vector<E>& out) {
    if (o.req(key, out)) normalize_set(out);
}

void read(const json& j, const std::string& path, Dec& d, PatientState& v) {
    Obj o(j, path, d);
    if (o.req("timestamp", v.timestamp)) o.check(v.timestamp >= 0, "timestamp", "non-negative seconds", fmt_num(v.timestamp));
    o.opt("spo2", v.spo2);
    o.opt("heart_rate", v.heart_rate);
    o.opt("map", v.map);
    o.opt("ph", v.ph);
    o.opt("paco2", v.paco2);
    o.opt("pao2", v.pao2);
    o.opt("tidal_volume_obs", v.tidal_volume_obs);
    o.opt("resp_rate_obs", v.resp_rate_obs);
    o.opt("weight_kg", v.weight_kg);
    o.opt("waveform_ref", v.waveform_ref);
    check_range(o, "spo2", v.spo2, 0, 100);
    check_range(o, "heart_rate", v.heart_rate, 0, 400);
    check_range(o, "map", v.map, 0, 300);
    check_range(o, "ph", v.ph, 6.0, 8.0);
    check_range(o, "paco2", v.paco2, 0, 250);
    check_range(o, "pao2", v.pao2, 0, 800);
    check_range(o, "tidal_volume_obs", v.tidal_volume_obs, 0, 3000);
    check_range(o, "resp_rate_obs", v.resp_rate_obs, 0, 120);
    if (v.weight_kg) o.check(*v.weight_kg > 0 && *v.weight_kg <= 400, "weight_kg", "value in (0,400]", fmt_num(*v.weight_kg));
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, VentilatorSettings& v) {
    Obj o(j, path, d);
    v = VentilatorSettings{};
    o.req("mode", v.mode);
    for (auto p : all_values<Param>()) {
        std::optional<double> x;
        o.opt(to_string(p), x);
        v.values[index_of(p)] = x;
    }
    o.close();
    if (!o.ok()) return;
    o.check(!v.mode.empty(), "mode", "non-empty mode id", "\"\"");
    check_range(o, "fio2", v.get(Param::fio2), 21, 100);
    if (const auto* reg = d.vc.registry) {
        const ModeSpec* spec = reg->find(v.mode);
        if (!spec) {
            o.check(false, "mode", "registered mode", "\"" + v.mode + "\"");
            return;
        }
        for (auto p : all_values<Param>()) {
            auto key = to_string(p);
            if (!spec->applies(p)) {
                o.check(!v.has(p), key, "absent (inapplicable in " + v.mode + ")", v.has(p) ? fmt_num(*v.get(p)) : "");
            } else if (v.has(p)) {
                const auto& lim = spec->limit(p);
                check_range(o, key, v.get(p), lim.min, lim.max);
            }
        }
    }
}

void read(const json& j, const std::string& path, Dec& d, WaveformCues& v) {
    Obj o(j, path, d);
    o.req("quality", v.quality);
    bool have_patterns = false;
    if (o.req("asynchrony_patterns", v.asynchrony_patterns)) {
        normalize_set(v.asynchrony_patterns);
        have_patterns = true;
    }
    o.req("suspicious_events", v.suspicious_events);
    o.req("observed_state", v.observed_state);
    if (o.req("uncertainty", v.uncertainty))
        o.check(v.uncertainty >= 0 && v.uncertainty <= 1, "uncertainty", "value in [0,1]", fmt_num(v.uncertainty));
    if (have_patterns) {
        o.check(!v.asynchrony_patterns.empty(), "asynchrony_patterns", "at least one pattern (use none)", "[]");
        o.check(!(v.has(Pattern::none) && v.asynchrony_patterns.size() > 1), "asynchrony_patterns",
                "'none' exclusive of other patterns", "none with others");
    }
    o.close();
}

bool valid_evidence_ref(const std::string& ref) {
    auto dot = ref.find('.');
    if (dot == std::string::npos) return false;
    auto head = std::string_view(ref).substr(0, dot);
    auto tail = std::string_view(ref).substr(dot + 1);
    if (head == "state") {
        for (auto n : PatientState::numeric_fields())
            if (n == tail) return true;
        return tail == "tidal_volume_per_kg" || tail == "waveform_ref";
    }
    if (head == "settings") return parse_enum<Param>(tail).has_value() || tail == "mode";
    if (head == "cues") return parse_enum<Pattern>(tail).has_value() || tail == "quality" || tail == "uncertainty";
    return false;
}

void read(const json& j, const std::string& path, Dec& d, Abnormality& v) {
    Obj o(j, path, d);
    o.req("code", v.code);
    o.req("severity", v.severity);
    if (o.req("evidence", v.evidence)) {
        o.check(!v.evidence.empty(), "evidence", "at least one evidence ref", "[]");
        for (std::size_t i = 0; i < v.evidence.size(); ++i) {
            o.check(valid_evidence_ref(v.evidence[i]), "evidence[" + std::to_string(i) + "]",
                    "ref into state.*, settings.* or cues.*", "\"" + v.evidence[i] + "\"");
        }
    }
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, StateSummary& v) {
    Obj o(j, path, d);
    o.req("abnormalities", v.abnormalities);
    o.req("evidence_sufficient", v.evidence_sufficient);
    o.req("narrative", v.narrative);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, PhaseGoals& v) {
    Obj o(j, path, d);
    o.req("phase", v.phase);
    bool p = o.req("primary_goal", v.primary_goal);
    bool s = o.req("secondary_goals", v.secondary_goals);
    if (p && s) {
        o.check(std::find(v.secondary_goals.begin(), v.secondary_goals.end(), v.primary_goal) == v.secondary_goals.end(),
                "secondary_goals", "primary goal not repeated", std::string(to_string(v.primary_goal)));
    }
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, BranchDecision& v) {
    Obj o(j, path, d);
    o.req("branch", v.branch);
    if (o.req("reason", v.reason)) o.check(!v.reason.empty(), "reason", "non-empty required", "\"\"");
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, StrategyChoice& v) {
    Obj o(j, path, d);
    o.req("strategy", v.strategy);
    o.req("rationale", v.rationale);
    o.close();
}

void check_mode_known(Obj& o, Dec& d, std::string_view key, const std::optional<ModeId>& m) {
    if (!m) return;
    o.check(!m->empty(), key, "non-empty mode id", "\"\"");
    if (d.vc.registry && !m->empty()) o.check(d.vc.registry->contains(*m), key, "registered mode", "\"" + *m + "\"");
}

void read(const json& j, const std::string& path, Dec& d, ModeDecision& v) {
    Obj o(j, path, d);
    o.opt("mode_change", v.mode_change);
    o.req("rationale", v.rationale);
    check_mode_known(o, d, "mode_change", v.mode_change);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, Proposal& v) {
    Obj o(j, path, d);
    if (o.req("cycle_id", v.cycle_id)) o.check(!v.cycle_id.empty(), "cycle_id", "non-empty", "\"\"");
    if (o.req("round_index", v.round_index)) o.check(v.round_index >= 1, "round_index", "k >= 1", std::to_string(v.round_index));
    o.req("strategy", v.strategy);
    o.opt("mode_change", v.mode_change);
    check_mode_known(o, d, "mode_change", v.mode_change);
    o.allow("setting_updates");
    v.setting_updates.clear();
    if (const json* u = o.raw("setting_updates")) {
        const auto upath = o.at("setting_updates");
        if (!u->is_object()) {
            d.fail(Code::type_mismatch, upath, "object", describe(*u));
        } else {
            for (auto it = u->begin(); it != u->end(); ++it) {
                auto p = parse_enum<Param>(it.key());
                if (!p) {
                    d.fail(Code::unknown_field, join(upath, it.key()), "settable parameter", describe(*it));
                    continue;
                }
                double x = 0;
                auto before = d.errors.size();
                read(*it, join(upath, it.key()), d, x);
                if (d.errors.size() == before) v.setting_updates[*p] = x;
            }
            o.check(!v.setting_updates.empty() || v.mode_change.has_value(), "setting_updates",
                    "non-empty unless mode_change present", "{}");
            const auto n = static_cast<int>(u->size());
            o.check(n <= d.vc.max_setting_updates, "setting_updates",
                    "compactness bound |updates| <= " + std::to_string(d.vc.max_setting_updates), std::to_string(n) + " updates");
        }
    } else if (o.ok()) {
        d.fail(Code::missing, o.at("setting_updates"), "required field", "absent");
    }
    if (o.req("category_tags", v.category_tags)) {
        normalize_set(v.category_tags);
        o.check(!v.category_tags.empty(), "category_tags", "non-empty tag set", "[]");
    }
    o.req("rationale", v.rationale);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, ClinicianFeedback& v) {
    Obj o(j, path, d);
    bool dec = o.req("decision", v.decision);
    o.opt("reason_category", v.reason_category);
    if (o.req("disputed_parameters", v.disputed_parameters)) normalize_set(v.disputed_parameters);
    o.req("rationale", v.rationale);
    if (dec) o.check(v.decision == Decision::accept || v.reason_category.has_value(), "reason_category",
                     "present when decision is reject", "absent");
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, Constraint& v) {
    Obj o(j, path, d);
    bool k = o.req("kind", v.kind);
    o.opt("param", v.param);
    o.opt("value", v.value);
    o.opt("mode", v.mode);
    o.opt("strategy", v.strategy);
    if (k) {
        switch (v.kind) {
            case ConstraintKind::ceiling:
            case ConstraintKind::floor:
                o.check(v.param && v.value, "", "param and value for " + std::string(to_string(v.kind)), "missing");
                break;
            case ConstraintKind::max_step:
                o.check(v.param && v.value && *v.value > 0, "", "param and positive value for max_step", "missing or <= 0");
                break;
            case ConstraintKind::forbid_param:
                o.check(v.param.has_value(), "param", "parameter for forbid_param", "absent");
                break;
            case ConstraintKind::forbid_mode:
                o.check(v.mode.has_value() && !v.mode->empty(), "mode", "mode for forbid_mode", "absent");
                break;
            case ConstraintKind::forbid_strategy:
                o.check(v.strategy.has_value(), "strategy", "strategy for forbid_strategy", "absent");
                break;
        }
    }
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, RevisionDirective& v) {
    Obj o(j, path, d);
    o.req("resume_stage", v.resume_stage);
    if (o.req("constraints", v.constraints)) o.check(!v.constraints.empty(), "constraints", "non-empty", "[]");
    o.req("rationale", v.rationale);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, Violation& v) {
    Obj o(j, path, d);
    if (o.req("check_id", v.check_id)) o.check(!v.check_id.empty(), "check_id", "non-empty", "\"\"");
    o.opt("parameter", v.parameter);
    o.opt("limit", v.limit);
    o.opt("proposed_value", v.proposed_value);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, SafetyReport& v) {
    Obj o(j, path, d);
    std::string verdict;
    bool have = o.req("verdict", verdict);
    bool viol = o.req("violations", v.violations);
    o.req("warnings", v.warnings);
    if (have) {
        o.check(verdict == "pass" || verdict == "fail", "verdict", "pass|fail", "\"" + verdict + "\"");
        if (viol) o.check((verdict == "fail") == !v.violations.empty(), "verdict", "fail iff violations non-empty", verdict);
    }
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, PreferenceSignal& v) {
    Obj o(j, path, d);
    read_set(o, "evidenced_by_accept", v.evidenced_by_accept);
    read_set(o, "evidenced_only_by_reject", v.evidenced_only_by_reject);
    o.check(is_disjoint(v), "", "disjoint accept/reject category sets", "overlap");
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, CategoryScores& v) {
    Obj o(j, path, d);
    o.req("score", v.score);
    o.req("mean", v.mean);
    o.req("uncertainty", v.uncertainty);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, CycleContext& v) {
    Obj o(j, path, d);
    o.req("current_state", v.current_state);
    o.req("current_settings", v.current_settings);
    o.req("short_term", v.short_term);
    o.req("long_term_refs", v.long_term_refs);
    if (o.req("feature_vector", v.feature_vector)) {
        o.check(v.feature_vector.size() == kFeatureDim, "feature_vector", "dimension 12",
                "dimension " + std::to_string(v.feature_vector.size()));
    }
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, TraceEntry& v) {
    Obj o(j, path, d);
    o.req("proposal", v.proposal);
    o.req("feedback", v.feedback);
    o.req("safety", v.safety);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, CycleEvidence& v) {
    Obj o(j, path, d);
    o.opt("cues", v.cues);
    o.opt("summary", v.summary);
    o.opt("goals", v.goals);
    o.opt("branch", v.branch);
    o.req("strategies", v.strategies);
    o.req("modes", v.modes);
    o.req("directives", v.directives);
    o.req("refreshed_cues", v.refreshed_cues);
    o.opt("failure", v.failure);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, CycleRecord& v) {
    Obj o(j, path, d);
    o.req("cycle_id", v.cycle_id);
    o.req("clinician_id", v.clinician_id);
    o.req("encounter_id", v.encounter_id);
    o.req("timestamp", v.timestamp);
    o.req("context", v.context);
    bool trace = o.req("trace", v.trace);
    bool rounds = o.req("rounds", v.rounds);
    o.opt("accepted_settings", v.accepted_settings);
    o.req("note", v.note);
    o.req("preference_signal", v.preference_signal);
    bool status = o.req("status", v.status);
    o.req("evidence", v.evidence);
    o.req("bandit_updated", v.bandit_updated);
    if (trace && rounds) {
        o.check(v.rounds == static_cast<int>(v.trace.size()), "rounds", "K_t equal to trace length",
                std::to_string(v.rounds));
        if (d.vc.k_max > 0)
            o.check(v.rounds <= d.vc.k_max, "rounds", "K_t <= K_max (" + std::to_string(d.vc.k_max) + ")",
                    std::to_string(v.rounds));
        for (std::size_t i = 0; i + 1 < v.trace.size(); ++i) {
            o.check(v.trace[i].feedback.decision == Decision::reject, "trace[" + std::to_string(i) + "]",
                    "no round after an accept", "accept before final round");
        }
    }
    if (trace && status) {
        switch (v.status) {
            case CycleStatus::accepted:
                o.check(!v.trace.empty() && v.trace.back().feedback.decision == Decision::accept, "status",
                        "accepted cycle ending in an accept", "accepted");
                o.check(v.accepted_settings.has_value(), "accepted_settings", "present for accepted cycle", "absent");
                break;
            case CycleStatus::hold:
                o.check(v.trace.empty(), "trace", "empty trace for hold", std::to_string(v.trace.size()) + " rounds");
                o.check(!v.accepted_settings.has_value(), "accepted_settings", "absent for hold", "present");
                break;
            case CycleStatus::exhausted:
            case CycleStatus::failed:
                o.check(v.trace.empty() || v.trace.back().feedback.decision == Decision::reject, "status",
                        "no accepted round", std::string(to_string(v.status)));
                o.check(!v.accepted_settings.has_value(), "accepted_settings", "absent", "present");
                break;
        }
    }
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, WaveformSegment& v) {
    Obj o(j, path, d);
    if (o.req("sample_rate_hz", v.sample_rate_hz))
        o.check(v.sample_rate_hz > 0, "sample_rate_hz", "positive rate", fmt_num(v.sample_rate_hz));
    auto series = [&](std::string_view key, std::vector<double>& out) {
        o.allow(key);
        out.clear();
        const json* a = o.raw(key);
        if (!o.ok()) return;
        if (!a) {
            d.fail(Code::missing, o.at(key), "required field", "absent");
            return;
        }
        if (!a->is_array()) {
            d.fail(Code::type_mismatch, o.at(key), "array of number|null", describe(*a));
            return;
        }
        out.reserve(a->size());
        for (std::size_t i = 0; i < a->size(); ++i) {
            const auto& x = (*a)[i];
            if (x.is_null()) {
                out.push_back(std::numeric_limits<double>::quiet_NaN());
            } else if (x.is_number()) {
                out.push_back(x.get<double>());
            } else {
                d.fail(Code::type_mismatch, o.at(key) + "[" + std::to_string(i) + "]", "number|null", describe(x));
            }
        }
    };
    series("pressure", v.pressure);
    series("flow", v.flow);
    o.check(v.pressure.size() == v.flow.size(), "flow", "same length as pressure", std::to_string(v.flow.size()));
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, WaveformRequest& v) {
    Obj o(j, path, d);
    o.req("segment", v.segment);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, DetectionRequest& v) {
    Obj o(j, path, d);
    o.req("state", v.state);
    o.req("settings", v.settings);
    o.opt("cues", v.cues);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, PhaseRequest& v) {
    Obj o(j, path, d);
    o.req("summary", v.summary);
    o.req("settings", v.settings);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, GateRequest& v) {
    Obj o(j, path, d);
    o.req("summary", v.summary);
    o.req("goals", v.goals);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, StrategyRequest& v) {
    Obj o(j, path, d);
    o.req("summary", v.summary);
    o.req("goals", v.goals);
    o.req("constraints", v.constraints);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, ModeRequest& v) {
    Obj o(j, path, d);
    o.req("strategy", v.strategy);
    o.req("goals", v.goals);
    o.req("settings", v.settings);
    o.req("constraints", v.constraints);
    o.req("preference", v.preference);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, PlanRequest& v) {
    Obj o(j, path, d);
    o.req("cycle_id", v.cycle_id);
    if (o.req("round_index", v.round_index)) o.check(v.round_index >= 1, "round_index", "k >= 1", std::to_string(v.round_index));
    o.req("strategy", v.strategy);
    o.req("goals", v.goals);
    o.req("mode", v.mode);
    o.req("settings", v.settings);
    o.req("preference", v.preference);
    o.req("constraints", v.constraints);
    o.req("rejected", v.rejected);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, CandidateSet& v) {
    Obj o(j, path, d);
    o.req("candidates", v.candidates);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, ReflectRequest& v) {
    Obj o(j, path, d);
    if (o.req("feedback", v.feedback))
        o.check(v.feedback.decision == Decision::reject, "feedback.decision", "reject", "accept");
    o.req("rejected", v.rejected);
    o.req("settings", v.settings);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, NoteRequest& v) {
    Obj o(j, path, d);
    o.req("record", v.record);
    o.close();
}

void read(const json& j, const std::string& path, Dec& d, NoteOutput& v) {
    Obj o(j, path, d);
    o.req("note", v.note);
    o.req("signal", v.signal);
    o.close();
}

}  // namespace

template <class T>
Validated<T> decode(const json& j, const ValidationContext& ctx) {
    Validated<T> out;
    Dec d{out.errors, ctx};
    T v{};
    read(j, "", d, v);
    if (out.errors.empty()) out.value = std::move(v);
    return out;
}

#define VDSS_INSTANTIATE_DECODE(T) template Validated<T> decode<T>(const json&, const ValidationContext&);
VDSS_INSTANTIATE_DECODE(PatientState)
VDSS_INSTANTIATE_DECODE(VentilatorSettings)
VDSS_INSTANTIATE_DECODE(WaveformCues)
VDSS_INSTANTIATE_DECODE(Abnormality)
VDSS_INSTANTIATE_DECODE(StateSummary)
VDSS_INSTANTIATE_DECODE(PhaseGoals)
VDSS_INSTANTIATE_DECODE(BranchDecision)
VDSS_INSTANTIATE_DECODE(StrategyChoice)
VDSS_INSTANTIATE_DECODE(ModeDecision)
VDSS_INSTANTIATE_DECODE(Proposal)
VDSS_INSTANTIATE_DECODE(ClinicianFeedback)
VDSS_INSTANTIATE_DECODE(Constraint)
VDSS_INSTANTIATE_DECODE(RevisionDirective)
VDSS_INSTANTIATE_DECODE(SafetyReport)
VDSS_INSTANTIATE_DECODE(PreferenceSignal)
VDSS_INSTANTIATE_DECODE(CategoryScores)
VDSS_INSTANTIATE_DECODE(CycleContext)
VDSS_INSTANTIATE_DECODE(CycleRecord)
VDSS_INSTANTIATE_DECODE(WaveformSegment)
VDSS_INSTANTIATE_DECODE(WaveformRequest)
VDSS_INSTANTIATE_DECODE(DetectionRequest)
VDSS_INSTANTIATE_DECODE(PhaseRequest)
VDSS_INSTANTIATE_DECODE(GateRequest)
VDSS_INSTANTIATE_DECODE(StrategyRequest)
VDSS_INSTANTIATE_DECODE(ModeRequest)
VDSS_INSTANTIATE_DECODE(PlanRequest)
VDSS_INSTANTIATE_DECODE(CandidateSet)
VDSS_INSTANTIATE_DECODE(ReflectRequest)
VDSS_INSTANTIATE_DECODE(NoteRequest)
VDSS_INSTANTIATE_DECODE(NoteOutput)
#undef VDSS_INSTANTIATE_DECODE

// ===========================================================================
// Schema registry

namespace {

using Decoder = std::function<Validated<Message>(const json&, const ValidationContext&)>;

template <class T>
Decoder make_decoder() {
    return [](const json& j, const ValidationContext& ctx) {
        auto v = decode<T>(j, ctx);
        Validated<Message> out;
        out.errors = std::move(v.errors);
        if (v.value) out.value = Message(std::move(*v.value));
        return out;
    };
}

struct RoleSchemas {
    const char* input;
    const char* output;
};

constexpr std::array<RoleSchemas, kRoleCount> kRoleSchemas{{
    {"waveform_request", "waveform_cues"},
    {"detection_request", "state_summary"},
    {"phase_request", "phase_goals"},
    {"gate_request", "branch_decision"},
    {"strategy_request", "strategy_choice"},
    {"mode_request", "mode_decision"},
    {"plan_request", "candidate_set"},
    {"reflect_request", "revision_directive"},
    {"note_request", "note_output"},
}};

const std::unordered_map<std::string, Decoder>& decoders() {
    static const auto table = [] {
        std::unordered_map<std::string, Decoder> m{
            {"patient_state", make_decoder<PatientState>()},
            {"ventilator_settings", make_decoder<VentilatorSettings>()},
            {"waveform_cues", make_decoder<WaveformCues>()},
            {"state_summary", make_decoder<StateSummary>()},
            {"phase_goals", make_decoder<PhaseGoals>()},
            {"branch_decision", make_decoder<BranchDecision>()},
            {"strategy_choice", make_decoder<StrategyChoice>()},
            {"mode_decision", make_decoder<ModeDecision>()},
            {"proposal", make_decoder<Proposal>()},
            {"clinician_feedback", make_decoder<ClinicianFeedback>()},
            {"revision_directive", make_decoder<RevisionDirective>()},
            {"safety_report", make_decoder<SafetyReport>()},
            {"preference_signal", make_decoder<PreferenceSignal>()},
            {"category_scores", make_decoder<CategoryScores>()},
            {"cycle_context", make_decoder<CycleContext>()},
            {"cycle_record", make_decoder<CycleRecord>()},
            {"waveform_request", make_decoder<WaveformRequest>()},
            {"detection_request", make_decoder<DetectionRequest>()},
            {"phase_request", make_decoder<PhaseRequest>()},
            {"gate_request", make_decoder<GateRequest>()},
            {"strategy_request", make_decoder<StrategyRequest>()},
            {"mode_request", make_decoder<ModeRequest>()},
            {"plan_request", make_decoder<PlanRequest>()},
            {"candidate_set", make_decoder<CandidateSet>()},
            {"reflect_request", make_decoder<ReflectRequest>()},
            {"note_request", make_decoder<NoteRequest>()},
            {"note_output", make_decoder<NoteOutput>()},
        };
        for (auto role : all_values<AgentRole>()) {
            const auto& rs = kRoleSchemas[index_of(role)];
            m.emplace(std::string(to_string(role)) + ".input", m.at(rs.input));
            m.emplace(std::string(to_string(role)) + ".output", m.at(rs.output));
        }
        return m;
    }();
    return table;
}

}  // namespace

const std::vector<std::string>& schema_ids() {
    static const std::vector<std::string> ids = [] {
        std::vector<std::string> v;
        for (const auto& [k, _] : decoders()) v.push_back(k);
        std::sort(v.begin(), v.end());
        return v;
    }();
    return ids;
}

std::string input_schema(AgentRole role) { return kRoleSchemas[index_of(role)].input; }
std::string output_schema(AgentRole role) { return kRoleSchemas[index_of(role)].output; }

Validated<Message> validate_message(std::string_view schema_id, const json& payload, const ValidationContext& ctx) {
    const auto& table = decoders();
    auto it = table.find(std::string(schema_id));
    if (it == table.end()) {
        Validated<Message> out;
        out.errors.push_back({Code::unknown_schema, "", "registered schema id", "\"" + std::string(schema_id) + "\""});
        return out;
    }
    return it->second(payload, ctx);
}

}  // namespace vdss
