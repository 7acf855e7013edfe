#include "vdss/replay.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "vdss/contracts_json.hpp"
#include "vdss/errors.hpp"
#include "vdss/memory_store.hpp"
#include "vdss/util.hpp"
#include "vdss/waveform.hpp"

namespace vdss {

using nlohmann::json;

const Encounter* TrajectoryDataset::find(const std::string& encounter_id) const {
    for (const auto& e : encounters)
        if (e.id == encounter_id) return &e;
    return nullptr;
}

std::size_t TrajectoryDataset::n_pairs() const {
    std::size_t n = 0;
    for (const auto& e : encounters) n += e.records.size() > 1 ? e.records.size() - 1 : 0;
    return n;
}

std::array<std::optional<ParamStats>, kParamCount> compute_param_stats(const std::vector<Encounter>& encounters) {
    std::array<std::optional<ParamStats>, kParamCount> out;
    for (auto p : all_values<Param>()) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& e : encounters)
            for (const auto& r : e.records)
                if (auto v = r.settings.get(p)) {
                    sum += *v;
                    ++n;
                }
        if (n == 0) continue;
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& e : encounters)
            for (const auto& r : e.records)
                if (auto v = r.settings.get(p)) ss += (*v - mean) * (*v - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        if (!(sd > 0.0)) throw DatasetError("zero variance for " + std::string(to_string(p)));
        out[index_of(p)] = ParamStats{mean, sd, n};
    }
    return out;
}

TrajectoryDataset build_dataset(std::vector<std::pair<std::string, TrajectoryRecord>> rows,
                                std::vector<std::size_t> skipped_lines, std::vector<std::string> skip_reasons) {
    TrajectoryDataset ds;
    std::map<std::string, std::size_t> index;
    std::vector<Encounter> grouped;
    for (auto& [id, rec] : rows) {
        auto [it, inserted] = index.emplace(id, grouped.size());
        if (inserted) grouped.push_back(Encounter{id, {}});
        grouped[it->second].records.push_back(std::move(rec));
    }
    for (auto& e : grouped) {
        std::stable_sort(e.records.begin(), e.records.end(), [](const auto& a, const auto& b) {
            return a.state.timestamp < b.state.timestamp;
        });
        if (e.records.size() < 2)
            ds.dropped_encounters.push_back(e.id);
        else
            ds.encounters.push_back(std::move(e));
    }
    if (ds.encounters.empty()) throw DatasetError("dataset has no encounter with at least two valid records");
    ds.stats = compute_param_stats(ds.encounters);
    ds.skipped_rows = skipped_lines.size();
    ds.skipped_lines = std::move(skipped_lines);
    ds.skip_reasons = std::move(skip_reasons);
    return ds;
}

namespace {

std::string join_errors(const std::vector<FieldError>& errors) {
    std::string s;
    for (const auto& e : errors) {
        if (!s.empty()) s += "; ";
        s += e.to_string();
    }
    return s;
}

std::optional<std::string> read_record(const json& j, const ValidationContext& ctx, std::string& id,
                                       TrajectoryRecord& rec) {
    if (!j.is_object()) return "row is not an object";
    for (const auto& [k, _] : j.items())
        if (k != "encounter_id" && k != "state" && k != "settings") return "unknown field " + k;
    if (!j.contains("encounter_id") || !j["encounter_id"].is_string() || j["encounter_id"].get<std::string>().empty())
        return "missing encounter_id";
    if (!j.contains("state")) return "missing state";
    if (!j.contains("settings")) return "missing settings";
    auto st = decode<PatientState>(j["state"], ctx);
    if (!st.ok()) return "state: " + join_errors(st.errors);
    auto se = decode<VentilatorSettings>(j["settings"], ctx);
    if (!se.ok()) return "settings: " + join_errors(se.errors);
    id = j["encounter_id"].get<std::string>();
    rec.state = std::move(*st.value);
    rec.settings = std::move(*se.value);
    return std::nullopt;
}

ValidationContext ctx_for(const ModeRegistry* registry) {
    ValidationContext ctx;
    ctx.registry = registry;
    return ctx;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    for (auto& c : out) {
        while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
        while (!c.empty() && c.front() == ' ') c.erase(c.begin());
    }
    return out;
}

}  // namespace

TrajectoryDataset parse_jsonl(std::istream& in, const ModeRegistry* registry) {
    const auto ctx = ctx_for(registry);
    std::vector<std::pair<std::string, TrajectoryRecord>> rows;
    std::vector<std::size_t> skipped;
    std::vector<std::string> reasons;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        std::string id;
        TrajectoryRecord rec;
        auto err = j.is_discarded() ? std::optional<std::string>("invalid JSON") : read_record(j, ctx, id, rec);
        if (err) {
            skipped.push_back(lineno);
            reasons.push_back(*err);
            continue;
        }
        rows.emplace_back(std::move(id), std::move(rec));
    }
    return build_dataset(std::move(rows), std::move(skipped), std::move(reasons));
}

TrajectoryDataset parse_csv(std::istream& in, const ModeRegistry* registry) {
    const auto ctx = ctx_for(registry);
    std::string line;
    if (!std::getline(in, line)) throw DatasetError("empty CSV file");
    const auto header = split_csv(line);
    std::set<std::string> state_keys{"timestamp", "waveform_ref"};
    for (auto f : PatientState::numeric_fields()) state_keys.emplace(f);
    std::set<std::string> setting_keys{"mode"};
    for (auto p : all_values<Param>()) setting_keys.emplace(to_string(p));
    bool has_id = false;
    for (const auto& h : header) {
        if (h == "encounter_id") {
            has_id = true;
        } else if (!state_keys.count(h) && !setting_keys.count(h)) {
            throw DatasetError("unknown CSV column '" + h + "'");
        }
    }
    if (!has_id) throw DatasetError("CSV header lacks encounter_id");

    std::vector<std::pair<std::string, TrajectoryRecord>> rows;
    std::vector<std::size_t> skipped;
    std::vector<std::string> reasons;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            skipped.push_back(lineno);
            reasons.push_back("expected " + std::to_string(header.size()) + " cells, found " +
                              std::to_string(cells.size()));
            continue;
        }
        json row{{"state", json::object()}, {"settings", json::object()}};
        std::optional<std::string> err;
        for (std::size_t i = 0; i < header.size() && !err; ++i) {
            const auto& h = header[i];
            const auto& c = cells[i];
            if (c.empty()) continue;
            if (h == "encounter_id") {
                row["encounter_id"] = c;
            } else if (h == "waveform_ref") {
                row["state"][h] = c;
            } else if (h == "mode") {
                row["settings"][h] = c;
            } else {
                char* end = nullptr;
                const double v = std::strtod(c.c_str(), &end);
                if (end != c.c_str() + c.size() || !std::isfinite(v)) {
                    err = "column " + h + ": not a number '" + c + "'";
                    break;
                }
                row[state_keys.count(h) ? "state" : "settings"][h] = v;
            }
        }
        std::string id;
        TrajectoryRecord rec;
        if (!err) err = read_record(row, ctx, id, rec);
        if (err) {
            skipped.push_back(lineno);
            reasons.push_back(*err);
            continue;
        }
        rows.emplace_back(std::move(id), std::move(rec));
    }
    return build_dataset(std::move(rows), std::move(skipped), std::move(reasons));
}

TrajectoryDataset load_trajectories(const std::filesystem::path& path, const ModeRegistry* registry) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset " + path.string());
    if (path.extension() == ".csv") return parse_csv(in, registry);
    return parse_jsonl(in, registry);
}

void write_jsonl(std::ostream& out, const std::vector<Encounter>& encounters) {
    for (const auto& e : encounters)
        for (const auto& r : e.records)
            out << json{{"encounter_id", e.id}, {"state", encode(r.state)}, {"settings", encode(r.settings)}}.dump()
                << '\n';
}

// ---------------------------------------------------------------------------

namespace {

struct Rng {
    std::mt19937_64 g;
    explicit Rng(std::uint64_t seed) : g(seed) {}
    double u01() { return static_cast<double>(g() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * u01(); }
    int integer(int lo, int hi) { return lo + static_cast<int>(g() % static_cast<std::uint64_t>(hi - lo + 1)); }
    double normal() {
        // Box-Muller keeps the stream identical across standard libraries.
        const double u1 = std::max(u01(), 1e-300);
        const double u2 = u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    bool chance(double p) { return u01() < p; }
};

double round_to(double v, double step) { return std::round(v / step) * step; }

const std::array<const char*, 5> kCohortModes{"PRVC", "VC", "PCV", "PSV", "SIMV"};

bool cohort_applies(const std::string& mode, Param p) {
    switch (p) {
        case Param::peep:
        case Param::fio2:
            return true;
        case Param::pressure_support:
            return mode == "PSV" || mode == "SIMV";
        case Param::inspiratory_pressure:
            return mode == "PCV" || mode == "SIMV";
        case Param::resp_rate_set:
            return mode != "PSV";
    }
    return false;
}

void nudge(VentilatorSettings& s, Param p, double delta, double lo, double hi) {
    if (!s.has(p)) return;
    s.set(p, std::clamp(*s.get(p) + delta, lo, hi));
}

}  // namespace

std::vector<Encounter> synthesize_cohort(std::size_t n_encounters, std::uint64_t seed) {
    std::vector<Encounter> out;
    out.reserve(n_encounters);
    for (std::size_t e = 0; e < n_encounters; ++e) {
        Rng rng(mix_seed(seed, e));
        Encounter enc;
        enc.id = "enc-" + std::to_string(e + 1);

        VentilatorSettings s;
        s.mode = kCohortModes[static_cast<std::size_t>(rng.integer(0, 4))];
        s.set(Param::peep, rng.integer(5, 12));
        s.set(Param::fio2, 30 + 5 * rng.integer(0, 8));
        if (cohort_applies(s.mode, Param::pressure_support)) s.set(Param::pressure_support, rng.integer(6, 14));
        if (cohort_applies(s.mode, Param::inspiratory_pressure)) s.set(Param::inspiratory_pressure, rng.integer(12, 24));
        if (cohort_applies(s.mode, Param::resp_rate_set)) s.set(Param::resp_rate_set, rng.integer(12, 22));

        double shunt = rng.uniform(2.0, 14.0);
        const double resolve = rng.uniform(0.6, 0.9);
        const double dead_space = rng.uniform(-6.0, 10.0);
        const double weight = round_to(rng.uniform(50.0, 100.0), 0.5);
        const int n_records = rng.integer(5, 10);
        const WaveTemplate wave = rng.chance(0.25) ? WaveTemplate::sawtooth
                                  : rng.chance(0.1) ? WaveTemplate::scooped
                                                    : WaveTemplate::clean;

        for (int t = 0; t < n_records; ++t) {
            const double fio2 = *s.get(Param::fio2);
            const double peep = *s.get(Param::peep);
            const double rr_set = s.get(Param::resp_rate_set).value_or(16.0);
            PatientState st;
            st.timestamp = 3600.0 * t;
            st.spo2 = round_to(std::clamp(86.0 + 0.14 * (fio2 - 21.0) + 0.5 * (peep - 5.0) - shunt + rng.normal(), 70.0, 100.0), 0.1);
            const double paco2 = std::clamp(40.0 + dead_space - 1.2 * (rr_set - 16.0) + 2.0 * rng.normal(), 20.0, 90.0);
            st.paco2 = round_to(paco2, 0.1);
            st.ph = round_to(std::clamp(7.40 - 0.008 * (paco2 - 40.0) + 0.01 * rng.normal(), 6.9, 7.7), 0.001);
            st.pao2 = round_to(std::clamp(40.0 + 2.2 * (*st.spo2 - 80.0) + 4.0 * rng.normal(), 30.0, 400.0), 0.1);
            st.heart_rate = round_to(85.0 + 0.4 * shunt + 5.0 * rng.normal(), 1.0);
            st.map = round_to(75.0 - 0.3 * shunt + 6.0 * rng.normal(), 1.0);
            st.resp_rate_obs = round_to(std::max(4.0, rr_set + 2.0 + 0.3 * shunt + 2.0 * rng.normal()), 1.0);
            st.weight_kg = weight;
            st.tidal_volume_obs = round_to(weight * rng.uniform(6.0, 8.5), 1.0);
            st.waveform_ref = make_waveform_ref(wave, 20.0, mix_seed(seed, e * 1000 + static_cast<std::uint64_t>(t)));
            enc.records.push_back({st, s});

            // Recorded clinician: rule-following with noise.
            VentilatorSettings next = s;
            if (*st.spo2 < 92.0) {
                if (rng.chance(0.6))
                    nudge(next, Param::fio2, 10, 21, 100);
                else
                    nudge(next, Param::peep, 2, 0, 24);
            } else if (*st.spo2 >= 96.0 && fio2 > 40.0) {
                nudge(next, Param::fio2, -10, 21, 100);
            } else if (rng.chance(0.3)) {
                nudge(next, Param::fio2, rng.chance(0.5) ? 5 : -5, 21, 100);
            }
            if (*st.ph < 7.32) {
                nudge(next, Param::resp_rate_set, rng.integer(2, 4), 4, 30);
                nudge(next, Param::pressure_support, 2, 0, 30);
            } else if (*st.ph > 7.47) {
                nudge(next, Param::resp_rate_set, -2, 4, 30);
            }
            if (rng.chance(0.25)) nudge(next, Param::inspiratory_pressure, rng.chance(0.5) ? 2 : -2, 5, 40);
            if (rng.chance(0.25)) nudge(next, Param::pressure_support, rng.chance(0.5) ? 2 : -2, 0, 30);
            if (next.mode != "PSV" && shunt < 4.0 && rng.chance(0.15)) {
                next.mode = "PSV";
                next.clear(Param::inspiratory_pressure);
                next.clear(Param::resp_rate_set);
                if (!next.has(Param::pressure_support)) next.set(Param::pressure_support, 10);
            }
            s = next;
            shunt *= resolve;
        }
        out.push_back(std::move(enc));
    }
    return out;
}

// ---------------------------------------------------------------------------

ReplayMetrics compute_metrics(const std::vector<MetricSample>& samples,
                              const std::array<std::optional<ParamStats>, kParamCount>& stats) {
    ReplayMetrics m;
    m.n_samples = samples.size();
    double se = 0.0, ae = 0.0;
    std::array<std::vector<const MetricSample*>, kParamCount> by_param;
    for (const auto& s : samples) {
        const auto& st = stats[index_of(s.param)];
        if (!st) throw DatasetError("no normalization statistics for " + std::string(to_string(s.param)));
        const double d = (s.predicted - s.actual) / st->std;
        se += d * d;
        ae += std::abs(d);
        by_param[index_of(s.param)].push_back(&s);
    }
    if (!samples.empty()) {
        m.mse = se / static_cast<double>(samples.size());
        m.mae = ae / static_cast<double>(samples.size());
    }
    double r2_sum = 0.0;
    std::size_t r2_n = 0;
    for (auto p : all_values<Param>()) {
        const auto& xs = by_param[index_of(p)];
        if (xs.empty()) continue;
        const double sd = stats[index_of(p)]->std;
        ParamMetrics pm;
        pm.n = xs.size();
        double mean = 0.0;
        for (const auto* s : xs) mean += s->actual;
        mean /= static_cast<double>(xs.size());
        double ss_res = 0.0, ss_tot = 0.0, pse = 0.0, pae = 0.0;
        for (const auto* s : xs) {
            const double d = (s->predicted - s->actual) / sd;
            pse += d * d;
            pae += std::abs(d);
            ss_res += (s->actual - s->predicted) * (s->actual - s->predicted);
            ss_tot += (s->actual - mean) * (s->actual - mean);
        }
        pm.mse = pse / static_cast<double>(xs.size());
        pm.mae = pae / static_cast<double>(xs.size());
        if (ss_tot > 0.0) {
            pm.r2 = 1.0 - ss_res / ss_tot;
            r2_sum += *pm.r2;
            ++r2_n;
        }
        m.per_param[index_of(p)] = pm;
    }
    if (r2_n > 0) m.r2 = r2_sum / static_cast<double>(r2_n);
    return m;
}

json ReplayMetrics::to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json params = json::object();
    for (auto p : all_values<Param>()) {
        const auto& pm = per_param[index_of(p)];
        if (!pm) continue;
        params[std::string(to_string(p))] = json{{"mse", pm->mse}, {"mae", pm->mae}, {"r2", opt(pm->r2)}, {"n", pm->n}};
    }
    return json{{"mse", mse},
                {"mae", mae},
                {"r2", opt(r2)},
                {"n_samples", n_samples},
                {"n_pairs", n_pairs},
                {"attempted_pairs", attempted_pairs},
                {"failed_pairs", failed_pairs},
                {"completion_failure_rate", completion_failure_rate},
                {"mode_matches", mode_matches},
                {"mode_accuracy", mode_accuracy},
                {"accepted", accepted},
                {"held", held},
                {"per_parameter", params},
                {"agent_stats", agent_stats}};
}

namespace {

struct EncounterResult {
    std::vector<MetricSample> samples;
    std::size_t attempted = 0, failed = 0, evaluated = 0, mode_matches = 0, accepted = 0, held = 0;
    std::array<RoleStats, kRoleCount> roles{};
};

EncounterResult replay_encounter(const Encounter& enc, std::size_t index, const ModeRegistry& registry,
                                 const AgentConfig& agents, const BanditConfig& bandit, const ReplayOptions& opt,
                                 const BackendFactory& factory) {
    EngineConfig ecfg = opt.engine;
    ecfg.enable_waveform = !opt.no_img;
    ecfg.enable_preference = !opt.no_pref;

    std::shared_ptr<Backend> backend =
        factory ? factory(index) : std::make_shared<ScriptedBackend>(agents, registry);
    if (opt.fault_rate > 0.0)
        backend = std::make_shared<FaultInjectingBackend>(backend, opt.fault_rate, mix_seed(opt.seed, index));
    ValidationContext ctx;
    ctx.registry = &registry;
    ctx.max_setting_updates = agents.max_setting_updates;
    ctx.k_max = ecfg.k_max;
    AgentRuntime runtime(backend, opt.retry, ctx);
    MemoryStore store;
    Engine engine(registry, runtime, bandit, ecfg, store);
    const Reviewer accept_first = [](const PendingReview&) { return ClinicianFeedback{Decision::accept, {}, {}, ""}; };

    EncounterResult res;
    for (std::size_t i = 0; i + 1 < enc.records.size(); ++i) {
        const auto& cur = enc.records[i];
        const auto& nxt = enc.records[i + 1];
        ++res.attempted;
        CycleInput input{enc.id, opt.clinician_id, make_cycle_id(enc.id, i + 1), cur.state, cur.settings, {}};
        CycleRecord rec;
        try {
            rec = engine.run_cycle(std::move(input), accept_first);
        } catch (const Error&) {
            ++res.failed;
            continue;
        }
        if (rec.status == CycleStatus::failed || rec.status == CycleStatus::exhausted) {
            ++res.failed;
            continue;
        }
        ++res.evaluated;
        const VentilatorSettings& predicted =
            rec.status == CycleStatus::accepted ? *rec.accepted_settings : rec.context.current_settings;
        if (rec.status == CycleStatus::accepted)
            ++res.accepted;
        else
            ++res.held;
        if (predicted.mode == nxt.settings.mode) ++res.mode_matches;

        const ModeSpec* cur_spec = registry.find(cur.settings.mode);
        const ModeSpec* nxt_spec = registry.find(nxt.settings.mode);
        for (auto p : all_values<Param>()) {
            if (cur_spec && !cur_spec->applies(p)) continue;
            if (nxt_spec && !nxt_spec->applies(p)) continue;
            const auto actual = nxt.settings.get(p);
            if (!actual) continue;
            auto pred = predicted.get(p);
            if (!pred) pred = rec.context.current_settings.get(p);
            if (!pred) continue;
            res.samples.push_back({p, *pred, *actual});
        }
    }
    for (auto r : all_values<AgentRole>()) res.roles[index_of(r)] = runtime.stats().role(r);
    return res;
}

}  // namespace

ReplayMetrics replay_next_step(const TrajectoryDataset& dataset, const ModeRegistry& registry,
                               const AgentConfig& agents, const BanditConfig& bandit, const ReplayOptions& options,
                               const BackendFactory& backend_factory) {
    options.retry.validate();
    const std::size_t n = dataset.encounters.size();
    std::vector<EncounterResult> results(n);
    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n)));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i)
            results[i] = replay_encounter(dataset.encounters[i], i, registry, agents, bandit, options, backend_factory);
    } else {
        std::atomic<std::size_t> next{0};
        std::mutex err_mu;
        std::exception_ptr err;
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        results[i] = replay_encounter(dataset.encounters[i], i, registry, agents, bandit, options,
                                                      backend_factory);
                    } catch (...) {
                        std::lock_guard lock(err_mu);
                        if (!err) err = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (err) std::rethrow_exception(err);
    }

    // Encounter order is fixed, so serial and parallel runs accumulate identically.
    std::vector<MetricSample> samples;
    std::array<RoleStats, kRoleCount> roles{};
    ReplayMetrics totals;
    for (const auto& r : results) {
        samples.insert(samples.end(), r.samples.begin(), r.samples.end());
        totals.attempted_pairs += r.attempted;
        totals.failed_pairs += r.failed;
        totals.n_pairs += r.evaluated;
        totals.mode_matches += r.mode_matches;
        totals.accepted += r.accepted;
        totals.held += r.held;
        for (std::size_t k = 0; k < kRoleCount; ++k) {
            roles[k].calls += r.roles[k].calls;
            roles[k].attempts += r.roles[k].attempts;
            roles[k].malformed_outputs += r.roles[k].malformed_outputs;
            roles[k].failures_after_retry += r.roles[k].failures_after_retry;
        }
    }
    ReplayMetrics m = compute_metrics(samples, dataset.stats);
    m.attempted_pairs = totals.attempted_pairs;
    m.failed_pairs = totals.failed_pairs;
    m.n_pairs = totals.n_pairs;
    m.mode_matches = totals.mode_matches;
    m.accepted = totals.accepted;
    m.held = totals.held;
    if (m.attempted_pairs > 0)
        m.completion_failure_rate = static_cast<double>(m.failed_pairs) / static_cast<double>(m.attempted_pairs);
    if (m.n_pairs > 0) m.mode_accuracy = static_cast<double>(m.mode_matches) / static_cast<double>(m.n_pairs);

    auto row = [](const RoleStats& s) {
        return json{{"calls", s.calls},
                    {"attempts", s.attempts},
                    {"malformed_outputs", s.malformed_outputs},
                    {"failures_after_retry", s.failures_after_retry}};
    };
    RoleStats total;
    json per_role = json::object();
    for (auto r : all_values<AgentRole>()) {
        const auto& s = roles[index_of(r)];
        per_role[std::string(to_string(r))] = row(s);
        total.calls += s.calls;
        total.attempts += s.attempts;
        total.malformed_outputs += s.malformed_outputs;
        total.failures_after_retry += s.failures_after_retry;
    }
    m.agent_stats = json{{"total", row(total)}, {"roles", per_role}};
    return m;
}

}  // namespace vdss
