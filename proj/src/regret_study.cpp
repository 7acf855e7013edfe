#include "vdss/regret_study.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "vdss/errors.hpp"
#include "vdss/util.hpp"
#include "vdss/waveform.hpp"

namespace vdss {

double RegretSeries::window_mean(int first, int last) const {
    double s = 0.0;
    int n = 0;
    for (const auto& p : points) {
        if (p.cycle_index < first || p.cycle_index > last || !p.regret) continue;
        s += *p.regret;
        ++n;
    }
    return n ? s / n : 0.0;
}

std::string RegretSeries::to_csv() const {
    std::string out = "cycle_index,regret,rolling_mean_10\n";
    char buf[64];
    for (const auto& p : points) {
        out += std::to_string(p.cycle_index) + ",";
        if (p.regret) out += std::to_string(*p.regret);
        std::snprintf(buf, sizeof buf, ",%.6f\n", p.rolling_mean_10);
        out += buf;
    }
    return out;
}

std::vector<double> rolling_mean(const std::vector<std::optional<int>>& regrets, std::size_t window) {
    std::vector<double> out;
    std::vector<int> scored;
    for (const auto& r : regrets) {
        if (r) scored.push_back(*r);
        const std::size_t n = std::min(window, scored.size());
        double s = 0.0;
        for (std::size_t i = scored.size() - n; i < scored.size(); ++i) s += scored[i];
        out.push_back(n ? s / static_cast<double>(n) : 0.0);
    }
    return out;
}

namespace {

struct Rng {
    std::mt19937_64 g;
    explicit Rng(std::uint64_t seed) : g(seed) {}
    double u01() { return static_cast<double>(g() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * u01(); }
    int integer(int lo, int hi) { return lo + static_cast<int>(g() % static_cast<std::uint64_t>(hi - lo + 1)); }
};

double r1(double v) { return std::round(v * 10.0) / 10.0; }

}  // namespace

CycleInput study_scenario(std::uint64_t seed, int index, const std::string& clinician_id) {
    Rng rng(mix_seed(seed, 0x5eed0000ULL + static_cast<std::uint64_t>(index)));
    CycleInput in;
    in.clinician_id = clinician_id;
    in.encounter_id = "study-" + std::to_string(seed) + "-" + std::to_string(index);
    in.cycle_id = make_cycle_id(in.encounter_id, 1);

    static const char* modes[] = {"PRVC", "VC", "PCV", "PSV", "SIMV", "CPAP"};
    auto& s = in.settings;
    s.mode = modes[rng.integer(0, 5)];
    s.set(Param::peep, rng.integer(5, 10));
    s.set(Param::fio2, 30 + 5 * rng.integer(0, 6));
    if (s.mode == "PSV" || s.mode == "SIMV") s.set(Param::pressure_support, rng.integer(6, 14));
    if (s.mode == "PCV" || s.mode == "SIMV") s.set(Param::inspiratory_pressure, rng.integer(12, 22));
    if (s.mode == "PRVC" || s.mode == "VC" || s.mode == "PCV" || s.mode == "SIMV")
        s.set(Param::resp_rate_set, rng.integer(12, 20));

    auto& st = in.state;
    st.timestamp = 3600.0 * index;
    st.spo2 = r1(rng.uniform(94.0, 97.0));
    st.heart_rate = r1(rng.uniform(70.0, 100.0));
    st.map = r1(rng.uniform(68.0, 90.0));
    st.ph = std::round(rng.uniform(7.36, 7.44) * 1000.0) / 1000.0;
    st.paco2 = r1(rng.uniform(36.0, 44.0));
    st.pao2 = r1(rng.uniform(75.0, 110.0));
    st.resp_rate_obs = r1(rng.uniform(14.0, 22.0));
    st.weight_kg = r1(rng.uniform(55.0, 95.0));
    st.tidal_volume_obs = std::round(*st.weight_kg * rng.uniform(6.0, 6.9));
    WaveTemplate wave = WaveTemplate::clean;

    const double u = rng.u01();
    if (u < 0.35) {
        st.spo2 = r1(rng.uniform(84.0, 91.5));
    } else if (u < 0.55) {
        st.ph = std::round(rng.uniform(7.22, 7.31) * 1000.0) / 1000.0;
        st.paco2 = r1(rng.uniform(50.0, 65.0));
    } else if (u < 0.70) {
        s.set(Param::fio2, 60 + 5 * rng.integer(0, 4));
        st.spo2 = r1(rng.uniform(96.0, 99.5));
    } else if (u < 0.85) {
        wave = WaveTemplate::sawtooth;
    } else if (u < 0.90) {
        st.ph = std::round(rng.uniform(7.51, 7.56) * 1000.0) / 1000.0;
        st.paco2 = r1(rng.uniform(27.0, 31.5));
    }
    // Remaining draws leave a stable patient.
    st.waveform_ref = make_waveform_ref(wave, 20.0, rng.g());
    return in;
}

RegretSeries run_regret_study(const StudyOptions& options, const ModeRegistry& registry, const AgentConfig& agents,
                              const BanditConfig& bandit, MemoryStore* store) {
    if (options.n_cycles < 1) throw ConfigError("a regret study needs at least one cycle");
    EngineConfig ecfg = options.engine;
    ecfg.enable_waveform = options.variant == Variant::full || options.variant == Variant::nopref;
    ecfg.enable_preference = options.variant == Variant::full || options.variant == Variant::noimg;
    ecfg.seed = options.seed;

    std::shared_ptr<Backend> backend = std::make_shared<ScriptedBackend>(agents, registry);
    if (options.fault_rate > 0.0)
        backend = std::make_shared<FaultInjectingBackend>(backend, options.fault_rate, mix_seed(options.seed, 99));
    ValidationContext ctx;
    ctx.registry = &registry;
    ctx.max_setting_updates = agents.max_setting_updates;
    ctx.k_max = ecfg.k_max;
    AgentRuntime runtime(backend, options.retry, ctx);

    MemoryStore local;
    MemoryStore& memory = store ? *store : local;
    Engine engine(registry, runtime, bandit, ecfg, memory);

    ClinicianProfile profile = options.profile;
    profile.seed = mix_seed(profile.seed, options.seed);
    SimulatedClinician clinician(profile);
    const Reviewer reviewer = [&](const PendingReview& r) { return clinician.review(r.proposal, r.safety); };

    RegretSeries series;
    series.variant = options.variant;
    series.seed = options.seed;
    std::vector<std::optional<int>> regrets;
    for (int i = 1; i <= options.n_cycles; ++i) {
        auto input = study_scenario(options.seed, i, profile.clinician_id);
        RegretPoint pt;
        pt.cycle_index = i;
        pt.cycle_id = input.cycle_id;
        try {
            const auto rec = engine.run_cycle(std::move(input), reviewer);
            pt.status = rec.status;
            pt.regret = cycle_regret(rec, ecfg.k_max);
        } catch (const PersistenceError&) {
            pt.status = CycleStatus::failed;
        }
        regrets.push_back(pt.regret);
        series.points.push_back(pt);
    }
    const auto rm = rolling_mean(regrets);
    for (std::size_t i = 0; i < rm.size(); ++i) series.points[i].rolling_mean_10 = rm[i];
    return series;
}

RegretSeries regret_from_log(const MemoryStore& store, const std::string& clinician_id, int k_max) {
    RegretSeries series;
    std::vector<std::optional<int>> regrets;
    int i = 0;
    for (const auto& rec : store.cycle_records(clinician_id)) {
        RegretPoint pt;
        pt.cycle_index = ++i;
        pt.cycle_id = rec.cycle_id;
        pt.status = rec.status;
        pt.regret = cycle_regret(rec, k_max);
        regrets.push_back(pt.regret);
        series.points.push_back(pt);
    }
    const auto rm = rolling_mean(regrets);
    for (std::size_t j = 0; j < rm.size(); ++j) series.points[j].rolling_mean_10 = rm[j];
    return series;
}

}  // namespace vdss
