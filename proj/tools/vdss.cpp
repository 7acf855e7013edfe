// vdss: command-line front end for the decision-support engine.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "vdss/agent_runtime.hpp"
#include "vdss/errors.hpp"
#include "vdss/http_routes.hpp"
#include "vdss/memory_store.hpp"
#include "vdss/regret_study.hpp"
#include "vdss/replay.hpp"
#include "vdss/service.hpp"
#include "vdss/util.hpp"

using namespace vdss;
using nlohmann::json;

namespace {

struct Common {
    std::string config_dir;
    std::string log_path;
    double fault_rate = 0.0;
    int retries = 2;
    std::uint64_t seed = 7;
    std::string backend = "scripted";

    std::filesystem::path config() const { return config_dir.empty() ? default_config_dir() : std::filesystem::path(config_dir); }
    std::string log() const {
        if (!log_path.empty()) return log_path;
        const char* env = std::getenv("VDSS_LOG_PATH");
        return env ? env : "";
    }
    RetryPolicy retry() const {
        RetryPolicy p;
        p.max_retries = retries;
        p.validate();
        return p;
    }
};

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

std::shared_ptr<Backend> make_backend(const Common& c, const AgentConfig& agents, const ModeRegistry& registry) {
    std::shared_ptr<Backend> b;
    if (c.backend == "scripted")
        b = std::make_shared<ScriptedBackend>(agents, registry);
    else if (c.backend == "remote")
        b = std::make_shared<RemoteBackend>(RemoteBackend::Options::from_env(default_prompt_dir()));
    else
        throw ConfigError("unknown backend '" + c.backend + "' (scripted|remote)");
    if (c.fault_rate > 0.0) b = std::make_shared<FaultInjectingBackend>(b, c.fault_rate, mix_seed(c.seed, 99));
    return b;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ventilator decision-support engine (synthetic, non-clinical)"};
    app.require_subcommand(1);
    Common c;
    app.add_option("--config-dir", c.config_dir, "Configuration directory")->envname("VDSS_CONFIG_DIR");
    app.add_option("--log", c.log_path, "Audit log path (default $VDSS_LOG_PATH, else in-memory)");
    app.add_option("--fault-rate", c.fault_rate, "Probability of corrupting an agent output")
        ->check(CLI::Range(0.0, 1.0));
    app.add_option("--retries", c.retries, "Retries per agent call")->check(CLI::Range(0, RetryPolicy::kMaxRetriesCeiling));
    app.add_option("--backend", c.backend, "Agent backend: scripted|remote")->envname("VDSS_BACKEND");

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic non-clinical cohort as JSON lines");
    std::size_t n_enc = 50;
    std::string synth_out = "data.jsonl";
    synth->add_option("--encounters", n_enc, "Number of encounters")->check(CLI::PositiveNumber);
    synth->add_option("--seed", c.seed, "Seed");
    synth->add_option("--out", synth_out, "Output file ('-' for stdout)");

    // replay
    auto* replay = app.add_subcommand("replay", "Next-step prediction metrics over a trajectory file");
    std::string data, replay_out = "metrics.json";
    bool no_img = false, no_pref = false;
    unsigned threads = 1;
    replay->add_option("--data", data, "Trajectory file (.jsonl or .csv)")->required();
    replay->add_flag("--no-img", no_img, "Disable waveform analysis");
    replay->add_flag("--no-pref", no_pref, "Freeze preference scores uniform");
    replay->add_option("--threads", threads, "Encounters replayed in parallel")->check(CLI::PositiveNumber);
    replay->add_option("--seed", c.seed, "Seed for fault injection");
    replay->add_option("--out", replay_out, "Metrics JSON ('-' for stdout)");

    // regret
    auto* regret = app.add_subcommand("regret", "Simulated-clinician regret study");
    int cycles = 100;
    std::string variant = "full", regret_out = "series.csv", profile_path;
    regret->add_option("--cycles", cycles, "Cycles")->check(CLI::PositiveNumber);
    regret->add_option("--seed", c.seed, "Seed");
    regret->add_option("--variant", variant, "full|nopref|noimg|both")
        ->check(CLI::IsMember({"full", "nopref", "noimg", "both"}));
    regret->add_option("--profile", profile_path, "Clinician profile JSON");
    regret->add_option("--out", regret_out, "Series CSV ('-' for stdout)");

    // audit
    auto* audit = app.add_subcommand("audit", "Evidence trail tools");
    audit->require_subcommand(1);
    auto* audit_export = audit->add_subcommand("export", "Export the evidence trail of an encounter");
    std::string encounter, audit_out = "-";
    audit_export->add_option("--encounter", encounter, "Encounter id")->required();
    audit_export->add_option("--out", audit_out, "Output file ('-' for stdout)");
    auto* audit_verify = audit->add_subcommand("verify", "Check every log entry and the preference snapshots");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the review API");
    std::string host = "127.0.0.1", token, serve_data;
    int port = 8080;
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
    serve->add_option("--token", token, "Static bearer token")->envname("VDSS_API_TOKEN");
    serve->add_option("--data", serve_data, "Trajectory file to preload");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto dir = c.config();
        if (*synth) {
            std::ostringstream out;
            write_jsonl(out, synthesize_cohort(n_enc, c.seed));
            write_text(synth_out, out.str());
            return 0;
        }

        const auto registry = ModeRegistry::load(dir);
        const auto agents = AgentConfig::load(dir);
        const auto bandit = BanditConfig::load(dir);
        const auto engine_cfg = EngineConfig::load(dir);

        if (*replay) {
            const auto ds = load_trajectories(data, &registry);
            for (std::size_t i = 0; i < ds.skipped_lines.size(); ++i)
                std::cerr << data << ":" << ds.skipped_lines[i] << ": skipped: " << ds.skip_reasons[i] << "\n";
            ReplayOptions ro;
            ro.engine = engine_cfg;
            ro.no_img = no_img;
            ro.no_pref = no_pref;
            ro.fault_rate = c.fault_rate;
            ro.retry = c.retry();
            ro.seed = c.seed;
            ro.threads = threads;
            BackendFactory factory;
            if (c.backend != "scripted") {
                Common raw = c;
                raw.fault_rate = 0.0;
                factory = [raw, &agents, &registry](std::size_t) { return make_backend(raw, agents, registry); };
            }
            auto m = replay_next_step(ds, registry, agents, bandit, ro, factory).to_json();
            m["skipped_rows"] = ds.skipped_rows;
            m["ablations"] = {{"no_img", no_img}, {"no_pref", no_pref}};
            write_text(replay_out, m.dump(2) + "\n");
            return 0;
        }

        if (*regret) {
            StudyOptions so;
            so.n_cycles = cycles;
            so.seed = c.seed;
            so.variant = *parse_enum<Variant>(variant);
            so.engine = engine_cfg;
            so.fault_rate = c.fault_rate;
            so.retry = c.retry();
            if (!profile_path.empty()) so.profile = ClinicianProfile::from_json(read_json_file(profile_path));
            std::unique_ptr<MemoryStore> store;
            if (!c.log().empty()) store = std::make_unique<MemoryStore>(c.log());
            const auto series = run_regret_study(so, registry, agents, bandit, store.get());
            write_text(regret_out, series.to_csv());
            std::cerr << "mean regret cycles 1-20: " << series.window_mean(1, 20)
                      << ", last 20: " << series.window_mean(cycles - 19, cycles) << "\n";
            return 0;
        }

        if (*audit) {
            if (c.log().empty()) throw ConfigError("audit needs --log or VDSS_LOG_PATH");
            MemoryStore store(c.log());
            if (*audit_export) {
                write_text(audit_out, store.export_trail(encounter).dump(2) + "\n");
                return 0;
            }
            if (*audit_verify) {
                const auto entries = store.entries();
                std::set<std::string> clinicians;
                for (const auto& e : entries)
                    if (!e.clinician_id.empty()) clinicians.insert(e.clinician_id);
                json report{{"entries", entries.size()},
                            {"truncated_bytes", store.load_report().truncated_bytes},
                            {"clinicians", json::object()}};
                bool ok = true;
                for (const auto& d : clinicians) {
                    const auto snap = store.load_preference_state(d, bandit.hyper);
                    const auto replayed = replay_preference_state(store, d, bandit.hyper, bandit.apply_hold_signal);
                    double diff = 0.0;
                    for (std::size_t a = 0; a < kArmCount; ++a)
                        for (std::size_t i = 0; i < kFeatureDim; ++i) {
                            diff = std::max(diff, std::abs(snap.arms[a].b[i] - replayed.arms[a].b[i]));
                            for (std::size_t j = 0; j < kFeatureDim; ++j)
                                diff = std::max(diff, std::abs(snap.arms[a].A(i, j) - replayed.arms[a].A(i, j)));
                        }
                    report["clinicians"][d] = {{"cycle_updates", snap.cycle_updates}, {"max_abs_diff", diff}};
                    ok = ok && diff <= 1e-9;
                }
                report["ok"] = ok;
                std::cout << report.dump(2) << "\n";
                return ok ? 0 : 1;
            }
        }

        if (*serve) {
            MemoryStore store(c.log());
            ValidationContext ctx;
            ctx.registry = &registry;
            ctx.max_setting_updates = agents.max_setting_updates;
            ctx.k_max = engine_cfg.k_max;
            AgentRuntime runtime(make_backend(c, agents, registry), c.retry(), ctx);
            ReviewService service(registry, runtime, bandit, engine_cfg, store);
            if (!serve_data.empty()) service.load_dataset(json{{"path", serve_data}});
            httplib::Server server;
            mount_routes(server, service, token);
            std::cerr << "listening on " << host << ":" << port << "\n";
            if (!server.listen(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
