#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "support.hpp"
#include "vdss/replay.hpp"

using namespace vdss;
using namespace testing;

namespace {

std::string row(const std::string& enc, double t, double peep, double fio2, double spo2 = 90) {
    std::ostringstream s;
    s << R"({"encounter_id":")" << enc << R"(","state":{"timestamp":)" << t << R"(,"spo2":)" << spo2
      << R"(},"settings":{"mode":"PRVC","peep":)" << peep << R"(,"fio2":)" << fio2 << R"(,"resp_rate_set":)" << 12 + peep << "}}";
    return s.str();
}

}  // namespace

TEST_CASE("jsonl rows are grouped, ordered and malformed lines reported") {
    std::stringstream in;
    in << row("a", 20, 8, 40) << "\n"
       << row("a", 10, 6, 30) << "\n"
       << "not json\n"
       << "\n"
       << R"({"encounter_id":"a","state":{"timestamp":30},"settings":{"mode":"PRVC"},"extra":1})" << "\n"
       << row("b", 0, 5, 21) << "\n"
       << row("b", 5, 5, 25) << "\n"
       << row("c", 0, 5, 25) << "\n"
       << R"({"encounter_id":"b","state":{"timestamp":9,"spo2":140},"settings":{"mode":"PRVC"}})" << "\n";
    Fixture f;
    auto ds = parse_jsonl(in, &f.registry);
    REQUIRE(ds.encounters.size() == 2);
    CHECK(ds.encounters[0].id == "a");
    CHECK(ds.encounters[0].records[0].state.timestamp == 10);
    CHECK(ds.skipped_lines == std::vector<std::size_t>{3, 5, 9});
    CHECK(ds.skip_reasons[0] == "invalid JSON");
    CHECK(ds.skip_reasons[1] == "unknown field extra");
    CHECK(ds.dropped_encounters == std::vector<std::string>{"c"});
    CHECK(ds.n_pairs() == 2);
    REQUIRE(ds.find("b"));
    CHECK_FALSE(ds.find("zzz"));
}

TEST_CASE("parameter statistics use the population standard deviation") {
    std::stringstream in;
    in << row("a", 0, 5, 30) << "\n" << row("a", 1, 7, 40) << "\n" << row("b", 0, 9, 50) << "\n" << row("b", 1, 11, 60) << "\n";
    auto ds = parse_jsonl(in);
    const auto& peep = ds.stats[index_of(Param::peep)];
    REQUIRE(peep);
    CHECK(peep->mean == doctest::Approx(8.0));
    CHECK(peep->std == doctest::Approx(std::sqrt(5.0)));
    CHECK(peep->n == 4);
    CHECK_FALSE(ds.stats[index_of(Param::pressure_support)]);
}

TEST_CASE("zero variance is an error") {
    std::stringstream in;
    in << row("a", 0, 5, 30) << "\n" << row("a", 1, 5, 40) << "\n";
    CHECK_THROWS_WITH_AS(parse_jsonl(in), "zero variance for peep", DatasetError);
}

TEST_CASE("an empty dataset is an error") {
    std::stringstream in("garbage\n");
    CHECK_THROWS_AS(parse_jsonl(in), DatasetError);
}

TEST_CASE("csv input") {
    std::stringstream in;
    in << "encounter_id,timestamp,spo2,mode,peep,fio2,resp_rate_set\n"
       << "a,0,90,PRVC,5,30,16\n"
       << "a,1,,PRVC,7,40,18\n"
       << "a,2,91,PRVC,seven,40,16\n"
       << "a,3,91,PRVC,7\n";
    auto ds = parse_csv(in);
    REQUIRE(ds.encounters.size() == 1);
    CHECK(ds.encounters[0].records.size() == 2);
    CHECK_FALSE(ds.encounters[0].records[1].state.spo2);
    CHECK(ds.skipped_lines == std::vector<std::size_t>{4, 5});

    std::stringstream bad("encounter_id,lactate\n");
    CHECK_THROWS_AS(parse_csv(bad), DatasetError);
    std::stringstream noid("timestamp,peep\n");
    CHECK_THROWS_AS(parse_csv(noid), DatasetError);
}

TEST_CASE("metrics on a hand-computed four-pair set") {
    // peep: predictions 6,8,10,12 vs actuals 5,8,11,12; fio2: 40,50 vs 45,55.
    std::array<std::optional<ParamStats>, kParamCount> stats{};
    stats[index_of(Param::peep)] = ParamStats{9.0, 2.0, 4};
    stats[index_of(Param::fio2)] = ParamStats{50.0, 10.0, 2};
    std::vector<MetricSample> s{{Param::peep, 6, 5},  {Param::peep, 8, 8},  {Param::peep, 10, 11},
                                {Param::peep, 12, 12}, {Param::fio2, 40, 45}, {Param::fio2, 50, 55}};
    auto m = compute_metrics(s, stats);
    // z errors: 0.5, 0, -0.5, 0, -0.5, -0.5
    CHECK(m.mse == doctest::Approx((0.25 + 0.25 + 0.25 + 0.25) / 6.0));
    CHECK(m.mae == doctest::Approx(2.0 / 6.0));
    // peep: mean 9, SStot = 16+1+4+9 = 30, SSres = 2 -> 1 - 2/30
    // fio2: mean 50, SStot = 50, SSres = 50 -> 0
    REQUIRE(m.per_param[index_of(Param::peep)]);
    CHECK(*m.per_param[index_of(Param::peep)]->r2 == doctest::Approx(1.0 - 2.0 / 30.0));
    CHECK(*m.per_param[index_of(Param::fio2)]->r2 == doctest::Approx(0.0));
    CHECK(*m.r2 == doctest::Approx((1.0 - 2.0 / 30.0) / 2.0));
}

TEST_CASE("perfect and mean predictors") {
    std::mt19937_64 g(5);
    std::normal_distribution<double> n(10, 3);
    std::array<std::optional<ParamStats>, kParamCount> stats{};
    stats[index_of(Param::peep)] = ParamStats{10, 3, 50};
    std::vector<double> actual(50);
    for (auto& a : actual) a = n(g);
    double mean = 0;
    for (double a : actual) mean += a;
    mean /= 50.0;

    std::vector<MetricSample> perfect, avg;
    for (double a : actual) {
        perfect.push_back({Param::peep, a, a});
        avg.push_back({Param::peep, mean, a});
    }
    auto p = compute_metrics(perfect, stats);
    CHECK(*p.r2 == 1.0);
    CHECK(p.mse == 0.0);
    auto m = compute_metrics(avg, stats);
    CHECK(*m.r2 == 0.0);

    std::vector<MetricSample> flat{{Param::peep, 1, 2}, {Param::peep, 3, 2}};
    auto fm = compute_metrics(flat, stats);
    CHECK_FALSE(fm.r2);
    CHECK_FALSE(fm.per_param[index_of(Param::peep)]->r2);

    stats[index_of(Param::peep)].reset();
    CHECK_THROWS_AS(compute_metrics(flat, stats), DatasetError);
}

TEST_CASE("synthetic cohort is deterministic and loads back") {
    auto a = synthesize_cohort(12, 3);
    auto b = synthesize_cohort(12, 3);
    std::ostringstream sa, sb;
    write_jsonl(sa, a);
    write_jsonl(sb, b);
    CHECK(sa.str() == sb.str());
    std::ostringstream sc;
    write_jsonl(sc, synthesize_cohort(12, 4));
    CHECK(sc.str() != sa.str());

    Fixture f;
    std::istringstream in(sa.str());
    auto ds = parse_jsonl(in, &f.registry);
    CHECK(ds.encounters.size() == 12);
    CHECK(ds.skipped_rows == 0);
    CHECK(ds.skipped_lines.empty());
    for (const auto& e : ds.encounters) {
        CHECK(e.records.size() >= 5);
        CHECK(e.records.size() <= 10);
    }
}

TEST_CASE("replay produces metrics and is identical serially and in parallel") {
    Fixture f;
    std::ostringstream s;
    write_jsonl(s, synthesize_cohort(10, 1));
    std::istringstream in(s.str());
    auto ds = parse_jsonl(in, &f.registry);

    ReplayOptions o;
    o.engine = f.engine_cfg;
    auto serial = replay_next_step(ds, f.registry, f.agents, f.bandit, o);
    o.threads = 4;
    auto parallel = replay_next_step(ds, f.registry, f.agents, f.bandit, o);
    CHECK(serial.to_json() == parallel.to_json());
    CHECK(serial.attempted_pairs == ds.n_pairs());
    CHECK(serial.failed_pairs == 0);
    CHECK(serial.n_pairs == ds.n_pairs());
    REQUIRE(serial.r2);
    CHECK(*serial.r2 > 0.0);
    CHECK(serial.accepted + serial.held == serial.n_pairs);
}

TEST_CASE("fault injection during replay is counted and reproducible") {
    Fixture f;
    std::ostringstream s;
    write_jsonl(s, synthesize_cohort(10, 1));
    std::istringstream in(s.str());
    auto ds = parse_jsonl(in, &f.registry);
    ReplayOptions o;
    o.engine = f.engine_cfg;
    o.fault_rate = 0.5;
    o.retry.max_retries = 0;
    o.seed = 9;
    auto a = replay_next_step(ds, f.registry, f.agents, f.bandit, o);
    auto b = replay_next_step(ds, f.registry, f.agents, f.bandit, o);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.failed_pairs > 0);
    CHECK(a.completion_failure_rate == doctest::Approx(double(a.failed_pairs) / double(a.attempted_pairs)));
    CHECK(a.agent_stats["total"]["malformed_outputs"].get<std::uint64_t>() > 0);
}
