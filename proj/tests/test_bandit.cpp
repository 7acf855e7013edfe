#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "support.hpp"
#include "vdss/contracts_json.hpp"

using namespace vdss;
using namespace testing;

namespace {

using EMat = Eigen::Matrix<double, kFeatureDim, kFeatureDim>;
using EVec = Eigen::Matrix<double, kFeatureDim, 1>;

FeatureVector random_x(std::mt19937_64& g) {
    std::normal_distribution<double> n(0.0, 1.0);
    FeatureVector x{};
    for (auto& v : x) v = n(g);
    x.back() = 1.0;
    return x;
}

PreferenceSignal random_signal(std::mt19937_64& g) {
    PreferenceSignal s;
    for (auto c : all_values<Category>()) {
        const auto r = g() % 4;
        if (r == 0) s.evidenced_by_accept.push_back(c);
        if (r == 1) s.evidenced_only_by_reject.push_back(c);
    }
    return s;
}

}  // namespace

TEST_CASE("fresh state is lambda times identity with uniform scores") {
    BanditHyperparams h{2.0, 1.0, 0.5};
    auto s = PreferenceState::fresh("d", h);
    for (const auto& arm : s.arms)
        for (std::size_t i = 0; i < kFeatureDim; ++i)
            for (std::size_t j = 0; j < kFeatureDim; ++j) CHECK(arm.A(i, j) == (i == j ? 2.0 : 0.0));
    FeatureVector x{};
    x.fill(0.5);
    auto sc = preference_scores(s, x);
    for (std::size_t a = 1; a < kArmCount; ++a) CHECK(sc.score[a] == sc.score[0]);
    CHECK(sc == uniform_scores(h, x));
    // x^T (lambda I)^-1 x = 12 * 0.25 / 2
    CHECK(sc.uncertainty[0] == doctest::Approx(std::sqrt(1.5)));
}

TEST_CASE("incremental updates match a batch ridge solve") {
    std::mt19937_64 g(42);
    const BanditHyperparams h{1.0, 1.0, 0.5};
    for (int seq = 0; seq < 50; ++seq) {
        auto s = PreferenceState::fresh("d", h);
        std::array<EMat, kArmCount> A;
        std::array<EVec, kArmCount> b;
        for (auto& m : A) m = EMat::Identity() * h.lambda;
        for (auto& v : b) v.setZero();
        const int steps = 1 + static_cast<int>(g() % 25);
        for (int t = 0; t < steps; ++t) {
            auto x = random_x(g);
            auto sig = random_signal(g);
            s = apply_signal(s, x, sig);
            Eigen::Map<const EVec> ex(x.data());
            for (auto c : sig.evidenced_by_accept) {
                A[index_of(c)] += ex * ex.transpose();
                b[index_of(c)] += ex;
            }
            for (auto c : sig.evidenced_only_by_reject) {
                A[index_of(c)] += ex * ex.transpose();
                b[index_of(c)] -= h.beta * ex;
            }
        }
        auto x = random_x(g);
        auto sc = preference_scores(s, x);
        Eigen::Map<const EVec> ex(x.data());
        for (std::size_t a = 0; a < kArmCount; ++a) {
            EVec theta = A[a].ldlt().solve(b[a]);
            const double mean = ex.dot(theta);
            const double unc = std::sqrt(ex.dot(A[a].ldlt().solve(ex)));
            CHECK(sc.mean[a] == doctest::Approx(mean).epsilon(1e-9));
            CHECK(sc.uncertainty[a] == doctest::Approx(unc).epsilon(1e-9));
            CHECK(sc.score[a] == doctest::Approx(mean + h.alpha * unc).epsilon(1e-9));
        }
    }
}

TEST_CASE("counters") {
    auto s = PreferenceState::fresh("d", {});
    FeatureVector x{};
    x.back() = 1;
    PreferenceSignal sig;
    sig.evidenced_by_accept = {Category::stay_in_mode, Category::prio_oxygenation};
    sig.evidenced_only_by_reject = {Category::conservative_small_step};
    s = apply_signal(s, x, sig);
    CHECK(s.update_count == 3);
    CHECK(s.cycle_updates == 1);
    CHECK(s.arm(Category::stay_in_mode).pulls == 1);
    CHECK(s.arm(Category::conservative_small_step).b.back() == doctest::Approx(-0.5));
    CHECK(s.arm(Category::mode_level_change).pulls == 0);
}

TEST_CASE("bandit_update preconditions") {
    auto s = PreferenceState::fresh("d", {});
    FeatureVector x{};
    x.back() = 1;
    PreferenceSignal sig;
    Proposal p;
    std::vector<TraceEntry> trace{{p, reject(ReasonCategory::other), {}}};
    CHECK_THROWS_AS(bandit_update(s, x, prvc(), trace, sig), ContractError);
    trace.push_back({p, accept(), {}});
    CHECK_THROWS_AS(bandit_update(s, x, std::nullopt, trace, sig), ContractError);
    CHECK_NOTHROW(bandit_update(s, x, prvc(), trace, sig));
    sig.evidenced_by_accept = {Category::stay_in_mode};
    sig.evidenced_only_by_reject = {Category::stay_in_mode};
    CHECK_THROWS_AS(bandit_update(s, x, prvc(), trace, sig), ContractError);
}

TEST_CASE("scores reject malformed contexts") {
    auto s = PreferenceState::fresh("d", {});
    std::vector<double> short_x(5, 1.0);
    CHECK_THROWS_AS(preference_scores(s, short_x), ContractError);
    FeatureVector x{};
    x[0] = std::nan("");
    CHECK_THROWS_AS(preference_scores(s, x), ContractError);
}

TEST_CASE("ranking ties prefer fewer updates then input order") {
    CategoryScores sc{};
    Proposal a, b, c;
    a.category_tags = {Category::stay_in_mode};
    a.setting_updates = {{Param::fio2, 1}, {Param::peep, 1}};
    b.category_tags = {Category::stay_in_mode};
    b.setting_updates = {{Param::fio2, 2}};
    c.category_tags = {Category::stay_in_mode};
    c.setting_updates = {{Param::peep, 3}};
    auto r = rank_candidates({a, b, c}, sc);
    CHECK(r[0] == b);
    CHECK(r[1] == c);
    CHECK(r[2] == a);
    sc.score[index_of(Category::target_driven_assertive)] = 1.0;
    a.category_tags = {Category::target_driven_assertive};
    r = rank_candidates({b, a}, sc);
    CHECK(r[0] == a);
}

TEST_CASE("featurize") {
    FeaturizerConfig cfg;
    auto x = featurize(cfg, hypoxemic_state(86), prvc(8, 45), Phase::acute, true, false);
    CHECK(x[0] == doctest::Approx((86 - 94) / 4.0));
    CHECK(x[1] == doctest::Approx(0.0));
    CHECK(x[6] == 1.0);  // acute
    CHECK(x[7] == 0.0);
    CHECK(x[9] == 1.0);   // asynchrony
    CHECK(x[10] == 0.0);  // evidence insufficient
    CHECK(x[11] == 1.0);
    PatientState empty;
    auto y = featurize(cfg, empty, VentilatorSettings{"CPAP", {}}, Phase::weaning, false, true);
    CHECK(y[0] == 0.0);
    CHECK(y[4] == 0.0);
}

TEST_CASE("snapshot encoding round-trips exactly") {
    std::mt19937_64 g(3);
    auto s = PreferenceState::fresh("dr", {});
    for (int i = 0; i < 5; ++i) s = apply_signal(s, random_x(g), random_signal(g));
    auto back = decode_preference_state(json::parse(encode_preference_state(s).dump()));
    CHECK(back == s);
    auto bad = encode_preference_state(s);
    bad["arms"][0]["A"][1] = 99.0;  // asymmetric
    CHECK_THROWS_AS(decode_preference_state(bad), ContractError);
}
