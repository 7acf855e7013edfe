#include <doctest.h>

#include "support.hpp"
#include "vdss/safety.hpp"

using namespace vdss;
using namespace testing;

namespace {

Proposal update(std::map<Param, double> u, std::optional<ModeId> mode = std::nullopt) {
    Proposal p;
    p.cycle_id = "c";
    p.setting_updates = std::move(u);
    p.mode_change = std::move(mode);
    p.category_tags = {Category::stay_in_mode};
    return p;
}

bool has_check(const SafetyReport& r, const std::string& id, std::optional<Param> p = std::nullopt) {
    for (const auto& v : r.violations)
        if (v.check_id == id && (!p || v.parameter == p)) return true;
    return false;
}

}  // namespace

TEST_CASE("bounds") {
    Fixture f;
    CHECK(check_bounds(update({{Param::fio2, 100}}), prvc(8, 90), f.registry).pass());
    auto r = check_bounds(update({{Param::peep, 26}}), prvc(24), f.registry);
    REQUIRE(has_check(r, "bounds", Param::peep));
    CHECK(r.violations[0].limit == doctest::Approx(24));
    CHECK(r.violations[0].proposed_value == doctest::Approx(26));
    CHECK(has_check(check_bounds(update({{Param::fio2, 19}}), prvc(8, 21), f.registry), "bounds", Param::fio2));
}

TEST_CASE("values carried into a narrower mode are bounds-checked") {
    Fixture f;
    // CPAP caps PEEP at 15; a carried PEEP of 18 is out of range even though untouched.
    auto r = check_bounds(update({}, "CPAP"), prvc(18), f.registry);
    CHECK(has_check(r, "bounds", Param::peep));
    CHECK(check_bounds(update({}, "CPAP"), prvc(12), f.registry).pass());
}

TEST_CASE("mode compatibility") {
    Fixture f;
    CHECK(has_check(check_mode_compatibility(update({{Param::pressure_support, 8}}), f.registry, "PRVC"),
                    "inapplicable_parameter", Param::pressure_support));
    CHECK(check_mode_compatibility(update({{Param::pressure_support, 8}}, "PSV"), f.registry, "PRVC").pass());
    CHECK(has_check(check_mode_compatibility(update({}, "HFOV"), f.registry, "PRVC"), "unknown_mode"));
}

TEST_CASE("delta limits") {
    Fixture f;
    CHECK(check_delta_limits(update({{Param::fio2, 60}}), prvc(8, 40), f.registry).pass());
    CHECK(has_check(check_delta_limits(update({{Param::fio2, 61}}), prvc(8, 40), f.registry), "delta_limit", Param::fio2));
    CHECK(has_check(check_delta_limits(update({{Param::peep, 3}}), prvc(8), f.registry), "delta_limit", Param::peep));
}

TEST_CASE("check_all is the conjunction") {
    Fixture f;
    auto r = check_all(update({{Param::peep, 30}, {Param::pressure_support, 5}}), prvc(8), f.registry);
    CHECK(has_check(r, "bounds", Param::peep));
    CHECK(has_check(r, "delta_limit", Param::peep));
    CHECK(has_check(r, "inapplicable_parameter", Param::pressure_support));
    CHECK(check_all(update({{Param::peep, 10}}), prvc(8), f.registry).pass());
}
