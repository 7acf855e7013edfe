#include <doctest.h>

#include <cmath>

#include "vdss/waveform.hpp"

using namespace vdss;

namespace {

WaveformCues cues_for(WaveTemplate t, double snr, std::uint64_t seed = 1, double missing = 0.0) {
    WaveGenParams p;
    p.snr_db = snr;
    p.seed = seed;
    p.missing_ratio = missing;
    return scripted_waveform_cues(generate_waveform(t, p));
}

}  // namespace

TEST_CASE("clean trace has no pattern at any noise level") {
    for (double snr : {double(INFINITY), 20.0, 10.0, 0.0}) {
        auto c = cues_for(WaveTemplate::clean, snr);
        CHECK(c.asynchrony_patterns == std::vector<Pattern>{Pattern::none});
        CHECK(c.quality == CueQuality::good);
    }
}

TEST_CASE("each template is recovered by its detector") {
    for (double snr : {double(INFINITY), 20.0, 10.0}) {
        CAPTURE(snr);
        CHECK(cues_for(WaveTemplate::sawtooth, snr).has(Pattern::sawtooth));
        CHECK_FALSE(cues_for(WaveTemplate::sawtooth, snr).has(Pattern::scooped_plateau));
        CHECK(cues_for(WaveTemplate::scooped, snr).has(Pattern::scooped_plateau));
        CHECK_FALSE(cues_for(WaveTemplate::scooped, snr).has(Pattern::sawtooth));
        auto both = cues_for(WaveTemplate::sawtooth_scooped, snr);
        CHECK(both.has(Pattern::sawtooth));
        CHECK(both.has(Pattern::scooped_plateau));
    }
}

TEST_CASE("uncertainty rises as the signal degrades") {
    const double quiet = cues_for(WaveTemplate::scooped, INFINITY).uncertainty;
    const double noisy = cues_for(WaveTemplate::scooped, 0.0).uncertainty;
    CHECK(quiet < noisy);
    CHECK(noisy <= 1.0);
}

TEST_CASE("missing samples degrade quality") {
    CHECK(cues_for(WaveTemplate::clean, INFINITY, 1, 0.1).quality == CueQuality::degraded);
    auto c = cues_for(WaveTemplate::sawtooth, INFINITY, 1, 0.5);
    CHECK(c.quality == CueQuality::unusable);
    CHECK(c.asynchrony_patterns == std::vector<Pattern>{Pattern::none});
    CHECK(c.uncertainty == 1.0);
}

TEST_CASE("empty segment is unusable") {
    auto c = scripted_waveform_cues(WaveformSegment{});
    CHECK(c.quality == CueQuality::unusable);
}

TEST_CASE("generator is deterministic and references round-trip") {
    WaveGenParams p;
    p.snr_db = 10;
    p.seed = 9;
    auto a = generate_waveform(WaveTemplate::sawtooth, p);
    auto b = generate_waveform(WaveTemplate::sawtooth, p);
    CHECK(a.pressure == b.pressure);
    CHECK(a.flow == b.flow);

    auto ref = make_waveform_ref(WaveTemplate::scooped, 10.0, 9);
    auto seg = segment_from_ref(ref);
    REQUIRE(seg);
    CHECK(scripted_waveform_cues(*seg).has(Pattern::scooped_plateau));
    CHECK_FALSE(segment_from_ref("file:/tmp/x.bin"));
    CHECK_FALSE(segment_from_ref("synth:triangle:10:1"));
}

TEST_CASE("features expose breath count") {
    auto f = analyze_waveform(generate_waveform(WaveTemplate::clean, WaveGenParams{}));
    REQUIRE(f);
    CHECK(f->breaths >= 7);
    CHECK(f->swing == doctest::Approx(15.0).epsilon(0.1));
}
