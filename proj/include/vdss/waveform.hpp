#pragma once

// Synthetic pressure/flow generator and the deterministic cue extractor used
// by the scripted waveform analyzer. The generator templates and detectors are
// built as inverse pairs: each template carries exactly the pattern its
// detector looks for.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "vdss/contracts.hpp"

namespace vdss {

enum class WaveTemplate { clean, sawtooth, scooped, sawtooth_scooped };
VDSS_ENUM_NAMES(WaveTemplate, "clean", "sawtooth", "scooped", "sawtooth_scooped");

struct WaveGenParams {
    double sample_rate_hz = 50.0;
    double breath_period_s = 3.0;
    double insp_time_s = 1.0;
    int breaths = 10;
    double peep = 5.0;
    double plateau = 20.0;
    double peak_flow = 60.0;      // L/min, inspiratory
    double scoop_fraction = 0.2;  // scoop depth relative to the pressure swing
    double sawtooth_fraction = 0.12;
    double sawtooth_hz = 6.0;
    /// Noise on the template's feature channel, relative to the feature
    /// amplitude. Infinity means noiseless.
    double snr_db = std::numeric_limits<double>::infinity();
    double missing_ratio = 0.0;
    std::uint64_t seed = 1;
};

WaveformSegment generate_waveform(WaveTemplate shape, const WaveGenParams& params);

/// "synth:<template>:<snr_db|inf>:<seed>"
std::string make_waveform_ref(WaveTemplate shape, double snr_db, std::uint64_t seed);
std::optional<WaveformSegment> segment_from_ref(std::string_view ref);

struct CueThresholds {
    double sawtooth_crossings_per_breath = 4.0;
    double hysteresis_fraction = 0.03;  // of peak inspiratory flow
    double plateau_sag_fraction = 0.08; // of pressure swing
    double degraded_missing = 0.05;
    double unusable_missing = 0.30;
};

/// Intermediate detector statistics, exposed for calibration tests.
struct WaveformFeatures {
    int breaths = 0;
    double missing_ratio = 0.0;
    double swing = 0.0;               // plateau level minus baseline, cmH2O
    double plateau_sag = 0.0;         // mean depth of plateau below its chord
    double plateau_residual = 0.0;    // rms residual of the per-breath quadratic fit
    double crossings_per_breath = 0.0;
};

std::optional<WaveformFeatures> analyze_waveform(const WaveformSegment& segment, const CueThresholds& thresholds = {});

WaveformCues scripted_waveform_cues(const WaveformSegment& segment, const CueThresholds& thresholds = {});

}  // namespace vdss
