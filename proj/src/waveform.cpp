#include "vdss/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "vdss/util.hpp"

namespace vdss {

namespace {

constexpr double kPi = std::numbers::pi;

bool has_sawtooth(WaveTemplate t) { return t == WaveTemplate::sawtooth || t == WaveTemplate::sawtooth_scooped; }
bool has_scoop(WaveTemplate t) { return t == WaveTemplate::scooped || t == WaveTemplate::sawtooth_scooped; }

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

struct Segment {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    std::size_t size() const { return end - begin; }
};

struct Breath {
    Segment insp;
    Segment exp;
};

/// Forward-fills NaN samples; leading NaNs become 0.
std::vector<double> fill_missing(const std::vector<double>& xs) {
    std::vector<double> out(xs.size());
    double last = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (std::isfinite(xs[i])) last = xs[i];
        out[i] = last;
    }
    return out;
}

std::vector<double> smooth(const std::vector<double>& xs, std::size_t half) {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto lo = i >= half ? i - half : 0;
        const auto hi = std::min(xs.size(), i + half + 1);
        double s = 0;
        for (auto k = lo; k < hi; ++k) s += xs[k];
        out[i] = s / static_cast<double>(hi - lo);
    }
    return out;
}

/// Splits the flow trace into complete breaths using hysteresis on the sign
/// of the smoothed flow.
std::vector<Breath> segment_breaths(const std::vector<double>& raw_flow) {
    const auto flow = smooth(raw_flow, 4);
    std::vector<Breath> breaths;
    if (flow.size() < 4) return breaths;
    std::vector<double> pos, neg;
    for (double f : flow) (f > 0 ? pos : neg).push_back(std::abs(f));
    if (pos.empty() || neg.empty()) return breaths;
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    const double insp_ref = pos[pos.size() * 9 / 10];
    const double exp_ref = neg[neg.size() * 9 / 10];
    const double enter_insp = 0.25 * insp_ref;
    const double enter_exp = -0.25 * exp_ref;

    enum class St { unknown, insp, exp } st = St::unknown;
    std::vector<std::size_t> insp_starts, exp_starts;
    for (std::size_t i = 0; i < flow.size(); ++i) {
        if (st != St::insp && flow[i] > enter_insp) {
            if (st == St::exp) insp_starts.push_back(i);
            st = St::insp;
        } else if (st != St::exp && flow[i] < enter_exp) {
            if (st == St::insp) exp_starts.push_back(i);
            st = St::exp;
        }
    }
    // A complete breath: inspiration start, then expiration start, then the
    // next inspiration start.
    for (std::size_t k = 0; k + 1 < insp_starts.size(); ++k) {
        const auto s = insp_starts[k];
        const auto next = insp_starts[k + 1];
        auto e = std::find_if(exp_starts.begin(), exp_starts.end(), [&](std::size_t x) { return x > s; });
        if (e == exp_starts.end() || *e >= next) continue;
        breaths.push_back({{s, *e}, {*e, next}});
    }
    return breaths;
}

struct QuadFit {
    double c0 = 0, c1 = 0, c2 = 0;
    double residual_ss = 0;
    std::size_t n = 0;
};

/// Least-squares fit of p(u) = c0 + c1 u + c2 u^2 with u spanning [0,1].
std::optional<QuadFit> fit_quadratic(const std::vector<double>& p, std::size_t begin, std::size_t end) {
    const std::size_t n = end - begin;
    if (n < 5) return std::nullopt;
    double s[5] = {0, 0, 0, 0, 0};  // sums of u^k
    double t[3] = {0, 0, 0};        // sums of u^k p
    for (std::size_t i = 0; i < n; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(n - 1);
        double uk = 1.0;
        for (int k = 0; k < 5; ++k) {
            s[k] += uk;
            if (k < 3) t[k] += uk * p[begin + i];
            uk *= u;
        }
    }
    // Normal equations via Gaussian elimination on a 3x4 augmented matrix.
    double m[3][4] = {{s[0], s[1], s[2], t[0]}, {s[1], s[2], s[3], t[1]}, {s[2], s[3], s[4], t[2]}};
    for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int r = c + 1; r < 3; ++r)
            if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
        if (std::abs(m[piv][c]) < 1e-12) return std::nullopt;
        std::swap(m[c], m[piv]);
        for (int r = 0; r < 3; ++r) {
            if (r == c) continue;
            const double f = m[r][c] / m[c][c];
            for (int k = c; k < 4; ++k) m[r][k] -= f * m[c][k];
        }
    }
    QuadFit fit{m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2], 0.0, n};
    for (std::size_t i = 0; i < n; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(n - 1);
        const double r = p[begin + i] - (fit.c0 + fit.c1 * u + fit.c2 * u * u);
        fit.residual_ss += r * r;
    }
    return fit;
}

std::string fmt(double v, int precision = 1) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(precision);
    os << v;
    return os.str();
}

}  // namespace

WaveformSegment generate_waveform(WaveTemplate shape, const WaveGenParams& g) {
    WaveformSegment seg;
    seg.sample_rate_hz = g.sample_rate_hz;
    const double dt = 1.0 / g.sample_rate_hz;
    const auto n = static_cast<std::size_t>(std::llround(g.breaths * g.breath_period_s * g.sample_rate_hz));
    const double swing = g.plateau - g.peep;
    const double rise = 0.1;
    const double tau_exp = 0.4;
    const double exp_peak = 0.8 * g.peak_flow;
    const double scoop_depth = g.scoop_fraction * swing;
    const double saw_amp = g.sawtooth_fraction * exp_peak;

    std::mt19937_64 rng(mix_seed(g.seed, 0x3a7e));
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const bool noisy = std::isfinite(g.snr_db);
    const double gain = noisy ? std::pow(10.0, -g.snr_db / 20.0) : 0.0;
    // Noise rides on the template's feature channel; the clean template uses pressure.
    const double p_noise = (has_scoop(shape) || shape == WaveTemplate::clean)
                               ? gain * (has_scoop(shape) ? scoop_depth : 0.2 * swing)
                               : 0.0;
    const double f_noise = has_sawtooth(shape) ? gain * saw_amp : 0.0;

    seg.pressure.resize(n);
    seg.flow.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double tau = std::fmod(t, g.breath_period_s);
        double p = 0.0, f = 0.0;
        if (tau < g.insp_time_s) {
            p = tau < rise ? g.peep + swing * tau / rise : g.plateau;
            if (has_scoop(shape) && tau >= rise) {
                const double u = (tau - rise) / (g.insp_time_s - rise);
                p -= scoop_depth * std::sin(kPi * u);
            }
            f = g.peak_flow * (1.0 - 0.5 * tau / g.insp_time_s);
        } else {
            const double te = tau - g.insp_time_s;
            p = g.peep + swing * std::exp(-te / 0.05);
            f = -exp_peak * std::exp(-te / tau_exp);
            if (has_sawtooth(shape)) f += saw_amp * std::sin(2.0 * kPi * g.sawtooth_hz * te);
        }
        if (p_noise > 0) p += p_noise * unit(rng);
        if (f_noise > 0) f += f_noise * unit(rng);
        seg.pressure[i] = p;
        seg.flow[i] = f;
    }
    if (g.missing_ratio > 0) {
        for (std::size_t i = 0; i < n; ++i) {
            if (coin(rng) < g.missing_ratio) {
                seg.pressure[i] = std::numeric_limits<double>::quiet_NaN();
                seg.flow[i] = std::numeric_limits<double>::quiet_NaN();
            }
        }
    }
    return seg;
}

std::string make_waveform_ref(WaveTemplate shape, double snr_db, std::uint64_t seed) {
    std::string snr = std::isfinite(snr_db) ? fmt(snr_db, 1) : "inf";
    return "synth:" + std::string(to_string(shape)) + ":" + snr + ":" + std::to_string(seed);
}

std::optional<WaveformSegment> segment_from_ref(std::string_view ref) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : ref) {
        if (c == ':') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    if (parts.size() != 4 || parts[0] != "synth") return std::nullopt;
    auto shape = parse_enum<WaveTemplate>(parts[1]);
    if (!shape) return std::nullopt;
    WaveGenParams g;
    try {
        g.snr_db = parts[2] == "inf" ? std::numeric_limits<double>::infinity() : std::stod(parts[2]);
        g.seed = std::stoull(parts[3]);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    return generate_waveform(*shape, g);
}

std::optional<WaveformFeatures> analyze_waveform(const WaveformSegment& seg, const CueThresholds& th) {
    const std::size_t n = std::min(seg.pressure.size(), seg.flow.size());
    if (n == 0) return std::nullopt;
    WaveformFeatures feat;
    std::size_t missing = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(seg.pressure[i]) || !std::isfinite(seg.flow[i])) ++missing;
    feat.missing_ratio = static_cast<double>(missing) / static_cast<double>(n);

    const auto pressure = fill_missing(seg.pressure);
    const auto flow = fill_missing(seg.flow);
    const auto breaths = segment_breaths(flow);
    feat.breaths = static_cast<int>(breaths.size());
    if (breaths.size() < 2) return feat;

    std::vector<double> plateau_levels, baselines, peak_flows;
    for (const auto& b : breaths) {
        double sum = 0;
        for (auto i = b.insp.begin; i < b.insp.end; ++i) sum += pressure[i];
        plateau_levels.push_back(sum / static_cast<double>(b.insp.size()));
        const auto half = b.exp.begin + b.exp.size() / 2;
        double bsum = 0;
        for (auto i = half; i < b.exp.end; ++i) bsum += pressure[i];
        baselines.push_back(bsum / static_cast<double>(b.exp.end - half));
        double pk = 0;
        for (auto i = b.insp.begin; i < b.insp.end; ++i) pk = std::max(pk, flow[i]);
        peak_flows.push_back(pk);
    }
    feat.swing = median(plateau_levels) - median(baselines);
    const double peak_flow = median(peak_flows);

    // Plateau shape: quadratic fit over the interior of each inspiration.
    double sag_sum = 0, res_ss = 0;
    std::size_t res_n = 0, fits = 0;
    for (const auto& b : breaths) {
        const auto len = b.insp.size();
        const auto lo = b.insp.begin + (len * 15) / 100;
        const auto hi = b.insp.end - (len * 10) / 100;
        if (auto fit = fit_quadratic(pressure, lo, hi)) {
            sag_sum += fit->c2 / 4.0;
            res_ss += fit->residual_ss;
            res_n += fit->n;
            ++fits;
        }
    }
    if (fits > 0) {
        feat.plateau_sag = sag_sum / static_cast<double>(fits);
        feat.plateau_residual = std::sqrt(res_ss / static_cast<double>(res_n));
    }

    // Expiratory oscillation: zero crossings of high-pass filtered flow with hysteresis.
    const double h = th.hysteresis_fraction * peak_flow;
    const auto skip = static_cast<std::size_t>(0.1 * seg.sample_rate_hz);
    std::size_t crossings = 0;
    for (const auto& b : breaths) {
        const auto lo = b.exp.begin + skip + 2;
        if (b.exp.end < lo + 3) continue;
        int sign = 0;
        for (auto i = lo; i + 2 < b.exp.end; ++i) {
            double ma = 0;
            for (auto k = i - 2; k <= i + 2; ++k) ma += flow[k];
            const double hp = flow[i] - ma / 5.0;
            if (hp > h) {
                if (sign < 0) ++crossings;
                sign = 1;
            } else if (hp < -h) {
                if (sign > 0) ++crossings;
                sign = -1;
            }
        }
    }
    feat.crossings_per_breath = static_cast<double>(crossings) / static_cast<double>(breaths.size());
    return feat;
}

WaveformCues scripted_waveform_cues(const WaveformSegment& seg, const CueThresholds& th) {
    WaveformCues cues;
    auto unusable = [&](std::string why) {
        cues.quality = CueQuality::unusable;
        cues.asynchrony_patterns = {Pattern::none};
        cues.suspicious_events = {std::move(why)};
        cues.observed_state = "waveform not interpretable";
        cues.uncertainty = 1.0;
        return cues;
    };
    auto feat = analyze_waveform(seg, th);
    if (!feat) return unusable("empty waveform segment");
    if (feat->missing_ratio >= th.unusable_missing)
        return unusable("missing samples " + fmt(100 * feat->missing_ratio) + "%");
    if (feat->breaths < 2) return unusable("fewer than two complete breaths");

    cues.quality = feat->missing_ratio >= th.degraded_missing ? CueQuality::degraded : CueQuality::good;
    if (feat->missing_ratio > 0) cues.suspicious_events.push_back("missing samples " + fmt(100 * feat->missing_ratio) + "%");

    std::vector<Pattern> patterns;
    double uncertainty = feat->missing_ratio / th.unusable_missing;
    const double swing = std::max(feat->swing, 1e-6);
    const double sag_ratio = feat->plateau_sag / swing;
    // Noise relative to the measured feature: 1 - exp(-noise/feature).
    const double noise_ratio = feat->plateau_residual / std::max(std::abs(feat->plateau_sag), 0.05 * swing);
    if (sag_ratio > th.plateau_sag_fraction) {
        patterns.push_back(Pattern::scooped_plateau);
        cues.suspicious_events.push_back("inspiratory plateau sag " + fmt(feat->plateau_sag, 2) + " cmH2O");
        uncertainty = std::max(uncertainty, 1.0 - std::exp(-noise_ratio));
    } else {
        uncertainty = std::max(uncertainty, 1.0 - std::exp(-feat->plateau_residual / swing));
    }
    if (feat->crossings_per_breath >= th.sawtooth_crossings_per_breath) {
        patterns.push_back(Pattern::sawtooth);
        cues.suspicious_events.push_back("expiratory flow oscillation " + fmt(feat->crossings_per_breath) +
                                         " crossings/breath");
        uncertainty = std::max(uncertainty,
                               std::exp(-(feat->crossings_per_breath / th.sawtooth_crossings_per_breath - 1.0)));
    }
    if (patterns.empty()) patterns.push_back(Pattern::none);
    normalize_set(patterns);
    cues.asynchrony_patterns = std::move(patterns);
    cues.uncertainty = std::clamp(uncertainty, 0.0, 1.0);
    cues.observed_state = std::to_string(feat->breaths) + " complete breaths; pressure swing " + fmt(feat->swing) +
                          " cmH2O";
    return cues;
}

}  // namespace vdss
