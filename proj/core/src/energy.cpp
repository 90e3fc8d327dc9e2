#include "ergmark/energy.hpp"

#include "ergmark/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace ergmark {

namespace {

double interpolate(const PowerSample& a, const PowerSample& b, std::int64_t t) {
    if (t == a.t_ns) return a.watts;
    if (t == b.t_ns) return b.watts;
    const double f = static_cast<double>(t - a.t_ns) / static_cast<double>(b.t_ns - a.t_ns);
    return a.watts + (b.watts - a.watts) * f;
}

}  // namespace

Integration integrate_power(const PowerTrace& trace, TimeWindow window, double gap_periods) {
    const auto& s = trace.samples;
    if (s.size() < 2) fail(ErrorKind::validation, "cannot integrate a trace with fewer than two samples");
    if (window.length_ns() <= 0) fail(ErrorKind::usage, "integration window must have positive length");
    if (!(trace.nominal_rate_hz > 0.0)) fail(ErrorKind::validation, "trace nominal rate must be positive");

    const std::int64_t lo = std::max(window.start_ns, s.front().t_ns);
    const std::int64_t hi = std::min(window.end_ns, s.back().t_ns);
    if (lo >= hi) fail(ErrorKind::validation, "integration window lies outside the power trace");

    const double gap_ns = gap_periods * 1e9 / trace.nominal_rate_hz;

    // First segment whose end lies after lo.
    auto it = std::upper_bound(s.begin(), s.end(), lo,
                               [](std::int64_t t, const PowerSample& p) { return t < p.t_ns; });
    std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - s.begin() - 1, 0));

    Integration out;
    out.window_ns = window.length_ns();
    out.integrated = {lo, hi};
    for (; i + 1 < s.size() && s[i].t_ns < hi; ++i) {
        const PowerSample& p0 = s[i];
        const PowerSample& p1 = s[i + 1];
        const std::int64_t a = std::max(lo, p0.t_ns);
        const std::int64_t b = std::min(hi, p1.t_ns);
        if (b <= a) continue;
        if (static_cast<double>(p1.t_ns - p0.t_ns) > gap_ns) continue;
        const double wa = interpolate(p0, p1, a);
        const double wb = interpolate(p0, p1, b);
        out.joules += 0.5 * (wa + wb) * (static_cast<double>(b - a) * 1e-9);
        out.covered_ns += b - a;
    }
    if (out.covered_ns == 0) fail(ErrorKind::validation, "integration window falls entirely inside trace gaps");
    return out;
}

BaselineSubtraction subtract_baseline(const PowerTrace& trace, double baseline_watts) {
    BaselineSubtraction out{trace, 0};
    for (auto& s : out.trace.samples) {
        s.watts -= baseline_watts;
        if (s.watts < 0.0) {
            s.watts = 0.0;
            ++out.clamp_count;
        }
    }
    if (out.clamp_count > 0) {
        warn(std::to_string(out.clamp_count) + " of " + std::to_string(trace.samples.size()) +
             " samples fell below the idle baseline and were clamped to 0 W");
    }
    return out;
}

BaselineSubtraction subtract_baseline(const PowerTrace& trace, const BaselineEstimate& baseline) {
    return subtract_baseline(trace, baseline.watts);
}

const char* to_string(CorrectionKind kind) {
    switch (kind) {
        case CorrectionKind::psu_efficiency: return "psu_efficiency";
        case CorrectionKind::legacy_external: return "legacy_external";
    }
    return "psu_efficiency";
}

CorrectionKind correction_kind_from_string(const std::string& text) {
    if (text == "psu_efficiency") return CorrectionKind::psu_efficiency;
    if (text == "legacy_external") return CorrectionKind::legacy_external;
    fail(ErrorKind::validation, "unknown correction kind '" + text + "'");
}

std::vector<Correction> build_corrections(std::optional<double> psu_efficiency, bool legacy_external) {
    std::vector<Correction> chain;
    if (psu_efficiency) {
        const double eta = *psu_efficiency;
        if (!(eta >= kMinPsuEfficiency && eta <= kMaxPsuEfficiency)) {
            std::ostringstream msg;
            msg << "PSU efficiency " << eta << " outside [" << kMinPsuEfficiency << ", " << kMaxPsuEfficiency << "]";
            fail(ErrorKind::usage, msg.str());
        }
        chain.push_back({CorrectionKind::psu_efficiency, eta});
    }
    if (legacy_external) chain.push_back({CorrectionKind::legacy_external, kLegacyExternalFactor});
    return chain;
}

CorrectedEnergy apply_corrections(double joules, std::span<const Correction> chain) {
    CorrectedEnergy out{joules, {}};
    for (const auto& c : chain) {
        if (c.kind == CorrectionKind::psu_efficiency &&
            !(c.factor >= kMinPsuEfficiency && c.factor <= kMaxPsuEfficiency)) {
            fail(ErrorKind::usage, "PSU efficiency outside [0.5, 1.0]");
        }
        if (c.kind == CorrectionKind::legacy_external && c.factor != kLegacyExternalFactor) {
            fail(ErrorKind::usage, "legacy-external factor is fixed at 0.90");
        }
        out.joules *= c.factor;
        out.ledger.push_back(c);
    }
    return out;
}

EnergyResult compute_energy(const PowerTrace& trace, TimeWindow window,
                            const std::optional<BaselineEstimate>& baseline,
                            std::span<const Correction> chain) {
    EnergyResult r;
    const Integration raw = integrate_power(trace, window);
    r.joules_raw = raw.joules;
    r.window = raw.integrated;
    r.coverage = raw.coverage();
    if (baseline) {
        const auto net = subtract_baseline(trace, *baseline);
        r.joules_net = integrate_power(net.trace, window).joules;
        r.clamp_count = net.clamp_count;
    } else {
        r.joules_net = r.joules_raw;
    }
    auto corrected = apply_corrections(r.joules_net, chain);
    r.joules_corrected = corrected.joules;
    r.corrections = std::move(corrected.ledger);
    return r;
}

const char* to_string(Metric metric) {
    return metric == Metric::time ? "time" : "energy";
}

ValidityReport check_validity(std::span<const double> values, Metric metric) {
    if (values.size() < kMinRuns) {
        fail(ErrorKind::usage, "validity check needs at least " + std::to_string(kMinRuns) + " runs, got " +
                                   std::to_string(values.size()));
    }
    ValidityReport rep;
    rep.metric = metric;
    rep.values.assign(values.begin(), values.end());
    rep.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (rep.mean == 0.0) {
        rep.max_rel_dev = std::numeric_limits<double>::infinity();
        rep.valid = false;
        rep.diagnostic = std::string("mean ") + to_string(metric) + " is zero; relative deviation undefined";
        return rep;
    }
    for (double v : values) {
        rep.max_rel_dev = std::max(rep.max_rel_dev, std::abs(v - rep.mean) / std::abs(rep.mean));
    }
    rep.valid = rep.max_rel_dev <= kValidityBand;
    if (!rep.valid) {
        std::ostringstream msg;
        msg << to_string(metric) << ": a run deviates " << rep.max_rel_dev * 100.0
            << " % from the mean (limit 15 %)";
        rep.diagnostic = msg.str();
    }
    return rep;
}

MetricStats summarize(std::span<const double> values) {
    MetricStats st;
    if (values.empty()) return st;
    st.count = values.size();
    st.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(st.count);
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    st.min = *mn;
    st.max = *mx;
    double sq = 0.0;
    for (double v : values) sq += (v - st.mean) * (v - st.mean);
    st.stddev = std::sqrt(sq / static_cast<double>(st.count));
    return st;
}

TrendFit fit_trend(std::span<const TrendPoint> points, double reference_year) {
    if (points.size() < 3) fail(ErrorKind::usage, "trend fit needs at least 3 points");
    for (const auto& p : points) {
        if (!(p.efficiency > 0.0) || !std::isfinite(p.efficiency)) {
            fail(ErrorKind::usage, "trend fit needs positive efficiencies");
        }
        if (!std::isfinite(p.year)) fail(ErrorKind::usage, "trend fit needs finite years");
    }
    const double n = static_cast<double>(points.size());
    double mean_t = 0.0;
    double mean_y = 0.0;
    for (const auto& p : points) {
        mean_t += p.year;
        mean_y += std::log(p.efficiency);
    }
    mean_t /= n;
    mean_y /= n;

    double stt = 0.0;
    double sty = 0.0;
    for (const auto& p : points) {
        const double dt = p.year - mean_t;
        stt += dt * dt;
        sty += dt * (std::log(p.efficiency) - mean_y);
    }
    if (stt == 0.0) fail(ErrorKind::usage, "trend fit needs at least two distinct years");

    TrendFit fit;
    fit.r = sty / stt;
    fit.mean_year = mean_t;
    fit.reference_year = reference_year;
    fit.log_a = mean_y + fit.r * (reference_year - mean_t);
    fit.a = std::exp(fit.log_a);
    fit.two_year_factor = std::exp(2.0 * fit.r);
    fit.n_points = points.size();

    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (const auto& p : points) {
        const double y = std::log(p.efficiency);
        const double pred = mean_y + fit.r * (p.year - mean_t);
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

double efficiency_from_energy(double joules) {
    if (!(joules > 0.0)) fail(ErrorKind::usage, "efficiency needs a positive energy");
    return 1.0 / joules;
}

}  // namespace ergmark
