#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pbitmc/graph.hpp"
#include "pbitmc/rng.hpp"

namespace pbitmc {

/// Per-spin excess of a final energy over the ground energy.
inline double residual_energy(double e, double e0, int n) {
    if (n <= 0) throw Error("residual_energy: n must be positive");
    return (e - e0) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

struct BootstrapInterval {
    double lo = 0.0;
    double hi = 0.0;
};

namespace detail {

inline double percentile(std::vector<double>& sorted_values, double q) {
    const std::size_t n = sorted_values.size();
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Percentile bootstrap interval for the mean across instances.
inline BootstrapInterval bootstrap_ci(const std::vector<double>& samples,
                                      double level, int resamples,
                                      std::uint64_t seed) {
    if (samples.size() < 2) throw Error("bootstrap_ci: need at least 2 samples");
    if (resamples < 1) throw Error("bootstrap_ci: resamples must be >= 1");
    Rng rng(stream_key(seed, {0xB007ull}));
    std::vector<double> means(resamples);
    for (int r = 0; r < resamples; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < samples.size(); ++k)
            s += samples[rng.below(samples.size())];
        means[r] = s / static_cast<double>(samples.size());
    }
    std::sort(means.begin(), means.end());
    const double alpha = (1.0 - level) / 2.0;
    return {detail::percentile(means, alpha), detail::percentile(means, 1.0 - alpha)};
}

// ---------------------------------------------------------------------------
// Residual-energy curves and power-law fits
// ---------------------------------------------------------------------------

struct CurvePoint {
    double t_a = 0.0;
    double rho = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

struct ResidualCurve {
    std::vector<CurvePoint> points;  // t_a strictly increasing
    int size_label = 0;              // cube size L, 0 when not lattice-derived
    int n = 0;                       // spins
    std::string meta;                // algorithm / R / P tags
};

/// Aggregate per-instance residuals (rho_by_instance[i][k] at t_grid[k]) into
/// a curve of instance means with bootstrap intervals.
inline ResidualCurve build_residual_curve(const std::vector<double>& t_grid,
                                          const std::vector<std::vector<double>>& rho_by_instance,
                                          double level, int resamples,
                                          std::uint64_t seed) {
    ResidualCurve curve;
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        std::vector<double> vals;
        vals.reserve(rho_by_instance.size());
        for (const auto& inst : rho_by_instance) vals.push_back(inst.at(k));
        CurvePoint pt;
        pt.t_a = t_grid[k];
        pt.rho = detail::mean_of(vals);
        if (vals.size() >= 2) {
            const auto ci = bootstrap_ci(vals, level, resamples,
                                         stream_key(seed, {0xC1ull, k}));
            pt.ci_lo = ci.lo;
            pt.ci_hi = ci.hi;
        } else {
            pt.ci_lo = pt.ci_hi = pt.rho;
        }
        curve.points.push_back(pt);
    }
    return curve;
}

struct PowerLawFit {
    double kappa_f = 0.0;
    double log_prefactor = 0.0;
    double t_min = 0.0;
    double t_max = 0.0;
    double ci_lo = std::numeric_limits<double>::quiet_NaN();
    double ci_hi = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct LinFit {
    double slope = 0.0, intercept = 0.0, rms_residual = 0.0;
};

inline LinFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < n; ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
    }
    const double denom = n * sxx - sx * sx;
    LinFit f;
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    double ss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = y[k] - (f.slope * x[k] + f.intercept);
        ss += r * r;
    }
    f.rms_residual = std::sqrt(ss / n);
    return f;
}

}  // namespace detail

/// Least squares on (ln t_a, ln rho) restricted to [t_min, t_max];
/// kappa_f = -slope. Requires >= 3 strictly positive points in the window.
inline PowerLawFit fit_power_law(const ResidualCurve& curve, double t_min,
                                 double t_max) {
    std::vector<double> x, y;
    for (const auto& pt : curve.points) {
        if (pt.t_a < t_min || pt.t_a > t_max) continue;
        if (pt.rho <= 0.0)
            throw Error("fit_power_law: non-positive rho at t_a=" +
                        std::to_string(pt.t_a));
        x.push_back(std::log(pt.t_a));
        y.push_back(std::log(pt.rho));
    }
    if (x.size() < 3) throw Error("fit_power_law: fewer than 3 points in window");
    const auto f = detail::least_squares(x, y);
    PowerLawFit fit;
    fit.kappa_f = -f.slope;
    fit.log_prefactor = f.intercept;
    fit.t_min = t_min;
    fit.t_max = t_max;
    return fit;
}

/// Knee detector: the largest contiguous window (>= 3 points, rho > 0) whose
/// log-log linear RMS residual stays below the threshold. Plateau tails fail
/// the linearity test and drop out. Falls back to the most linear window when
/// nothing clears the threshold.
inline std::pair<double, double> auto_fit_window(const ResidualCurve& curve,
                                                 double threshold = 0.01) {
    std::vector<double> t, lx, ly;
    for (const auto& pt : curve.points)
        if (pt.rho > 0.0) {
            t.push_back(pt.t_a);
            lx.push_back(std::log(pt.t_a));
            ly.push_back(std::log(pt.rho));
        }
    const int m = static_cast<int>(t.size());
    if (m < 3) throw Error("auto_fit_window: need at least 3 positive points");
    int best_a = 0, best_b = m - 1, best_len = 0;
    double best_resid = std::numeric_limits<double>::infinity();
    bool found = false;
    for (int a = 0; a < m; ++a)
        for (int b = a + 2; b < m; ++b) {
            std::vector<double> wx(lx.begin() + a, lx.begin() + b + 1);
            std::vector<double> wy(ly.begin() + a, ly.begin() + b + 1);
            const auto f = detail::least_squares(wx, wy);
            const int len = b - a + 1;
            if (f.rms_residual < threshold) {
                if (!found || len > best_len || (len == best_len && a < best_a)) {
                    found = true;
                    best_len = len;
                    best_a = a;
                    best_b = b;
                }
            } else if (!found && f.rms_residual < best_resid) {
                best_resid = f.rms_residual;
                best_a = a;
                best_b = b;
            }
        }
    return {t[best_a], t[best_b]};
}

/// Power-law fit with a percentile-bootstrap confidence interval over
/// instances: resample instances, rebuild the mean curve, refit.
inline PowerLawFit fit_power_law_bootstrap(
    const std::vector<double>& t_grid,
    const std::vector<std::vector<double>>& rho_by_instance, double t_min,
    double t_max, int resamples, std::uint64_t seed) {
    auto mean_curve = [&](const std::vector<std::size_t>& idx) {
        ResidualCurve c;
        for (std::size_t k = 0; k < t_grid.size(); ++k) {
            double s = 0.0;
            for (std::size_t i : idx) s += rho_by_instance[i][k];
            c.points.push_back({t_grid[k], s / idx.size(), 0.0, 0.0});
        }
        return c;
    };
    std::vector<std::size_t> all(rho_by_instance.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    PowerLawFit fit = fit_power_law(mean_curve(all), t_min, t_max);

    Rng rng(stream_key(seed, {0xF17ull}));
    std::vector<double> kappas;
    kappas.reserve(resamples);
    for (int r = 0; r < resamples; ++r) {
        std::vector<std::size_t> idx(all.size());
        for (auto& v : idx) v = rng.below(all.size());
        try {
            kappas.push_back(fit_power_law(mean_curve(idx), t_min, t_max).kappa_f);
        } catch (const Error&) {
            // resample produced a non-positive mean point; skip it
        }
    }
    if (kappas.size() >= 16) {
        std::sort(kappas.begin(), kappas.end());
        fit.ci_lo = detail::percentile(kappas, 0.025);
        fit.ci_hi = detail::percentile(kappas, 0.975);
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Extreme value theory for the minimum of P Gaussians
// ---------------------------------------------------------------------------

/// Inverse complementary error function on (0, 2); Newton refinement of a
/// rational initial guess, accurate to ~1e-15.
inline double erfc_inv(double y) {
    if (!(y > 0.0 && y < 2.0)) {
        if (y == 1.0) return 0.0;
        throw Error("erfc_inv: argument must lie in (0,2)");
    }
    const double z = 1.0 - y;  // erf(x) = z
    // Winitzki's approximation of erfinv as the starting point.
    const double a = 0.147;
    const double ln1mz2 = std::log(1.0 - z * z);
    const double term = 2.0 / (3.14159265358979323846 * a) + 0.5 * ln1mz2;
    double x = std::copysign(
        std::sqrt(std::sqrt(term * term - ln1mz2 / a) - term), z);
    constexpr double kTwoOverSqrtPi = 1.12837916709551257390;
    for (int it = 0; it < 4; ++it) {
        const double err = std::erfc(x) - y;
        x += err / (kTwoOverSqrtPi * std::exp(-x * x));
    }
    return x;
}

/// CDF of the minimum of P iid N(mu, sigma^2) variables:
/// F_P(x) = 1 - [1 - Phi((x-mu)/sigma)]^P = 1 - 2^-P erfc(z)^P.
inline double evt_min_cdf(double x, double mu, double sigma, int p) {
    if (sigma <= 0.0) throw Error("evt_min_cdf: sigma must be positive");
    if (p < 1) throw Error("evt_min_cdf: P must be >= 1");
    const double z = (x - mu) / (std::sqrt(2.0) * sigma);
    const double tail = std::erfc(z);  // in [0, 2]
    if (tail == 0.0) return 1.0;
    return -std::expm1(static_cast<double>(p) *
                       (std::log(tail) - 0.69314718055994530942));
}

/// Median of the minimum of P iid Gaussians:
/// x_p = mu + sqrt(2) sigma erfcinv(2^{(P-1)/P}).
inline double evt_median(double mu, double sigma, int p) {
    if (sigma <= 0.0) throw Error("evt_median: sigma must be positive");
    if (p < 1) throw Error("evt_median: P must be >= 1");
    const double arg = std::exp2((static_cast<double>(p) - 1.0) / p);
    return mu + std::sqrt(2.0) * sigma * erfc_inv(arg);
}

struct AsymptoticMedian {
    double full = 0.0;     // full asymptotic expansion
    double leading = 0.0;  // mu - sigma sqrt(2 ln P)
};

inline AsymptoticMedian evt_asymptotic_median(double mu, double sigma, int p) {
    if (sigma <= 0.0) throw Error("evt_asymptotic_median: sigma must be positive");
    if (p < 2) throw Error("evt_asymptotic_median: P must be >= 2");
    const double ln4 = std::log(4.0);
    const double a = std::log(2.0 / (3.14159265358979323846 * ln4 * ln4));
    const double inner = a + std::log(2.0) / p + 2.0 * std::log(static_cast<double>(p));
    AsymptoticMedian out;
    out.full = mu - sigma * std::sqrt(inner - std::log(inner));
    out.leading = mu - sigma * std::sqrt(2.0 * std::log(static_cast<double>(p)));
    return out;
}

/// Residual-energy prediction for the best of P runs with fitted location
/// a(t) and scale b(t): rho(t) = a + sqrt(2) b erfcinv(2^{(P-1)/P}).
inline double evt_residual_prediction(double a_t, double b_t, int p) {
    if (b_t <= 0.0) throw Error("evt_residual_prediction: b_t must be positive");
    if (p < 1) throw Error("evt_residual_prediction: P must be >= 1");
    const double arg = std::exp2((static_cast<double>(p) - 1.0) / p);
    return a_t + std::sqrt(2.0) * b_t * erfc_inv(arg);
}

struct BlockFit {
    int block_size = 0;
    int num_blocks = 0;
    double predicted_rho = 0.0;
};

/// Self-consistent block-size extraction for correlated replicas: partition
/// the R per-run values into contiguous blocks, treat per-block minima as
/// independent samples and predict the min-over-blocks residual. Candidates
/// are probed smallest-first and the first whose prediction matches the
/// measured value (within match_sigmas block-minimum standard deviations) is
/// kept. A pure argmin would degenerate: at block size R the P = 1 prediction
/// is the sample mean of the measured minima and trivially exact.
inline BlockFit evt_block_fit(const std::vector<std::vector<double>>& per_replica_by_run,
                              double rho_actual,
                              const std::vector<int>& candidate_blocks,
                              double match_sigmas = 0.1) {
    if (per_replica_by_run.empty())
        throw Error("evt_block_fit: no runs");
    const int r_total = static_cast<int>(per_replica_by_run.front().size());
    std::vector<int> candidates;
    for (int block : candidate_blocks)
        if (block >= 1 && r_total % block == 0)  // non-divisors skipped
            candidates.push_back(block);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());
    if (candidates.empty())
        throw Error("evt_block_fit: no candidate block size divides R");

    bool any = false;
    BlockFit fallback;
    double fallback_gap = std::numeric_limits<double>::infinity();
    for (int block : candidates) {
        const int p = r_total / block;
        std::vector<double> block_minima;
        for (const auto& run : per_replica_by_run) {
            if (static_cast<int>(run.size()) != r_total)
                throw Error("evt_block_fit: ragged replica table");
            for (int b = 0; b < p; ++b) {
                double m = run[static_cast<std::size_t>(b) * block];
                for (int k = 1; k < block; ++k)
                    m = std::min(m, run[static_cast<std::size_t>(b) * block + k]);
                block_minima.push_back(m);
            }
        }
        const double mu = detail::mean_of(block_minima);
        const double sigma = detail::sample_std(block_minima);
        const double pred =
            sigma > 0.0 ? evt_residual_prediction(mu, sigma, p) : mu;
        const double gap = std::abs(pred - rho_actual);
        const double scale = sigma > 0.0 ? sigma : 1.0;
        if (gap <= match_sigmas * scale) return {block, p, pred};
        if (!any || gap < fallback_gap) {
            any = true;
            fallback_gap = gap;
            fallback = {block, p, pred};
        }
    }
    return fallback;
}

// ---------------------------------------------------------------------------
// Finite-size scaling collapse
// ---------------------------------------------------------------------------

struct SizedCurve {
    int size_label = 0;          // L
    std::vector<double> t_a;     // strictly increasing
    std::vector<double> rho;     // positive entries participate in the collapse
};

struct CollapseParams {
    double mu_exp = 0.0;
    double b_exp = 0.0;
    double quality = 0.0;
};

/// Apply the rescaling (t_a, rho) -> (t_a L^-mu, rho L^b).
inline std::vector<SizedCurve> fss_rescale(const std::vector<SizedCurve>& curves,
                                           double mu_exp, double b_exp) {
    std::vector<SizedCurve> out = curves;
    for (auto& c : out) {
        const double lmu = std::pow(static_cast<double>(c.size_label), -mu_exp);
        const double lb = std::pow(static_cast<double>(c.size_label), b_exp);
        for (auto& t : c.t_a) t *= lmu;
        for (auto& r : c.rho) r *= lb;
    }
    return out;
}

namespace detail {

struct LogCurve {
    std::vector<double> x, y;
};

inline std::vector<LogCurve> to_log(const std::vector<SizedCurve>& curves) {
    std::vector<LogCurve> out;
    for (const auto& c : curves) {
        LogCurve lc;
        for (std::size_t k = 0; k < c.t_a.size(); ++k)
            if (c.rho[k] > 0.0 && c.t_a[k] > 0.0) {
                lc.x.push_back(std::log(c.t_a[k]));
                lc.y.push_back(std::log(c.rho[k]));
            }
        out.push_back(std::move(lc));
    }
    return out;
}

inline bool interp(const LogCurve& c, double x, double& y) {
    if (c.x.size() < 2 || x < c.x.front() || x > c.x.back()) return false;
    auto it = std::lower_bound(c.x.begin(), c.x.end(), x);
    std::size_t hi = static_cast<std::size_t>(it - c.x.begin());
    if (hi == 0) hi = 1;
    const std::size_t lo = hi - 1;
    const double frac = (x - c.x[lo]) / (c.x[hi] - c.x[lo]);
    y = c.y[lo] * (1.0 - frac) + c.y[hi] * frac;
    return true;
}

}  // namespace detail

/// Collapse objective: mean squared deviation, in log-log space, of each
/// rescaled point from the piecewise-linear interpolation of the other
/// curves. Zero for curves lying exactly on one master curve.
inline double fss_quality(const std::vector<SizedCurve>& rescaled) {
    const auto logs = detail::to_log(rescaled);
    double ss = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < logs.size(); ++c)
        for (std::size_t k = 0; k < logs[c].x.size(); ++k) {
            double acc = 0.0;
            int overlaps = 0;
            for (std::size_t o = 0; o < logs.size(); ++o) {
                if (o == c) continue;
                double y;
                if (detail::interp(logs[o], logs[c].x[k], y)) {
                    acc += y;
                    ++overlaps;
                }
            }
            if (overlaps > 0) {
                const double d = logs[c].y[k] - acc / overlaps;
                ss += d * d;
                ++count;
            }
        }
    if (count == 0)
        throw Error("fss_quality: rescaled curves have disjoint supports");
    return ss / static_cast<double>(count);
}

struct FssFitOptions {
    double mu_lo = 0.0, mu_hi = 12.0, mu_step = 0.25;
    double b_lo = 0.0, b_hi = 6.0, b_step = 0.25;
    bool pin_b = false;
    double pinned_b = 3.0;
    int refine_iterations = 60;
};

/// Grid search plus pattern-search refinement of the collapse exponents.
inline CollapseParams fss_fit(const std::vector<SizedCurve>& curves,
                              const FssFitOptions& opt = {}) {
    int distinct = 0;
    {
        std::vector<int> labels;
        for (const auto& c : curves) labels.push_back(c.size_label);
        std::sort(labels.begin(), labels.end());
        distinct = static_cast<int>(
            std::unique(labels.begin(), labels.end()) - labels.begin());
    }
    if (distinct < 2) throw Error("fss_fit: need curves for >= 2 distinct sizes");

    auto eval = [&](double mu, double b) {
        return fss_quality(fss_rescale(curves, mu, b));
    };

    CollapseParams best;
    best.quality = std::numeric_limits<double>::infinity();
    for (double mu = opt.mu_lo; mu <= opt.mu_hi + 1e-12; mu += opt.mu_step) {
        if (opt.pin_b) {
            double q;
            try {
                q = eval(mu, opt.pinned_b);
            } catch (const Error&) {
                continue;
            }
            if (q < best.quality) best = {mu, opt.pinned_b, q};
        } else {
            for (double b = opt.b_lo; b <= opt.b_hi + 1e-12; b += opt.b_step) {
                double q;
                try {
                    q = eval(mu, b);
                } catch (const Error&) {
                    continue;
                }
                if (q < best.quality) best = {mu, b, q};
            }
        }
    }
    if (!std::isfinite(best.quality))
        throw Error("fss_fit: no overlapping rescaled support on the grid");

    double step_mu = opt.mu_step, step_b = opt.b_step;
    for (int it = 0; it < opt.refine_iterations; ++it) {
        bool improved = false;
        const double trial_mu[2] = {best.mu_exp - step_mu, best.mu_exp + step_mu};
        for (double mu : trial_mu) {
            try {
                const double q = eval(mu, best.b_exp);
                if (q < best.quality) {
                    best.mu_exp = mu;
                    best.quality = q;
                    improved = true;
                }
            } catch (const Error&) {
            }
        }
        if (!opt.pin_b) {
            const double trial_b[2] = {best.b_exp - step_b, best.b_exp + step_b};
            for (double b : trial_b) {
                try {
                    const double q = eval(best.mu_exp, b);
                    if (q < best.quality) {
                        best.b_exp = b;
                        best.quality = q;
                        improved = true;
                    }
                } catch (const Error&) {
                }
            }
        }
        if (!improved) {
            step_mu *= 0.5;
            step_b *= 0.5;
            if (step_mu < 1e-5 && step_b < 1e-5) break;
        }
    }
    return best;
}

}  // namespace pbitmc
