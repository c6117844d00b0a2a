#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "pbitmc/analysis.hpp"

using namespace pbitmc;

TEST_CASE("residual energy") {
    CHECK(residual_energy(-100.0, -100.0, 50) == 0.0);
    CHECK(residual_energy(-93.0, -100.0, 100) == Catch::Approx(0.07).epsilon(1e-15));
    CHECK_THROWS_AS(residual_energy(1.0, 0.0, 0), Error);

    SECTION("affine equivariance") {
        const double base = residual_energy(-93.0, -100.0, 100);
        CHECK(residual_energy(-93.0 + 7.5, -100.0 + 7.5, 100) ==
              Catch::Approx(base).margin(1e-15));
    }
}

TEST_CASE("bootstrap interval") {
    SECTION("constant samples give a zero-width interval") {
        std::vector<double> samples(10, 3.25);
        auto ci = bootstrap_ci(samples, 0.95, 500, 1);
        CHECK(ci.lo == 3.25);
        CHECK(ci.hi == 3.25);
    }
    SECTION("interval contains the sample mean") {
        Rng rng(7);
        std::vector<double> samples;
        for (int i = 0; i < 40; ++i) samples.push_back(rng.normal() + 2.0);
        const double mean = [&] {
            double s = 0;
            for (double v : samples) s += v;
            return s / samples.size();
        }();
        auto ci = bootstrap_ci(samples, 0.95, 1000, 2);
        CHECK(ci.lo <= mean);
        CHECK(ci.hi >= mean);
    }
    SECTION("coverage on synthetic Gaussians is near nominal") {
        int covered = 0;
        const int trials = 400;
        Rng rng(11);
        for (int t = 0; t < trials; ++t) {
            std::vector<double> samples;
            for (int i = 0; i < 40; ++i) samples.push_back(rng.normal());
            auto ci = bootstrap_ci(samples, 0.95, 400, 100 + t);
            covered += (ci.lo <= 0.0 && 0.0 <= ci.hi);
        }
        const double rate = double(covered) / trials;
        CHECK(rate > 0.90);
        CHECK(rate < 0.99);
    }
    SECTION("guards") {
        CHECK_THROWS_AS(bootstrap_ci({1.0}, 0.95, 100, 1), Error);
    }
}

TEST_CASE("power-law fit") {
    SECTION("noiseless synthetic curve is recovered exactly") {
        ResidualCurve curve;
        for (double t : {10.0, 30.0, 100.0, 300.0, 1000.0})
            curve.points.push_back({t, 2.0 * std::pow(t, -0.5), 0, 0});
        auto fit = fit_power_law(curve, 10, 1000);
        CHECK(std::abs(fit.kappa_f - 0.5) < 1e-12);
        CHECK(std::abs(fit.log_prefactor - std::log(2.0)) < 1e-12);

        // Rescaling t -> c t leaves kappa unchanged.
        ResidualCurve scaled;
        for (const auto& pt : curve.points)
            scaled.points.push_back({pt.t_a * 7.0, pt.rho, 0, 0});
        auto fit2 = fit_power_law(scaled, 70, 7000);
        CHECK(std::abs(fit2.kappa_f - 0.5) < 1e-12);
    }
    SECTION("non-positive rho in window throws") {
        ResidualCurve curve;
        curve.points = {{10, 1.0, 0, 0}, {20, 0.0, 0, 0}, {40, 0.5, 0, 0}};
        CHECK_THROWS_AS(fit_power_law(curve, 10, 40), Error);
    }
    SECTION("too few points throws") {
        ResidualCurve curve;
        curve.points = {{10, 1.0, 0, 0}, {20, 0.5, 0, 0}};
        CHECK_THROWS_AS(fit_power_law(curve, 10, 20), Error);
    }
    SECTION("knee detector drops the plateau tail") {
        ResidualCurve curve;
        for (double t : {10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0, 10000.0}) {
            const double rho = std::max(2.0 * std::pow(t, -0.6), 0.02);
            curve.points.push_back({t, rho, 0, 0});
        }
        auto [t_min, t_max] = auto_fit_window(curve, 0.01);
        CHECK(t_min == 10.0);
        CHECK(t_max == 1000.0);  // 3000 and 10000 sit on the plateau
        auto fit = fit_power_law(curve, t_min, t_max);
        CHECK(std::abs(fit.kappa_f - 0.6) < 1e-9);
    }
    SECTION("bootstrap CI covers a noisy synthetic exponent") {
        Rng rng(23);
        const std::vector<double> t_grid = {10, 30, 100, 300, 1000};
        int covered = 0;
        const int trials = 60;
        for (int trial = 0; trial < trials; ++trial) {
            std::vector<std::vector<double>> by_instance;
            for (int inst = 0; inst < 25; ++inst) {
                std::vector<double> row;
                for (double t : t_grid)
                    row.push_back(1.5 * std::pow(t, -0.45) *
                                  (1.0 + 0.05 * rng.normal()));
                by_instance.push_back(row);
            }
            auto fit = fit_power_law_bootstrap(t_grid, by_instance, 10, 1000, 300,
                                               900 + trial);
            covered += (fit.ci_lo <= 0.45 && 0.45 <= fit.ci_hi);
        }
        CHECK(double(covered) / trials >= 0.9);
    }
}

TEST_CASE("erfc_inv") {
    CHECK(erfc_inv(1.0) == 0.0);
    for (double x : {-3.0, -2.0, -1.0, -0.3, 0.4, 1.2, 2.5, 3.4}) {
        const double y = std::erfc(x);
        CHECK(erfc_inv(y) == Catch::Approx(x).margin(1e-12));
    }
    CHECK_THROWS_AS(erfc_inv(0.0), Error);
    CHECK_THROWS_AS(erfc_inv(2.0), Error);
}

TEST_CASE("EVT minimum CDF") {
    SECTION("P = 1 reduces to the Gaussian CDF") {
        for (double x : {-2.0, -0.5, 0.0, 0.7, 1.9}) {
            const double phi = 0.5 * std::erfc(-(x - 0.3) / (std::sqrt(2.0) * 1.7));
            CHECK(evt_min_cdf(x, 0.3, 1.7, 1) == Catch::Approx(phi).margin(1e-14));
        }
    }
    SECTION("limits") {
        CHECK(evt_min_cdf(1e8, 0, 1, 8) == Catch::Approx(1.0).margin(1e-15));
        CHECK(evt_min_cdf(-1e8, 0, 1, 8) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("monotone in x, non-decreasing in P below the mean") {
        double prev = -1.0;
        for (double x = -4.0; x <= 4.0; x += 0.25) {
            const double f = evt_min_cdf(x, 0, 1, 5);
            CHECK(f >= prev);
            prev = f;
        }
        for (double x = -3.0; x < 0.0; x += 0.5)
            CHECK(evt_min_cdf(x, 0, 1, 16) >= evt_min_cdf(x, 0, 1, 4));
    }
    SECTION("matches the empirical CDF of min-of-8 normals") {
        Rng rng(31);
        const int draws = 1000000;
        std::vector<double> mins(draws);
        for (auto& m : mins) {
            double v = rng.normal();
            for (int k = 1; k < 8; ++k) v = std::min(v, rng.normal());
            m = v;
        }
        std::sort(mins.begin(), mins.end());
        double ks = 0.0;
        for (int k = 0; k < draws; k += 997) {
            const double x = mins[k];
            const double emp = double(k + 1) / draws;
            ks = std::max(ks, std::abs(emp - evt_min_cdf(x, 0, 1, 8)));
        }
        CHECK(ks < 0.005);
    }
}

TEST_CASE("EVT median") {
    SECTION("P = 1 gives mu exactly") {
        CHECK(evt_median(1.25, 2.0, 1) == 1.25);
    }
    SECTION("F_P at the median is one half") {
        for (int p : {1, 2, 5, 10, 100, 1000, 10000}) {
            const double xp = evt_median(0.4, 1.3, p);
            CHECK(evt_min_cdf(xp, 0.4, 1.3, p) == Catch::Approx(0.5).margin(1e-10));
        }
    }
    SECTION("matches the Monte Carlo median of min-of-2 normals") {
        Rng rng(37);
        const int draws = 2000000;
        std::vector<double> mins(draws);
        for (auto& m : mins) m = std::min(rng.normal(), rng.normal());
        std::nth_element(mins.begin(), mins.begin() + draws / 2, mins.end());
        const double mc = mins[draws / 2];
        CHECK(evt_median(0, 1, 2) == Catch::Approx(mc).margin(2e-3));
    }
}

TEST_CASE("EVT asymptotic median") {
    SECTION("leading form at P = 1e6") {
        auto am = evt_asymptotic_median(0.0, 1.0, 1000000);
        CHECK(am.leading ==
              Catch::Approx(-std::sqrt(2.0 * std::log(1e6))).margin(1e-12));
    }
    SECTION("full expansion within 1% of the exact median for P >= 50") {
        for (int p : {50, 100, 500, 5000}) {
            const double exact_offset = evt_median(0, 1, p);
            const double full_offset = evt_asymptotic_median(0, 1, p).full;
            CHECK(std::abs(full_offset - exact_offset) / std::abs(exact_offset) <
                  0.01);
        }
    }
    SECTION("offsets decrease monotonically in P") {
        double prev = 1.0;
        for (int p : {2, 4, 8, 16, 64, 256}) {
            const double lead = evt_asymptotic_median(0, 1, p).leading;
            CHECK(lead < prev);
            prev = lead;
        }
    }
    CHECK_THROWS_AS(evt_asymptotic_median(0, 1, 1), Error);
}

TEST_CASE("EVT residual prediction") {
    CHECK(evt_residual_prediction(0.42, 0.1, 1) == 0.42);
    double prev = 1.0;
    for (int p : {1, 2, 8, 32, 128}) {
        const double rho = evt_residual_prediction(0.42, 0.1, p);
        CHECK(rho <= prev);
        prev = rho;
    }
    CHECK_THROWS_AS(evt_residual_prediction(0.0, 0.0, 4), Error);
}

TEST_CASE("EVT block fit") {
    Rng rng(41);
    const int R = 32, runs = 400;

    SECTION("independent replicas choose block size 1") {
        std::vector<std::vector<double>> table(runs, std::vector<double>(R));
        double actual = 0.0;
        for (auto& run : table) {
            double m = 1e30;
            for (auto& v : run) {
                v = rng.normal();
                m = std::min(m, v);
            }
            actual += m;
        }
        actual /= runs;
        auto fit = evt_block_fit(table, actual, {1, 2, 4, 8, 16, 32});
        CHECK(fit.block_size == 1);
        CHECK(fit.num_blocks == R);
    }
    SECTION("perfectly correlated replicas choose block size R") {
        std::vector<std::vector<double>> table(runs, std::vector<double>(R));
        double actual = 0.0;
        for (auto& run : table) {
            const double v = rng.normal();
            std::fill(run.begin(), run.end(), v);
            actual += v;
        }
        actual /= runs;
        auto fit = evt_block_fit(table, actual, {1, 2, 4, 8, 16, 32});
        CHECK(fit.block_size == 32);
        CHECK(fit.num_blocks == 1);
    }
    SECTION("guards") {
        CHECK_THROWS_AS(evt_block_fit({}, 0.0, {1}), Error);
        std::vector<std::vector<double>> table(3, std::vector<double>(R, 0.0));
        CHECK_THROWS_AS(evt_block_fit(table, 0.0, {}), Error);
        CHECK_THROWS_AS(evt_block_fit(table, 0.0, {5}), Error);  // not a divisor
    }
}

namespace {

// Curved master in log-log space so the collapse exponents are identifiable.
double master_rho(double x) {
    const double u = std::log(x);
    return std::exp(-0.3 * u - 0.05 * u * u);
}

std::vector<SizedCurve> synthetic_collapse(double mu_true, double b_true,
                                           double noise, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SizedCurve> curves;
    for (int L : {8, 12, 16}) {
        SizedCurve c;
        c.size_label = L;
        for (double x = 0.05; x <= 20.0; x *= 1.6) {
            const double t = x * std::pow(L, mu_true);
            const double rho =
                master_rho(x) * std::pow(L, -b_true) * (1.0 + noise * rng.normal());
            c.t_a.push_back(t);
            c.rho.push_back(rho);
        }
        curves.push_back(std::move(c));
    }
    return curves;
}

}  // namespace

TEST_CASE("FSS rescaling and quality") {
    auto curves = synthetic_collapse(6.0, 3.0, 0.0, 1);

    SECTION("exact master curve collapses to zero quality") {
        auto rescaled = fss_rescale(curves, 6.0, 3.0);
        CHECK(fss_quality(rescaled) < 1e-20);
    }
    SECTION("quality is invariant under curve relabeling") {
        auto rescaled = fss_rescale(curves, 5.0, 2.5);
        auto shuffled = rescaled;
        std::swap(shuffled[0], shuffled[2]);
        CHECK(fss_quality(rescaled) == Catch::Approx(fss_quality(shuffled)));
    }
    SECTION("disjoint supports throw") {
        auto rescaled = fss_rescale(curves, 0.0, 0.0);
        for (std::size_t c = 0; c < rescaled.size(); ++c)
            for (auto& t : rescaled[c].t_a) t *= std::pow(1e12, double(c));
        CHECK_THROWS_AS(fss_quality(rescaled), Error);
    }
}

TEST_CASE("FSS fit recovers synthetic exponents") {
    auto curves = synthetic_collapse(6.0, 3.0, 0.02, 5);

    SECTION("free fit within 5%") {
        auto params = fss_fit(curves);
        CHECK(std::abs(params.mu_exp - 6.0) / 6.0 < 0.05);
        CHECK(std::abs(params.b_exp - 3.0) / 3.0 < 0.05);
    }
    SECTION("pinned b") {
        FssFitOptions opt;
        opt.pin_b = true;
        opt.pinned_b = 3.0;
        auto params = fss_fit(curves, opt);
        CHECK(params.b_exp == 3.0);
        CHECK(std::abs(params.mu_exp - 6.0) / 6.0 < 0.05);
    }
    SECTION("one size only throws") {
        std::vector<SizedCurve> one = {curves[0]};
        CHECK_THROWS_AS(fss_fit(one), Error);
    }
}
