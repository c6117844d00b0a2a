#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "pbitmc/apt.hpp"

using namespace pbitmc;

namespace {

CouplingGraph open_ferromagnet(int lx, int ly, int lz) {
    LatticeSpec spec{lx, ly, lz, {false, false, false}, {}};
    CouplingGraph g(lx * ly * lz);
    for (auto [a, b] : lattice_bonds(spec)) g.add_edge(a, b, 1.0);
    g.finalize();
    return g;
}

double exhaustive_minimum(const CouplingGraph& g) {
    double e0 = 1e300;
    for (std::uint32_t idx = 0; idx < (1u << g.n); ++idx)
        e0 = std::min(e0, energy(g, state_from_index(idx, g.n)));
    return e0;
}

}  // namespace

TEST_CASE("swap probability") {
    CHECK(swap_probability(0.0, 0.3) == 1.0);
    CHECK(swap_probability(5.0, 0.0) == 1.0);
    CHECK(swap_probability(10.0, 0.2) == 1.0);  // capped
    CHECK(swap_probability(-10.0, 0.1) == Catch::Approx(std::exp(-1.0)).epsilon(1e-15));
}

TEST_CASE("icm move") {
    auto g = build_ea_lattice({4, 4, 4, {}, {}}, 10);
    Rng rng(55);

    SECTION("identical replicas are a no-op") {
        auto a = random_state(g.n, rng);
        auto b = a;
        auto out = icm_move(g, a, b, rng);
        CHECK_FALSE(out.moved);
        CHECK(a == b);
    }
    SECTION("fully opposite replicas trigger the global flip branch") {
        auto a = random_state(g.n, rng);
        SpinState b(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) b[i] = static_cast<spin_t>(-a[i]);
        const double ea = energy(g, a), eb = energy(g, b);
        auto out = icm_move(g, a, b, rng);
        CHECK(out.moved);
        CHECK(out.global_flip);
        CHECK(out.cluster_size == g.n);
        CHECK(energy(g, a) == ea);  // h = 0: global flips conserve each energy
        CHECK(energy(g, b) == eb);
        // Flipping one replica of an opposite pair makes them identical.
        CHECK(a == b);
    }
    SECTION("pair energy is conserved exactly over many moves") {
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            auto inst = build_ea_lattice({4, 4, 4, {}, {}}, 60 + seed);
            auto a = random_state(inst.n, rng);
            auto b = random_state(inst.n, rng);
            for (int move = 0; move < 2500; ++move) {
                const double before_a = energy(inst, a), before_b = energy(inst, b);
                auto out = icm_move(inst, a, b, rng);
                const double after_a = energy(inst, a), after_b = energy(inst, b);
                REQUIRE(after_a + after_b == before_a + before_b);  // integer exact
                REQUIRE(after_a - before_a == out.delta_e_a);
                if (!out.moved) break;
            }
        }
    }
    SECTION("biases are rejected") {
        CouplingGraph biased(3);
        biased.add_edge(0, 1, 1.0);
        biased.bias[2] = 0.5;
        biased.finalize();
        SpinState a{1, 1, 1}, b{1, -1, 1};
        CHECK_THROWS_AS(icm_move(biased, a, b, rng), Error);
    }
}

TEST_CASE("adaptive beta schedule") {
    auto g = build_ea_lattice({4, 4, 4, {}, {}}, 71);

    SECTION("ladder structure and increments") {
        auto ladder = adaptive_beta_schedule(g, 1.25, 0.5, 8, 600, 200, 0.5, 42);
        REQUIRE(ladder.size() >= 2);
        CHECK(ladder.betas.front() == 0.5);
        for (int k = 1; k < ladder.size(); ++k) {
            CHECK(ladder.betas[k] > ladder.betas[k - 1]);
            const double inc = ladder.betas[k] - ladder.betas[k - 1];
            CHECK(inc == Catch::Approx(1.25 / ladder.sigma_e[k - 1]).margin(1e-12));
        }
        CHECK(ladder.sigma_e.back() < 0.5);

        // Energy scatter shrinks along the ladder (statistical: allow slack).
        int violations = 0;
        for (int k = 1; k < ladder.size(); ++k)
            violations += ladder.sigma_e[k] > ladder.sigma_e[k - 1] * 1.05;
        CHECK(violations <= ladder.size() / 4);
    }
    SECTION("frozen chains raise when the tolerance cannot stop first") {
        auto ferro = open_ferromagnet(2, 2, 2);
        CHECK_THROWS_WITH(
            adaptive_beta_schedule(ferro, 1.0, 25.0, 4, 400, 100, -1.0, 7),
            Catch::Matchers::ContainsSubstring("frozen"));
    }
    SECTION("parameter guards") {
        CHECK_THROWS_AS(adaptive_beta_schedule(g, 0.0, 0.5, 4, 100, 50, 0.5, 1), Error);
        CHECK_THROWS_AS(adaptive_beta_schedule(g, 1.0, 0.0, 4, 100, 50, 0.5, 1), Error);
        CHECK_THROWS_AS(adaptive_beta_schedule(g, 1.0, 0.5, 1, 100, 50, 0.5, 1), Error);
        CHECK_THROWS_AS(adaptive_beta_schedule(g, 1.0, 0.5, 4, 10, 50, 0.5, 1), Error);
    }
}

TEST_CASE("ladder csv export") {
    TemperatureLadder ladder;
    ladder.betas = {0.5, 0.9, 1.4};
    ladder.sigma_e = {3.0, 1.5, 0.4};
    const auto path =
        (std::filesystem::temp_directory_path() / "pbitmc_ladder.csv").string();
    save_ladder_csv(ladder, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "index,beta,sigma_E");
    std::getline(in, line);
    CHECK(line.rfind("0,0.5,3", 0) == 0);
    std::remove(path.c_str());
}

TEST_CASE("swap phase preserves the configuration multiset") {
    Rng rng(77);
    const int rungs = 5, m = 3, n = 10;
    std::vector<double> betas = {0.3, 0.5, 0.8, 1.2, 1.9};
    std::vector<SpinState> states;
    std::vector<double> energies;
    for (int i = 0; i < rungs * m; ++i) {
        states.push_back(random_state(n, rng));
        energies.push_back(double(int(rng.below(20))) - 10.0);
    }
    auto freeze = [&](const std::vector<SpinState>& ss) {
        std::multiset<std::vector<spin_t>> out;
        for (const auto& s : ss) out.insert(s);
        return out;
    };
    const auto before = freeze(states);
    SwapStats stats;
    for (long long attempt = 1; attempt <= 10; ++attempt)
        apt_swap_phase(betas, m, attempt, states, energies, rng, stats);
    CHECK(freeze(states) == before);
    CHECK(stats.attempted.size() == rungs - 1);
}

TEST_CASE("swap acceptance statistics") {
    SECTION("no attempts is an error") {
        SwapStats stats;
        stats.attempted = {0, 0};
        stats.accepted = {0, 0};
        CHECK_THROWS_AS(swap_acceptance_rates(stats), Error);
    }
    SECTION("equal energies always accept") {
        Rng rng(3);
        std::vector<double> betas = {0.4, 0.9};
        std::vector<SpinState> states(2, SpinState(4, 1));
        std::vector<double> energies = {-2.0, -2.0};
        SwapStats stats;
        for (long long attempt = 1; attempt <= 101; ++attempt)
            apt_swap_phase(betas, 1, attempt, states, energies, rng, stats);
        auto rates = swap_acceptance_rates(stats);
        CHECK(rates[0] == 1.0);
    }
    SECTION("two-temperature toy matches the enumerated acceptance") {
        CouplingGraph bond(2);
        bond.add_edge(0, 1, 1.0);
        bond.finalize();
        TemperatureLadder ladder;
        ladder.betas = {0.4, 0.9};
        ladder.sigma_e = {0, 0};
        ladder.m_icm = 1;

        // Expected rate under exact Boltzmann sampling of both rungs.
        const auto pa = exact_boltzmann(bond, 0.4);
        const auto pb = exact_boltzmann(bond, 0.9);
        double expected = 0.0;
        for (std::uint32_t s1 = 0; s1 < 4; ++s1)
            for (std::uint32_t s2 = 0; s2 < 4; ++s2) {
                const double e1 = energy(bond, state_from_index(s1, 2));
                const double e2 = energy(bond, state_from_index(s2, 2));
                expected += pa[s1] * pb[s2] * swap_probability(e2 - e1, 0.5);
            }

        AptConfig cfg;
        cfg.n_swap_attempts = 300000;
        auto result = run_apt(bond, ladder, cfg, 99, false);
        auto rates = swap_acceptance_rates(result.swap_stats);
        CHECK(rates[0] == Catch::Approx(expected).margin(0.01));
    }
}

TEST_CASE("apt running minimum never increases") {
    auto g = build_ea_lattice({3, 3, 4, {}, {}}, 81);
    TemperatureLadder ladder;
    ladder.betas = {0.5, 0.8, 1.2, 1.8};
    ladder.sigma_e = {0, 0, 0, 0};
    ladder.m_icm = 4;
    AptConfig cfg;
    cfg.n_swap_attempts = 400;
    auto result = run_apt(g, ladder, cfg, 5, true);
    REQUIRE(result.running_min.size() == 400);
    for (std::size_t k = 1; k < result.running_min.size(); ++k)
        CHECK(result.running_min[k] <= result.running_min[k - 1]);
    CHECK(result.min_energy == result.running_min.back());
    CHECK(energy(g, result.best_state) == result.min_energy);
}

TEST_CASE("apt samples Boltzmann marginals at both temperatures") {
    auto g = build_ea_lattice({2, 2, 2, {false, false, false}, {}}, 40);
    REQUIRE(g.n == 8);
    TemperatureLadder ladder;
    ladder.betas = {0.3, 0.6};
    ladder.sigma_e = {0, 0};
    ladder.m_icm = 1;
    AptConfig cfg;
    cfg.n_swap_attempts = 150000;

    std::vector<std::vector<double>> hist(2, std::vector<double>(256, 0.0));
    auto observer = [&](const AptEnsemble& view) {
        hist[0][state_to_index((*view.states)[0])] += 1.0;
        hist[1][state_to_index((*view.states)[1])] += 1.0;
    };
    run_apt(g, ladder, cfg, 31, false, observer);
    for (int rung = 0; rung < 2; ++rung) {
        for (double& h : hist[rung]) h /= double(cfg.n_swap_attempts);
        const auto exact = exact_boltzmann(g, ladder.betas[rung]);
        CHECK(total_variation(hist[rung], exact) < 0.03);
    }
}

TEST_CASE("apt guards") {
    auto g = build_ea_lattice({3, 3, 3, {}, {}}, 2);
    TemperatureLadder ladder;
    ladder.betas = {0.5};
    ladder.sigma_e = {0};
    CHECK_THROWS_AS(run_apt(g, ladder, {}, 1, false), Error);  // M < 2
    ladder.betas = {0.5, 0.4};
    ladder.sigma_e = {0, 0};
    CHECK_THROWS_AS(run_apt(g, ladder, {}, 1, false), Error);  // not increasing
    ladder.betas = {0.5, 0.9};
    ladder.m_icm = 1;
    CHECK_THROWS_AS(run_apt(g, ladder, {}, 1, true), Error);  // ICM needs m >= 2
}

TEST_CASE("ground energy estimation") {
    SECTION("ferromagnet reaches the aligned ground state") {
        auto ferro = open_ferromagnet(2, 2, 2);
        AptConfig cfg;
        cfg.chains = 16;
        cfg.pre_sweeps = 2000;
        cfg.pre_tail = 500;
        auto rec = estimate_ground_energy(ferro, 500, cfg, 12);
        CHECK(rec.e0 == -double(ferro.edges.size()));
        CHECK(rec.provenance == Provenance::estimated);
        CHECK(rec.instance_id == instance_id(ferro));
    }
    SECTION("small EA instance matches exhaustive enumeration") {
        auto g = build_ea_lattice({2, 2, 3, {false, false, false}, {}}, 19);
        REQUIRE(g.n == 12);
        AptConfig cfg;
        cfg.chains = 8;
        cfg.pre_sweeps = 1000;
        cfg.pre_tail = 300;
        auto rec = estimate_ground_energy(g, 2000, cfg, 21);
        CHECK(rec.e0 == exhaustive_minimum(g));
    }
    SECTION("budget guard") {
        auto g = build_ea_lattice({3, 3, 3, {}, {}}, 1);
        CHECK_THROWS_AS(estimate_ground_energy(g, 0, {}, 1), Error);
    }
}
