#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "pbitmc/engine.hpp"

using namespace pbitmc;

namespace {

CouplingGraph star_graph(int leaves, double w) {
    CouplingGraph g(leaves + 1);
    for (int i = 1; i <= leaves; ++i) g.add_edge(0, i, w);
    g.finalize();
    return g;
}

CouplingGraph random_ea_graph(int n, double edge_prob, std::uint64_t seed) {
    CouplingGraph g(n);
    Rng rng(seed);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.uniform01() < edge_prob)
                g.add_edge(i, j, rng.plus_minus_one());
    g.finalize();
    return g;
}

// Dense matrix-vector oracle for local fields and energies.
double dense_field(const CouplingGraph& g, const SpinState& s, int i) {
    std::vector<std::vector<double>> J(g.n, std::vector<double>(g.n, 0.0));
    for (const Edge& e : g.edges) J[e.i][e.j] = J[e.j][e.i] = e.w;
    double f = g.bias[i];
    for (int j = 0; j < g.n; ++j) f += J[i][j] * s[j];
    return f;
}

double dense_energy(const CouplingGraph& g, const SpinState& s) {
    std::vector<std::vector<double>> J(g.n, std::vector<double>(g.n, 0.0));
    for (const Edge& e : g.edges) J[e.i][e.j] = J[e.j][e.i] = e.w;
    double e = 0.0;
    for (int i = 0; i < g.n; ++i)
        for (int j = i + 1; j < g.n; ++j) e -= J[i][j] * s[i] * s[j];
    for (int i = 0; i < g.n; ++i) e -= g.bias[i] * s[i];
    return e;
}

}  // namespace

TEST_CASE("local field") {
    auto star = star_graph(6, 1.0);
    SpinState all_up(star.n, 1);
    CHECK(local_field(star, all_up, 0) == 6.0);

    CouplingGraph isolated(1);
    isolated.bias[0] = 0.25;
    isolated.finalize();
    CHECK(local_field(isolated, {1}, 0) == 0.25);

    auto g = random_ea_graph(10, 0.4, 17);
    Rng rng(3);
    auto s = random_state(g.n, rng);
    for (int i = 0; i < g.n; ++i)
        CHECK(local_field(g, s, i) == Catch::Approx(dense_field(g, s, i)).margin(0));

    CHECK_THROWS_AS(local_field(g, s, 10), Error);
}

TEST_CASE("energy") {
    auto star = star_graph(5, 1.0);
    SpinState all_up(star.n, 1);
    CHECK(energy(star, all_up) == -5.0);

    CouplingGraph bond(2);
    bond.add_edge(0, 1, -1.0);
    bond.finalize();
    CHECK(energy(bond, {1, 1}) == 1.0);

    auto g = random_ea_graph(12, 0.35, 23);
    Rng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        auto s = random_state(g.n, rng);
        CHECK(energy(g, s) == dense_energy(g, s));
    }

    SECTION("global flip symmetry at h == 0") {
        for (int rep = 0; rep < 20; ++rep) {
            auto s = random_state(g.n, rng);
            SpinState flipped(s.size());
            for (std::size_t i = 0; i < s.size(); ++i)
                flipped[i] = static_cast<spin_t>(-s[i]);
            CHECK(energy(g, s) == energy(g, flipped));
        }
    }
    CHECK_THROWS_AS(energy(g, SpinState(5, 1)), Error);
}

TEST_CASE("pbit update statistics") {
    auto star = star_graph(2, 1.0);
    auto coloring = dsatur(star);

    SECTION("beta = 0 gives a fair coin") {
        SamplerContext ctx(star, coloring, 0.0, 42);
        SpinState s(star.n, 1);
        const int draws = 100000;
        int plus = 0;
        for (int t = 0; t < draws; ++t) plus += pbit_update(ctx, s, 0) > 0;
        const double sigma = std::sqrt(0.25 / draws);
        CHECK(std::abs(double(plus) / draws - 0.5) < 4 * sigma);
    }
    SECTION("saturated activation is deterministic") {
        SamplerContext ctx(star, coloring, 1e6, 43);
        SpinState s(star.n, 1);  // field at hub = +2
        for (int t = 0; t < 10000; ++t) REQUIRE(pbit_update(ctx, s, 0) == 1);
    }
    SECTION("P(+1) matches (1 + tanh(beta I)) / 2 on a grid") {
        // Hub field is I = 2 with both leaves up; vary beta to vary beta*I.
        for (double beta : {0.25, 0.5, 1.0}) {
            SamplerContext ctx(star, coloring, beta, 44);
            SpinState s(star.n, 1);
            const int draws = 200000;
            int plus = 0;
            for (int t = 0; t < draws; ++t) plus += pbit_update(ctx, s, 0) > 0;
            const double p = (1.0 + std::tanh(beta * 2.0)) / 2.0;
            const double sigma = std::sqrt(p * (1 - p) / draws);
            CHECK(std::abs(double(plus) / draws - p) < 4 * sigma);
        }
    }
}

TEST_CASE("chromatic sweep updates every spin once") {
    auto g = random_ea_graph(16, 0.3, 31);
    auto coloring = dsatur(g);
    SamplerContext ctx(g, coloring, 0.7, 7);
    Rng init(9);
    auto s = random_state(g.n, init);
    auto before = s;
    chromatic_sweep(ctx, s);
    int hamming = 0;
    for (int i = 0; i < g.n; ++i) hamming += s[i] != before[i];
    CHECK(hamming <= g.n);
    CHECK(valid_spin_state(s));
}

TEST_CASE("within-color update order does not matter") {
    auto g = build_ea_lattice({3, 3, 4, {}, {}}, 77);
    auto coloring = dsatur(g);
    Rng draw_rng(13), init(14);
    std::vector<double> draws(g.n);
    for (auto& d : draws) d = draw_rng.uniform_pm1();
    const double beta = 0.6;

    auto start = random_state(g.n, init);

    // Ascending order within each color.
    auto a = start;
    for (const auto& group : coloring.groups)
        for (int v : group) a[v] = pbit_apply(beta, local_field(g, a, v), draws[v]);

    // Descending order within each color, same per-spin draws.
    auto b = start;
    for (const auto& group : coloring.groups)
        for (auto it = group.rbegin(); it != group.rend(); ++it)
            *&b[*it] = pbit_apply(beta, local_field(g, b, *it), draws[*it]);

    CHECK(a == b);
}

TEST_CASE("integer fast path is bit-identical to the generic path") {
    auto g = build_ea_lattice({3, 3, 3, {}, {}}, 55);
    auto coloring = dsatur(g);

    SamplerContext fast(g, coloring, 0.8, 101);
    SamplerContext slow(g, coloring, 0.8, 101);
    REQUIRE(fast.integer_mode);
    slow.integer_mode = false;  // force the generic kernel

    Rng init(2);
    auto sa = random_state(g.n, init);
    auto sb = sa;
    double ea = energy(g, sa);
    for (int t = 0; t < 500; ++t) {
        chromatic_sweep_tracked(fast, sa, ea);
        chromatic_sweep(slow, sb);
        REQUIRE(sa == sb);
    }
    CHECK(ea == energy(g, sa));
}

TEST_CASE("exact boltzmann") {
    CouplingGraph bond(2);
    bond.add_edge(0, 1, 1.0);
    bond.finalize();

    SECTION("closed form for a single ferromagnetic bond") {
        const double beta = 0.9;
        auto p = exact_boltzmann(bond, beta);
        const double expect = std::exp(beta) / (2 * std::exp(beta) + 2 * std::exp(-beta));
        CHECK(p[0] == Catch::Approx(expect).epsilon(1e-12));  // both down
        CHECK(p[3] == Catch::Approx(expect).epsilon(1e-12));  // both up
    }
    SECTION("infinite temperature is uniform") {
        auto g = random_ea_graph(6, 0.5, 3);
        auto p = exact_boltzmann(g, 0.0);
        for (double v : p) CHECK(v == Catch::Approx(1.0 / 64).epsilon(1e-12));
    }
    SECTION("normalization") {
        auto g = random_ea_graph(10, 0.3, 4);
        auto p = exact_boltzmann(g, 1.3);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) ==
              Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("enumeration guard") {
        CHECK_THROWS_AS(exact_boltzmann(CouplingGraph(25), 1.0), Error);
    }
}

TEST_CASE("chromatic sweep samples the Boltzmann distribution") {
    // 2x2x2 open cube, n = 8: long run against exact enumeration.
    auto g = build_ea_lattice({2, 2, 2, {false, false, false}, {}}, 19);
    auto coloring = dsatur(g);
    const double beta = 0.4;
    SamplerContext ctx(g, coloring, beta, 1234);
    auto s = random_state(g.n, ctx.rng);

    const int sweeps = 400000;
    std::vector<double> hist(std::size_t{1} << g.n, 0.0);
    for (int t = 0; t < sweeps; ++t) {
        chromatic_sweep(ctx, s);
        hist[state_to_index(s)] += 1.0;
    }
    for (double& h : hist) h /= sweeps;
    const auto exact = exact_boltzmann(g, beta);
    CHECK(total_variation(hist, exact) < 0.02);
}
