#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pbitmc/coloring.hpp"
#include "pbitmc/graph.hpp"
#include "pbitmc/rng.hpp"

namespace pbitmc {

using spin_t = std::int8_t;
using SpinState = std::vector<spin_t>;  // entries are exactly -1 or +1

inline SpinState random_state(int n, Rng& rng) {
    SpinState s(n);
    for (auto& v : s) v = static_cast<spin_t>(rng.plus_minus_one());
    return s;
}

inline bool valid_spin_state(const SpinState& s) {
    for (spin_t v : s)
        if (v != 1 && v != -1) return false;
    return true;
}

/// Local field I_i = sum_j J_ij sigma_j + h_i.
inline double local_field(const CouplingGraph& graph, const SpinState& state, int i) {
    if (i < 0 || i >= graph.n) throw Error("local_field: index out of range");
    double field = graph.bias[i];
    for (int k = graph.adj_offset[i]; k < graph.adj_offset[i + 1]; ++k)
        field += graph.adj_weight[k] * state[graph.adj_vertex[k]];
    return field;
}

/// Ising energy E = -sum_{i<j} J_ij s_i s_j - sum_i h_i s_i.
inline double energy(const CouplingGraph& graph, const SpinState& state) {
    if (static_cast<int>(state.size()) != graph.n)
        throw Error("energy: state size mismatch");
    double e = 0.0;
    for (const Edge& edge : graph.edges)
        e -= edge.w * state[edge.i] * state[edge.j];
    for (int i = 0; i < graph.n; ++i) e -= graph.bias[i] * state[i];
    return e;
}

/// The p-bit activation: sgn(tanh(beta*I) - r) with r uniform on [-1,1),
/// i.e. +1 with probability (1 + tanh(beta*I)) / 2.
inline spin_t pbit_apply(double beta, double field, double r) {
    return std::tanh(beta * field) >= r ? spin_t{1} : spin_t{-1};
}

/// Sampler state for one replica: problem, update schedule, temperature and
/// the private random stream. Single-owner during a sweep; distinct contexts
/// run in parallel with no coordination.
struct SamplerContext {
    const CouplingGraph* graph = nullptr;
    const Coloring* coloring = nullptr;
    double beta = 1.0;
    Rng rng;

    // Integer fast path: for graphs with integer J and h == 0 the local field
    // is an integer, so tanh(beta*I) is read from a small table. Entries are
    // computed with the same expression as the generic path, keeping the two
    // paths bit-identical.
    bool integer_mode = false;
    std::vector<std::int8_t> int_weights;  // parallel to graph adjacency
    std::vector<double> tanh_table;        // index s + table_span
    int table_span = 0;

    SamplerContext() = default;

    SamplerContext(const CouplingGraph& g, const Coloring& c, double beta_in,
                   std::uint64_t stream)
        : graph(&g), coloring(&c), beta(beta_in), rng(stream) {
        if (beta < 0) throw Error("SamplerContext: beta must be >= 0");
        const int span = g.integer_couplings() ? g.max_abs_field() : -1;
        if (span >= 0 && span <= 4096) {
            integer_mode = true;
            table_span = span;
            int_weights.resize(g.adj_weight.size());
            for (std::size_t k = 0; k < g.adj_weight.size(); ++k)
                int_weights[k] = static_cast<std::int8_t>(g.adj_weight[k]);
            rebuild_table();
        }
    }

    void rebuild_table() {
        tanh_table.resize(2 * table_span + 1);
        for (int s = -table_span; s <= table_span; ++s)
            tanh_table[s + table_span] = std::tanh(beta * static_cast<double>(s));
    }

    void set_beta(double b) {
        beta = b;
        if (integer_mode) rebuild_table();
    }
};

/// One p-bit update of spin i: draws from the context stream and returns the
/// new spin value (the caller stores it).
inline spin_t pbit_update(SamplerContext& ctx, const SpinState& state, int i) {
    const double field = local_field(*ctx.graph, state, i);
    return pbit_apply(ctx.beta, field, ctx.rng.uniform_pm1());
}

namespace detail {

// Core of the chromatic sweep. Colors are processed in ascending order and
// vertices in ascending order within a color; one draw per vertex in that
// order. Same-color vertices are non-adjacent, so in-place updates equal the
// update-from-phase-start semantics. When TrackEnergy is set the running
// energy is maintained exactly via delta = 2 * old_spin * field.
template <bool TrackEnergy>
inline void sweep_impl(SamplerContext& ctx, SpinState& state, double* energy_acc) {
    const CouplingGraph& g = *ctx.graph;
    if (ctx.integer_mode) {
        for (const auto& group : ctx.coloring->groups) {
            for (int v : group) {
                int s = 0;
                for (int k = g.adj_offset[v]; k < g.adj_offset[v + 1]; ++k)
                    s += ctx.int_weights[k] * state[g.adj_vertex[k]];
                const double r = ctx.rng.uniform_pm1();
                const spin_t next = ctx.tanh_table[s + ctx.table_span] >= r
                                        ? spin_t{1}
                                        : spin_t{-1};
                if constexpr (TrackEnergy) {
                    if (next != state[v]) *energy_acc += 2.0 * state[v] * s;
                }
                state[v] = next;
            }
        }
    } else {
        for (const auto& group : ctx.coloring->groups) {
            for (int v : group) {
                double field = g.bias[v];
                for (int k = g.adj_offset[v]; k < g.adj_offset[v + 1]; ++k)
                    field += g.adj_weight[k] * state[g.adj_vertex[k]];
                const spin_t next = pbit_apply(ctx.beta, field, ctx.rng.uniform_pm1());
                if constexpr (TrackEnergy) {
                    if (next != state[v]) *energy_acc += 2.0 * state[v] * field;
                }
                state[v] = next;
            }
        }
    }
}

}  // namespace detail

/// One Monte Carlo sweep: every spin updated exactly once, color classes
/// processed sequentially.
inline void chromatic_sweep(SamplerContext& ctx, SpinState& state) {
    detail::sweep_impl<false>(ctx, state, nullptr);
}

/// One color phase of a sweep. Every phase leaves the Boltzmann distribution
/// invariant, so phase-boundary states are valid stationary samples.
inline void chromatic_phase(SamplerContext& ctx, SpinState& state, int color) {
    const CouplingGraph& g = *ctx.graph;
    for (int v : ctx.coloring->groups.at(color)) {
        if (ctx.integer_mode) {
            int s = 0;
            for (int k = g.adj_offset[v]; k < g.adj_offset[v + 1]; ++k)
                s += ctx.int_weights[k] * state[g.adj_vertex[k]];
            state[v] = ctx.tanh_table[s + ctx.table_span] >= ctx.rng.uniform_pm1()
                           ? spin_t{1}
                           : spin_t{-1};
        } else {
            double field = g.bias[v];
            for (int k = g.adj_offset[v]; k < g.adj_offset[v + 1]; ++k)
                field += g.adj_weight[k] * state[g.adj_vertex[k]];
            state[v] = pbit_apply(ctx.beta, field, ctx.rng.uniform_pm1());
        }
    }
}

/// Sweep that also maintains the Ising energy of the state.
inline void chromatic_sweep_tracked(SamplerContext& ctx, SpinState& state,
                                    double& state_energy) {
    detail::sweep_impl<true>(ctx, state, &state_energy);
}

// ---------------------------------------------------------------------------
// Exact enumeration oracle
// ---------------------------------------------------------------------------

/// State index encoding: bit i of the index is 1 iff spin i is +1.
inline SpinState state_from_index(std::uint32_t index, int n) {
    SpinState s(n);
    for (int i = 0; i < n; ++i)
        s[i] = (index >> i) & 1u ? spin_t{1} : spin_t{-1};
    return s;
}

inline std::uint32_t state_to_index(const SpinState& s) {
    std::uint32_t idx = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] > 0) idx |= 1u << i;
    return idx;
}

/// Boltzmann distribution p = exp(-beta E) / Z over all 2^n states by full
/// enumeration. Guarded to n <= 24.
inline std::vector<double> exact_boltzmann(const CouplingGraph& graph, double beta) {
    if (graph.n > 24) throw Error("exact_boltzmann: n > 24");
    const std::size_t count = std::size_t{1} << graph.n;
    std::vector<double> log_weight(count);
    double max_lw = -1e300;
    for (std::size_t idx = 0; idx < count; ++idx) {
        const SpinState s = state_from_index(static_cast<std::uint32_t>(idx), graph.n);
        const double lw = -beta * energy(graph, s);
        log_weight[idx] = lw;
        max_lw = std::max(max_lw, lw);
    }
    double z = 0.0;
    for (double& lw : log_weight) {
        lw = std::exp(lw - max_lw);
        z += lw;
    }
    for (double& w : log_weight) w /= z;
    return log_weight;
}

/// Total-variation distance between two distributions over the same support.
inline double total_variation(const std::vector<double>& p,
                              const std::vector<double>& q) {
    if (p.size() != q.size()) throw Error("total_variation: size mismatch");
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
    return 0.5 * tv;
}

}  // namespace pbitmc
