#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "pbitmc/engine.hpp"

namespace pbitmc {

/// Transverse coupling J_perp = -(1/beta) ln tanh(beta Gamma'_x / R).
/// Positive for every finite positive argument; the schedule must clamp
/// Gamma'_x away from zero before calling.
inline double jperp(double gamma_prime, double beta, int r) {
    if (gamma_prime <= 0.0)
        throw Error("jperp: gamma_prime must be positive (clamp the schedule)");
    if (beta <= 0.0) throw Error("jperp: beta must be positive");
    if (r < 1) throw Error("jperp: R must be >= 1");
    return -std::log(std::tanh(beta * gamma_prime / r)) / beta;
}

/// Linear anneal of Gamma'_x from gamma_start toward 0 over t_a sweeps.
/// The schedule never evaluates the singular endpoint: with the default
/// clamp the last sweep uses gamma_start / t_a, one linear step above zero.
struct AnnealSchedule {
    long long t_a = 1;
    double gamma_start = 3.0;
    double gamma_end = 0.0;
    double epsilon_clamp = 0.0;  // <= 0 selects gamma_start / t_a

    double gamma_at(long long t) const {
        const double floor_value =
            epsilon_clamp > 0.0 ? epsilon_clamp
                                : gamma_start / static_cast<double>(t_a);
        const double g =
            gamma_start * (1.0 - static_cast<double>(t) / static_cast<double>(t_a));
        return g > floor_value ? g : floor_value;
    }
};

/// R coupled Trotter replicas: longitudinal couplings J_ij / R inside each
/// replica, transverse coupling j_perp along the periodic replica ring.
struct TrotterStack {
    int R = 1;
    const CouplingGraph* base = nullptr;
    double beta = 0.5;               // total inverse temperature
    double j_parallel_scale = 1.0;   // 1/R
    double j_perp = 0.0;             // installed per sweep by the schedule
    std::vector<SpinState> states;   // R states of length base->n
};

/// Classical stack Hamiltonian with the current couplings (the Suzuki-Trotter
/// image of the transverse-field model). Diagnostic / oracle use.
inline double stack_energy(const TrotterStack& stack) {
    const CouplingGraph& g = *stack.base;
    double e = 0.0;
    for (int k = 0; k < stack.R; ++k) {
        const SpinState& s = stack.states[k];
        for (const Edge& edge : g.edges)
            e -= edge.w * stack.j_parallel_scale * s[edge.i] * s[edge.j];
        for (int i = 0; i < g.n; ++i)
            e -= g.bias[i] * stack.j_parallel_scale * s[i];
    }
    if (stack.R == 2) {
        for (int i = 0; i < g.n; ++i)
            e -= 2.0 * stack.j_perp * stack.states[0][i] * stack.states[1][i];
    } else if (stack.R > 2) {
        for (int k = 0; k < stack.R; ++k) {
            const SpinState& s = stack.states[k];
            const SpinState& up = stack.states[(k + 1) % stack.R];
            for (int i = 0; i < g.n; ++i) e -= stack.j_perp * s[i] * up[i];
        }
    }
    return e;
}

/// Materialize the replica network as a plain coupling graph with the given
/// transverse coupling: vertex (i,k) has index k*n + i. R = 2 collapses the
/// duplicate ring pair into a single edge of doubled strength; R = 1 has no
/// transverse couplings.
inline CouplingGraph materialize_trotter_graph(const CouplingGraph& base, int R,
                                               double j_perp) {
    if (R < 1) throw Error("materialize_trotter_graph: R must be >= 1");
    const int n = base.n;
    CouplingGraph out(n * R);
    for (int k = 0; k < R; ++k) {
        for (const Edge& e : base.edges)
            out.add_edge(k * n + e.i, k * n + e.j, e.w / R);
        for (int i = 0; i < n; ++i) out.bias[k * n + i] = base.bias[i] / R;
    }
    if (R == 2) {
        for (int i = 0; i < n; ++i) out.add_edge(i, n + i, 2.0 * j_perp);
    } else if (R > 2) {
        for (int k = 0; k < R; ++k)
            for (int i = 0; i < n; ++i) {
                const int next = (k + 1) % R;
                out.add_edge(k * n + i, next * n + i, j_perp);
            }
    }
    out.finalize();
    return out;
}

/// Chromatic sweep engine for the Trotter stack. Colors follow the replica
/// extension of the base coloring; within a color, replicas are visited in
/// ascending order and base vertices ascending within a replica. Each replica
/// owns an independent random stream keyed by (seed, replica), so replicas
/// could be swept concurrently with unchanged results.
class TrotterSampler {
public:
    TrotterSampler(const CouplingGraph& base, const Coloring& base_coloring,
                   int R, double beta_over_r, std::uint64_t seed)
        : base_coloring_(base_coloring) {
        if (R < 1) throw Error("TrotterSampler: R must be >= 1");
        stack_.R = R;
        stack_.base = &base;
        stack_.beta = beta_over_r * R;
        stack_.j_parallel_scale = 1.0 / R;
        ring_offsets_ = replica_ring_offsets(R);
        const int ring_colors = (R == 1) ? 1 : (R % 2 == 0 ? 2 : 3);
        num_colors_ = std::max(base_coloring.num_colors, ring_colors);

        streams_.reserve(R);
        stack_.states.reserve(R);
        for (int k = 0; k < R; ++k) {
            streams_.emplace_back(stream_key(seed, {0x5EEDull, static_cast<std::uint64_t>(k)}));
            stack_.states.push_back(random_state(base.n, streams_.back()));
        }

        const int span = base.integer_couplings() ? base.max_abs_field() : -1;
        integer_mode_ = span >= 0 && span <= 4096;
        if (integer_mode_) {
            span_ = span;
            int_weights_.resize(base.adj_weight.size());
            for (std::size_t k = 0; k < base.adj_weight.size(); ++k)
                int_weights_[k] = static_cast<std::int8_t>(base.adj_weight[k]);
            table_.resize(3 * (2 * span_ + 1));
        }
    }

    /// Install the transverse field for the coming sweep.
    void set_gamma(double gamma_prime) {
        stack_.j_perp = stack_.R == 1 ? 0.0 : jperp(gamma_prime, stack_.beta, stack_.R);
        if (integer_mode_) {
            for (int s = -span_; s <= span_; ++s)
                for (int t = -2; t <= 2; t += 2)
                    table_[static_cast<std::size_t>(s + span_) * 3 + (t + 2) / 2] =
                        std::tanh(stack_.beta * (s * stack_.j_parallel_scale +
                                                 stack_.j_perp * t));
        }
    }

    void sweep() {
        const CouplingGraph& g = *stack_.base;
        const int R = stack_.R;
        for (int c = 0; c < num_colors_; ++c) {
            for (int k = 0; k < R; ++k) {
                const int base_color = (((c - ring_offsets_[k]) % num_colors_) +
                                        num_colors_) % num_colors_;
                if (base_color >= base_coloring_.num_colors) continue;
                SpinState& s = stack_.states[k];
                const SpinState* down = nullptr;
                const SpinState* up = nullptr;
                if (R == 2) {
                    up = &stack_.states[1 - k];
                } else if (R > 2) {
                    down = &stack_.states[(k + R - 1) % R];
                    up = &stack_.states[(k + 1) % R];
                }
                Rng& rng = streams_[k];
                if (integer_mode_) {
                    for (int v : base_coloring_.groups[base_color]) {
                        int field = 0;
                        for (int a = g.adj_offset[v]; a < g.adj_offset[v + 1]; ++a)
                            field += int_weights_[a] * s[g.adj_vertex[a]];
                        int ring = 0;
                        if (R == 2)
                            ring = 2 * (*up)[v];
                        else if (R > 2)
                            ring = (*down)[v] + (*up)[v];
                        const double th =
                            table_[static_cast<std::size_t>(field + span_) * 3 +
                                   (ring + 2) / 2];
                        s[v] = th >= rng.uniform_pm1() ? spin_t{1} : spin_t{-1};
                    }
                } else {
                    for (int v : base_coloring_.groups[base_color]) {
                        double field = g.bias[v];
                        for (int a = g.adj_offset[v]; a < g.adj_offset[v + 1]; ++a)
                            field += g.adj_weight[a] * s[g.adj_vertex[a]];
                        field *= stack_.j_parallel_scale;
                        if (R == 2)
                            field += stack_.j_perp * 2.0 * (*up)[v];
                        else if (R > 2)
                            field += stack_.j_perp * ((*down)[v] + (*up)[v]);
                        s[v] = pbit_apply(stack_.beta, field, rng.uniform_pm1());
                    }
                }
            }
        }
    }

    const TrotterStack& stack() const { return stack_; }
    TrotterStack& stack() { return stack_; }

    /// Route updates through the generic tanh path (equivalence checks).
    void force_generic_path() { integer_mode_ = false; }

private:
    TrotterStack stack_;
    Coloring base_coloring_;
    std::vector<int> ring_offsets_;
    int num_colors_ = 1;
    std::vector<Rng> streams_;
    bool integer_mode_ = false;
    int span_ = 0;
    std::vector<std::int8_t> int_weights_;
    std::vector<double> table_;
};

/// Average replica-replica correlation C_r = (1/n) sum_i s_{i,0} s_{i,r}.
inline std::vector<double> replica_correlation(const TrotterStack& stack) {
    const int n = stack.base->n;
    std::vector<double> c(stack.R, 0.0);
    for (int r = 0; r < stack.R; ++r) {
        long long acc = 0;
        for (int i = 0; i < n; ++i)
            acc += stack.states[0][i] * stack.states[r][i];
        c[r] = static_cast<double>(acc) / n;
    }
    return c;
}

struct DtsqaConfig {
    double beta_over_r = 0.5;   // beta = 0.5 R unless overridden
    double gamma_start = 3.0;
    double epsilon_clamp = 0.0;  // <= 0 selects gamma_start / t_a
    bool compute_correlation = false;
};

struct DtsqaResult {
    double best_energy = 0.0;
    double mean_replica_energy = 0.0;
    std::vector<double> per_replica_energies;
    SpinState best_state;
    std::uint64_t seed = 0;
    long long t_a = 0;
    std::vector<double> correlation;  // filled when requested
};

/// One DT-SQA anneal: random init, t_a chromatic sweeps of the replica
/// network with the scheduled transverse coupling, then each replica scored
/// under the original base Hamiltonian (unscaled J) and the best selected.
inline DtsqaResult run_dtsqa(const CouplingGraph& base, int R, long long t_a,
                             std::uint64_t seed, const DtsqaConfig& cfg = {},
                             const Coloring* base_coloring = nullptr) {
    if (t_a < 1) throw Error("run_dtsqa: t_a must be >= 1");
    Coloring local;
    if (!base_coloring) {
        local = dsatur(base);
        base_coloring = &local;
    }
    TrotterSampler sampler(base, *base_coloring, R, cfg.beta_over_r, seed);
    AnnealSchedule sched{t_a, cfg.gamma_start, 0.0, cfg.epsilon_clamp};
    for (long long t = 0; t < t_a; ++t) {
        sampler.set_gamma(sched.gamma_at(t));
        sampler.sweep();
    }

    const TrotterStack& stack = sampler.stack();
    DtsqaResult res;
    res.seed = seed;
    res.t_a = t_a;
    res.per_replica_energies.reserve(R);
    int best_k = 0;
    for (int k = 0; k < R; ++k) {
        res.per_replica_energies.push_back(energy(base, stack.states[k]));
        if (res.per_replica_energies[k] < res.per_replica_energies[best_k])
            best_k = k;
        res.mean_replica_energy += res.per_replica_energies[k];
    }
    res.mean_replica_energy /= R;
    res.best_energy = res.per_replica_energies[best_k];
    res.best_state = stack.states[best_k];
    if (cfg.compute_correlation) res.correlation = replica_correlation(stack);
    return res;
}

struct DtsqaIndependentResult {
    double best_energy = 0.0;
    std::vector<double> per_run_minima;                    // length P
    std::vector<std::vector<double>> per_run_replica_energies;  // P x R
};

/// P independent DT-SQA runs with distinct streams; the pool feeding the
/// extreme-value analysis.
inline DtsqaIndependentResult run_dtsqa_independent(const CouplingGraph& base,
                                                    int R, int P, long long t_a,
                                                    std::uint64_t seed,
                                                    const DtsqaConfig& cfg = {},
                                                    const Coloring* base_coloring = nullptr) {
    if (P < 1) throw Error("run_dtsqa_independent: P must be >= 1");
    Coloring local;
    if (!base_coloring) {
        local = dsatur(base);
        base_coloring = &local;
    }
    DtsqaIndependentResult out;
    out.best_energy = std::numeric_limits<double>::infinity();
    for (int p = 0; p < P; ++p) {
        // p = 0 reuses the caller's seed so that P = 1 is exactly run_dtsqa.
        const std::uint64_t run_seed =
            p == 0 ? seed
                   : stream_key(seed, {0x1DE9ull, static_cast<std::uint64_t>(p)});
        auto res = run_dtsqa(base, R, t_a, run_seed, cfg, base_coloring);
        out.per_run_minima.push_back(res.best_energy);
        out.per_run_replica_energies.push_back(std::move(res.per_replica_energies));
        out.best_energy = std::min(out.best_energy, res.best_energy);
    }
    return out;
}

}  // namespace pbitmc
