#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "pbitmc/engine.hpp"

namespace pbitmc {

/// Metropolis swap acceptance min(1, exp(dbeta * dE)) with
/// dE = E_{i+1} - E_i and dbeta = beta_{i+1} - beta_i.
inline double swap_probability(double delta_e, double delta_beta) {
    const double p = std::exp(delta_beta * delta_e);
    return p < 1.0 ? p : 1.0;
}

/// Inverse-temperature ladder produced by the adaptive preprocessing, with
/// the measured energy scatter per rung and the ICM multiplicity.
struct TemperatureLadder {
    std::vector<double> betas;    // strictly increasing, betas[0] = beta0
    std::vector<double> sigma_e;  // recorded per rung
    double alpha = 1.25;
    double beta0 = 0.5;
    double tolerance = 0.5;
    int m_icm = 4;

    int size() const { return static_cast<int>(betas.size()); }

    void validate(bool need_icm) const {
        if (betas.size() < 2) throw Error("ladder: need at least 2 temperatures");
        for (std::size_t k = 1; k < betas.size(); ++k)
            if (betas[k] <= betas[k - 1])
                throw Error("ladder: betas must be strictly increasing");
        if (m_icm < 1) throw Error("ladder: m_icm must be >= 1");
        if (need_icm && m_icm < 2)
            throw Error("ladder: ICM moves require m_icm >= 2");
    }
};

inline void save_ladder_csv(const TemperatureLadder& ladder, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_ladder_csv: cannot open " + path);
    out << "index,beta,sigma_E\n";
    char buf[64];
    for (std::size_t k = 0; k < ladder.betas.size(); ++k) {
        out << k << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", ladder.betas[k]);
        out << buf << ",";
        const double s = k < ladder.sigma_e.size() ? ladder.sigma_e[k] : 0.0;
        std::snprintf(buf, sizeof(buf), "%.17g", s);
        out << buf << "\n";
    }
}

inline TemperatureLadder load_ladder_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_ladder_csv: cannot open " + path);
    TemperatureLadder ladder;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#' || line.rfind("index,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string idx, beta, sigma;
        if (!std::getline(ss, idx, ',') || !std::getline(ss, beta, ',') ||
            !std::getline(ss, sigma))
            throw ParseError("malformed ladder row '" + line + "'", line_no);
        ladder.betas.push_back(std::stod(beta));
        ladder.sigma_e.push_back(std::stod(sigma));
    }
    if (!ladder.betas.empty()) ladder.beta0 = ladder.betas.front();
    return ladder;
}

struct AptConfig {
    int sweeps_per_swap = 1;        // ratio of 1 minimizes residual energy
    long long n_swap_attempts = 1000;
    int chains = 100;               // preprocessing
    int pre_sweeps = 10000;
    int pre_tail = 1000;
    double alpha = 1.25;
    double beta0 = 0.5;
    double tolerance = 0.5;         // min|J|/2 for EA couplings
    int m_icm = 4;
    double ground_truth_error_per_site = 2.5e-4;
};

/// Variance-driven ladder construction: chains equilibrate at the current
/// beta, sigma_E is the chain-averaged standard deviation of the energy over
/// the tail window, and beta advances by alpha / sigma_E until sigma_E drops
/// below the tolerance. Chains persist across rungs.
inline TemperatureLadder adaptive_beta_schedule(const CouplingGraph& graph,
                                                double alpha, double beta0,
                                                int chains, int pre_sweeps,
                                                int pre_tail, double tolerance,
                                                std::uint64_t seed,
                                                const Coloring* coloring = nullptr) {
    if (alpha <= 0) throw Error("adaptive_beta_schedule: alpha must be positive");
    if (beta0 <= 0) throw Error("adaptive_beta_schedule: beta0 must be positive");
    if (chains < 2) throw Error("adaptive_beta_schedule: need at least 2 chains");
    if (pre_tail < 2 || pre_sweeps < pre_tail)
        throw Error("adaptive_beta_schedule: need pre_sweeps >= pre_tail >= 2");

    Coloring local;
    if (!coloring) {
        local = dsatur(graph);
        coloring = &local;
    }
    std::vector<SamplerContext> ctx;
    std::vector<SpinState> states;
    std::vector<double> energies;
    ctx.reserve(chains);
    for (int c = 0; c < chains; ++c) {
        ctx.emplace_back(graph, *coloring, beta0,
                         stream_key(seed, {0xC4A1ull, static_cast<std::uint64_t>(c)}));
        states.push_back(random_state(graph.n, ctx.back().rng));
        energies.push_back(energy(graph, states.back()));
    }

    TemperatureLadder ladder;
    ladder.alpha = alpha;
    ladder.beta0 = beta0;
    ladder.tolerance = tolerance;
    double beta = beta0;
    for (int rung = 0; rung < 100000; ++rung) {
        double sigma_sum = 0.0;
        for (int c = 0; c < chains; ++c) {
            ctx[c].set_beta(beta);
            // Welford accumulation over the tail window.
            double mean = 0.0, m2 = 0.0;
            long long count = 0;
            for (int s = 0; s < pre_sweeps; ++s) {
                chromatic_sweep_tracked(ctx[c], states[c], energies[c]);
                if (s >= pre_sweeps - pre_tail) {
                    ++count;
                    const double d = energies[c] - mean;
                    mean += d / count;
                    m2 += d * (energies[c] - mean);
                }
            }
            sigma_sum += std::sqrt(m2 / (count - 1));
        }
        const double sigma_e = sigma_sum / chains;
        ladder.betas.push_back(beta);
        ladder.sigma_e.push_back(sigma_e);
        if (sigma_e < tolerance) return ladder;
        // Reachable only when the tolerance cannot stop the loop first.
        if (sigma_e == 0.0)
            throw Error("adaptive_beta_schedule: frozen chains (sigma_E = 0); "
                        "increase pre_sweeps");
        beta += alpha / sigma_e;
    }
    throw Error("adaptive_beta_schedule: did not converge within 100000 rungs");
}

// ---------------------------------------------------------------------------
// Isoenergetic cluster moves
// ---------------------------------------------------------------------------

struct IcmOutcome {
    bool moved = false;
    bool global_flip = false;
    int cluster_size = 0;
    double delta_e_a = 0.0;  // replica b changes by the negative
};

/// Houdayer cluster move on a replica pair: pick one connected component of
/// the overlap = -1 sites uniformly at random; flip it in both replicas
/// (conserving E_a + E_b exactly), or, when the cluster spans more than half
/// the system, globally flip one replica (conserving each energy at h = 0).
inline IcmOutcome icm_move(const CouplingGraph& graph, SpinState& a, SpinState& b,
                           Rng& rng) {
    if (!graph.all_biases_zero())
        throw Error("icm_move: requires zero biases");
    if (a.size() != b.size() || static_cast<int>(a.size()) != graph.n)
        throw Error("icm_move: state size mismatch");

    const int n = graph.n;
    std::vector<int> comp(n, -1);
    std::vector<std::vector<int>> clusters;
    std::vector<int> stack;
    for (int i = 0; i < n; ++i) {
        if (comp[i] >= 0 || a[i] * b[i] != -1) continue;
        const int id = static_cast<int>(clusters.size());
        clusters.emplace_back();
        comp[i] = id;
        stack.push_back(i);
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            clusters[id].push_back(v);
            for (int k = graph.adj_offset[v]; k < graph.adj_offset[v + 1]; ++k) {
                const int u = graph.adj_vertex[k];
                if (comp[u] < 0 && a[u] * b[u] == -1) {
                    comp[u] = id;
                    stack.push_back(u);
                }
            }
        }
    }
    IcmOutcome out;
    if (clusters.empty()) return out;

    const auto& cluster = clusters[rng.below(clusters.size())];
    out.moved = true;
    out.cluster_size = static_cast<int>(cluster.size());
    if (2 * out.cluster_size > n) {
        out.global_flip = true;
        SpinState& victim = rng.below(2) == 0 ? a : b;
        for (auto& s : victim) s = static_cast<spin_t>(-s);
        return out;
    }
    const int id = comp[cluster.front()];
    double boundary = 0.0;
    for (int v : cluster)
        for (int k = graph.adj_offset[v]; k < graph.adj_offset[v + 1]; ++k) {
            const int u = graph.adj_vertex[k];
            if (comp[u] != id) boundary += graph.adj_weight[k] * a[v] * a[u];
        }
    for (int v : cluster) {
        a[v] = static_cast<spin_t>(-a[v]);
        b[v] = static_cast<spin_t>(-b[v]);
    }
    out.delta_e_a = 2.0 * boundary;
    return out;
}

// ---------------------------------------------------------------------------
// Replica-exchange driver
// ---------------------------------------------------------------------------

struct SwapStats {
    std::vector<long long> attempted;  // per adjacent rung pair
    std::vector<long long> accepted;
};

/// Per-pair acceptance rates; NaN for pairs that were never proposed.
inline std::vector<double> swap_acceptance_rates(const SwapStats& stats) {
    long long total = 0;
    for (long long v : stats.attempted) total += v;
    if (total == 0) throw Error("swap_acceptance_rates: no swaps attempted");
    std::vector<double> rates(stats.attempted.size());
    for (std::size_t k = 0; k < rates.size(); ++k)
        rates[k] = stats.attempted[k] > 0
                       ? double(stats.accepted[k]) / double(stats.attempted[k])
                       : std::numeric_limits<double>::quiet_NaN();
    return rates;
}

/// One alternating-parity Metropolis exchange phase. Replica slot (rung r,
/// label l) lives at index r * m + l; swaps exchange configurations between
/// iso-label replicas of adjacent rungs, one independent decision per label.
/// Odd-numbered attempts pair rungs (0,1),(2,3),..., even-numbered (1,2),...
inline void apt_swap_phase(const std::vector<double>& betas, int m,
                           long long attempt_number,
                           std::vector<SpinState>& states,
                           std::vector<double>& energies, Rng& rng,
                           SwapStats& stats) {
    const int rungs = static_cast<int>(betas.size());
    if (stats.attempted.empty()) {
        stats.attempted.assign(rungs - 1, 0);
        stats.accepted.assign(rungs - 1, 0);
    }
    const int first = attempt_number % 2 == 1 ? 0 : 1;
    for (int r = first; r + 1 < rungs; r += 2) {
        const double delta_beta = betas[r + 1] - betas[r];
        for (int l = 0; l < m; ++l) {
            const int ia = r * m + l, ib = (r + 1) * m + l;
            const double p = swap_probability(energies[ib] - energies[ia], delta_beta);
            ++stats.attempted[r];
            if (rng.uniform01() < p) {
                std::swap(states[ia], states[ib]);
                std::swap(energies[ia], energies[ib]);
                ++stats.accepted[r];
            }
        }
    }
}

struct AptEnsemble {
    const CouplingGraph* graph = nullptr;
    const TemperatureLadder* ladder = nullptr;
    long long attempt = 0;                  // 1-based
    long long t_a = 0;                      // cumulative sweeps
    const std::vector<SpinState>* states = nullptr;   // rungs x labels
    const std::vector<double>* energies = nullptr;
    double min_energy = 0.0;
};

struct AptResult {
    double min_energy = std::numeric_limits<double>::infinity();
    SpinState best_state;
    std::vector<double> running_min;  // per swap attempt
    SwapStats swap_stats;
};

using AptObserver = std::function<void(const AptEnsemble&)>;

/// Adaptive parallel tempering: per attempt each replica performs
/// sweeps_per_swap chromatic sweeps at its rung temperature, energies are
/// recomputed in full, ICM replica pairs are drawn as a random perfect
/// matching per rung, and alternating adjacent-rung swaps are proposed on the
/// post-ICM energies. The running minimum covers everything seen at attempt
/// boundaries.
inline AptResult run_apt(const CouplingGraph& graph, const TemperatureLadder& ladder,
                         const AptConfig& config, std::uint64_t seed, bool with_icm,
                         const AptObserver& observer = {},
                         const Coloring* coloring = nullptr) {
    ladder.validate(with_icm);
    if (config.sweeps_per_swap < 1)
        throw Error("run_apt: sweeps_per_swap must be >= 1");
    if (config.n_swap_attempts < 1)
        throw Error("run_apt: n_swap_attempts must be >= 1");
    Coloring local;
    if (!coloring) {
        local = dsatur(graph);
        coloring = &local;
    }
    const int rungs = ladder.size();
    const int m = ladder.m_icm;
    const int total = rungs * m;

    std::vector<SamplerContext> ctx;
    std::vector<SpinState> states;
    std::vector<double> energies(total, 0.0);
    ctx.reserve(total);
    for (int r = 0; r < rungs; ++r)
        for (int l = 0; l < m; ++l) {
            const int idx = r * m + l;
            ctx.emplace_back(graph, *coloring, ladder.betas[r],
                             stream_key(seed, {0xA97ull, static_cast<std::uint64_t>(idx)}));
            states.push_back(random_state(graph.n, ctx.back().rng));
        }
    Rng ens_rng(stream_key(seed, {0xE25Eull}));

    AptResult result;
    result.swap_stats.attempted.assign(rungs - 1, 0);
    result.swap_stats.accepted.assign(rungs - 1, 0);
    result.running_min.reserve(config.n_swap_attempts);
    std::vector<int> labels(m);

    for (long long attempt = 1; attempt <= config.n_swap_attempts; ++attempt) {
        for (int idx = 0; idx < total; ++idx)
            for (int s = 0; s < config.sweeps_per_swap; ++s)
                chromatic_sweep(ctx[idx], states[idx]);
        for (int idx = 0; idx < total; ++idx)
            energies[idx] = energy(graph, states[idx]);

        if (with_icm) {
            for (int r = 0; r < rungs; ++r) {
                for (int l = 0; l < m; ++l) labels[l] = l;
                ens_rng.shuffle(labels.data(), labels.size());
                for (int p = 0; p + 1 < m; p += 2) {
                    const int ia = r * m + labels[p], ib = r * m + labels[p + 1];
                    const auto outcome = icm_move(graph, states[ia], states[ib], ens_rng);
                    energies[ia] += outcome.delta_e_a;
                    energies[ib] -= outcome.delta_e_a;
                }
            }
        }

        apt_swap_phase(ladder.betas, m, attempt, states, energies, ens_rng,
                       result.swap_stats);

        for (int idx = 0; idx < total; ++idx)
            if (energies[idx] < result.min_energy) {
                result.min_energy = energies[idx];
                result.best_state = states[idx];
            }
        result.running_min.push_back(result.min_energy);

        if (observer) {
            AptEnsemble view;
            view.graph = &graph;
            view.ladder = &ladder;
            view.attempt = attempt;
            view.t_a = attempt * config.sweeps_per_swap;
            view.states = &states;
            view.energies = &energies;
            view.min_energy = result.min_energy;
            observer(view);
        }
    }
    return result;
}

/// Putative ground energy from a full APT+ICM run over the sweep budget:
/// adaptive ladder, then the minimum energy seen along the whole trajectory.
inline GroundEnergyRecord estimate_ground_energy(const CouplingGraph& graph,
                                                 long long budget_sweeps,
                                                 const AptConfig& config,
                                                 std::uint64_t seed) {
    if (budget_sweeps <= 0)
        throw Error("estimate_ground_energy: budget must be positive");
    Coloring coloring = dsatur(graph);
    TemperatureLadder ladder = adaptive_beta_schedule(
        graph, config.alpha, config.beta0, config.chains, config.pre_sweeps,
        config.pre_tail, config.tolerance, stream_key(seed, {0x6EABull}),
        &coloring);
    ladder.m_icm = config.m_icm;
    AptConfig run_cfg = config;
    run_cfg.n_swap_attempts =
        std::max<long long>(1, budget_sweeps / config.sweeps_per_swap);
    const bool with_icm = config.m_icm >= 2;
    auto result = run_apt(graph, ladder, run_cfg, seed, with_icm, {}, &coloring);

    GroundEnergyRecord rec;
    rec.instance_id = instance_id(graph);
    rec.e0 = result.min_energy;
    rec.provenance = Provenance::estimated;
    rec.estimate_error_per_site = config.ground_truth_error_per_site;
    return rec;
}

}  // namespace pbitmc
