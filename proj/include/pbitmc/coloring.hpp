#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "pbitmc/graph.hpp"

namespace pbitmc {

/// Partition of vertices into independent sets; colors index the sequential
/// phases of a chromatic sweep.
struct Coloring {
    std::vector<int> color_of;
    std::vector<std::vector<int>> groups;  // per color, ascending vertex ids
    int num_colors = 0;

    static Coloring from_colors(std::vector<int> colors) {
        Coloring c;
        c.color_of = std::move(colors);
        int max_color = -1;
        for (int v : c.color_of) max_color = std::max(max_color, v);
        c.num_colors = max_color + 1;
        c.groups.assign(c.num_colors, {});
        for (std::size_t v = 0; v < c.color_of.size(); ++v)
            c.groups[c.color_of[v]].push_back(static_cast<int>(v));
        return c;
    }
};

/// DSATUR greedy coloring. Tie-breaking is pinned for determinism:
/// saturation degree, then vertex degree, then lowest index.
inline Coloring dsatur(const CouplingGraph& graph) {
    const int n = graph.n;
    std::vector<int> color(n, -1);
    std::vector<int> saturation(n, 0);
    std::vector<std::vector<char>> neighbor_has(n);  // lazily sized bitmaps

    auto feasible_color = [&](int v) {
        const auto& seen = neighbor_has[v];
        for (int c = 0; c < static_cast<int>(seen.size()); ++c)
            if (!seen[c]) return c;
        return static_cast<int>(seen.size());
    };

    for (int step = 0; step < n; ++step) {
        int best = -1;
        for (int v = 0; v < n; ++v) {
            if (color[v] >= 0) continue;
            if (best < 0 || saturation[v] > saturation[best] ||
                (saturation[v] == saturation[best] &&
                 (graph.degree(v) > graph.degree(best) ||
                  (graph.degree(v) == graph.degree(best) && v < best))))
                best = v;
        }
        const int c = feasible_color(best);
        color[best] = c;
        for (int k = graph.adj_offset[best]; k < graph.adj_offset[best + 1]; ++k) {
            const int u = graph.adj_vertex[k];
            if (color[u] >= 0) continue;
            auto& seen = neighbor_has[u];
            if (c >= static_cast<int>(seen.size())) seen.resize(c + 1, 0);
            if (!seen[c]) {
                seen[c] = 1;
                ++saturation[u];
            }
        }
    }
    return Coloring::from_colors(std::move(color));
}

/// Cyclic layer offsets for an R-replica ring: alternating 0/1 with a final 2
/// when R is odd, i.e. a proper coloring of the cycle C_R.
inline std::vector<int> replica_ring_offsets(int R) {
    std::vector<int> g(R);
    for (int k = 0; k < R; ++k) g[k] = k % 2;
    if (R > 2 && R % 2 == 1) g[R - 1] = 2;
    return g;
}

/// Proper coloring of the R-replica network in which spin (i,k) couples to
/// (j,k) for every base edge and to (i,k+-1 mod R) along the replica ring.
/// Vertex (i,k) has global index k*n + i. Uses the Cartesian-product
/// construction color(i,k) = (base_color(i) + ring_offset(k)) mod m, which
/// reduces to the parity construction for even R and never needs more than
/// one extra color for odd R.
inline Coloring extend_coloring_replicas(const Coloring& base, int R,
                                         const CouplingGraph& base_graph) {
    if (R < 1) throw Error("extend_coloring_replicas: R must be >= 1");
    if (static_cast<int>(base.color_of.size()) != base_graph.n)
        throw Error("extend_coloring_replicas: coloring size mismatch");
    if (R == 1) return base;  // no replica coupling exists

    const int ring_colors = (R % 2 == 0) ? 2 : 3;
    const int m = std::max(base.num_colors, ring_colors);
    const auto offsets = replica_ring_offsets(R);
    const int n = base_graph.n;
    std::vector<int> color(static_cast<std::size_t>(n) * R);
    for (int k = 0; k < R; ++k)
        for (int i = 0; i < n; ++i)
            color[static_cast<std::size_t>(k) * n + i] =
                (base.color_of[i] + offsets[k]) % m;
    return Coloring::from_colors(std::move(color));
}

/// True iff the coloring is proper for the graph and the groups exactly
/// partition the vertex set consistently with color_of.
inline bool verify_coloring(const CouplingGraph& graph, const Coloring& coloring) {
    if (static_cast<int>(coloring.color_of.size()) != graph.n)
        throw Error("verify_coloring: size mismatch");
    for (const Edge& e : graph.edges)
        if (coloring.color_of[e.i] == coloring.color_of[e.j]) return false;
    std::vector<char> seen(graph.n, 0);
    long long count = 0;
    int non_empty = 0;
    for (int c = 0; c < static_cast<int>(coloring.groups.size()); ++c) {
        if (!coloring.groups[c].empty()) ++non_empty;
        for (int v : coloring.groups[c]) {
            if (v < 0 || v >= graph.n || seen[v]) return false;
            if (coloring.color_of[v] != c) return false;
            seen[v] = 1;
            ++count;
        }
    }
    return count == graph.n && non_empty == coloring.num_colors;
}

inline void save_coloring_csv(const Coloring& coloring, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_coloring_csv: cannot open " + path);
    out << "vertex,color\n";
    for (std::size_t v = 0; v < coloring.color_of.size(); ++v)
        out << v << "," << coloring.color_of[v] << "\n";
}

}  // namespace pbitmc
