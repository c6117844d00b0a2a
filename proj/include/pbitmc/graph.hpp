#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbitmc/rng.hpp"

namespace pbitmc {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
    int line_number;
};

struct Edge {
    int i = 0;
    int j = 0;
    double w = 0.0;
    bool operator==(const Edge&) const = default;
};

/// Sparse Ising problem: couplers J_ij, per-spin biases h_i, CSR adjacency.
/// The adjacency is rebuilt by finalize() and must not be edited directly.
struct CouplingGraph {
    int n = 0;
    std::vector<Edge> edges;   // i < j, sorted lexicographically after finalize()
    std::vector<double> bias;  // length n

    std::vector<int> adj_offset;     // n+1
    std::vector<int> adj_vertex;     // 2*edges
    std::vector<double> adj_weight;  // parallel to adj_vertex

    CouplingGraph() = default;
    explicit CouplingGraph(int n_spins) : n(n_spins), bias(n_spins, 0.0) {}

    void add_edge(int i, int j, double w) {
        if (i > j) std::swap(i, j);
        edges.push_back({i, j, w});
    }

    /// Sort edges, validate, and build the CSR adjacency.
    void finalize() {
        if (n < 0) throw Error("graph: negative spin count");
        if (static_cast<int>(bias.size()) != n) bias.resize(n, 0.0);
        std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
            return a.i != b.i ? a.i < b.i : a.j < b.j;
        });
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const Edge& e = edges[k];
            if (e.i == e.j)
                throw Error("graph: self-loop at vertex " + std::to_string(e.i));
            if (e.i < 0 || e.j >= n)
                throw Error("graph: edge (" + std::to_string(e.i) + "," +
                            std::to_string(e.j) + ") out of range");
            if (k > 0 && edges[k - 1].i == e.i && edges[k - 1].j == e.j)
                throw Error("graph: duplicate edge (" + std::to_string(e.i) + "," +
                            std::to_string(e.j) + ")");
        }
        adj_offset.assign(n + 1, 0);
        for (const Edge& e : edges) {
            ++adj_offset[e.i + 1];
            ++adj_offset[e.j + 1];
        }
        for (int v = 0; v < n; ++v) adj_offset[v + 1] += adj_offset[v];
        adj_vertex.assign(edges.size() * 2, 0);
        adj_weight.assign(edges.size() * 2, 0.0);
        std::vector<int> cursor(adj_offset.begin(), adj_offset.end() - 1);
        for (const Edge& e : edges) {
            adj_vertex[cursor[e.i]] = e.j;
            adj_weight[cursor[e.i]++] = e.w;
            adj_vertex[cursor[e.j]] = e.i;
            adj_weight[cursor[e.j]++] = e.w;
        }
    }

    int degree(int v) const { return adj_offset[v + 1] - adj_offset[v]; }

    int max_degree() const {
        int d = 0;
        for (int v = 0; v < n; ++v) d = std::max(d, degree(v));
        return d;
    }

    bool all_biases_zero() const {
        for (double h : bias)
            if (h != 0.0) return false;
        return true;
    }

    /// True when every coupling is an integer and h == 0; such graphs admit
    /// integer local fields and exact energy bookkeeping.
    bool integer_couplings() const {
        if (!all_biases_zero()) return false;
        for (const Edge& e : edges)
            if (e.w != std::floor(e.w)) return false;
        return true;
    }

    /// True for Edwards-Anderson instances: J in {-1,+1}, h == 0.
    bool is_ea() const {
        if (!all_biases_zero()) return false;
        for (const Edge& e : edges)
            if (e.w != 1.0 && e.w != -1.0) return false;
        return true;
    }

    /// Largest possible |local field| assuming integer couplings.
    int max_abs_field() const {
        int best = 0;
        for (int v = 0; v < n; ++v) {
            double s = 0.0;
            for (int k = adj_offset[v]; k < adj_offset[v + 1]; ++k)
                s += std::abs(adj_weight[k]);
            best = std::max(best, static_cast<int>(s));
        }
        return best;
    }

    bool operator==(const CouplingGraph& other) const {
        return n == other.n && edges == other.edges && bias == other.bias;
    }
};

// ---------------------------------------------------------------------------
// EA lattice construction
// ---------------------------------------------------------------------------

struct LatticeBoundary {
    bool periodic_x = false;
    bool periodic_y = false;
    bool periodic_z = true;
};

struct LatticeSpec {
    int lx = 0, ly = 0, lz = 0;
    LatticeBoundary boundary;
    std::vector<int> missing_sites;  // original site indices, deleted vertices

    int total_sites() const { return lx * ly * lz; }
    int site_index(int x, int y, int z) const { return x + lx * (y + ly * z); }
};

inline void validate_lattice_spec(const LatticeSpec& spec) {
    if (spec.lx <= 0 || spec.ly <= 0 || spec.lz <= 0)
        throw Error("lattice: all dimensions must be positive");
    // A periodic wrap on a length-2 axis would double the single bond between
    // the two layers; reject instead of silently double-coupling.
    if (spec.boundary.periodic_x && spec.lx < 3)
        throw Error("lattice: periodic x requires Lx >= 3");
    if (spec.boundary.periodic_y && spec.ly < 3)
        throw Error("lattice: periodic y requires Ly >= 3");
    if (spec.boundary.periodic_z && spec.lz < 3)
        throw Error("lattice: periodic z requires Lz >= 3");
    const int total = spec.total_sites();
    for (int s : spec.missing_sites)
        if (s < 0 || s >= total)
            throw Error("lattice: missing site " + std::to_string(s) +
                        " out of range [0," + std::to_string(total) + ")");
}

/// Nearest-neighbor bonds of the (possibly punched) lattice, in a fixed
/// enumeration order: sites ascending, axes x then y then z. Pairs are in
/// original site indices with i < j.
inline std::vector<std::pair<int, int>> lattice_bonds(const LatticeSpec& spec) {
    validate_lattice_spec(spec);
    std::vector<char> missing(spec.total_sites(), 0);
    for (int s : spec.missing_sites) missing[s] = 1;

    std::vector<std::pair<int, int>> bonds;
    auto try_bond = [&](int a, int b) {
        if (missing[a] || missing[b]) return;
        bonds.emplace_back(std::min(a, b), std::max(a, b));
    };
    for (int z = 0; z < spec.lz; ++z)
        for (int y = 0; y < spec.ly; ++y)
            for (int x = 0; x < spec.lx; ++x) {
                const int i = spec.site_index(x, y, z);
                if (missing[i]) continue;
                if (x + 1 < spec.lx)
                    try_bond(i, spec.site_index(x + 1, y, z));
                else if (spec.boundary.periodic_x)
                    try_bond(i, spec.site_index(0, y, z));
                if (y + 1 < spec.ly)
                    try_bond(i, spec.site_index(x, y + 1, z));
                else if (spec.boundary.periodic_y)
                    try_bond(i, spec.site_index(x, 0, z));
                if (z + 1 < spec.lz)
                    try_bond(i, spec.site_index(x, y, z + 1));
                else if (spec.boundary.periodic_z)
                    try_bond(i, spec.site_index(x, y, 0));
            }
    return bonds;
}

/// Build an EA instance: one spin per non-missing site, J_ij i.i.d. uniform
/// over {-1,+1} from the seeded stream, h == 0. Deterministic in (spec, seed).
inline CouplingGraph build_ea_lattice(const LatticeSpec& spec, std::uint64_t seed) {
    const auto bonds = lattice_bonds(spec);

    // Compact vertex ids: original site order with missing sites removed.
    std::vector<int> compact(spec.total_sites(), -1);
    {
        std::vector<char> missing(spec.total_sites(), 0);
        for (int s : spec.missing_sites) missing[s] = 1;
        int next_id = 0;
        for (int s = 0; s < spec.total_sites(); ++s)
            if (!missing[s]) compact[s] = next_id++;
        CouplingGraph graph(next_id);
        Rng rng(stream_key(seed, {0xEA11ull}));
        for (const auto& [a, b] : bonds)
            graph.add_edge(compact[a], compact[b],
                           static_cast<double>(rng.plus_minus_one()));
        graph.finalize();
        return graph;
    }
}

// ---------------------------------------------------------------------------
// Instance file format
// ---------------------------------------------------------------------------
// Text, LF endings. Header "EA3D 1 <n> <n_edges>", then one line per edge
// "<i> <j> <J>" with 0-based indices, i<j. Lines starting with "# " are
// comments. The format carries no biases, so h must be zero to save.

namespace detail {

inline std::string format_weight(double w) {
    if (w == std::floor(w) && std::abs(w) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(w));
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", w);
    return buf;
}

inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace detail

/// Canonical serialization: header plus sorted edge lines, no comments.
/// This is the string whose hash is the instance identity.
inline std::string canonical_serialization(const CouplingGraph& graph) {
    std::string out = "EA3D 1 " + std::to_string(graph.n) + " " +
                      std::to_string(graph.edges.size()) + "\n";
    for (const Edge& e : graph.edges)
        out += std::to_string(e.i) + " " + std::to_string(e.j) + " " +
               detail::format_weight(e.w) + "\n";
    return out;
}

inline std::string instance_id(const CouplingGraph& graph) {
    return detail::hex64(detail::fnv1a64(canonical_serialization(graph)));
}

/// Write the instance file. Extra comment lines (no leading "#") may carry
/// provenance; they do not affect the instance identity.
inline void save_instance(const CouplingGraph& graph, const std::string& path,
                          const std::vector<std::string>& comments = {}) {
    if (!graph.all_biases_zero())
        throw Error("save_instance: format carries no biases, h must be zero");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_instance: cannot open " + path);
    for (const std::string& c : comments) out << "# " << c << "\n";
    out << canonical_serialization(graph);
    if (!out) throw Error("save_instance: write failed for " + path);
}

inline CouplingGraph load_instance(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_instance: cannot open " + path);
    std::string line;
    int line_no = 0;
    // Header
    long long n = -1, n_edges = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.rfind("#", 0) == 0 || line.empty()) continue;
        int version = 0;
        char tag[8] = {0};
        if (std::sscanf(line.c_str(), "%7s %d %lld %lld", tag, &version, &n,
                        &n_edges) != 4 ||
            std::string(tag) != "EA3D")
            throw ParseError("malformed header, expected 'EA3D 1 <n> <edges>'",
                             line_no);
        if (version != 1)
            throw ParseError("unsupported format version " + std::to_string(version),
                             line_no);
        break;
    }
    if (n < 0) throw ParseError("missing header", line_no);
    CouplingGraph graph(static_cast<int>(n));
    long long seen = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.rfind("#", 0) == 0 || line.empty()) continue;
        long long i, j;
        double w;
        if (std::sscanf(line.c_str(), "%lld %lld %lf", &i, &j, &w) != 3)
            throw ParseError("malformed edge line '" + line + "'", line_no);
        if (i >= j)
            throw ParseError("edge endpoints must satisfy i < j, got (" +
                                 std::to_string(i) + "," + std::to_string(j) + ")",
                             line_no);
        if (i < 0 || j >= n)
            throw ParseError("edge (" + std::to_string(i) + "," + std::to_string(j) +
                                 ") out of range for n=" + std::to_string(n),
                             line_no);
        graph.add_edge(static_cast<int>(i), static_cast<int>(j), w);
        ++seen;
    }
    if (seen != n_edges)
        throw Error("load_instance: header declares " + std::to_string(n_edges) +
                    " edges but file has " + std::to_string(seen));
    try {
        graph.finalize();
    } catch (const Error& e) {
        throw Error(std::string("load_instance: ") + e.what());
    }
    return graph;
}

// ---------------------------------------------------------------------------
// Ground-energy records
// ---------------------------------------------------------------------------

enum class Provenance { external, estimated };

inline const char* to_string(Provenance p) {
    return p == Provenance::external ? "external" : "estimated";
}

struct GroundEnergyRecord {
    std::string instance_id;
    double e0 = 0.0;
    Provenance provenance = Provenance::estimated;
    double estimate_error_per_site = 0.0;
};

struct AuditViolation {
    std::string instance_id;
    double old_e0 = 0.0;
    double new_e0 = 0.0;
};

/// Keyed store of putative ground energies with the E0 <= observed invariant.
class GroundEnergyStore {
public:
    void put(const GroundEnergyRecord& rec) { records_[rec.instance_id] = rec; }

    const GroundEnergyRecord* find(const std::string& id) const {
        auto it = records_.find(id);
        return it == records_.end() ? nullptr : &it->second;
    }

    /// Record an observed energy. If it undercuts the stored E0 the record is
    /// corrected and the violation reported so callers can audit upstream data.
    std::optional<AuditViolation> observe(const std::string& id, double energy) {
        auto it = records_.find(id);
        if (it == records_.end()) return std::nullopt;
        if (energy < it->second.e0 - 1e-9) {
            AuditViolation v{id, it->second.e0, energy};
            it->second.e0 = energy;
            it->second.provenance = Provenance::estimated;
            return v;
        }
        return std::nullopt;
    }

    void save_csv(const std::string& path,
                  const std::vector<std::string>& comments = {}) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("ground-energy store: cannot open " + path);
        for (const auto& c : comments) out << "# " << c << "\n";
        out << "instance_id,E0,provenance,err_per_site\n";
        for (const auto& [id, rec] : records_) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", rec.e0);
            out << id << "," << buf << "," << to_string(rec.provenance) << ",";
            std::snprintf(buf, sizeof(buf), "%.17g", rec.estimate_error_per_site);
            out << buf << "\n";
        }
    }

    static GroundEnergyStore load_csv(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("ground-energy store: cannot open " + path);
        GroundEnergyStore store;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line.rfind("#", 0) == 0) continue;
            if (line.rfind("instance_id", 0) == 0) continue;
            std::stringstream ss(line);
            std::string id, e0s, prov, errs;
            if (!std::getline(ss, id, ',') || !std::getline(ss, e0s, ',') ||
                !std::getline(ss, prov, ',') || !std::getline(ss, errs))
                throw ParseError("malformed ground-energy row '" + line + "'",
                                 line_no);
            GroundEnergyRecord rec;
            rec.instance_id = id;
            rec.e0 = std::stod(e0s);
            if (prov == "external")
                rec.provenance = Provenance::external;
            else if (prov == "estimated")
                rec.provenance = Provenance::estimated;
            else
                throw ParseError("unknown provenance '" + prov + "'", line_no);
            rec.estimate_error_per_site = std::stod(errs);
            if (rec.estimate_error_per_site < 0)
                throw ParseError("negative error per site", line_no);
            store.put(rec);
        }
        return store;
    }

    const std::map<std::string, GroundEnergyRecord>& records() const {
        return records_;
    }

private:
    std::map<std::string, GroundEnergyRecord> records_;
};

}  // namespace pbitmc
