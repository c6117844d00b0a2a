#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbitmc/analysis.hpp"
#include "pbitmc/runner.hpp"

namespace pbitmc {

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateResult {
    std::vector<std::string> paths;
    std::string manifest_path;
};

/// Write `count` EA instances plus a manifest; byte-deterministic in
/// (spec, count, seed).
inline GenerateResult cmd_generate(const LatticeSpec& spec, int count,
                                   std::uint64_t seed, const std::string& out_dir) {
    if (count < 0) throw Error("generate: count must be >= 0");
    validate_lattice_spec(spec);
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    nlohmann::json cfg;
    cfg["command"] = "generate";
    cfg["lx"] = spec.lx;
    cfg["ly"] = spec.ly;
    cfg["lz"] = spec.lz;
    cfg["periodic"] = {spec.boundary.periodic_x, spec.boundary.periodic_y,
                       spec.boundary.periodic_z};
    cfg["missing_sites"] = spec.missing_sites;
    cfg["count"] = count;
    cfg["seed"] = seed;
    const std::string hash = detail::hex64(detail::fnv1a64(cfg.dump()));

    GenerateResult result;
    std::string manifest = "# schema=pbitmc-manifest-1\n# config_hash=" + hash +
                           "\n# seed=" + std::to_string(seed) + "\n";
    manifest += "index,path,instance_id,n,edges\n";
    for (int k = 0; k < count; ++k) {
        const std::uint64_t inst_seed =
            stream_key(seed, {0x6E4ull, static_cast<std::uint64_t>(k)});
        auto graph = build_ea_lattice(spec, inst_seed);
        char name[64];
        std::snprintf(name, sizeof(name), "instance_%04d.txt", k);
        const std::string path = out_dir + "/" + name;
        save_instance(graph, path,
                      {"lattice " + std::to_string(spec.lx) + " " +
                           std::to_string(spec.ly) + " " + std::to_string(spec.lz),
                       "config_hash=" + hash, "seed=" + std::to_string(seed),
                       "index=" + std::to_string(k)});
        manifest += std::to_string(k) + "," + name + "," + instance_id(graph) +
                    "," + std::to_string(graph.n) + "," +
                    std::to_string(graph.edges.size()) + "\n";
        result.paths.push_back(path);
    }
    result.manifest_path = out_dir + "/manifest.csv";
    std::ofstream out(result.manifest_path, std::ios::binary);
    if (!out) throw Error("generate: cannot open " + result.manifest_path);
    out << manifest;
    return result;
}

// ---------------------------------------------------------------------------
// color
// ---------------------------------------------------------------------------

/// Color an instance (optionally its R-replica network); returns the number
/// of colors and writes the vertex,color table when out_csv is non-empty.
inline int cmd_color(const std::string& instance_path, int replicas,
                     const std::string& out_csv) {
    auto graph = load_instance(instance_path);
    auto coloring = dsatur(graph);
    if (replicas > 1)
        coloring = extend_coloring_replicas(coloring, replicas, graph);
    if (!out_csv.empty()) save_coloring_csv(coloring, out_csv);
    return coloring.num_colors;
}

// ---------------------------------------------------------------------------
// ground-truth
// ---------------------------------------------------------------------------

struct GroundTruthOptions {
    std::vector<std::string> instances;
    long long budget_sweeps = 1000000;
    AptConfig apt;
    std::uint64_t seed = 1;
    std::string out_csv;
};

inline GroundEnergyStore cmd_ground_truth(const GroundTruthOptions& opt) {
    if (opt.instances.empty()) throw Error("ground-truth: no instances");
    GroundEnergyStore store;
    for (std::size_t k = 0; k < opt.instances.size(); ++k) {
        auto graph = load_instance(opt.instances[k]);
        const std::uint64_t inst_seed =
            stream_key(opt.seed, {0x67ull, static_cast<std::uint64_t>(k)});
        store.put(estimate_ground_energy(graph, opt.budget_sweeps, opt.apt, inst_seed));
    }
    if (!opt.out_csv.empty()) {
        nlohmann::json cfg;
        cfg["command"] = "ground-truth";
        cfg["budget_sweeps"] = opt.budget_sweeps;
        cfg["seed"] = opt.seed;
        cfg["instances"] = opt.instances;
        store.save_csv(opt.out_csv,
                       {"config_hash=" + detail::hex64(detail::fnv1a64(cfg.dump())),
                        "seed=" + std::to_string(opt.seed)});
    }
    return store;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct ResidualTable {
    std::string algorithm;
    int r_replicas = 0;
    int p_runs = 1;
    int n = 0;
    std::vector<long long> t_grid;
    std::vector<std::string> instance_ids;
    std::vector<std::vector<double>> rho;  // [instance][t] instance means
};

/// Reduce raw records to per-instance mean residual energies on the grid.
/// dtsqa-independent cells reduce their P rows by min before averaging.
inline std::vector<ResidualTable> build_residual_tables(
    const std::vector<RunRecord>& rows, const GroundEnergyStore& store) {
    std::map<std::tuple<std::string, int, int>,
             std::map<std::string, std::map<long long, std::map<int, std::vector<double>>>>>
        grouped;  // (algo,R,P) -> instance -> t_a -> run -> minima pool
    std::map<std::string, int> spins;
    for (const auto& r : rows) {
        grouped[{r.algorithm, r.r_replicas, r.p_runs}][r.instance_id][r.t_a][r.run]
            .push_back(r.best_energy);
        spins[r.instance_id] = r.n;
    }

    std::vector<ResidualTable> tables;
    for (const auto& [key, instances] : grouped) {
        ResidualTable table;
        table.algorithm = std::get<0>(key);
        table.r_replicas = std::get<1>(key);
        table.p_runs = std::get<2>(key);
        std::set<long long> t_union;
        for (const auto& [id, by_t] : instances)
            for (const auto& [t, runs] : by_t) t_union.insert(t);
        table.t_grid.assign(t_union.begin(), t_union.end());

        for (const auto& [id, by_t] : instances) {
            const auto* rec = store.find(id);
            if (!rec)
                throw Error("analyze: no ground energy for instance " + id);
            const int n = spins.at(id);
            table.n = n;
            std::vector<double> inst_rho;
            for (long long t : table.t_grid) {
                auto it = by_t.find(t);
                if (it == by_t.end())
                    throw Error("analyze: instance " + id + " missing t_a=" +
                                std::to_string(t));
                double sum = 0.0;
                int count = 0;
                for (const auto& [run, pool] : it->second) {
                    double best = pool.front();
                    for (double v : pool) best = std::min(best, v);
                    const double rho = residual_energy(best, rec->e0, n);
                    if (rho < -1e-9)
                        throw Error("analyze: energy below recorded E0 for " + id +
                                    " (E0 audit required: observed " +
                                    std::to_string(best) + " vs E0 " +
                                    std::to_string(rec->e0) + ")");
                    sum += rho;
                    ++count;
                }
                inst_rho.push_back(sum / count);
            }
            table.instance_ids.push_back(id);
            table.rho.push_back(std::move(inst_rho));
        }
        tables.push_back(std::move(table));
    }
    return tables;
}

struct AnalyzeOptions {
    std::string mode;  // residual | fit | evt | collapse
    std::vector<std::string> records;
    std::string ground_truth;
    std::string out_dir;
    bool auto_window = true;
    double window_min = 0.0, window_max = 0.0;
    int bootstrap_resamples = 2000;
    std::uint64_t bootstrap_seed = 12345;
    std::vector<int> evt_p;                            // empty: {1, 10, P}
    std::vector<std::pair<int, std::string>> curves;   // collapse inputs (L, csv)
    bool pin_b = true;
    double pinned_b = 3.0;
};

namespace detail {

inline std::string group_tag(const ResidualTable& t) {
    return t.algorithm + "_R" + std::to_string(t.r_replicas) + "_P" +
           std::to_string(t.p_runs);
}

inline ResidualCurve table_to_curve(const ResidualTable& t, int resamples,
                                    std::uint64_t seed) {
    std::vector<double> grid(t.t_grid.begin(), t.t_grid.end());
    auto curve = build_residual_curve(grid, t.rho, 0.95, resamples, seed);
    curve.n = t.n;
    curve.meta = group_tag(t);
    return curve;
}

inline void write_curve_csv(const ResidualCurve& curve, const std::string& source_hash,
                            const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("analyze: cannot open " + path);
    out << "# schema=pbitmc-curve-1\n# config_hash=" << source_hash
        << "\n# group=" << curve.meta << "\n# n=" << curve.n << "\n";
    out << "t_a,rho,ci_lo,ci_hi\n";
    for (const auto& pt : curve.points)
        out << format_double(pt.t_a) << ',' << format_double(pt.rho) << ','
            << format_double(pt.ci_lo) << ',' << format_double(pt.ci_hi) << "\n";
}

inline ResidualCurve read_curve_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("analyze: cannot open curve " + path);
    ResidualCurve curve;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("t_a,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string a, b, c, d;
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        std::getline(ss, c, ',');
        std::getline(ss, d);
        curve.points.push_back({std::stod(a), std::stod(b), std::stod(c), std::stod(d)});
    }
    return curve;
}

}  // namespace detail

struct AnalyzeResult {
    std::vector<std::string> outputs;
    std::vector<PowerLawFit> fits;          // fit mode
    CollapseParams collapse;                // collapse mode
};

inline AnalyzeResult cmd_analyze(const AnalyzeOptions& opt) {
    namespace fs = std::filesystem;
    if (opt.out_dir.empty()) throw Error("analyze: out_dir required");
    fs::create_directories(opt.out_dir);
    AnalyzeResult result;

    if (opt.mode == "collapse") {
        if (opt.curves.size() < 2)
            throw Error("analyze collapse: need >= 2 labeled curves");
        std::vector<SizedCurve> curves;
        for (const auto& [L, path] : opt.curves) {
            auto rc = detail::read_curve_csv(path);
            SizedCurve sc;
            sc.size_label = L;
            for (const auto& pt : rc.points) {
                sc.t_a.push_back(pt.t_a);
                sc.rho.push_back(pt.rho);
            }
            curves.push_back(std::move(sc));
        }
        FssFitOptions fit_opt;
        fit_opt.pin_b = opt.pin_b;
        fit_opt.pinned_b = opt.pinned_b;
        result.collapse = fss_fit(curves, fit_opt);

        const std::string params_path = opt.out_dir + "/collapse.csv";
        {
            std::ofstream out(params_path, std::ios::binary);
            out << "mu,b,quality\n"
                << detail::format_double(result.collapse.mu_exp) << ','
                << detail::format_double(result.collapse.b_exp) << ','
                << detail::format_double(result.collapse.quality) << "\n";
        }
        const std::string rescaled_path = opt.out_dir + "/rescaled.csv";
        {
            auto rescaled =
                fss_rescale(curves, result.collapse.mu_exp, result.collapse.b_exp);
            std::ofstream out(rescaled_path, std::ios::binary);
            out << "L,t_rescaled,rho_rescaled\n";
            for (const auto& c : rescaled)
                for (std::size_t k = 0; k < c.t_a.size(); ++k)
                    out << c.size_label << ',' << detail::format_double(c.t_a[k])
                        << ',' << detail::format_double(c.rho[k]) << "\n";
        }
        result.outputs = {params_path, rescaled_path};
        return result;
    }

    if (opt.records.empty()) throw Error("analyze: no record files");
    if (opt.ground_truth.empty()) throw Error("analyze: ground-truth CSV required");
    const auto store = GroundEnergyStore::load_csv(opt.ground_truth);
    std::vector<RunRecord> rows;
    std::string source_hash;
    for (const auto& path : opt.records) {
        auto file = read_records_csv(path);
        if (file.schema != kRecordSchema)
            throw Error("analyze: record schema mismatch in " + path);
        source_hash = file.config_hash;
        rows.insert(rows.end(), file.rows.begin(), file.rows.end());
    }
    auto tables = build_residual_tables(rows, store);

    if (opt.mode == "residual") {
        for (const auto& table : tables) {
            auto curve = detail::table_to_curve(table, opt.bootstrap_resamples,
                                                opt.bootstrap_seed);
            const std::string path =
                opt.out_dir + "/curve_" + detail::group_tag(table) + ".csv";
            detail::write_curve_csv(curve, source_hash, path);
            result.outputs.push_back(path);
        }
        return result;
    }

    if (opt.mode == "fit") {
        const std::string path = opt.out_dir + "/fits.csv";
        std::ofstream out(path, std::ios::binary);
        out << "# schema=pbitmc-fit-1\n# config_hash=" << source_hash << "\n";
        out << "algorithm,R,P,kappa_f,log_prefactor,t_min,t_max,ci_lo,ci_hi\n";
        for (const auto& table : tables) {
            auto curve = detail::table_to_curve(table, 200, opt.bootstrap_seed);
            double lo = opt.window_min, hi = opt.window_max;
            if (opt.auto_window) {
                auto [a, b] = auto_fit_window(curve);
                lo = a;
                hi = b;
            }
            std::vector<double> grid(table.t_grid.begin(), table.t_grid.end());
            auto fit = fit_power_law_bootstrap(grid, table.rho, lo, hi,
                                               opt.bootstrap_resamples,
                                               opt.bootstrap_seed);
            result.fits.push_back(fit);
            out << table.algorithm << ',' << table.r_replicas << ','
                << table.p_runs << ',' << detail::format_double(fit.kappa_f) << ','
                << detail::format_double(fit.log_prefactor) << ','
                << detail::format_double(fit.t_min) << ','
                << detail::format_double(fit.t_max) << ','
                << detail::format_double(fit.ci_lo) << ','
                << detail::format_double(fit.ci_hi) << "\n";
        }
        result.outputs.push_back(path);
        return result;
    }

    if (opt.mode == "evt") {
        const std::string path = opt.out_dir + "/evt.csv";
        std::ofstream out(path, std::ios::binary);
        out << "# schema=pbitmc-evt-1\n# config_hash=" << source_hash << "\n";
        out << "t_a,P,predicted,measured,ci_lo,ci_hi,within_ci\n";

        // Pools of per-run minima per (instance, t_a), from independent runs.
        std::map<std::string, std::map<long long, std::map<std::pair<int, int>, double>>>
            pools;  // instance -> t -> (run, p_index) -> minimum
        int p_total = 0;
        int n_spins = 0;
        for (const auto& r : rows) {
            if (r.algorithm != "dtsqa-independent") continue;
            pools[r.instance_id][r.t_a][{r.run, r.p_index}] = r.best_energy;
            p_total = std::max(p_total, r.p_runs);
            n_spins = r.n;
        }
        if (pools.empty())
            throw Error("analyze evt: no dtsqa-independent records");
        std::vector<int> p_values = opt.evt_p;
        if (p_values.empty()) p_values = {1, 10, p_total};

        std::set<long long> t_union;
        for (const auto& [id, by_t] : pools)
            for (const auto& [t, vals] : by_t) t_union.insert(t);

        for (long long t : t_union) {
            // Per-instance location/scale of the per-run minimum residuals.
            std::vector<double> mus, sigmas;
            for (const auto& [id, by_t] : pools) {
                const auto* rec = store.find(id);
                if (!rec) throw Error("analyze evt: no ground energy for " + id);
                std::vector<double> residuals;
                for (const auto& [key, e] : by_t.at(t))
                    residuals.push_back(residual_energy(e, rec->e0, n_spins));
                mus.push_back(detail::mean_of(residuals));
                sigmas.push_back(detail::sample_std(residuals));
            }
            const double a_t = detail::mean_of(mus);
            const double b_t = detail::mean_of(sigmas);

            for (int p : p_values) {
                if (p < 1 || p > p_total) continue;
                // Measured: partition each cell's runs into groups of p.
                std::vector<double> inst_means;
                for (const auto& [id, by_t] : pools) {
                    const auto* rec = store.find(id);
                    std::map<int, std::vector<double>> by_run;
                    for (const auto& [key, e] : by_t.at(t))
                        by_run[key.first].push_back(
                            residual_energy(e, rec->e0, n_spins));
                    double sum = 0.0;
                    int count = 0;
                    for (const auto& [run, vals] : by_run) {
                        const int groups = static_cast<int>(vals.size()) / p;
                        for (int g = 0; g < groups; ++g) {
                            double m = vals[g * p];
                            for (int k = 1; k < p; ++k)
                                m = std::min(m, vals[g * p + k]);
                            sum += m;
                            ++count;
                        }
                    }
                    if (count > 0) inst_means.push_back(sum / count);
                }
                const double measured = detail::mean_of(inst_means);
                const auto ci = inst_means.size() >= 2
                                    ? bootstrap_ci(inst_means, 0.95,
                                                   opt.bootstrap_resamples,
                                                   opt.bootstrap_seed)
                                    : BootstrapInterval{measured, measured};
                const double predicted =
                    b_t > 0 ? evt_residual_prediction(a_t, b_t, p) : a_t;
                const bool within = predicted >= ci.lo && predicted <= ci.hi;
                out << t << ',' << p << ',' << detail::format_double(predicted)
                    << ',' << detail::format_double(measured) << ','
                    << detail::format_double(ci.lo) << ','
                    << detail::format_double(ci.hi) << ',' << (within ? 1 : 0)
                    << "\n";
            }
        }
        result.outputs.push_back(path);
        return result;
    }

    throw Error("analyze: unknown mode '" + opt.mode + "'");
}

}  // namespace pbitmc
