#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "pbitmc/apt.hpp"
#include "pbitmc/dtsqa.hpp"
#include "pbitmc/records.hpp"

namespace pbitmc {

/// Fully serializable description of a solver run; the grid is
/// instances x runs (x t_a for the annealing algorithms).
struct RunConfig {
    std::string algorithm;  // dtsqa | dtsqa-independent | apt | apt-icm
    std::vector<std::string> instances;
    int runs = 1;
    std::uint64_t seed = 1;
    std::vector<long long> t_a_grid;
    int r_replicas = 32;
    int p_runs = 1;
    double beta_over_r = 0.5;
    double gamma_start = 3.0;
    AptConfig apt;
    bool shared_ladder = false;
    std::string ladder_file;  // optional: skip preprocessing entirely
    int threads = 1;
    std::string out_dir;
    bool throughput = false;

    bool is_dtsqa() const {
        return algorithm == "dtsqa" || algorithm == "dtsqa-independent";
    }
    bool is_apt() const { return algorithm == "apt" || algorithm == "apt-icm"; }

    void validate() const {
        if (!is_dtsqa() && !is_apt())
            throw Error("run config: unknown algorithm '" + algorithm + "'");
        if (instances.empty()) throw Error("run config: no instances");
        if (runs < 1) throw Error("run config: runs must be >= 1");
        if (t_a_grid.empty()) throw Error("run config: empty t_a grid");
        for (std::size_t k = 0; k < t_a_grid.size(); ++k) {
            if (t_a_grid[k] < 1) throw Error("run config: t_a must be >= 1");
            if (k > 0 && t_a_grid[k] <= t_a_grid[k - 1])
                throw Error("run config: t_a grid must be strictly increasing");
            if (is_apt() && t_a_grid[k] % apt.sweeps_per_swap != 0)
                throw Error("run config: t_a grid entries must be multiples of "
                            "sweeps_per_swap");
        }
        if (r_replicas < 1) throw Error("run config: R must be >= 1");
        if (p_runs < 1) throw Error("run config: P must be >= 1");
        if (threads < 1) throw Error("run config: threads must be >= 1");
        if (out_dir.empty()) throw Error("run config: out_dir required");
    }
};

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["schema"] = "pbitmc-config-1";
    j["algorithm"] = c.algorithm;
    j["instances"] = c.instances;
    j["runs"] = c.runs;
    j["seed"] = c.seed;
    j["t_a_grid"] = c.t_a_grid;
    j["R"] = c.r_replicas;
    j["P"] = c.p_runs;
    j["beta_over_r"] = c.beta_over_r;
    j["gamma_start"] = c.gamma_start;
    j["apt"] = {{"sweeps_per_swap", c.apt.sweeps_per_swap},
                {"chains", c.apt.chains},
                {"pre_sweeps", c.apt.pre_sweeps},
                {"pre_tail", c.apt.pre_tail},
                {"alpha", c.apt.alpha},
                {"beta0", c.apt.beta0},
                {"tolerance", c.apt.tolerance},
                {"m_icm", c.apt.m_icm}};
    j["shared_ladder"] = c.shared_ladder;
    j["ladder_file"] = c.ladder_file;
    j["threads"] = c.threads;
    j["out_dir"] = c.out_dir;
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.algorithm = j.at("algorithm").get<std::string>();
    c.instances = j.at("instances").get<std::vector<std::string>>();
    c.runs = j.at("runs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.t_a_grid = j.at("t_a_grid").get<std::vector<long long>>();
    c.r_replicas = j.at("R").get<int>();
    c.p_runs = j.at("P").get<int>();
    c.beta_over_r = j.value("beta_over_r", 0.5);
    c.gamma_start = j.value("gamma_start", 3.0);
    if (j.contains("apt")) {
        const auto& a = j["apt"];
        c.apt.sweeps_per_swap = a.value("sweeps_per_swap", 1);
        c.apt.chains = a.value("chains", 100);
        c.apt.pre_sweeps = a.value("pre_sweeps", 10000);
        c.apt.pre_tail = a.value("pre_tail", 1000);
        c.apt.alpha = a.value("alpha", 1.25);
        c.apt.beta0 = a.value("beta0", 0.5);
        c.apt.tolerance = a.value("tolerance", 0.5);
        c.apt.m_icm = a.value("m_icm", 4);
    }
    c.shared_ladder = j.value("shared_ladder", false);
    c.ladder_file = j.value("ladder_file", std::string{});
    c.threads = j.value("threads", 1);
    c.out_dir = j.at("out_dir").get<std::string>();
    return c;
}

/// Hash of the canonical config serialization, embedded in every output file.
inline std::string config_hash(const RunConfig& c) {
    auto j = to_json(c);
    j.erase("out_dir");   // provenance is about the work, not its location
    j.erase("threads");   // parallelism must not change results
    return detail::hex64(detail::fnv1a64(j.dump()));
}

struct RunSummary {
    std::string config_hash;
    long long cells_total = 0;
    long long cells_executed = 0;
    long long cells_resumed = 0;
    long long records = 0;
    double flips_per_second = 0.0;  // measured only with throughput enabled
    std::vector<std::pair<std::string, int>> apt_replicas;  // instance -> M*m
    bool aborted = false;
};

namespace detail {

struct InstanceSlot {
    CouplingGraph graph;
    Coloring coloring;
    std::string id;
    std::optional<TemperatureLadder> ladder;
    std::once_flag ladder_once;
};

}  // namespace detail

/// Execute the config grid with resume support. Completed cells found in an
/// existing records file (same config hash) are kept; everything else runs,
/// appending rows as cells finish; on completion the canonical sorted file is
/// rewritten atomically. abort_after_cells stops early after that many fresh
/// cells (test hook for the interruption path; negative = never).
inline RunSummary execute_run(const RunConfig& config,
                              long long abort_after_cells = -1) {
    config.validate();
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    const std::string hash = config_hash(config);
    const std::string records_path = config.out_dir + "/records.csv";

    // Load instances once; workers share them read-only.
    std::vector<detail::InstanceSlot> slots(config.instances.size());
    for (std::size_t i = 0; i < config.instances.size(); ++i) {
        slots[i].graph = load_instance(config.instances[i]);
        slots[i].coloring = dsatur(slots[i].graph);
        slots[i].id = instance_id(slots[i].graph);
    }

    // Cell layout.
    const long long grid_t = config.is_dtsqa()
                                 ? static_cast<long long>(config.t_a_grid.size())
                                 : 1;
    const long long cells_total =
        static_cast<long long>(config.instances.size()) * config.runs * grid_t;
    const int rows_per_cell =
        config.is_dtsqa()
            ? (config.algorithm == "dtsqa-independent" ? config.p_runs : 1)
            : static_cast<int>(config.t_a_grid.size());

    // Resume: keep rows of cells that are already complete. An interrupted
    // write can leave partial or duplicated rows; dedupe by row identity and
    // count distinct rows per cell.
    std::vector<RunRecord> kept_rows;
    std::set<long long> done;
    if (fs::exists(records_path)) {
        auto existing = read_records_csv(records_path);
        if (existing.schema != kRecordSchema)
            throw Error("resume: record schema mismatch in " + records_path);
        if (existing.config_hash != hash)
            throw Error("resume: records in " + records_path +
                        " were produced by a different config");
        std::set<std::tuple<long long, int, long long>> seen;
        std::map<long long, int> counts;
        std::vector<RunRecord> unique_rows;
        for (auto& r : existing.rows) {
            if (!seen.insert({r.cell, r.p_index, r.t_a}).second) continue;
            ++counts[r.cell];
            unique_rows.push_back(std::move(r));
        }
        for (const auto& [cell, count] : counts)
            if (count == rows_per_cell) done.insert(cell);
        for (auto& r : unique_rows)
            if (done.count(r.cell)) kept_rows.push_back(std::move(r));
    }

    // Shared or per-instance temperature ladders, computed lazily.
    std::optional<TemperatureLadder> file_ladder;
    if (!config.ladder_file.empty()) {
        file_ladder = load_ladder_csv(config.ladder_file);
        file_ladder->m_icm = config.apt.m_icm;
    }
    auto ladder_for = [&](std::size_t inst) -> const TemperatureLadder& {
        if (file_ladder) return *file_ladder;
        auto& slot = slots[config.shared_ladder ? 0 : inst];
        std::call_once(slot.ladder_once, [&] {
            TemperatureLadder ladder = adaptive_beta_schedule(
                slot.graph, config.apt.alpha, config.apt.beta0, config.apt.chains,
                config.apt.pre_sweeps, config.apt.pre_tail, config.apt.tolerance,
                stream_key(config.seed, {0x1ADDull,
                                         config.shared_ladder ? 0ull
                                                              : static_cast<std::uint64_t>(inst)}),
                &slot.coloring);
            ladder.m_icm = config.apt.m_icm;
            fs::create_directories(config.out_dir + "/ladders");
            save_ladder_csv(ladder, config.out_dir + "/ladders/" + slot.id + ".csv");
            slot.ladder = std::move(ladder);
        });
        return *slot.ladder;
    };

    // Worker machinery.
    std::ofstream append(records_path, std::ios::binary | std::ios::app);
    if (!append) throw Error("execute_run: cannot open " + records_path);
    if (done.empty() && fs::file_size(records_path) == 0)
        append << record_header(hash, config.seed);

    std::mutex sink_mutex;
    std::vector<RunRecord> fresh_rows;
    std::vector<std::pair<long long, std::string>> acceptance_rows;  // keyed by cell
    std::atomic<long long> next_cell{0};
    std::atomic<long long> executed{0};
    std::atomic<bool> abort_flag{false};
    std::atomic<long long> total_updates{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto run_cell = [&](long long cell) {
        const long long per_inst = config.runs * grid_t;
        const std::size_t inst = static_cast<std::size_t>(cell / per_inst);
        const int run = static_cast<int>((cell % per_inst) / grid_t);
        const int t_idx = static_cast<int>(cell % grid_t);
        auto& slot = slots[inst];
        const std::uint64_t cell_seed = stream_key(
            config.seed, {0xCE11ull, static_cast<std::uint64_t>(inst),
                          static_cast<std::uint64_t>(run),
                          static_cast<std::uint64_t>(config.is_dtsqa() ? t_idx : 0)});

        std::vector<RunRecord> rows;
        std::string acceptance;
        if (config.is_dtsqa()) {
            const long long t_a = config.t_a_grid[t_idx];
            DtsqaConfig dc;
            dc.beta_over_r = config.beta_over_r;
            dc.gamma_start = config.gamma_start;
            RunRecord base;
            base.algorithm = config.algorithm;
            base.instance_id = slot.id;
            base.cell = cell;
            base.run = run;
            base.r_replicas = config.r_replicas;
            base.p_runs = config.p_runs;
            base.t_a = t_a;
            base.n = slot.graph.n;
            if (config.algorithm == "dtsqa") {
                auto res = run_dtsqa(slot.graph, config.r_replicas, t_a, cell_seed,
                                     dc, &slot.coloring);
                base.best_energy = res.best_energy;
                base.mean_replica_energy = res.mean_replica_energy;
                rows.push_back(base);
            } else {
                auto res = run_dtsqa_independent(slot.graph, config.r_replicas,
                                                 config.p_runs, t_a, cell_seed, dc,
                                                 &slot.coloring);
                for (int p = 0; p < config.p_runs; ++p) {
                    RunRecord r = base;
                    r.p_index = p;
                    r.best_energy = res.per_run_minima[p];
                    double mean = 0.0;
                    for (double e : res.per_run_replica_energies[p]) mean += e;
                    r.mean_replica_energy = mean / config.r_replicas;
                    rows.push_back(r);
                }
            }
            total_updates += static_cast<long long>(slot.graph.n) *
                             config.r_replicas * t_a *
                             (config.algorithm == "dtsqa" ? 1 : config.p_runs);
        } else {
            const TemperatureLadder& ladder = ladder_for(inst);
            AptConfig run_cfg = config.apt;
            const long long t_max = config.t_a_grid.back();
            run_cfg.n_swap_attempts = t_max / config.apt.sweeps_per_swap;
            auto res = run_apt(slot.graph, ladder, run_cfg, cell_seed,
                               config.algorithm == "apt-icm", {}, &slot.coloring);
            for (int k = 0; k < static_cast<int>(config.t_a_grid.size()); ++k) {
                RunRecord r;
                r.algorithm = config.algorithm;
                r.instance_id = slot.id;
                r.cell = cell;
                r.run = run;
                r.r_replicas = ladder.size() * ladder.m_icm;
                r.p_runs = 1;
                r.p_index = k;  // distinguishes the per-t_a rows within the cell
                r.t_a = config.t_a_grid[k];
                r.n = slot.graph.n;
                r.best_energy =
                    res.running_min[config.t_a_grid[k] / config.apt.sweeps_per_swap - 1];
                rows.push_back(r);
            }
            const auto rates = swap_acceptance_rates(res.swap_stats);
            for (std::size_t pair = 0; pair < rates.size(); ++pair)
                acceptance += slot.id + "," + std::to_string(run) + "," +
                              std::to_string(pair) + "," +
                              std::to_string(res.swap_stats.attempted[pair]) + "," +
                              std::to_string(res.swap_stats.accepted[pair]) + "\n";
            total_updates += static_cast<long long>(slot.graph.n) * ladder.size() *
                             ladder.m_icm * t_max;
        }

        std::lock_guard<std::mutex> lock(sink_mutex);
        for (const auto& r : rows) {
            append << record_row(r);
            fresh_rows.push_back(r);
        }
        append.flush();
        if (!acceptance.empty())
            acceptance_rows.emplace_back(cell, std::move(acceptance));
    };

    auto worker = [&] {
        for (;;) {
            if (abort_flag.load()) return;
            const long long cell = next_cell.fetch_add(1);
            if (cell >= cells_total) return;
            if (done.count(cell)) continue;
            try {
                run_cell(cell);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                abort_flag = true;
                return;
            }
            const long long finished = ++executed;
            if (abort_after_cells >= 0 && finished >= abort_after_cells) {
                abort_flag = true;
                return;
            }
        }
    };

    const auto wall_start = std::chrono::steady_clock::now();
    if (config.threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < config.threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    const double wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
            .count();
    append.close();
    if (first_error) std::rethrow_exception(first_error);

    RunSummary summary;
    summary.config_hash = hash;
    summary.cells_total = cells_total;
    summary.cells_executed = executed.load();
    summary.cells_resumed = static_cast<long long>(done.size());
    summary.aborted = abort_flag.load() && (summary.cells_executed +
                                            summary.cells_resumed) < cells_total;
    if (config.throughput && wall_seconds > 0)
        summary.flips_per_second = double(total_updates.load()) / wall_seconds;

    if (!summary.aborted) {
        // Canonicalize the records file and write the summary.
        std::vector<RunRecord> all = std::move(kept_rows);
        all.insert(all.end(), fresh_rows.begin(), fresh_rows.end());
        summary.records = static_cast<long long>(all.size());
        write_records_csv(records_path, hash, config.seed, std::move(all));

        if (config.is_apt()) {
            std::sort(acceptance_rows.begin(), acceptance_rows.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            std::ofstream acc(config.out_dir + "/acceptance.csv", std::ios::binary);
            acc << "# schema=pbitmc-acceptance-1\n# config_hash=" << hash << "\n";
            acc << "instance_id,run,pair,attempted,accepted\n";
            for (const auto& [cell, block] : acceptance_rows) acc << block;
            for (std::size_t i = 0; i < config.instances.size(); ++i) {
                if (!config.ladder_file.empty()) {
                    summary.apt_replicas.emplace_back(
                        slots[i].id, file_ladder->size() * file_ladder->m_icm);
                } else {
                    const auto& ladder = ladder_for(i);
                    summary.apt_replicas.emplace_back(slots[i].id,
                                                      ladder.size() * ladder.m_icm);
                }
            }
        }

        nlohmann::json j;
        j["schema"] = "pbitmc-summary-1";
        j["config_hash"] = hash;
        j["config"] = to_json(config);
        j["cells_total"] = summary.cells_total;
        j["records"] = summary.records;
        if (!summary.apt_replicas.empty()) {
            nlohmann::json reps = nlohmann::json::array();
            for (const auto& [id, total] : summary.apt_replicas)
                reps.push_back({{"instance_id", id}, {"total_replicas", total}});
            j["apt_replicas"] = reps;
        }
        std::ofstream out(config.out_dir + "/summary.json", std::ios::binary);
        out << j.dump(2) << "\n";
    }
    return summary;
}

}  // namespace pbitmc
