#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "pbitmc/cli.hpp"

namespace {

struct GenerateArgs {
    pbitmc::LatticeSpec spec;
    bool open_z = false;
    bool periodic_x = false, periodic_y = false;
    std::vector<int> missing;
    std::string missing_file;
    int count = 1;
    std::uint64_t seed = 1;
    std::string out_dir;
};

struct ColorArgs {
    std::string instance;
    int replicas = 1;
    std::string out;
};

struct RunArgs {
    pbitmc::RunConfig config;
    std::string config_file;
};

struct AnalyzeArgs {
    pbitmc::AnalyzeOptions opt;
    std::vector<std::string> curve_specs;  // "L:path"
    bool free_b = false;
};

int do_generate(const GenerateArgs& args) {
    pbitmc::LatticeSpec spec = args.spec;
    spec.boundary.periodic_x = args.periodic_x;
    spec.boundary.periodic_y = args.periodic_y;
    spec.boundary.periodic_z = !args.open_z;
    spec.missing_sites = args.missing;
    if (!args.missing_file.empty()) {
        std::ifstream in(args.missing_file);
        if (!in) throw pbitmc::Error("generate: cannot open " + args.missing_file);
        int site;
        while (in >> site) spec.missing_sites.push_back(site);
    }
    auto result = pbitmc::cmd_generate(spec, args.count, args.seed, args.out_dir);
    std::printf("generated %zu instances, manifest %s\n", result.paths.size(),
                result.manifest_path.c_str());
    return 0;
}

int do_color(const ColorArgs& args) {
    const int colors = pbitmc::cmd_color(args.instance, args.replicas, args.out);
    std::printf("colors: %d\n", colors);
    return 0;
}

int do_run(RunArgs& args) {
    if (!args.config_file.empty()) {
        std::ifstream in(args.config_file);
        if (!in) throw pbitmc::Error("run: cannot open " + args.config_file);
        nlohmann::json j;
        in >> j;
        args.config = pbitmc::run_config_from_json(j);
    }
    auto summary = pbitmc::execute_run(args.config);
    std::printf("config %s: %lld cells (%lld resumed), %lld records\n",
                summary.config_hash.c_str(), summary.cells_total,
                summary.cells_resumed, summary.records);
    for (const auto& [id, total] : summary.apt_replicas)
        std::printf("instance %s: %d total replicas\n", id.c_str(), total);
    if (args.config.throughput)
        std::printf("throughput: %.3g attempted flips/s\n", summary.flips_per_second);
    return 0;
}

int do_ground_truth(const pbitmc::GroundTruthOptions& opt) {
    auto store = pbitmc::cmd_ground_truth(opt);
    for (const auto& [id, rec] : store.records())
        std::printf("%s E0=%.17g\n", id.c_str(), rec.e0);
    return 0;
}

int do_analyze(AnalyzeArgs& args) {
    for (const auto& spec : args.curve_specs) {
        const auto colon = spec.find(':');
        if (colon == std::string::npos)
            throw pbitmc::Error("analyze: --curve expects L:path, got " + spec);
        args.opt.curves.emplace_back(std::stoi(spec.substr(0, colon)),
                                     spec.substr(colon + 1));
    }
    args.opt.pin_b = !args.free_b;
    auto result = pbitmc::cmd_analyze(args.opt);
    for (const auto& path : result.outputs) std::printf("wrote %s\n", path.c_str());
    if (args.opt.mode == "collapse")
        std::printf("collapse: mu=%.6g b=%.6g quality=%.6g\n",
                    result.collapse.mu_exp, result.collapse.b_exp,
                    result.collapse.quality);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"p-bit Monte Carlo engine and analysis toolkit for 3D Ising "
                 "spin glasses"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Generate EA lattice instances");
    generate->add_option("--lx", gen.spec.lx)->required();
    generate->add_option("--ly", gen.spec.ly)->required();
    generate->add_option("--lz", gen.spec.lz)->required();
    generate->add_flag("--open-z", gen.open_z, "open boundary along z");
    generate->add_flag("--periodic-x", gen.periodic_x);
    generate->add_flag("--periodic-y", gen.periodic_y);
    generate->add_option("--missing", gen.missing, "missing site indices");
    generate->add_option("--missing-file", gen.missing_file,
                         "file with one missing site index per line");
    generate->add_option("--count", gen.count)->required();
    generate->add_option("--seed", gen.seed)->required();
    generate->add_option("--out-dir", gen.out_dir)->required();

    ColorArgs col;
    auto* color = app.add_subcommand("color", "DSATUR-color an instance");
    color->add_option("--instance", col.instance)->required();
    color->add_option("--replicas", col.replicas);
    color->add_option("--out", col.out, "write vertex,color CSV");

    RunArgs run;
    auto* runcmd = app.add_subcommand("run", "Execute a solver grid");
    runcmd->add_option("--config", run.config_file, "JSON run config");
    runcmd->add_option("--algorithm", run.config.algorithm,
                       "dtsqa | dtsqa-independent | apt | apt-icm");
    runcmd->add_option("--instances", run.config.instances)->expected(-1);
    runcmd->add_option("--runs", run.config.runs);
    runcmd->add_option("--seed", run.config.seed);
    runcmd->add_option("--t-a", run.config.t_a_grid)->expected(-1);
    runcmd->add_option("--replicas", run.config.r_replicas);
    runcmd->add_option("--independent-runs", run.config.p_runs);
    runcmd->add_option("--beta-over-r", run.config.beta_over_r);
    runcmd->add_option("--gamma-start", run.config.gamma_start);
    runcmd->add_option("--sweeps-per-swap", run.config.apt.sweeps_per_swap);
    runcmd->add_option("--chains", run.config.apt.chains);
    runcmd->add_option("--pre-sweeps", run.config.apt.pre_sweeps);
    runcmd->add_option("--pre-tail", run.config.apt.pre_tail);
    runcmd->add_option("--alpha", run.config.apt.alpha);
    runcmd->add_option("--beta0", run.config.apt.beta0);
    runcmd->add_option("--tolerance", run.config.apt.tolerance);
    runcmd->add_option("--m-icm", run.config.apt.m_icm);
    runcmd->add_flag("--shared-ladder", run.config.shared_ladder);
    runcmd->add_option("--ladder-file", run.config.ladder_file);
    runcmd->add_option("--threads", run.config.threads);
    runcmd->add_option("--out-dir", run.config.out_dir);
    runcmd->add_flag("--throughput", run.config.throughput,
                     "report attempted flips per second");

    pbitmc::GroundTruthOptions gt;
    auto* ground = app.add_subcommand("ground-truth",
                                      "Estimate ground energies with APT+ICM");
    ground->add_option("--instances", gt.instances)->required()->expected(-1);
    ground->add_option("--budget-sweeps", gt.budget_sweeps);
    ground->add_option("--sweeps-per-swap", gt.apt.sweeps_per_swap);
    ground->add_option("--chains", gt.apt.chains);
    ground->add_option("--pre-sweeps", gt.apt.pre_sweeps);
    ground->add_option("--pre-tail", gt.apt.pre_tail);
    ground->add_option("--alpha", gt.apt.alpha);
    ground->add_option("--beta0", gt.apt.beta0);
    ground->add_option("--tolerance", gt.apt.tolerance);
    ground->add_option("--m-icm", gt.apt.m_icm);
    ground->add_option("--seed", gt.seed);
    ground->add_option("--out", gt.out_csv);

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Residual curves, fits, EVT, "
                                                  "finite-size collapse");
    analyze->add_option("--mode", an.opt.mode)->required();
    analyze->add_option("--records", an.opt.records)->expected(-1);
    analyze->add_option("--ground-truth", an.opt.ground_truth);
    analyze->add_option("--out-dir", an.opt.out_dir)->required();
    analyze->add_option("--window-min", an.opt.window_min);
    analyze->add_option("--window-max", an.opt.window_max);
    analyze->add_option("--resamples", an.opt.bootstrap_resamples);
    analyze->add_option("--bootstrap-seed", an.opt.bootstrap_seed);
    analyze->add_option("--evt-p", an.opt.evt_p)->expected(-1);
    analyze->add_option("--curve", an.curve_specs, "L:path, repeatable");
    analyze->add_flag("--free-b", an.free_b, "fit b instead of pinning it");
    analyze->add_option("--b", an.opt.pinned_b);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    }

    try {
        if (generate->parsed()) return do_generate(gen);
        if (color->parsed()) return do_color(col);
        if (runcmd->parsed()) return do_run(run);
        if (ground->parsed()) return do_ground_truth(gt);
        if (analyze->parsed()) {
            if (analyze->count("--window-min") || analyze->count("--window-max"))
                an.opt.auto_window = false;
            return do_analyze(an);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;  // runtime failure
    }
    return 1;
}
