// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "devft/analysis.hpp"
#include "devft/config.hpp"
#include "devft/harness.hpp"
#include "devft/numerics.hpp"
#include "devft/rng.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::optional<std::string> method;
    std::optional<std::string> grouping;
    std::optional<std::string> fusion;
    std::optional<double> beta;
    std::optional<int> stages;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file (defaults apply if omitted)");
    cmd->add_option("--seed", args.seed, "run seed override");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--method", args.method, "devft|end2end");
    cmd->add_option("--grouping", args.grouping, "spectral|random|even");
    cmd->add_option("--fusion", args.fusion, "dblf|sum|r_one");
    cmd->add_option("--beta", args.beta, "fusion weighting factor");
    cmd->add_option("--stages", args.stages, "stage count for the default capacity ladder");
}

devft::ExperimentConfig build_config(const CommonArgs& args) {
    devft::ExperimentConfig cfg = args.config_path.empty()
                                      ? devft::ExperimentConfig::defaults()
                                      : devft::ExperimentConfig::from_json_file(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (args.method) cfg.algorithm.method = devft::method_from_name(*args.method);
    if (args.grouping) {
        try {
            cfg.algorithm.grouping = devft::grouping_strategy_from_name(*args.grouping);
        } catch (const std::invalid_argument& e) {
            throw devft::ConfigError(e.what());
        }
    }
    if (args.fusion) {
        try {
            cfg.algorithm.fusion = devft::fusion_strategy_from_name(*args.fusion);
        } catch (const std::invalid_argument& e) {
            throw devft::ConfigError(e.what());
        }
    }
    if (args.beta) cfg.algorithm.beta = *args.beta;
    if (args.stages) {
        cfg.schedule.stages = *args.stages;
        cfg.schedule.capacities.reset();
        cfg.schedule.initial_capacity.reset();
        cfg.schedule.rounds_per_stage.reset();
    }
    cfg.validate();
    return cfg;
}

int cmd_run(const CommonArgs& args) {
    const devft::ExperimentConfig cfg = build_config(args);
    const devft::RunOutputs outputs = devft::run_experiment(cfg);
    devft::write_run_outputs(args.out_dir, cfg, outputs);
    std::printf("method=%s stages=%zu rounds=%zu final_loss=%.6g uplink=%lld downlink=%lld compute=%lld\n",
                devft::method_name(cfg.algorithm.method).c_str(), outputs.result.stages.size(),
                outputs.result.records.size(), outputs.final_loss,
                static_cast<long long>(outputs.total_uplink),
                static_cast<long long>(outputs.total_downlink),
                static_cast<long long>(outputs.total_compute));
    std::printf("outputs written to %s\n", args.out_dir.c_str());
    return kExitOk;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis,
              const std::vector<std::string>& values) {
    const devft::ExperimentConfig cfg = build_config(args);
    const devft::SweepResult result = devft::sweep(cfg, axis, values);

    std::filesystem::create_directories(args.out_dir);
    const std::filesystem::path dir(args.out_dir);
    for (std::size_t i = 0; i < result.points.size(); ++i) {
        const std::string run_dir = (dir / (axis + "_" + result.points[i].value)).string();
        const devft::ExperimentConfig echo = cfg;  // per-run config is echoed in its summary
        devft::write_run_outputs(run_dir, echo, result.runs[i]);
    }
    std::ofstream table(dir / "sweep.csv", std::ios::binary);
    table << result.table_csv;
    std::printf("%s", result.table_csv.c_str());
    std::printf("sweep outputs written to %s\n", args.out_dir.c_str());
    return kExitOk;
}

int cmd_verify_lemma(std::uint64_t seed, int trials, double beta, int layers, int groups,
                     const std::string& out_dir) {
    devft::ModelShape shape = devft::ExperimentConfig::defaults().model;
    shape.layer_count = static_cast<std::size_t>(layers);
    const auto reports = devft::verify_lemma1_trials(shape, groups, beta, trials, seed);

    int violations = 0;
    double worst_margin = 0.0;
    for (const auto& r : reports) {
        violations += static_cast<int>(r.violating_groups.size());
        for (const auto& g : r.groups) worst_margin = std::max(worst_margin, g.shift - g.bound);
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(std::filesystem::path(out_dir) / "lemma_report.json", std::ios::binary);
        out << "[";
        for (std::size_t i = 0; i < reports.size(); ++i)
            out << (i ? "," : "") << reports[i].to_json_string();
        out << "]";
    }
    std::printf("fusion-shift inequality: %d trials, beta=%g, %d violations (worst margin %.3g)\n",
                trials, beta, violations, worst_margin);
    return violations == 0 ? kExitOk : kExitRuntimeError;
}

bool report(const char* name, bool ok) {
    std::printf("%-34s %s\n", name, ok ? "PASS" : "FAIL");
    return ok;
}

// Quick wiring check across modules; the full battery lives in the test suite.
int cmd_self_test() {
    bool all = true;
    {
        devft::Matrix m(2, 2);
        m(0, 0) = 2.0; m(0, 1) = 1.0; m(1, 0) = 1.0; m(1, 1) = 2.0;
        const devft::EigenResult eig = devft::symmetric_eigh(m);
        all &= report("eigensolver 2x2", std::abs(eig.eigenvalues[0] - 1.0) < 1e-12 &&
                                             std::abs(eig.eigenvalues[1] - 3.0) < 1e-12);
    }
    {
        const double sim = devft::cosine_similarity({1.0, 1.0}, {1.0, 0.0});
        all &= report("cosine similarity", std::abs(sim - 0.7071067811865476) < 1e-12);
    }
    {
        devft::ExperimentConfig cfg = devft::ExperimentConfig::defaults();
        cfg.schedule.total_rounds = 8;
        cfg.data.samples_per_client = 32;
        devft::ExperimentConfig e2e = cfg;
        e2e.algorithm.method = devft::Method::End2End;
        devft::ExperimentConfig single = cfg;
        single.algorithm.method = devft::Method::Devft;
        single.schedule.stages = 1;
        const devft::RunOutputs a = devft::run_experiment(e2e);
        const devft::RunOutputs b = devft::run_experiment(single);
        all &= report("single-stage reduction", a.rounds_csv == b.rounds_csv);

        devft::ExperimentConfig staged = cfg;
        const devft::RunOutputs c = devft::run_experiment(staged);
        const double ratio =
            static_cast<double>(c.total_uplink) / static_cast<double>(a.total_uplink);
        all &= report("staged traffic ratio", std::abs(ratio - 0.46875) < 0.004);
    }
    {
        const auto reports = devft::verify_lemma1_trials(
            devft::ExperimentConfig::defaults().model, 3, 0.1, 5, 7);
        bool ok = true;
        for (const auto& r : reports) ok &= r.violating_groups.empty();
        all &= report("fusion-shift inequality", ok);
    }
    std::printf("self-test %s\n", all ? "PASSED" : "FAILED");
    return all ? kExitOk : kExitRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Developmental federated tuning simulator"};
    app.require_subcommand(1);

    CommonArgs run_args;
    CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
    add_common_flags(run_cmd, run_args);

    CommonArgs sweep_args;
    std::string axis;
    std::vector<std::string> values;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run one experiment per axis value");
    add_common_flags(sweep_cmd, sweep_args);
    sweep_cmd->add_option("--axis", axis, "initial_capacity|growth_rate|grouping|fusion|beta")
        ->required();
    sweep_cmd->add_option("--values", values, "axis values")->required()->delimiter(',');

    std::uint64_t lemma_seed = 0;
    int lemma_trials = 100;
    double lemma_beta = 0.1;
    int lemma_layers = 8;
    int lemma_groups = 3;
    std::string lemma_out;
    CLI::App* lemma_cmd =
        app.add_subcommand("verify-lemma", "fuzz the fusion-shift inequality");
    lemma_cmd->add_option("--seed", lemma_seed, "fuzzing seed");
    lemma_cmd->add_option("--trials", lemma_trials, "number of random model/partition draws");
    lemma_cmd->add_option("--beta", lemma_beta, "fusion weighting factor");
    lemma_cmd->add_option("--layers", lemma_layers, "model depth per trial");
    lemma_cmd->add_option("--groups", lemma_groups, "groups per partition");
    lemma_cmd->add_option("--out", lemma_out, "directory for the JSON report");

    CLI::App* self_test_cmd = app.add_subcommand("self-test", "quick wiring check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(run_args);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, axis, values);
        if (lemma_cmd->parsed())
            return cmd_verify_lemma(lemma_seed, lemma_trials, lemma_beta, lemma_layers,
                                    lemma_groups, lemma_out);
        if (self_test_cmd->parsed()) return cmd_self_test();
    } catch (const devft::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntimeError;
    }
    return kExitConfigError;
}
