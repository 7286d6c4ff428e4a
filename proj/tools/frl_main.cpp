#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "frl/errors.hpp"

namespace {

// Exit codes: 0 success, 2 configuration error, 3 training divergence,
// 4 I/O error, 1 anything else.
int run(int argc, char** argv) {
    CLI::App app{"Offline reinforcement learning in factorisable action spaces"};
    app.require_subcommand(1);

    frl::cli::CommonOptions common;
    app.add_option("--config", common.config_path, "Run configuration file")
        ->check(CLI::ExistingFile);
    app.add_option("--out", common.output_root,
                   "Output root (default: $FRL_OUTPUT_ROOT or run.output_root)");
    app.add_option("--set", common.overrides, "Override a config value (section.key=value)");

    auto* collect = app.add_subcommand(
        "collect", "Train online agents and generate the benchmark dataset suite");

    auto* train = app.add_subcommand("train", "Train offline agents over the configured grid");

    std::string eval_checkpoint;
    std::string eval_trajectory;
    auto* eval = app.add_subcommand("eval", "Evaluate a saved agent checkpoint");
    eval->add_option("--checkpoint", eval_checkpoint, "Agent checkpoint directory");
    eval->add_option("--trajectory", eval_trajectory, "Dump one greedy episode to this CSV");

    auto* simulate =
        app.add_subcommand("simulate", "Run the overestimation-bias coverage simulations");

    frl::cli::MixSpec mix_spec;
    auto* mix = app.add_subcommand("mix", "Mix datasets into a new one");
    mix->add_option("parts", mix_spec.parts, "Dataset parts as path:fraction")->required();
    mix->add_option("--total", mix_spec.total, "Total transitions in the mix");
    mix->add_option("--seed", mix_spec.seed, "Mixing seed");
    mix->add_option("--out", mix_spec.out_file, "Output dataset file")->required();

    frl::cli::ExportSpec export_spec;
    auto* export_cmd = app.add_subcommand("export", "Export a dataset to CSV");
    export_cmd->add_option("--dataset", export_spec.dataset, "Dataset file")->required();
    export_cmd->add_option("--csv", export_spec.csv, "Output CSV file")->required();

    std::string report_dir;
    auto* report = app.add_subcommand("report", "Aggregate grid results into a score matrix");
    report->add_option("results", report_dir, "Training results directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (collect->parsed()) return frl::cli::cmd_collect(common);
    if (train->parsed()) return frl::cli::cmd_train(common);
    if (eval->parsed()) return frl::cli::cmd_eval(common, eval_checkpoint, eval_trajectory);
    if (simulate->parsed()) return frl::cli::cmd_simulate(common);
    if (mix->parsed()) return frl::cli::cmd_mix(mix_spec);
    if (export_cmd->parsed()) return frl::cli::cmd_export(export_spec);
    if (report->parsed()) return frl::cli::cmd_report(report_dir);
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const frl::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const frl::DivergenceError& e) {
        std::fprintf(stderr, "training divergence: %s\n", e.what());
        return 3;
    } catch (const frl::IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
