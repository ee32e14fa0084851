// pskd: experiment runner for progressive cross-modal distillation.
//
//   pskd synth      --config F [--force]
//   pskd train      --config F [--out DIR]
//   pskd gridsearch --config F --grid G
//   pskd gradcheck  --config F [--corrupt-backward]
//   pskd report     --run DIR
//
// Exit codes: 0 ok, 1 validation error, 2 run error, 3 acceptance failure.

#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pskd/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"progressive skeleton-to-sensor knowledge distillation runner"};
    app.require_subcommand(1);

    std::string config_path, grid_path, run_dir, out_dir;
    bool force = false, corrupt = false;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset file pair");
    synth->add_option("--config", config_path, "experiment config (JSON)")->required();
    synth->add_flag("--force", force, "overwrite existing dataset files");

    CLI::App* train = app.add_subcommand("train", "run the configured training mode per seed");
    train->add_option("--config", config_path, "experiment config (JSON)")->required();
    train->add_option("--out", out_dir, "override the output directory");

    CLI::App* grid = app.add_subcommand("gridsearch", "sweep (alpha, beta, gamma)");
    grid->add_option("--config", config_path, "experiment config (JSON)")->required();
    grid->add_option("--grid", grid_path, "grid axes file (JSON)")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of every loss");
    gradcheck->add_option("--config", config_path, "experiment config (JSON)")->required();
    gradcheck->add_flag("--corrupt-backward", corrupt,
                        "negative control: corrupt one backward rule and expect failure");

    CLI::App* report = app.add_subcommand("report", "tabulate a run directory into CSV + SVG");
    report->add_option("--run", run_dir, "run directory holding metrics.jsonl")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? pskd::kExitOk : pskd::kExitValidation;
    }

    if (synth->parsed()) return pskd::cmd_synth(config_path, force);
    if (train->parsed())
        return pskd::cmd_train(config_path,
                               out_dir.empty() ? std::nullopt : std::optional<std::string>(out_dir));
    if (grid->parsed()) return pskd::cmd_gridsearch(config_path, grid_path);
    if (gradcheck->parsed()) return pskd::cmd_gradcheck(config_path, corrupt);
    if (report->parsed()) return pskd::cmd_report(run_dir);
    return pskd::kExitValidation;
}
