#include <string>
#include <vector>

#include <CLI11.hpp>

#include "idmne/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"IDMNE: semi-supervised domain adaptation on vector data"};
    app.require_subcommand(1);

    std::string config_path;
    std::string checkpoint_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool have_out = false, have_seed = false;
    std::vector<double> tau_list;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config file")->required();
        cmd->add_option("--out", out_dir, "output directory (overrides run.out_dir)")
            ->each([&](const std::string&) { have_out = true; });
        cmd->add_option("--seed", seed, "training seed (overrides train.seed)")
            ->each([&](const std::string&) { have_seed = true; });
    };

    CLI::App* train = app.add_subcommand("train", "train one model and emit artifacts");
    add_common(train);

    CLI::App* ablate = app.add_subcommand("ablate", "run the seven loss-term variants");
    add_common(ablate);

    CLI::App* sweep = app.add_subcommand("sweep-tau", "train once per confidence threshold");
    add_common(sweep);
    sweep->add_option("--tau-list", tau_list, "comma-separated thresholds in (0,1]")
        ->required()
        ->delimiter(',');

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the config's eval split");
    eval->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    add_common(eval);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return idmne::kExitConfig;
    }

    idmne::CliOverrides ov;
    if (have_out) ov.out_dir = out_dir;
    if (have_seed) ov.seed = seed;

    if (train->parsed()) return idmne::cmd_train(config_path, ov);
    if (ablate->parsed()) return idmne::cmd_ablate(config_path, ov);
    if (sweep->parsed()) return idmne::cmd_sweep_tau(config_path, tau_list, ov);
    if (eval->parsed()) return idmne::cmd_eval(checkpoint_path, config_path, ov);
    return idmne::kExitConfig;
}
