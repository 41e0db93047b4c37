#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trendopt/cli.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void add_common(CLI::App* cmd, trendopt::cli::CommandArgs& args, std::string& optimizers, std::string& out_dir) {
    cmd->add_option("-c,--config", args.config_path, "experiment config (JSON)")->required();
    cmd->add_option("-s,--set", args.overrides, "override a config value, e.g. --set experiment.epochs=5")
        ->take_all();
    cmd->add_option("--optimizers", optimizers, "comma-separated optimizer list, replaces the config's list");
    cmd->add_option("-o,--output-dir", out_dir, "output directory (default from config)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trendopt: trend-corrected adaptive optimizers and their experiment harness"};
    app.require_subcommand(1);

    trendopt::cli::CommandArgs args;
    std::string optimizers, out_dir;
    auto* run = app.add_subcommand("run", "train every optimizer x seed and write curves, aggregates and a manifest");
    add_common(run, args, optimizers, out_dir);
    auto* grid = app.add_subcommand("grid", "grid-search eta and damping, report the best cell per optimizer");
    add_common(grid, args, optimizers, out_dir);

    trendopt::verify::SuiteOptions vopt;
    std::string fault;
    auto* verify = app.add_subcommand("verify", "run the property and oracle checks");
    verify->add_flag("--quick", vopt.quick, "reduced subset (a few seconds)");
    verify->add_option("--inject-fault", fault)->group("")->check(CLI::IsMember({"gradient"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : trendopt::cli::kConfigError;
    }

    auto finish = [&]() {
        if (run->count("--optimizers") || grid->count("--optimizers")) args.optimizers = split_list(optimizers);
        if (!out_dir.empty()) args.output_dir = out_dir;
    };
    if (*run) {
        finish();
        return trendopt::cli::cmd_run(args);
    }
    if (*grid) {
        finish();
        return trendopt::cli::cmd_grid(args);
    }
    vopt.corrupt_gradient = fault == "gradient";
    return trendopt::cli::cmd_verify(vopt);
}
