#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dehrl/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"DEHRL experiment runner"};
    app.require_subcommand(1);

    std::string config_path, run_dir;
    std::size_t level = 1, repeats = 32;

    auto* run = app.add_subcommand("run", "Train every seed of a run configuration");
    run->add_option("config", config_path, "JSON run configuration")->required();

    auto* resume = app.add_subcommand("resume", "Continue an interrupted run from its checkpoints");
    resume->add_option("dir", run_dir, "Run directory")->required();

    auto* probe = app.add_subcommand("probe", "Label the subpolicies of a finished OverCooked run");
    probe->add_option("dir", run_dir, "Run directory")->required();
    probe->add_option("--level", level, "Hierarchy level whose actions are probed")->capture_default_str();
    probe->add_option("--repeats", repeats, "Resets per upper action")->capture_default_str();

    auto* report = app.add_subcommand("report", "Write CSV and SVG learning curves");
    report->add_option("dir", run_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (*run)
        return dehrl::cli_run(config_path, std::cout, std::cerr);
    if (*resume)
        return dehrl::cli_resume(run_dir, std::cout, std::cerr);
    if (*probe)
        return dehrl::cli_probe(run_dir, level, repeats, std::cout, std::cerr);
    return dehrl::cli_report(run_dir, std::cout, std::cerr);
}
