// Command-line front end for the batch workflow.

#include "rotaens/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <functional>
#include <iostream>

namespace {

using namespace rotaens;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::size_t threads = 0;
};

RunConfig build_config(const CommonArgs& args) {
    RunConfig config = args.config_path.empty() ? RunConfig{} : load_config(args.config_path);
    for (const auto& kv : args.overrides) apply_override(config, kv);
    config.validate();
    return config;
}

int run_guarded(const std::string& stage, const std::function<void()>& body) {
    try {
        body();
        return EXIT_SUCCESS;
    } catch (const PipelineError& e) {
        std::cerr << "rotaens: " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "rotaens: stage '" << stage << "' failed: " << e.what() << '\n';
    }
    return EXIT_FAILURE;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ensemble of rotavirus transmission models: fitting, model averaging and vaccine impact"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    app.fallthrough();

    CommonArgs args;
    app.add_option("-c,--config", args.config_path, "key=value configuration file")->check(CLI::ExistingFile);
    app.add_option("-s,--set", args.overrides, "override one setting, e.g. --set iterations=2000")
        ->take_all()
        ->allow_extra_args(false);
    app.add_option("-j,--threads", args.threads, "worker threads (overrides ROTAENS_THREADS)");

    std::string sim_out;
    auto* simulate = app.add_subcommand("simulate", "draw a synthetic case series from the truth_* settings");
    simulate->add_option("-o,--out", sim_out, "output file (default: the configured data path)");

    auto* fit = app.add_subcommand("fit", "run one MCMC chain per selected model");
    auto* summarize = app.add_subcommand("summarize", "posterior means and HPD intervals from stored chains");
    auto* bma = app.add_subcommand("bma", "model evidence, averaged burden, R0 and weekly profiles");
    auto* project = app.add_subcommand("project", "vaccination impact over the coverage grid");
    auto* tables = app.add_subcommand("tables", "plot-ready tables from the stage outputs");
    auto* run = app.add_subcommand("run", "all stages in order");

    bool defaults_only = false;
    auto* config_cmd = app.add_subcommand("config", "print the effective configuration");
    config_cmd->add_flag("--defaults", defaults_only, "print the built-in defaults and ignore --config/--set");

    CLI11_PARSE(app, argc, argv);

    if (config_cmd->parsed()) {
        return run_guarded("config", [&] { std::cout << (defaults_only ? RunConfig{} : build_config(args)).to_text(); });
    }

    RunConfig config;
    if (const int rc = run_guarded("config", [&] { config = build_config(args); }); rc != EXIT_SUCCESS) return rc;
    PipelineOptions options;
    options.threads = resolve_threads(args.threads, config);
    options.log = &std::cerr;

    if (simulate->parsed())
        return run_guarded("simulate", [&] {
            const std::string path = sim_out.empty() ? config.data : sim_out;
            write_case_series(path, simulate_dataset(config));
            std::cerr << "wrote " << path << '\n';
        });
    if (fit->parsed()) return run_guarded("fit", [&] { stage_fit(config, options); });
    if (summarize->parsed()) return run_guarded("summarize", [&] { stage_summarize(config, options); });
    if (bma->parsed()) return run_guarded("bma", [&] { stage_bma(config, options); });
    if (project->parsed()) return run_guarded("project", [&] { stage_project(config, options); });
    if (tables->parsed()) return run_guarded("tables", [&] { emit_plot_tables(config); });
    if (run->parsed()) return run_guarded("run", [&] { run_pipeline(config, options); });
    return EXIT_FAILURE;
}
