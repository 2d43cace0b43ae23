#pragma once

// Orchestration of the batch workflow. Every stage reads its inputs from and
// writes its artifacts to the configured output directory, so stages can run
// one at a time from the command line or all together.
//
// Layout under <output>/:
//   chains/chain_<M>.csv (+ .meta)   posterior samples after burn-in
//   summary_<M>.csv                  posterior means and 95% HPD intervals
//   evidence.csv                     BIC and posterior model probabilities
//   ensemble.csv                     burden and R0 per model and averaged
//   profiles.csv                     weekly reported and severe profiles
//   impact/                          vaccination impact per model and scenario
//   tables/                          plot-ready tables
//   manifest.txt                     seeds, config hash, version

#include "rotaens/io.hpp"
#include "rotaens/metrics.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace rotaens {

/// A stage failed; what() names the stage and the underlying error.
class PipelineError : public Error {
public:
    PipelineError(std::string stage, const std::string& what)
        : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct PipelineOptions {
    std::size_t threads = 1;
    /// Progress messages; silent when null.
    std::ostream* log = nullptr;
};

/// Thread budget: flag value when nonzero, else the config value, else the
/// environment/hardware default.
std::size_t resolve_threads(std::size_t flag, const RunConfig& config);

/// Synthetic case series drawn from the config's truth_* parameters.
CaseSeries simulate_dataset(const RunConfig& config);

std::filesystem::path chain_path(const RunConfig& config, ModelId model);
std::string scenario_label(double seroconversion);

void stage_fit(const RunConfig& config, const PipelineOptions& options);
void stage_summarize(const RunConfig& config, const PipelineOptions& options);
void stage_bma(const RunConfig& config, const PipelineOptions& options);
void stage_project(const RunConfig& config, const PipelineOptions& options);
/// Reshapes the stage artifacts into tables/; throws MissingArtifact.
void emit_plot_tables(const RunConfig& config);
void write_manifest(const RunConfig& config);

/// All stages in order. Any failure is rethrown as PipelineError.
void run_pipeline(const RunConfig& config, const PipelineOptions& options);

} // namespace rotaens
