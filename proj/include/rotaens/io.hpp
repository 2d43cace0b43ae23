#pragma once

// File formats: case series, run configuration, chains, summaries, manifests.

#include "rotaens/ensemble.hpp"
#include "rotaens/inference.hpp"
#include "rotaens/observation.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rotaens {

inline constexpr std::string_view kToolVersion = "1.0.0";

// --- case series -----------------------------------------------------------

/// Parses `week,age_group,cases` text. Weeks run 1..T without gaps and every
/// (week, age) cell appears exactly once. Throws ParseError (with the line
/// number) on malformed rows and GridIncomplete on duplicated or missing cells.
CaseSeries parse_case_series(std::istream& in);
CaseSeries load_case_series(const std::filesystem::path& path);
void write_case_series(std::ostream& out, const CaseSeries& series);
void write_case_series(const std::filesystem::path& path, const CaseSeries& series);

// --- configuration ---------------------------------------------------------

struct RunConfig {
    std::vector<ModelId> models{kAllModels.begin(), kAllModels.end()};
    std::string data = "data/synthetic_model_b.csv";
    std::string output = "results";
    std::uint64_t seed = 20'240'607;
    std::size_t iterations = 50'000;
    std::size_t burn_in = 10'000;
    std::size_t adapt_interval = 50;
    std::size_t calendar_offset = 0;
    double population = kDefaultPopulation;
    double epsilon = 0.01;
    int max_years = 100;
    std::vector<double> coverages{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<double> seroconversion{0.63, 0.49};
    std::size_t projection_draws = 100;
    std::size_t short_horizon = 260;
    std::size_t long_horizon = 1040;
    /// 0 selects the ROTAENS_THREADS environment variable or the hardware count.
    std::size_t threads = 0;

    // synthetic truth used by `simulate`
    ModelId truth_model = ModelId::B;
    ParamVector truth = default_truth();
    std::size_t simulate_weeks = 118;
    std::uint64_t simulate_seed = 20'240'607;

    static ParamVector default_truth();

    /// Sets one key; throws ConfigError for unknown keys or malformed values.
    void set(const std::string& key, const std::string& value);
    /// Throws ConfigError when the settings are inconsistent.
    void validate() const;
    /// Canonical key=value text, one key per line in a fixed order.
    std::string to_text() const;
};

/// Reads key=value lines ('#' starts a comment) over the defaults.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
/// Applies a `key=value` override.
void apply_override(RunConfig& config, const std::string& assignment);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// --- numeric text ----------------------------------------------------------

/// Shortest round-trip representation (17 significant digits when needed).
std::string format_exact(double v);
/// Fixed significant digits for report tables.
std::string format_number(double v, int digits = 10);

// --- chains ----------------------------------------------------------------

/// Chain header: b,phi,r,rho,beta1..beta6,log_posterior.
void write_chain(const std::filesystem::path& path, const PosteriorChain& chain);
/// Reads a chain file and its `.meta` companion. Log-likelihoods are recovered
/// as log posterior minus log prior.
PosteriorChain load_chain(const std::filesystem::path& path, const PriorSpec& priors = {});

// --- tables ----------------------------------------------------------------

/// Comma-separated table with a header row.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row);
    void write(const std::filesystem::path& path) const;
    static Table read(const std::filesystem::path& path);
    std::size_t column(std::string_view name) const;
};

/// Flat key=value file.
void write_key_values(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::string>>& kv);
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

Table summary_table(const PosteriorSummary& summary);
Table evidence_table(const std::vector<ModelEvidence>& evidences);

} // namespace rotaens
