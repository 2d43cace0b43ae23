#pragma once

// Bayesian fitting of one transmission model: priors, posterior evaluation on
// the periodic solution, component-wise random-walk Metropolis-Hastings and
// posterior summaries.

#include "rotaens/dynamics.hpp"
#include "rotaens/observation.hpp"
#include "rotaens/params.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rotaens {

/// Independent priors on the ten parameters. Truncated normals are
/// renormalized over their support; the gamma prior is shape/rate.
struct PriorSpec {
    double beta_mean = 20.0;
    double beta_sd = 5.0;
    double phase_lower = kPhaseLower;
    double phase_upper = kPhaseUpper;
    double r_shape = 0.001;
    double r_rate = 0.001;
    double rho_mean = 0.117;
    double rho_sd = 0.06;
};

/// Sum of the component log-densities; -inf outside the support.
double log_prior(const ParamVector& theta, const PriorSpec& priors = {});

/// Log-density of a normal truncated to (lower, upper].
double truncated_normal_log_pdf(double x, double mean, double sd, double lower, double upper);

using DiagnosticSink = std::function<void(const std::string&)>;

struct PosteriorOptions {
    AgeStructure ages = AgeStructure::standard();
    BirthSchedule births = BirthSchedule::standard();
    PriorSpec priors{};
    double population = kDefaultPopulation;
    /// Calendar week (0-based) of the first observed week.
    std::size_t calendar_offset = 0;
    PeriodicOptions periodic{};
    /// Start each periodic search from the current chain state's cycle.
    bool warm_start = true;
    /// Receives diagnostics for failed evaluations; nothing is logged when empty.
    DiagnosticSink diagnostics{};
};

struct PosteriorTerms {
    double log_prior = 0.0;
    double log_likelihood = 0.0;
    double log_posterior = 0.0;
    int convergence_years = 0;
};

/// Cold evaluation from the default initial condition. Parameters outside the
/// support give -inf without integrating; a failed periodic search (no
/// convergence or integration breakdown) also gives -inf.
PosteriorTerms evaluate_posterior(const ModelSpec& spec, const CaseSeries& series, const ParamVector& theta,
                                  const PosteriorOptions& options = {});

double log_posterior(const ModelSpec& spec, const CaseSeries& series, const ParamVector& theta,
                     const PosteriorOptions& options = {});

// ---------------------------------------------------------------------------
// Generic sampler on an unconstrained space

struct TargetValue {
    double log_density = 0.0;  ///< what the sampler targets
    double log_posterior = 0.0;  ///< bookkeeping, carried along with the sample
    double log_likelihood = 0.0;
};

/// Target density seen by the sampler. decide() is called once per proposal
/// so stateful targets can keep the accepted state's cached work.
class SamplerTarget {
public:
    virtual ~SamplerTarget() = default;
    virtual TargetValue evaluate(std::span<const double> u) = 0;
    virtual void decide(bool /*accepted*/) {}
};

struct SamplerConfig {
    std::size_t iterations = 50'000; ///< full sweeps over all components
    std::size_t burn_in = 10'000;
    std::uint64_t seed = 1;
    std::vector<double> initial_scales;
    /// Sweeps between scale adjustments during burn-in.
    std::size_t adapt_interval = 50;
    double target_low = 0.20;
    double target_high = 0.30;
    std::function<void(std::size_t)> progress{};
};

struct SamplerResult {
    std::vector<std::vector<double>> samples; ///< post-burn-in, one per sweep
    std::vector<TargetValue> values;
    std::vector<double> scales;               ///< frozen after burn-in
    std::vector<double> component_acceptance; ///< post-burn-in
    double acceptance_rate = 0.0;             ///< post-burn-in, all components
};

/// Component-wise Gaussian random-walk Metropolis. Throws ConfigError for
/// nonpositive lengths, iterations <= burn_in or mismatched scales, and
/// InvalidParams when the start has zero density.
SamplerResult random_walk_metropolis(SamplerTarget& target, std::vector<double> start, const SamplerConfig& config);

// ---------------------------------------------------------------------------
// Model fitting

/// Maps parameters to the sampler space: logit for b and rho, log for r and
/// beta, scaled logit for phi on its interval.
std::array<double, ParamVector::kSize> to_unconstrained(const ParamVector& theta);
ParamVector from_unconstrained(std::span<const double> u);
/// log |d theta / d u| at u.
double log_jacobian(std::span<const double> u);

struct McmcConfig {
    std::size_t iterations = 50'000;
    std::size_t burn_in = 10'000;
    std::uint64_t seed = 20'240'607;
    ParamVector initial{};
    /// Proposal standard deviations in the transformed space; defaults when empty.
    std::optional<std::array<double, ParamVector::kSize>> proposal_scales{};
    std::size_t adapt_interval = 50;
    std::function<void(std::size_t)> progress{};
};

std::array<double, ParamVector::kSize> default_proposal_scales();

struct PosteriorChain {
    ModelId model = ModelId::A;
    std::vector<ParamVector> samples;
    std::vector<double> log_posteriors;
    std::vector<double> log_likelihoods;
    double acceptance_rate = 0.0;
    std::array<double, ParamVector::kSize> component_acceptance{};
    std::array<double, ParamVector::kSize> proposal_scales{};
    std::uint64_t seed = 0;
    std::size_t iterations = 0;
    std::size_t burn_in = 0;
    std::size_t observations = 0; ///< weeks x age groups of the fitted series
    std::size_t failed_evaluations = 0;
};

PosteriorChain run_mcmc(const ModelSpec& spec, const CaseSeries& series, const McmcConfig& config,
                        const PosteriorOptions& options = {});

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    double width() const noexcept { return upper - lower; }
    bool contains(double x) const noexcept { return x >= lower && x <= upper; }
};

/// Shortest window holding ceil(level * n) sorted samples. Throws
/// InsufficientSamples for n < 2 and InvalidParams for level outside (0, 1].
Interval hpd_interval(std::span<const double> samples, double level);

/// Empirical quantile (linear interpolation between order statistics).
double quantile(std::span<const double> samples, double p);

struct PosteriorSummary {
    ModelId model = ModelId::A;
    std::array<double, ParamVector::kSize> mean{};
    std::array<Interval, ParamVector::kSize> hpd95{};
    double max_log_likelihood = 0.0;
    std::size_t parameters = ParamVector::kSize;
    std::size_t observations = 0;
    std::size_t samples = 0;
    double acceptance_rate = 0.0;
    /// Parameters whose mean falls outside its HPD interval.
    std::vector<std::string> warnings;

    ParamVector mean_params() const { return ParamVector::from_array(mean); }
};

/// Throws InsufficientSamples for an empty chain.
PosteriorSummary posterior_summary(const PosteriorChain& chain);

/// Column of one parameter across the chain.
std::vector<double> parameter_column(const PosteriorChain& chain, std::size_t index);

} // namespace rotaens
