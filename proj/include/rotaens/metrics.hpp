#pragma once

// Epidemiological summaries (R0, burden, age distributions) and vaccination
// analyses (efficacy, seroconversion, impact projections).

#include "rotaens/dynamics.hpp"
#include "rotaens/inference.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace rotaens {

struct NextGenerationMatrix {
    Eigen::MatrixXd matrix;
    double spectral_radius = 0.0;
    /// Infected compartment of each row/column, e.g. "I2[4]" (kind, 1-based age class).
    std::vector<std::string> labels;
};

/// Largest eigenvalue magnitude of a square matrix.
double spectral_radius(const Eigen::MatrixXd& m);

/// K = F V^-1 from the new-infection matrix F and the transition matrix V.
/// Throws SingularTransition when a diagonal entry of V (an exit rate) is not
/// positive or V cannot be inverted; ShapeMismatch when the shapes differ.
NextGenerationMatrix next_generation_matrix(const Eigen::MatrixXd& new_infections,
                                            const Eigen::MatrixXd& transitions);

/// Disease-free stationary state at constant births mean_rate * population:
/// every class holds population / (mean_rate^-1 alpha_i) split between M and
/// the first susceptible class.
StateVector disease_free_state(const ModelSpec& spec, const AgeStructure& ages, double mean_birth_rate,
                               double population = 1.0);

/// NGM of a model linearised at the disease-free state, with transmission at
/// its seasonal mean (beta0_i).
NextGenerationMatrix next_generation_matrix(const ModelSpec& spec, const ParamVector& params,
                                            const AgeStructure& ages,
                                            const BirthSchedule& births = BirthSchedule::standard());

struct BurdenEstimate {
    double annual_percent = 0.0;
    Interval interval{};
    std::vector<double> draws;
};

/// Periodic search used by the summaries, with the same convergence criterion
/// as the likelihood. rho only enters through the stopping year.
PeriodicSolution periodic_dynamics(const ModelSpec& spec, const ParamVector& params, const AgeStructure& ages,
                                   const BirthSchedule& births, const PeriodicOptions& options = {});

/// Severe cases over the solution's cycle as a percentage of its mean population.
double burden_percent(const ModelSpec& spec, const PeriodicSolution& solution);

/// Severe RVGE cases over one periodic year as a percentage of the mean modelled
/// population. Propagates NonConvergence.
double annual_burden_percent(const ModelSpec& spec, const ParamVector& params, const AgeStructure& ages,
                             const BirthSchedule& births, const PeriodicOptions& options = {});

/// Mean and 95% HPD of the burden over posterior draws.
BurdenEstimate annual_burden(const ModelSpec& spec, std::span<const ParamVector> draws, const AgeStructure& ages,
                             const BirthSchedule& births, const PeriodicOptions& options = {},
                             std::size_t threads = 1);

/// Per-age totals over the columns of a 6 x T profile, normalised to sum to one.
/// Throws AllZero when every total is zero and InvalidParams on negative entries.
std::array<double, kAgeClasses> age_distribution(const Eigen::MatrixXd& profile);

/// VE = 1 - [(1-s)^2 + 2 s (1-s) sigma2 d2/d1 + s^2 sigma3 d3/d1].
/// Throws ZeroDenominator for d1 = 0 and InvalidParams for inputs outside [0, 1].
double vaccine_efficacy_forward(double seroconversion, double sigma2, double sigma3,
                                const std::array<double, 3>& disease_fractions);

/// Inverse of vaccine_efficacy_forward on [0, 1]. Throws Unattainable when
/// the target exceeds the efficacy at s = 1.
double seroconversion_from_efficacy(double efficacy, double sigma2, double sigma3,
                                    const std::array<double, 3>& disease_fractions);

/// Vaccine policy for a model at coverage c and seroconversion s; the Model A
/// efficacies follow from s through the closed form.
VaccinePolicy make_policy(const ModelSpec& spec, double coverage, double seroconversion);

/// Expected reporting rate: fraction of cases seeking care times fraction covered.
double reporting_prior_mean(double consult_rate, double surveillance_coverage);

struct ImpactOptions {
    std::vector<double> coverages{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    double seroconversion = 0.63;
    std::size_t short_horizon_weeks = 260;
    std::size_t long_horizon_weeks = 1040;
    double interval_level = 0.99;
    PeriodicOptions periodic{};
    std::size_t threads = 1;
};

struct ImpactResult {
    double coverage = 0.0;
    double seroconversion = 0.0;
    /// Weekly severe incidence divided by the same week without vaccination,
    /// averaged over draws; short horizon.
    std::vector<double> relative_incidence;
    std::vector<double> relative_lower;
    std::vector<double> relative_upper;
    /// Per-draw relative series (draw-major).
    std::vector<std::vector<double>> relative_draws;
    /// Percent reduction of annual severe cases in the final year of the long horizon.
    double percent_reduction = 0.0;
    Interval percent_quantile{};
    Interval percent_hpd{};
    /// Cases per year averted in the final year.
    double absolute_reduction = 0.0;
    Interval absolute_quantile{};
    double interval_level = 0.99;
    /// Per-draw percent reductions, in draw order.
    std::vector<double> percent_draws;
    std::vector<double> absolute_draws;
    std::array<double, kAgeClasses> age_distribution_baseline{};
    std::array<double, kAgeClasses> age_distribution_vaccinated{};
    /// Largest weekly severe incidence (all ages) in the year before vaccination
    /// and in each year of the short horizon, averaged over draws.
    double baseline_peak = 0.0;
    std::vector<double> yearly_peaks;
    /// Some yearly peak is above the baseline peak by more than 0.1%.
    bool peak_exceeds_baseline() const;
};

/// Impact of vaccination for every coverage in options.coverages, from the
/// periodic state of each draw. The comparison is with the unvaccinated
/// continuation from the same state, so coverage 0 gives exactly no change.
std::vector<ImpactResult> vaccination_impact(const ModelSpec& spec, std::span<const ParamVector> draws,
                                             const AgeStructure& ages, const BirthSchedule& births,
                                             const ImpactOptions& options = {});

/// Evenly spaced subset of count draws (all when count >= size or count == 0).
std::vector<ParamVector> thin_draws(std::span<const ParamVector> samples, std::size_t count);

} // namespace rotaens
