#pragma once

// Bayesian model averaging across the fitted models, with evidences
// approximated through BIC.

#include "rotaens/inference.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace rotaens {

struct ModelEvidence {
    ModelId model = ModelId::A;
    double max_log_likelihood = 0.0;
    std::size_t parameters = ParamVector::kSize;
    std::size_t observations = 0;
    double bic = 0.0;
    double pmp = 0.0;
};

/// -2 L + k ln n. Throws InvalidParams for k < 1 or n < 1.
double bic(double max_log_likelihood, std::size_t parameters, std::size_t observations);

/// Posterior model probabilities under a uniform model prior,
/// proportional to exp(-bic / 2). Throws InvalidParams for an empty set.
std::vector<double> posterior_model_probabilities(std::span<const double> bics);

/// Evidence record from a posterior summary (bic filled in, pmp left at 0).
ModelEvidence evidence_from_summary(const PosteriorSummary& summary);

/// Fills in the pmp of every record.
void assign_model_probabilities(std::vector<ModelEvidence>& evidences);

struct BmaEstimate {
    double point = 0.0;
    Interval interval{};
    double level = 0.95;
    std::vector<double> weights;
};

/// Equal-tailed interval of an equally weighted sample (inverse empirical CDF).
Interval credible_interval(std::span<const double> draws, double level);

/// Inverse CDF of the mixture that gives model k weight w_k spread evenly over
/// its draws.
double mixture_quantile(const std::vector<std::vector<double>>& draws, std::span<const double> weights, double p);

/// Point = sum_k w_k mean_k; interval = equal-tailed interval of the mixture.
/// Throws WeightMismatch when weights are negative, do not sum to one or do not
/// match the number of models; InsufficientSamples when a weighted model has no draws.
BmaEstimate bma_combine_scalar(const std::vector<std::vector<double>>& draws, std::span<const double> weights,
                               double level = 0.95);

/// Pointwise combination over a common grid. draws[k] holds one posterior
/// draw per row and one grid point per column. Throws GridMismatch when the
/// column counts differ.
std::vector<BmaEstimate> bma_combine_profile(const std::vector<Eigen::MatrixXd>& draws,
                                             std::span<const double> weights, double level = 0.95);

} // namespace rotaens
