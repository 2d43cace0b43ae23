#include "rotaens/ensemble.hpp"

#include "rotaens/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rotaens {

double bic(double max_log_likelihood, std::size_t parameters, std::size_t observations) {
    if (parameters < 1 || observations < 1) throw InvalidParams("BIC needs k >= 1 and n >= 1");
    return -2.0 * max_log_likelihood + static_cast<double>(parameters) * std::log(static_cast<double>(observations));
}

std::vector<double> posterior_model_probabilities(std::span<const double> bics) {
    if (bics.empty()) throw InvalidParams("no models to weigh");
    double best = std::numeric_limits<double>::infinity();
    for (double b : bics) best = std::min(best, b);
    if (!std::isfinite(best)) throw InvalidParams("no model has a finite BIC");
    std::vector<double> w(bics.size());
    double total = 0.0;
    for (std::size_t k = 0; k < bics.size(); ++k) {
        w[k] = std::isfinite(bics[k]) ? std::exp(-0.5 * (bics[k] - best)) : 0.0;
        total += w[k];
    }
    for (double& x : w) x /= total;
    return w;
}

ModelEvidence evidence_from_summary(const PosteriorSummary& summary) {
    ModelEvidence e;
    e.model = summary.model;
    e.max_log_likelihood = summary.max_log_likelihood;
    e.parameters = summary.parameters;
    e.observations = summary.observations;
    e.bic = bic(e.max_log_likelihood, e.parameters, e.observations);
    return e;
}

void assign_model_probabilities(std::vector<ModelEvidence>& evidences) {
    std::vector<double> bics;
    bics.reserve(evidences.size());
    for (const auto& e : evidences) bics.push_back(e.bic);
    const auto w = posterior_model_probabilities(bics);
    for (std::size_t k = 0; k < evidences.size(); ++k) evidences[k].pmp = w[k];
}

namespace {

void check_weights(std::size_t models, std::span<const double> weights) {
    if (weights.size() != models)
        throw WeightMismatch(std::to_string(weights.size()) + " weights for " + std::to_string(models) + " models");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw WeightMismatch("model weights must be nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw WeightMismatch("model weights sum to " + std::to_string(total));
}

void check_level(double level) {
    if (!(level > 0.0 && level < 1.0)) throw InvalidParams("interval level must lie in (0, 1)");
}

struct WeightedPoint {
    double x;
    double w;
};

// smallest x with cumulative weight >= p
double weighted_quantile(const std::vector<WeightedPoint>& sorted, double p) {
    double cum = 0.0;
    for (const auto& pt : sorted) {
        cum += pt.w;
        if (cum >= p - 1e-12) return pt.x;
    }
    return sorted.back().x;
}

std::vector<WeightedPoint> mixture_points(const std::vector<std::vector<double>>& draws,
                                          std::span<const double> weights) {
    std::vector<WeightedPoint> pts;
    for (std::size_t k = 0; k < draws.size(); ++k) {
        if (weights[k] == 0.0) continue;
        if (draws[k].empty()) throw InsufficientSamples("a weighted model has no posterior draws");
        const double w = weights[k] / static_cast<double>(draws[k].size());
        for (double x : draws[k]) pts.push_back({x, w});
    }
    std::sort(pts.begin(), pts.end(), [](const WeightedPoint& a, const WeightedPoint& b) { return a.x < b.x; });
    return pts;
}

} // namespace

Interval credible_interval(std::span<const double> draws, double level) {
    check_level(level);
    if (draws.empty()) throw InsufficientSamples("credible interval of an empty sample");
    std::vector<double> one(draws.begin(), draws.end());
    const std::vector<std::vector<double>> d{std::move(one)};
    const double w[] = {1.0};
    return {mixture_quantile(d, w, 0.5 * (1.0 - level)), mixture_quantile(d, w, 0.5 * (1.0 + level))};
}

double mixture_quantile(const std::vector<std::vector<double>>& draws, std::span<const double> weights, double p) {
    check_weights(draws.size(), weights);
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidParams("quantile level must lie in [0, 1]");
    const auto pts = mixture_points(draws, weights);
    return weighted_quantile(pts, p);
}

BmaEstimate bma_combine_scalar(const std::vector<std::vector<double>>& draws, std::span<const double> weights,
                               double level) {
    check_weights(draws.size(), weights);
    check_level(level);
    BmaEstimate out;
    out.level = level;
    out.weights.assign(weights.begin(), weights.end());
    const auto pts = mixture_points(draws, weights);
    for (std::size_t k = 0; k < draws.size(); ++k) {
        if (weights[k] == 0.0) continue;
        double mean = 0.0;
        for (std::size_t i = 0; i < draws[k].size(); ++i) mean += (draws[k][i] - mean) / static_cast<double>(i + 1);
        out.point += weights[k] * mean;
    }
    out.interval = {weighted_quantile(pts, 0.5 * (1.0 - level)), weighted_quantile(pts, 0.5 * (1.0 + level))};
    return out;
}

std::vector<BmaEstimate> bma_combine_profile(const std::vector<Eigen::MatrixXd>& draws,
                                             std::span<const double> weights, double level) {
    check_weights(draws.size(), weights);
    if (draws.empty()) return {};
    const Eigen::Index grid = draws.front().cols();
    for (const auto& d : draws)
        if (d.cols() != grid)
            throw GridMismatch("profiles have " + std::to_string(d.cols()) + " and " + std::to_string(grid) +
                               " grid points");
    std::vector<BmaEstimate> out;
    out.reserve(static_cast<std::size_t>(grid));
    std::vector<std::vector<double>> column(draws.size());
    for (Eigen::Index g = 0; g < grid; ++g) {
        for (std::size_t k = 0; k < draws.size(); ++k) {
            column[k].resize(static_cast<std::size_t>(draws[k].rows()));
            for (Eigen::Index r = 0; r < draws[k].rows(); ++r) column[k][static_cast<std::size_t>(r)] = draws[k](r, g);
        }
        out.push_back(bma_combine_scalar(column, weights, level));
    }
    return out;
}

} // namespace rotaens
