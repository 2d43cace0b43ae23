#pragma once

// Negative-binomial observation layer: expected reported cases, likelihood and
// synthetic surveillance data.

#include "rotaens/dynamics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace rotaens {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Weekly reported case counts, stored as 6 age groups x T weeks. Indices are 0-based.
class CaseSeries {
public:
    CaseSeries() : counts_(kAgeClasses, 0) {}
    explicit CaseSeries(std::size_t weeks);
    /// Throws ShapeMismatch unless counts has 6 rows, InvalidParams on negative counts.
    explicit CaseSeries(CountMatrix counts);

    std::size_t weeks() const noexcept { return static_cast<std::size_t>(counts_.cols()); }
    std::size_t age_groups() const noexcept { return kAgeClasses; }
    std::size_t cells() const noexcept { return weeks() * kAgeClasses; }

    std::int64_t at(std::size_t week, std::size_t age) const { return counts_(static_cast<Eigen::Index>(age), static_cast<Eigen::Index>(week)); }
    void set(std::size_t week, std::size_t age, std::int64_t count);
    const CountMatrix& counts() const noexcept { return counts_; }

    friend bool operator==(const CaseSeries& a, const CaseSeries& b) { return a.counts_ == b.counts_; }

private:
    CountMatrix counts_;
};

/// rho * severe incidence, 6 x T. Linear in rho.
Eigen::MatrixXd expected_reported_cases(const ModelSpec& spec, const Trajectory& trajectory, double rho);

/// Repeats a 52-week calendar profile over an observation window whose first
/// week is calendar week `start_week` (0-based).
Eigen::MatrixXd tile_profile(const Eigen::MatrixXd& profile, std::size_t weeks, std::size_t start_week = 0);

/// Log-pmf of a negative binomial with mean mu and variance mu + mu^2 / r.
/// Throws InvalidParams for mu < 0 or r <= 0.
double nb_log_pmf(std::int64_t count, double mean, double dispersion);

/// Expected values below this floor are raised to it before scoring.
inline constexpr double kExpectedFloor = 1e-10;

/// Sum over every (age, week) cell of nb_log_pmf. Throws ShapeMismatch.
double log_likelihood(const CaseSeries& series, const Eigen::MatrixXd& expected, double dispersion);

/// One negative-binomial draw (gamma-Poisson mixture).
std::int64_t sample_negative_binomial(double mean, double dispersion, std::mt19937_64& rng);

/// Independent draws per cell; identical seeds give identical series.
CaseSeries simulate_observations(const Eigen::MatrixXd& expected, double dispersion, std::uint64_t seed);

} // namespace rotaens
