#include "rotaens/observation.hpp"

#include <cmath>
#include <limits>

namespace rotaens {

CaseSeries::CaseSeries(std::size_t weeks) : counts_(CountMatrix::Zero(kAgeClasses, static_cast<Eigen::Index>(weeks))) {}

CaseSeries::CaseSeries(CountMatrix counts) : counts_(std::move(counts)) {
    if (counts_.rows() != static_cast<Eigen::Index>(kAgeClasses))
        throw ShapeMismatch("case series needs " + std::to_string(kAgeClasses) + " age groups");
    if (counts_.size() > 0 && counts_.minCoeff() < 0) throw InvalidParams("case counts must be nonnegative");
}

void CaseSeries::set(std::size_t week, std::size_t age, std::int64_t count) {
    if (count < 0) throw InvalidParams("case counts must be nonnegative");
    if (week >= weeks() || age >= kAgeClasses) throw ShapeMismatch("cell outside the case series");
    counts_(static_cast<Eigen::Index>(age), static_cast<Eigen::Index>(week)) = count;
}

Eigen::MatrixXd expected_reported_cases(const ModelSpec& spec, const Trajectory& trajectory, double rho) {
    return rho * severe_incidence(spec, trajectory);
}

Eigen::MatrixXd tile_profile(const Eigen::MatrixXd& profile, std::size_t weeks, std::size_t start_week) {
    const auto period = static_cast<std::size_t>(profile.cols());
    if (period == 0) throw ShapeMismatch("empty profile");
    Eigen::MatrixXd out(profile.rows(), static_cast<Eigen::Index>(weeks));
    for (std::size_t t = 0; t < weeks; ++t)
        out.col(static_cast<Eigen::Index>(t)) = profile.col(static_cast<Eigen::Index>((start_week + t) % period));
    return out;
}

double nb_log_pmf(std::int64_t count, double mean, double dispersion) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) throw InvalidParams("negative-binomial mean must be >= 0");
    if (!(dispersion > 0.0) || !std::isfinite(dispersion)) throw InvalidParams("dispersion must be > 0");
    if (count < 0) return -std::numeric_limits<double>::infinity();
    if (mean == 0.0) return count == 0 ? 0.0 : -std::numeric_limits<double>::infinity();

    const double k = static_cast<double>(count);
    const double r = dispersion;
    // log Gamma(k + r) - log Gamma(r) - log k!; the rising product is exact for small k
    double coef;
    if (count < 64) {
        coef = 0.0;
        for (std::int64_t j = 0; j < count; ++j) coef += std::log((r + static_cast<double>(j)) / static_cast<double>(j + 1));
    } else {
        coef = std::lgamma(k + r) - std::lgamma(r) - std::lgamma(k + 1.0);
    }
    // r log(r / (r + mu)) + k log(mu / (r + mu))
    const double log_p0 = -r * std::log1p(mean / r);
    const double log_tail = count == 0 ? 0.0 : k * (std::log(mean) - std::log(r + mean));
    return coef + log_p0 + log_tail;
}

double log_likelihood(const CaseSeries& series, const Eigen::MatrixXd& expected, double dispersion) {
    if (expected.rows() != static_cast<Eigen::Index>(kAgeClasses) ||
        expected.cols() != static_cast<Eigen::Index>(series.weeks()))
        throw ShapeMismatch("expected matrix is " + std::to_string(expected.rows()) + "x" +
                            std::to_string(expected.cols()) + ", series has " + std::to_string(series.weeks()) +
                            " weeks");
    // Neumaier compensated sum
    double sum = 0.0;
    double comp = 0.0;
    for (std::size_t t = 0; t < series.weeks(); ++t) {
        for (std::size_t i = 0; i < kAgeClasses; ++i) {
            const double mu = std::max(expected(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)), kExpectedFloor);
            const double term = nb_log_pmf(series.at(t, i), mu, dispersion);
            const double s = sum + term;
            if (std::abs(sum) >= std::abs(term))
                comp += (sum - s) + term;
            else
                comp += (term - s) + sum;
            sum = s;
        }
    }
    return sum + comp;
}

std::int64_t sample_negative_binomial(double mean, double dispersion, std::mt19937_64& rng) {
    if (!(mean >= 0.0)) throw InvalidParams("negative-binomial mean must be >= 0");
    if (!(dispersion > 0.0)) throw InvalidParams("dispersion must be > 0");
    if (mean == 0.0) return 0;
    std::gamma_distribution<double> gamma(dispersion, mean / dispersion);
    const double rate = gamma(rng);
    if (!(rate > 0.0)) return 0;
    std::poisson_distribution<std::int64_t> poisson(rate);
    return poisson(rng);
}

CaseSeries simulate_observations(const Eigen::MatrixXd& expected, double dispersion, std::uint64_t seed) {
    if (expected.rows() != static_cast<Eigen::Index>(kAgeClasses)) throw ShapeMismatch("expected matrix needs 6 rows");
    std::mt19937_64 rng(seed);
    CaseSeries series(static_cast<std::size_t>(expected.cols()));
    for (std::size_t t = 0; t < series.weeks(); ++t)
        for (std::size_t i = 0; i < kAgeClasses; ++i)
            series.set(t, i,
                       sample_negative_binomial(expected(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)),
                                                dispersion, rng));
    return series;
}

} // namespace rotaens
