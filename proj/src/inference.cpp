#include "rotaens/inference.hpp"

#include "rotaens/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace rotaens {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

// log(s (1 - s)) for s = sigmoid(u), stable for large |u|
double log_sigmoid_slope(double u) { return -std::abs(u) - 2.0 * std::log1p(std::exp(-std::abs(u))); }

void report(const PosteriorOptions& options, const std::string& message) {
    if (options.diagnostics) options.diagnostics(message);
}

} // namespace

double truncated_normal_log_pdf(double x, double mean, double sd, double lower, double upper) {
    if (!(x > lower && x <= upper)) return kNegInf;
    const double z = (x - mean) / sd;
    const double mass = normal_cdf((upper - mean) / sd) - normal_cdf((lower - mean) / sd);
    return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(mass);
}

double log_prior(const ParamVector& theta, const PriorSpec& priors) {
    if (!theta.in_support()) return kNegInf;
    if (theta.phi < priors.phase_lower || theta.phi > priors.phase_upper) return kNegInf;
    double lp = 0.0;
    // b ~ U(0, 1) contributes log 1 = 0
    lp -= std::log(priors.phase_upper - priors.phase_lower);
    lp += priors.r_shape * std::log(priors.r_rate) - std::lgamma(priors.r_shape) +
          (priors.r_shape - 1.0) * std::log(theta.r) - priors.r_rate * theta.r;
    lp += truncated_normal_log_pdf(theta.rho, priors.rho_mean, priors.rho_sd, 0.0, 1.0);
    const double inf = std::numeric_limits<double>::infinity();
    for (double beta : theta.beta) lp += truncated_normal_log_pdf(beta, priors.beta_mean, priors.beta_sd, 0.0, inf);
    return lp;
}

// ---------------------------------------------------------------------------

PosteriorTerms evaluate_posterior(const ModelSpec& spec, const CaseSeries& series, const ParamVector& theta,
                                  const PosteriorOptions& options) {
    PosteriorTerms terms;
    terms.log_prior = log_prior(theta, options.priors);
    if (!std::isfinite(terms.log_prior)) {
        terms.log_likelihood = kNegInf;
        terms.log_posterior = kNegInf;
        return terms;
    }
    if (series.weeks() == 0) {
        terms.log_likelihood = 0.0;
        terms.log_posterior = terms.log_prior;
        return terms;
    }
    PeriodicOptions periodic = options.periodic;
    periodic.population = options.population;
    try {
        const auto sol = find_periodic_solution(spec, theta, options.ages, options.births, periodic);
        const auto xi = tile_profile(sol.expected_profile, series.weeks(), options.calendar_offset);
        terms.log_likelihood = log_likelihood(series, xi, theta.r);
        terms.convergence_years = sol.convergence_years;
    } catch (const NonConvergence& e) {
        report(options, std::string("posterior evaluation: ") + e.what());
        terms.log_likelihood = kNegInf;
    } catch (const StiffnessFailure& e) {
        report(options, std::string("posterior evaluation: ") + e.what());
        terms.log_likelihood = kNegInf;
    }
    terms.log_posterior = terms.log_likelihood + terms.log_prior;
    return terms;
}

double log_posterior(const ModelSpec& spec, const CaseSeries& series, const ParamVector& theta,
                     const PosteriorOptions& options) {
    return evaluate_posterior(spec, series, theta, options).log_posterior;
}

// ---------------------------------------------------------------------------

SamplerResult random_walk_metropolis(SamplerTarget& target, std::vector<double> start, const SamplerConfig& config) {
    if (config.iterations == 0) throw ConfigError("iterations must be positive");
    if (config.iterations <= config.burn_in) throw ConfigError("iterations must exceed burn_in");
    if (config.adapt_interval == 0) throw ConfigError("adapt_interval must be positive");
    const std::size_t dim = start.size();
    if (dim == 0) throw ConfigError("sampler needs at least one component");
    if (config.initial_scales.size() != dim) throw ConfigError("one proposal scale per component is required");
    for (double s : config.initial_scales)
        if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("proposal scales must be positive");

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    std::vector<double> scales = config.initial_scales;
    TargetValue current = target.evaluate(start);
    target.decide(true);
    if (!std::isfinite(current.log_density)) throw InvalidParams("sampler start has zero target density");

    SamplerResult result;
    const std::size_t kept = config.iterations - config.burn_in;
    result.samples.reserve(kept);
    result.values.reserve(kept);
    std::vector<std::size_t> batch_accepts(dim, 0);
    std::vector<std::size_t> kept_accepts(dim, 0);
    std::size_t batches = 0;

    std::vector<double> proposal = start;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const bool burning = it < config.burn_in;
        for (std::size_t k = 0; k < dim; ++k) {
            proposal[k] = start[k] + scales[k] * normal(rng);
            const TargetValue cand = target.evaluate(proposal);
            const double log_ratio = cand.log_density - current.log_density;
            const double draw = uniform(rng);
            const bool accept = std::isfinite(cand.log_density) && std::log(draw) < log_ratio;
            target.decide(accept);
            if (accept) {
                start[k] = proposal[k];
                current = cand;
                if (burning)
                    ++batch_accepts[k];
                else
                    ++kept_accepts[k];
            } else {
                proposal[k] = start[k];
            }
        }
        if (burning && (it + 1) % config.adapt_interval == 0) {
            ++batches;
            const double step = std::min(0.5, 1.0 / std::sqrt(static_cast<double>(batches)));
            for (std::size_t k = 0; k < dim; ++k) {
                const double rate = static_cast<double>(batch_accepts[k]) / static_cast<double>(config.adapt_interval);
                if (rate < config.target_low)
                    scales[k] *= std::exp(-step);
                else if (rate > config.target_high)
                    scales[k] *= std::exp(step);
                batch_accepts[k] = 0;
            }
        }
        if (!burning) {
            result.samples.push_back(start);
            result.values.push_back(current);
        }
        if (config.progress) config.progress(it + 1);
    }

    result.scales = scales;
    result.component_acceptance.resize(dim);
    std::size_t total = 0;
    for (std::size_t k = 0; k < dim; ++k) {
        result.component_acceptance[k] = static_cast<double>(kept_accepts[k]) / static_cast<double>(kept);
        total += kept_accepts[k];
    }
    result.acceptance_rate = static_cast<double>(total) / static_cast<double>(kept * dim);
    return result;
}

// ---------------------------------------------------------------------------

std::array<double, ParamVector::kSize> to_unconstrained(const ParamVector& theta) {
    std::array<double, ParamVector::kSize> u{};
    u[0] = logit(theta.b);
    u[1] = logit((theta.phi - kPhaseLower) / (kPhaseUpper - kPhaseLower));
    u[2] = std::log(theta.r);
    u[3] = logit(theta.rho);
    for (std::size_t i = 0; i < kAgeClasses; ++i) u[4 + i] = std::log(theta.beta[i]);
    return u;
}

ParamVector from_unconstrained(std::span<const double> u) {
    if (u.size() != ParamVector::kSize) throw ShapeMismatch("expected ten transformed parameters");
    ParamVector p;
    p.b = sigmoid(u[0]);
    p.phi = kPhaseLower + (kPhaseUpper - kPhaseLower) * sigmoid(u[1]);
    p.r = std::exp(u[2]);
    p.rho = sigmoid(u[3]);
    for (std::size_t i = 0; i < kAgeClasses; ++i) p.beta[i] = std::exp(u[4 + i]);
    return p;
}

double log_jacobian(std::span<const double> u) {
    double j = log_sigmoid_slope(u[0]);
    j += std::log(kPhaseUpper - kPhaseLower) + log_sigmoid_slope(u[1]);
    j += u[2];
    j += log_sigmoid_slope(u[3]);
    for (std::size_t i = 0; i < kAgeClasses; ++i) j += u[4 + i];
    return j;
}

std::array<double, ParamVector::kSize> default_proposal_scales() {
    return {0.3, 0.15, 0.2, 0.1, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05};
}

namespace {

// Posterior in the transformed space. Keeps the accepted state's periodic
// solution so moves in r and rho reuse the dynamics and other moves start the
// periodic search from the accepted cycle.
class ModelTarget : public SamplerTarget {
public:
    ModelTarget(const ModelSpec& spec, const CaseSeries& series, const PosteriorOptions& options)
        : spec_(spec), series_(series), options_(options) {
        periodic_ = options.periodic;
        periodic_.population = options.population;
    }

    TargetValue evaluate(std::span<const double> u) override {
        const ParamVector theta = from_unconstrained(u);
        proposal_ = Cache{};
        TargetValue v;
        const double lp = log_prior(theta, options_.priors);
        const double lj = log_jacobian(u);
        if (!std::isfinite(lp) || !std::isfinite(lj)) return reject();

        double ll = 0.0;
        if (series_.weeks() > 0) {
            if (!dynamics(theta)) return reject();
            const Eigen::MatrixXd xi = theta.rho * proposal_.tiled_severe;
            ll = log_likelihood(series_, xi, theta.r);
        }
        v.log_likelihood = ll;
        v.log_posterior = ll + lp;
        v.log_density = v.log_posterior + lj;
        return v;
    }

    void decide(bool accepted) override {
        if (accepted && proposal_.valid) current_ = std::move(proposal_);
        proposal_ = Cache{};
    }

    std::size_t failures() const noexcept { return failures_; }

private:
    struct Cache {
        bool valid = false;
        double b = 0.0, phi = 0.0;
        std::array<double, kAgeClasses> beta{};
        Eigen::MatrixXd severe;       // 6 x 52, reporting not applied
        Eigen::MatrixXd tiled_severe; // 6 x T
        double discrepancy = 0.0;     // last-year change of severe, unscaled
        std::optional<StateVector> cycle_start;
    };

    TargetValue reject() {
        proposal_ = Cache{};
        TargetValue v;
        v.log_density = v.log_posterior = v.log_likelihood = kNegInf;
        return v;
    }

    bool same_dynamics(const ParamVector& theta) const {
        return current_.valid && current_.b == theta.b && current_.phi == theta.phi && current_.beta == theta.beta;
    }

    bool dynamics(const ParamVector& theta) {
        if (same_dynamics(theta) && current_.discrepancy * theta.rho < periodic_.epsilon) {
            proposal_ = current_;
            return true;
        }
        PeriodicOptions opts = periodic_;
        if (options_.warm_start && current_.valid) opts.initial_state = current_.cycle_start;
        try {
            auto sol = find_periodic_solution(spec_, theta, options_.ages, options_.births, opts);
            proposal_.valid = true;
            proposal_.b = theta.b;
            proposal_.phi = theta.phi;
            proposal_.beta = theta.beta;
            proposal_.severe = severe_incidence(spec_, sol.cycle);
            proposal_.tiled_severe = tile_profile(proposal_.severe, series_.weeks(), options_.calendar_offset);
            proposal_.discrepancy = sol.final_discrepancy / theta.rho;
            proposal_.cycle_start = std::move(sol.cycle_start_state);
            return true;
        } catch (const NonConvergence& e) {
            ++failures_;
            report(options_, std::string("mcmc proposal rejected: ") + e.what());
        } catch (const StiffnessFailure& e) {
            ++failures_;
            report(options_, std::string("mcmc proposal rejected: ") + e.what());
        }
        return false;
    }

    ModelSpec spec_;
    const CaseSeries& series_;
    const PosteriorOptions& options_;
    PeriodicOptions periodic_;
    Cache current_;
    Cache proposal_;
    std::size_t failures_ = 0;
};

} // namespace

PosteriorChain run_mcmc(const ModelSpec& spec, const CaseSeries& series, const McmcConfig& config,
                        const PosteriorOptions& options) {
    if (!config.initial.in_support()) throw InvalidParams("initial parameters outside their support");
    ModelTarget target(spec, series, options);
    SamplerConfig sc;
    sc.iterations = config.iterations;
    sc.burn_in = config.burn_in;
    sc.seed = config.seed;
    sc.adapt_interval = config.adapt_interval;
    sc.progress = config.progress;
    const auto scales = config.proposal_scales.value_or(default_proposal_scales());
    sc.initial_scales.assign(scales.begin(), scales.end());
    const auto u0 = to_unconstrained(config.initial);

    SamplerResult res = random_walk_metropolis(target, std::vector<double>(u0.begin(), u0.end()), sc);

    PosteriorChain chain;
    chain.model = spec.model_id();
    chain.seed = config.seed;
    chain.iterations = config.iterations;
    chain.burn_in = config.burn_in;
    chain.observations = series.cells();
    chain.acceptance_rate = res.acceptance_rate;
    chain.failed_evaluations = target.failures();
    for (std::size_t k = 0; k < ParamVector::kSize; ++k) {
        chain.component_acceptance[k] = res.component_acceptance[k];
        chain.proposal_scales[k] = res.scales[k];
    }
    chain.samples.reserve(res.samples.size());
    for (std::size_t i = 0; i < res.samples.size(); ++i) {
        chain.samples.push_back(from_unconstrained(res.samples[i]));
        chain.log_posteriors.push_back(res.values[i].log_posterior);
        chain.log_likelihoods.push_back(res.values[i].log_likelihood);
    }
    return chain;
}

// ---------------------------------------------------------------------------

Interval hpd_interval(std::span<const double> samples, double level) {
    if (samples.size() < 2) throw InsufficientSamples("HPD interval needs at least two samples");
    if (!(level > 0.0 && level <= 1.0)) throw InvalidParams("HPD level must lie in (0, 1]");
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    auto m = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
    m = std::clamp<std::size_t>(m, 1, n);
    std::size_t best = 0;
    double best_width = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + m <= n; ++i) {
        const double w = x[i + m - 1] - x[i];
        if (w < best_width) {
            best_width = w;
            best = i;
        }
    }
    return {x[best], x[best + m - 1]};
}

double quantile(std::span<const double> samples, double p) {
    if (samples.empty()) throw InsufficientSamples("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidParams("quantile level must lie in [0, 1]");
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    const double pos = p * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return x[lo] + frac * (x[hi] - x[lo]);
}

std::vector<double> parameter_column(const PosteriorChain& chain, std::size_t index) {
    if (index >= ParamVector::kSize) throw InvalidParams("parameter index out of range");
    std::vector<double> col;
    col.reserve(chain.samples.size());
    for (const auto& s : chain.samples) col.push_back(s.to_array()[index]);
    return col;
}

PosteriorSummary posterior_summary(const PosteriorChain& chain) {
    if (chain.samples.empty()) throw InsufficientSamples("posterior summary of an empty chain");
    PosteriorSummary out;
    out.model = chain.model;
    out.observations = chain.observations;
    out.samples = chain.samples.size();
    out.acceptance_rate = chain.acceptance_rate;
    out.max_log_likelihood = kNegInf;
    for (double ll : chain.log_likelihoods) out.max_log_likelihood = std::max(out.max_log_likelihood, ll);
    for (std::size_t k = 0; k < ParamVector::kSize; ++k) {
        const auto col = parameter_column(chain, k);
        // running mean: exact for constant columns
        double mean = 0.0;
        for (std::size_t i = 0; i < col.size(); ++i) mean += (col[i] - mean) / static_cast<double>(i + 1);
        out.mean[k] = mean;
        if (col.size() >= 2) {
            out.hpd95[k] = hpd_interval(col, 0.95);
        } else {
            out.hpd95[k] = {col[0], col[0]};
        }
        if (!out.hpd95[k].contains(out.mean[k]))
            out.warnings.push_back(std::string(ParamVector::names()[k]) + ": mean outside the 95% HPD interval");
    }
    return out;
}

} // namespace rotaens
