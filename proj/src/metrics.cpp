#include "rotaens/metrics.hpp"

#include "rotaens/errors.hpp"
#include "rotaens/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rotaens {

double spectral_radius(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw ShapeMismatch("spectral radius needs a square matrix");
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
    if (solver.info() != Eigen::Success) throw InvalidParams("eigenvalue computation failed");
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

NextGenerationMatrix next_generation_matrix(const Eigen::MatrixXd& new_infections,
                                            const Eigen::MatrixXd& transitions) {
    const Eigen::Index n = transitions.rows();
    if (transitions.cols() != n || new_infections.rows() != n || new_infections.cols() != n)
        throw ShapeMismatch("F and V must be square matrices of the same size");
    if ((new_infections.array() < 0.0).any()) throw InvalidParams("new-infection matrix must be nonnegative");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(transitions(i, i) > 0.0))
            throw SingularTransition("infected state " + std::to_string(i + 1) + " has no positive exit rate");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(transitions);
    if (!lu.isInvertible()) throw SingularTransition("transition matrix is singular");
    NextGenerationMatrix out;
    // V^-1 is nonnegative for a valid transition matrix; clip rounding noise
    out.matrix = (new_infections * lu.inverse()).cwiseMax(0.0);
    out.spectral_radius = spectral_radius(out.matrix);
    out.labels.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) out.labels.push_back("x" + std::to_string(i + 1));
    return out;
}

namespace {

std::string_view first_susceptible(ModelId id) { return id == ModelId::A ? "S" : "S1"; }

bool is_infected_kind(std::string_view name) { return !name.empty() && (name[0] == 'I' || name[0] == 'E'); }

// Compartments fed by new infections of the fully susceptible class, with the
// share of each.
std::vector<std::pair<std::string_view, double>> infection_targets(const ModelSpec& spec) {
    switch (spec.model_id()) {
    case ModelId::A: return {{"Is", spec.severe_split()}, {"Im", spec.mild_split()}};
    case ModelId::C: return {{"E1", 1.0}};
    default: return {{"I1", spec.relative_susceptibility()[0]}};
    }
}

} // namespace

StateVector disease_free_state(const ModelSpec& spec, const AgeStructure& ages, double mean_birth_rate,
                               double population) {
    ages.validate();
    if (ages.class_count() != kAgeClasses) throw InvalidParams("disease-free state needs six age classes");
    if (!(mean_birth_rate > 0.0) || !(population > 0.0))
        throw InvalidParams("disease-free state needs positive births and population");
    StateVector state(layout_for(spec.model_id()));
    const double inflow = mean_birth_rate * population;
    const double delta = spec.maternal_waning();
    double maternal_in = inflow;
    for (std::size_t i = 0; i < kAgeClasses; ++i) {
        const double alpha = ages.aging_rates[i];
        const double maternal = maternal_in / (alpha + delta);
        maternal_in = alpha * maternal;
        state.at("M", i) = maternal;
        state.at(first_susceptible(spec.model_id()), i) = inflow / alpha - maternal;
    }
    return state;
}

NextGenerationMatrix next_generation_matrix(const ModelSpec& spec, const ParamVector& params,
                                            const AgeStructure& ages, const BirthSchedule& births) {
    for (double b : params.beta)
        if (!(b >= 0.0) || !std::isfinite(b)) throw InvalidParams("baseline transmission rates must be >= 0");
    const Layout& layout = layout_for(spec.model_id());
    const StateVector dfe = disease_free_state(spec, ages, births.mean_rate);

    std::vector<std::size_t> infected;
    std::vector<std::string> labels;
    for (std::size_t k = 0; k < layout.kind_count(); ++k) {
        if (!is_infected_kind(layout.kind(k).name)) continue;
        for (std::size_t a = 0; a < kAgeClasses; ++a) {
            infected.push_back(layout.index(k, a));
            labels.push_back(layout.kind(k).name + "[" + std::to_string(a + 1) + "]");
        }
    }
    const auto n = static_cast<Eigen::Index>(infected.size());
    std::vector<Eigen::Index> row_of(layout.size(), -1);
    for (Eigen::Index r = 0; r < n; ++r) row_of[infected[static_cast<std::size_t>(r)]] = r;

    // Transitions: with transmission switched off the system is affine, so
    // each column of the Jacobian is an exact difference of two evaluations.
    const BirthSchedule flat = BirthSchedule::constant(births.mean_rate);
    const ModelSystem silent(spec, ages, SeasonalForcing{{}, 0.0, params.phi}, flat);
    std::vector<double> zero(silent.dimension(), 0.0), base(silent.dimension()), probe(silent.dimension());
    std::vector<double> unit(silent.dimension(), 0.0);
    silent.rhs(0.0, zero, base);
    Eigen::MatrixXd V(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        std::fill(unit.begin(), unit.end(), 0.0);
        unit[infected[static_cast<std::size_t>(c)]] = 1.0;
        silent.rhs(0.0, unit, probe);
        for (Eigen::Index r = 0; r < n; ++r) {
            const std::size_t idx = infected[static_cast<std::size_t>(r)];
            V(r, c) = -(probe[idx] - base[idx]);
        }
    }

    // New infections at the seasonal mean transmission rate.
    const ModelSystem live(spec, ages, SeasonalForcing{params.beta, 0.0, params.phi}, flat);
    const auto targets = infection_targets(spec);
    const std::size_t susceptible_kind = layout.kind_index(first_susceptible(spec.model_id()));
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);
    std::vector<double> single(layout.size(), 0.0);
    for (Eigen::Index c = 0; c < n; ++c) {
        const std::size_t idx = infected[static_cast<std::size_t>(c)];
        const std::size_t j = idx % kAgeClasses;
        std::fill(single.begin(), single.end(), 0.0);
        single[idx] = 1.0;
        // one infectious person alone in class j: foi_i = C_ij beta0_j iota
        const auto per_unit = live.force_of_infection(0.0, single);
        const double pop_j = dfe.class_population(j);
        for (std::size_t i = 0; i < kAgeClasses; ++i) {
            const double lambda = per_unit[i] / pop_j;
            const double s = dfe.values()[layout.index(susceptible_kind, i)];
            for (const auto& [name, share] : targets) {
                const Eigen::Index r = row_of[layout.index(layout.kind_index(name), i)];
                F(r, c) += share * lambda * s;
            }
        }
    }
    NextGenerationMatrix out = next_generation_matrix(F, V);
    out.labels = std::move(labels);
    return out;
}

PeriodicSolution periodic_dynamics(const ModelSpec& spec, const ParamVector& params, const AgeStructure& ages,
                                   const BirthSchedule& births, const PeriodicOptions& options) {
    return find_periodic_solution(spec, params, ages, births, options);
}

double burden_percent(const ModelSpec& spec, const PeriodicSolution& sol) {
    const double cases = severe_incidence(spec, sol.cycle).sum();
    double pop = 0.0;
    const std::size_t weeks = sol.cycle.intervals();
    for (std::size_t t = 0; t < weeks; ++t) pop += sol.cycle.states[t].total();
    pop /= static_cast<double>(weeks);
    if (!(pop > 0.0)) throw ZeroPopulation("modelled population is empty");
    return 100.0 * cases / pop;
}

namespace {

Interval hpd_or_point(std::span<const double> v, double level) {
    if (v.size() < 2) return {v.front(), v.front()};
    return hpd_interval(v, level);
}

Interval quantile_interval(std::span<const double> v, double level) {
    return {quantile(v, 0.5 * (1.0 - level)), quantile(v, 0.5 * (1.0 + level))};
}

double mean_of(std::span<const double> v) {
    double m = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) m += (v[i] - m) / static_cast<double>(i + 1);
    return m;
}

} // namespace

double annual_burden_percent(const ModelSpec& spec, const ParamVector& params, const AgeStructure& ages,
                             const BirthSchedule& births, const PeriodicOptions& options) {
    return burden_percent(spec, periodic_dynamics(spec, params, ages, births, options));
}

BurdenEstimate annual_burden(const ModelSpec& spec, std::span<const ParamVector> draws, const AgeStructure& ages,
                             const BirthSchedule& births, const PeriodicOptions& options, std::size_t threads) {
    if (draws.empty()) throw InsufficientSamples("burden needs at least one parameter draw");
    BurdenEstimate out;
    out.draws.resize(draws.size());
    parallel_for(draws.size(), threads,
                 [&](std::size_t i) { out.draws[i] = annual_burden_percent(spec, draws[i], ages, births, options); });
    out.annual_percent = mean_of(out.draws);
    out.interval = hpd_or_point(out.draws, 0.95);
    return out;
}

std::array<double, kAgeClasses> age_distribution(const Eigen::MatrixXd& profile) {
    if (profile.rows() != static_cast<Eigen::Index>(kAgeClasses)) throw ShapeMismatch("profile needs 6 age rows");
    if ((profile.array() < 0.0).any()) throw InvalidParams("profile must be nonnegative");
    std::array<double, kAgeClasses> out{};
    double total = 0.0;
    for (std::size_t i = 0; i < kAgeClasses; ++i) {
        out[i] = profile.row(static_cast<Eigen::Index>(i)).sum();
        total += out[i];
    }
    if (!(total > 0.0)) throw AllZero("profile has no cases");
    for (double& x : out) x /= total;
    return out;
}

namespace {

void check_unit(double x, const char* what) {
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidParams(std::string(what) + " must lie in [0, 1]");
}

struct EfficacyQuadratic {
    double linear;    // 2 - 2a
    double quadratic; // 1 - 2a + c
    double at(double s) const { return linear * s - quadratic * s * s; }
};

EfficacyQuadratic efficacy_quadratic(double sigma2, double sigma3, const std::array<double, 3>& d) {
    check_unit(sigma2, "relative susceptibility");
    check_unit(sigma3, "relative susceptibility");
    for (double x : d) check_unit(x, "disease fraction");
    if (d[0] == 0.0) throw ZeroDenominator("first-infection disease fraction is zero");
    const double a = sigma2 * d[1] / d[0];
    const double c = sigma3 * d[2] / d[0];
    return {2.0 - 2.0 * a, 1.0 - 2.0 * a + c};
}

} // namespace

double vaccine_efficacy_forward(double seroconversion, double sigma2, double sigma3,
                                const std::array<double, 3>& disease_fractions) {
    check_unit(seroconversion, "seroconversion");
    return efficacy_quadratic(sigma2, sigma3, disease_fractions).at(seroconversion);
}

double seroconversion_from_efficacy(double efficacy, double sigma2, double sigma3,
                                    const std::array<double, 3>& disease_fractions) {
    if (!(efficacy >= 0.0)) throw InvalidParams("target efficacy must be nonnegative");
    const auto q = efficacy_quadratic(sigma2, sigma3, disease_fractions);
    const double ceiling = q.at(1.0);
    if (efficacy > ceiling + 1e-12)
        throw Unattainable("efficacy " + std::to_string(efficacy) + " exceeds " + std::to_string(ceiling) +
                           " reached at full seroconversion");
    if (efficacy == 0.0) return 0.0;
    // smaller root of quadratic * s^2 - linear * s + efficacy = 0, in the
    // cancellation-free form that stays valid as quadratic -> 0
    const double disc = std::max(0.0, q.linear * q.linear - 4.0 * q.quadratic * efficacy);
    double s = 2.0 * efficacy / (q.linear + std::sqrt(disc));
    for (int it = 0; it < 3; ++it) {
        const double slope = q.linear - 2.0 * q.quadratic * s;
        if (slope == 0.0) break;
        s -= (q.at(s) - efficacy) / slope;
    }
    return std::clamp(s, 0.0, 1.0);
}

VaccinePolicy make_policy(const ModelSpec& spec, double coverage, double seroconversion) {
    VaccinePolicy p;
    p.coverage = coverage;
    p.seroconversion = seroconversion;
    const auto& sigma = spec.relative_susceptibility();
    p.efficacy_severe = vaccine_efficacy_forward(seroconversion, sigma[1], sigma[2], spec.severe_fractions());
    p.efficacy_mild = vaccine_efficacy_forward(seroconversion, sigma[1], sigma[2], spec.any_rvge_fractions());
    p.validate();
    return p;
}

double reporting_prior_mean(double consult_rate, double surveillance_coverage) {
    check_unit(consult_rate, "consultation rate");
    check_unit(surveillance_coverage, "surveillance coverage");
    return consult_rate * surveillance_coverage;
}

bool ImpactResult::peak_exceeds_baseline() const {
    // the periodic state is only converged to a tolerance, so the unvaccinated
    // continuation itself drifts by a few parts per million
    constexpr double margin = 1e-3;
    return std::any_of(yearly_peaks.begin(), yearly_peaks.end(),
                       [this](double p) { return p > baseline_peak * (1.0 + margin); });
}

std::vector<ParamVector> thin_draws(std::span<const ParamVector> samples, std::size_t count) {
    if (count == 0 || count >= samples.size()) return {samples.begin(), samples.end()};
    std::vector<ParamVector> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(samples[i * samples.size() / count]);
    return out;
}

namespace {

struct Baseline {
    StateVector start;
    Eigen::VectorXd weekly; // all-age severe incidence, unvaccinated continuation
    Eigen::VectorXd final_year_by_age;
    double peak = 0.0;
};

struct Outcome {
    std::vector<double> relative;
    double percent = 0.0;
    double absolute = 0.0;
    Eigen::VectorXd final_year_by_age;
    std::vector<double> yearly_peaks;
};

} // namespace

std::vector<ImpactResult> vaccination_impact(const ModelSpec& spec, std::span<const ParamVector> draws,
                                             const AgeStructure& ages, const BirthSchedule& births,
                                             const ImpactOptions& options) {
    if (draws.empty()) throw InsufficientSamples("impact needs at least one parameter draw");
    if (options.long_horizon_weeks < 52 || options.short_horizon_weeks == 0)
        throw InvalidParams("impact horizons must cover at least one year");
    for (double c : options.coverages) check_unit(c, "coverage");
    const double population = options.periodic.population;
    const std::size_t horizon = std::max(options.short_horizon_weeks, options.long_horizon_weeks);
    const std::size_t last_year = options.long_horizon_weeks - 52;
    const auto W = static_cast<Eigen::Index>(kWeeksPerYear);

    std::vector<Baseline> base(draws.size(), Baseline{StateVector(layout_for(spec.model_id())), {}, {}, 0.0});
    parallel_for(draws.size(), options.threads, [&](std::size_t d) {
        const auto sol = periodic_dynamics(spec, draws[d], ages, births, options.periodic);
        const Eigen::MatrixXd cycle = severe_incidence(spec, sol.cycle);
        const Trajectory traj =
            project(spec, draws[d], sol.cycle_start_state, horizon, std::nullopt, ages, births, population);
        const Eigen::MatrixXd sev = severe_incidence(spec, traj);
        base[d].start = sol.cycle_start_state;
        base[d].weekly = sev.colwise().sum().transpose();
        base[d].final_year_by_age = sev.middleCols(static_cast<Eigen::Index>(last_year), W).rowwise().sum();
        base[d].peak = cycle.colwise().sum().maxCoeff();
    });

    const std::size_t nc = options.coverages.size();
    std::vector<Outcome> outcomes(draws.size() * nc);
    const std::size_t short_years = (options.short_horizon_weeks + 51) / 52;
    parallel_for(outcomes.size(), options.threads, [&](std::size_t job) {
        const std::size_t d = job / nc;
        const double c = options.coverages[job % nc];
        const VaccinePolicy policy = make_policy(spec, c, options.seroconversion);
        const Trajectory traj = project(spec, draws[d], base[d].start, horizon, policy, ages, births, population);
        const Eigen::MatrixXd sev = severe_incidence(spec, traj);
        const Eigen::VectorXd weekly = sev.colwise().sum().transpose();
        Outcome& o = outcomes[job];
        o.relative.resize(options.short_horizon_weeks);
        for (std::size_t t = 0; t < options.short_horizon_weeks; ++t) {
            const double b = base[d].weekly[static_cast<Eigen::Index>(t)];
            const double v = weekly[static_cast<Eigen::Index>(t)];
            o.relative[t] = b > 0.0 ? v / b : (v == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
        }
        o.final_year_by_age = sev.middleCols(static_cast<Eigen::Index>(last_year), W).rowwise().sum();
        const double before = base[d].final_year_by_age.sum();
        const double after = o.final_year_by_age.sum();
        o.percent = before > 0.0 ? 100.0 * (1.0 - after / before) : 0.0;
        o.absolute = before - after;
        for (std::size_t y = 0; y < short_years; ++y) {
            const auto from = static_cast<Eigen::Index>(y * 52);
            const auto len = std::min<Eigen::Index>(W, static_cast<Eigen::Index>(options.short_horizon_weeks) - from);
            o.yearly_peaks.push_back(weekly.segment(from, len).maxCoeff());
        }
    });

    std::vector<ImpactResult> results;
    results.reserve(nc);
    const double nd = static_cast<double>(draws.size());
    for (std::size_t ci = 0; ci < nc; ++ci) {
        ImpactResult r;
        r.coverage = options.coverages[ci];
        r.seroconversion = options.seroconversion;
        r.interval_level = options.interval_level;
        Eigen::VectorXd age_base = Eigen::VectorXd::Zero(kAgeClasses), age_vac = Eigen::VectorXd::Zero(kAgeClasses);
        r.yearly_peaks.assign(short_years, 0.0);
        std::vector<std::vector<double>> rel(options.short_horizon_weeks, std::vector<double>(draws.size()));
        for (std::size_t d = 0; d < draws.size(); ++d) {
            const Outcome& o = outcomes[d * nc + ci];
            r.percent_draws.push_back(o.percent);
            r.absolute_draws.push_back(o.absolute);
            age_base += base[d].final_year_by_age;
            age_vac += o.final_year_by_age;
            r.baseline_peak += base[d].peak / nd;
            for (std::size_t y = 0; y < short_years; ++y) r.yearly_peaks[y] += o.yearly_peaks[y] / nd;
            for (std::size_t t = 0; t < options.short_horizon_weeks; ++t) rel[t][d] = o.relative[t];
            r.relative_draws.push_back(o.relative);
        }
        r.percent_reduction = mean_of(r.percent_draws);
        r.absolute_reduction = mean_of(r.absolute_draws);
        r.percent_quantile = quantile_interval(r.percent_draws, options.interval_level);
        r.percent_hpd = hpd_or_point(r.percent_draws, options.interval_level);
        r.absolute_quantile = quantile_interval(r.absolute_draws, options.interval_level);
        for (const auto& week : rel) {
            r.relative_incidence.push_back(mean_of(week));
            const auto band = quantile_interval(week, options.interval_level);
            r.relative_lower.push_back(band.lower);
            r.relative_upper.push_back(band.upper);
        }
        r.age_distribution_baseline = age_distribution(age_base);
        r.age_distribution_vaccinated = age_distribution(age_vac);
        results.push_back(std::move(r));
    }
    return results;
}

} // namespace rotaens
