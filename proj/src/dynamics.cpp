#include "rotaens/dynamics.hpp"

#include "rotaens/observation.hpp"

#include <algorithm>
#include <cmath>

namespace rotaens {

std::vector<std::vector<double>> integrate_ode(const RhsFunction& f, std::vector<double> y0, double t0,
                                               std::span<const double> sample_times, const Tolerances& tol) {
    DormandPrince stepper(tol);
    std::vector<std::vector<double>> out;
    out.reserve(sample_times.size());
    double t = t0;
    double step = -1.0;
    for (double ts : sample_times) {
        stepper.advance(f, y0, t, ts, step);
        t = ts;
        out.push_back(y0);
    }
    return out;
}

Trajectory integrate(const ModelSystem& system, const StateVector& state0, double t0, double t1,
                     const Tolerances& tol, double output_step) {
    if (!(state0.layout() == system.layout()))
        throw LayoutMismatch("initial state layout does not match the model system");
    if (!(t1 > t0) || !(output_step > 0.0)) throw InvalidParams("integration needs t1 > t0 and a positive output step");
    const double span_steps = (t1 - t0) / output_step;
    const auto intervals = static_cast<std::size_t>(std::llround(span_steps));
    if (std::abs(span_steps - static_cast<double>(intervals)) > 1e-9)
        throw InvalidParams("integration span must be a multiple of the output step");

    const std::size_t nc = system.compartment_count();
    const std::size_t channels = system.layout().incidence_channels();
    const std::size_t inc_size = channels * kAgeClasses;

    // Output times; those within rounding of a whole week are snapped onto it.
    std::vector<double> outputs(intervals);
    for (std::size_t k = 0; k < intervals; ++k) {
        double tk = t0 + static_cast<double>(k + 1) * output_step;
        if (std::abs(tk - std::round(tk)) < 1e-9) tk = std::round(tk);
        outputs[k] = tk;
    }
    outputs.back() = t1;

    Trajectory traj;
    traj.channels = channels;
    traj.time_grid.reserve(intervals + 1);
    traj.states.reserve(intervals + 1);
    traj.incidence.reserve(intervals * inc_size);
    traj.time_grid.push_back(t0);
    traj.states.push_back(state0.clamped());

    std::vector<double> y(system.dimension(), 0.0);
    std::copy(state0.values().begin(), state0.values().end(), y.begin());

    // Accumulators restart at every whole week, so the step sequence does not
    // depend on the output grid; interior output times use dense output.
    std::vector<double> pending(inc_size, 0.0); // incidence of the open output interval from earlier weeks
    std::vector<double> mark(inc_size, 0.0);    // accumulator value at the last interior output this week
    auto emit = [&](double tout, const std::vector<double>& full) {
        for (std::size_t i = 0; i < inc_size; ++i) {
            traj.incidence.push_back(pending[i] + full[nc + i] - mark[i]);
            mark[i] = full[nc + i];
            pending[i] = 0.0;
        }
        traj.time_grid.push_back(tout);
        std::vector<double> comp(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(nc));
        for (double& v : comp) v = std::max(v, 0.0);
        traj.states.emplace_back(system.layout(), std::move(comp));
    };

    DormandPrince stepper(tol);
    auto rhs = [&system](double t, std::span<const double> x, std::span<double> dx) { system.rhs(t, x, dx); };
    std::vector<double> buffer;
    std::size_t next = 0;
    double step = -1.0;
    double t = t0;
    while (next < intervals) {
        // the birth schedule jumps at whole weeks; never step across one
        double seg_end = std::floor(t) + 1.0;
        if (seg_end > t1 - 1e-12) seg_end = t1;
        auto observer = [&](const DormandPrince::DenseStep& d) {
            while (next < intervals && outputs[next] < seg_end - 1e-12 && outputs[next] <= d.t_end()) {
                d.evaluate(outputs[next], buffer);
                emit(outputs[next], buffer);
                ++next;
            }
        };
        stepper.advance(rhs, y, t, seg_end, step, observer);
        t = seg_end;
        if (next < intervals && std::abs(outputs[next] - seg_end) <= 1e-9) {
            emit(seg_end, y);
            ++next;
        }
        for (std::size_t i = 0; i < inc_size; ++i) {
            pending[i] += y[nc + i] - mark[i];
            mark[i] = 0.0;
            y[nc + i] = 0.0;
        }
    }
    return traj;
}

Eigen::MatrixXd severe_incidence(const ModelSpec& spec, const Trajectory& trajectory) {
    const auto weights = spec.severe_weights();
    if (weights.size() != trajectory.channels) throw LayoutMismatch("trajectory belongs to another model");
    const std::size_t T = trajectory.intervals();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kAgeClasses, static_cast<Eigen::Index>(T));
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < weights.size(); ++c) {
            if (weights[c] == 0.0) continue;
            for (std::size_t i = 0; i < kAgeClasses; ++i)
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) +=
                    weights[c] * trajectory.incidence_at(t, c, i);
        }
    return out;
}

Eigen::MatrixXd total_incidence(const Trajectory& trajectory) {
    const std::size_t T = trajectory.intervals();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kAgeClasses, static_cast<Eigen::Index>(T));
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < trajectory.channels; ++c)
            for (std::size_t i = 0; i < kAgeClasses; ++i)
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) += trajectory.incidence_at(t, c, i);
    return out;
}

StateVector default_initial_state(const ModelSpec& spec, const AgeStructure& ages, const BirthSchedule& births,
                                  double population) {
    ages.validate();
    if (ages.class_count() != kAgeClasses) throw InvalidParams("default state needs six age classes");
    const Layout& layout = layout_for(spec.model_id());
    StateVector state(layout);
    const double inflow = births.mean_rate * population;
    const double delta = spec.maternal_waning();
    const std::string_view susceptible = spec.model_id() == ModelId::A ? "S" : "S1";
    const std::string_view infectious = spec.model_id() == ModelId::A ? "Is" : "I1";
    double maternal_in = inflow;
    for (std::size_t i = 0; i < kAgeClasses; ++i) {
        const double alpha = ages.aging_rates[i];
        const double pop = inflow / alpha;
        const double maternal = maternal_in / (alpha + delta);
        maternal_in = alpha * maternal;
        state.at("M", i) = 0.999 * maternal;
        state.at(susceptible, i) = 0.999 * (pop - maternal);
        state.at(infectious, i) = 0.001 * pop;
    }
    return state;
}

ModelSystem make_system(const ModelSpec& spec, const ParamVector& params, const AgeStructure& ages,
                        const BirthSchedule& births, double population) {
    return ModelSystem(spec, ages, params.forcing(), births, population);
}

PeriodicSolution find_periodic_solution(const ModelSpec& spec, const ParamVector& params, const AgeStructure& ages,
                                        const BirthSchedule& births, const PeriodicOptions& options) {
    params.forcing().validate();
    if (!(params.rho > 0.0 && params.rho <= 1.0)) throw InvalidParams("reporting rate must lie in (0, 1]");
    if (options.max_years < 2) throw InvalidParams("periodic search needs at least two years");
    const ModelSystem system = make_system(spec, params, ages, births, options.population);
    StateVector state = options.initial_state ? *options.initial_state
                                              : default_initial_state(spec, ages, births, system.birth_reference());
    if (!(state.layout() == system.layout())) state = state.without_vaccine_class();

    Eigen::MatrixXd previous;
    double discrepancy = std::numeric_limits<double>::infinity();
    for (int year = 1; year <= options.max_years; ++year) {
        Trajectory cycle = integrate(system, state, 0.0, kWeeksPerYear, options.tolerances);
        Eigen::MatrixXd profile = expected_reported_cases(spec, cycle, params.rho);
        state = cycle.states.back();
        if (year > 1) {
            discrepancy = (profile - previous).cwiseAbs().sum();
            if (discrepancy < options.epsilon) {
                PeriodicSolution sol{state, std::move(profile), std::move(cycle), year, discrepancy};
                return sol;
            }
        }
        previous = std::move(profile);
    }
    throw NonConvergence("no periodic solution after " + std::to_string(options.max_years) +
                             " years (discrepancy " + std::to_string(discrepancy) + ")",
                         discrepancy, options.max_years);
}

Trajectory project(const ModelSpec& spec, const ParamVector& params, const StateVector& start_state,
                   std::size_t horizon_weeks, const std::optional<VaccinePolicy>& policy, const AgeStructure& ages,
                   const BirthSchedule& births, double population, const Tolerances& tol) {
    if (horizon_weeks == 0) throw InvalidParams("projection horizon must be positive");
    ModelSystem system = make_system(spec, params, ages, births, population);
    StateVector start = start_state;
    if (policy && policy->coverage == 0.0 && spec.model_id() == ModelId::A) {
        // Without doses an empty vaccine class never fills; integrating the
        // reduced system keeps the result identical to the unvaccinated run.
        policy->validate();
        const auto v = start.values().subspan(layout_for(ModelId::A).size());
        if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
            Trajectory traj = integrate(system, start.without_vaccine_class(), 0.0,
                                        static_cast<double>(horizon_weeks), tol);
            for (auto& s : traj.states) s = s.with_vaccine_class();
            return traj;
        }
    }
    if (policy) {
        system = system.with_policy(*policy);
        start = start.with_vaccine_class();
    }
    return integrate(system, start, 0.0, static_cast<double>(horizon_weeks), tol);
}

} // namespace rotaens
