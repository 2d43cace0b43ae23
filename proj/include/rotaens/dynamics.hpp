#pragma once

// Adaptive Runge-Kutta integration of the transmission models and the search
// for their annual periodic solution.

#include "rotaens/errors.hpp"
#include "rotaens/model_suite.hpp"
#include "rotaens/params.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rotaens {

struct Tolerances {
    double relative = 1e-6;
    double absolute = 1e-8;
    /// Smallest admissible step, relative to max(1, |t|).
    double min_step = 1e-12;
    std::size_t max_steps = 5'000'000;
};

/// Dormand-Prince 5(4) with FSAL and an RMS error norm.
class DormandPrince {
public:
    explicit DormandPrince(Tolerances tol = {}) : tol_(tol) {}

    /// Continuous extension of one accepted step (4th order).
    class DenseStep {
    public:
        double t_begin() const noexcept { return t0_; }
        double t_end() const noexcept { return t0_ + h_; }
        /// y at time t in [t_begin, t_end].
        void evaluate(double t, std::vector<double>& out) const;

    private:
        friend class DormandPrince;
        double t0_ = 0.0, h_ = 0.0;
        const DormandPrince* owner_ = nullptr;
        const std::vector<double>* y0_ = nullptr;
    };

    /// Integrates y from t to t_end in place. `step` carries the step-size
    /// suggestion between calls; pass <= 0 to let the integrator pick one.
    /// Throws StiffnessFailure when the step underflows.
    template <class Rhs>
    void advance(Rhs&& f, std::vector<double>& y, double t, double t_end, double& step) {
        advance(std::forward<Rhs>(f), y, t, t_end, step, [](const DenseStep&) {});
    }

    /// As above; `observer(const DenseStep&)` is called after every accepted
    /// step, before y moves on.
    template <class Rhs, class Observer>
    void advance(Rhs&& f, std::vector<double>& y, double t, double t_end, double& step, Observer&& observer);

    const Tolerances& tolerances() const noexcept { return tol_; }

private:
    Tolerances tol_;
    std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, ynew_;
};

using RhsFunction = std::function<void(double, std::span<const double>, std::span<double>)>;

/// Generic solver entry point: returns y at each requested sample time
/// (strictly increasing, all > t0).
std::vector<std::vector<double>> integrate_ode(const RhsFunction& f, std::vector<double> y0, double t0,
                                               std::span<const double> sample_times, const Tolerances& tol = {});

/// Model trajectory sampled on a regular output grid. incidence holds, for every
/// output interval, the new infections per channel and age class
/// (index = (interval * channels + channel) * 6 + age).
struct Trajectory {
    std::vector<double> time_grid;
    std::vector<StateVector> states;
    std::size_t channels = 0;
    std::vector<double> incidence;

    std::size_t intervals() const noexcept { return time_grid.empty() ? 0 : time_grid.size() - 1; }
    double incidence_at(std::size_t interval, std::size_t channel, std::size_t age) const {
        return incidence[(interval * channels + channel) * kAgeClasses + age];
    }
};

/// Integrates the system from t0 to t1 (t1 - t0 a multiple of output_step).
/// Reported states are clamped at zero; integration itself carries the raw values.
Trajectory integrate(const ModelSystem& system, const StateVector& state0, double t0, double t1,
                     const Tolerances& tol = {}, double output_step = 1.0);

/// Severe RVGE incidence per age class and output interval (6 x T), in the
/// units of the state (persons); reporting is not applied.
Eigen::MatrixXd severe_incidence(const ModelSpec& spec, const Trajectory& trajectory);

/// All new infections per age class and output interval (6 x T).
Eigen::MatrixXd total_incidence(const Trajectory& trajectory);

/// Reference under-5 population (persons) that sets the birth inflow.
inline constexpr double kDefaultPopulation = 380'000.0;

/// Start for the periodic-solution search: stationary age distribution for the
/// birth inflow, 99.9% split between M and S by maternal waning and 0.1% of
/// every class seeded in the first-infection infectious compartment.
StateVector default_initial_state(const ModelSpec& spec, const AgeStructure& ages, const BirthSchedule& births,
                                  double population = kDefaultPopulation);

/// Births enter at mu(t) * population persons per week.
ModelSystem make_system(const ModelSpec& spec, const ParamVector& params, const AgeStructure& ages,
                        const BirthSchedule& births, double population = kDefaultPopulation);

struct PeriodicOptions {
    double population = kDefaultPopulation;
    double epsilon = 0.01;
    int max_years = 100;
    Tolerances tolerances{};
    /// Start state; the default initial condition when empty.
    std::optional<StateVector> initial_state{};
};

struct PeriodicSolution {
    /// State at the start of the next cycle year (calendar week 0).
    StateVector cycle_start_state;
    /// Expected reported cases, 6 ages x 52 calendar weeks.
    Eigen::MatrixXd expected_profile;
    /// The converged year, starting at calendar week 0.
    Trajectory cycle;
    int convergence_years = 0;
    double final_discrepancy = 0.0;
};

/// Integrates year by year until the 52-week expected reported profile repeats
/// within epsilon (sum of absolute differences). Throws NonConvergence after
/// max_years.
PeriodicSolution find_periodic_solution(const ModelSpec& spec, const ParamVector& params, const AgeStructure& ages,
                                        const BirthSchedule& births, const PeriodicOptions& options = {});

/// Forward simulation from a cycle-start state (t = 0 is calendar week 0), with
/// vaccination switched on from the first week when a policy is given.
Trajectory project(const ModelSpec& spec, const ParamVector& params, const StateVector& start_state,
                   std::size_t horizon_weeks, const std::optional<VaccinePolicy>& policy, const AgeStructure& ages,
                   const BirthSchedule& births, double population = kDefaultPopulation,
                   const Tolerances& tol = {});

// ---------------------------------------------------------------------------

inline void DormandPrince::DenseStep::evaluate(double t, std::vector<double>& out) const {
    constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                     d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                     d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
    const auto& y0 = *y0_;
    const auto& y1 = owner_->ynew_;
    const auto& o = *owner_;
    const double theta = (t - t0_) / h_;
    const double theta1 = 1.0 - theta;
    out.resize(y0.size());
    for (std::size_t i = 0; i < y0.size(); ++i) {
        const double diff = y1[i] - y0[i];
        const double bspl = h_ * o.k1_[i] - diff;
        const double c4 = diff - h_ * o.k7_[i] - bspl;
        const double c5 = h_ * (d1 * o.k1_[i] + d3 * o.k3_[i] + d4 * o.k4_[i] + d5 * o.k5_[i] + d6 * o.k6_[i] +
                                d7 * o.k7_[i]);
        out[i] = y0[i] + theta * (diff + theta1 * (bspl + theta * (c4 + theta1 * c5)));
    }
}

template <class Rhs, class Observer>
void DormandPrince::advance(Rhs&& f, std::vector<double>& y, double t, double t_end, double& step,
                            Observer&& observer) {
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;

    const std::size_t n = y.size();
    for (auto* v : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &tmp_, &ynew_}) v->resize(n);
    if (!(t_end > t)) return;

    double h = step > 0.0 ? step : std::min(0.01, t_end - t);
    f(t, std::span<const double>(y), std::span<double>(k1_));
    std::size_t steps = 0;
    bool last_rejected = false;

    while (t < t_end) {
        if (++steps > tol_.max_steps) throw StiffnessFailure("step budget exhausted at t = " + std::to_string(t), t);
        const bool final_step = t + h >= t_end;
        const double hs = final_step ? t_end - t : h;

        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + hs * a21 * k1_[i];
        f(t + c2 * hs, std::span<const double>(tmp_), std::span<double>(k2_));
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + hs * (a31 * k1_[i] + a32 * k2_[i]);
        f(t + c3 * hs, std::span<const double>(tmp_), std::span<double>(k3_));
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + hs * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
        f(t + c4 * hs, std::span<const double>(tmp_), std::span<double>(k4_));
        for (std::size_t i = 0; i < n; ++i)
            tmp_[i] = y[i] + hs * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
        f(t + c5 * hs, std::span<const double>(tmp_), std::span<double>(k5_));
        for (std::size_t i = 0; i < n; ++i)
            tmp_[i] = y[i] + hs * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] + a65 * k5_[i]);
        f(t + hs, std::span<const double>(tmp_), std::span<double>(k6_));
        for (std::size_t i = 0; i < n; ++i)
            ynew_[i] = y[i] + hs * (b1 * k1_[i] + b3 * k3_[i] + b4 * k4_[i] + b5 * k5_[i] + b6 * k6_[i]);
        f(t + hs, std::span<const double>(ynew_), std::span<double>(k7_));

        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e =
                hs * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] + e7 * k7_[i]);
            const double scale = tol_.absolute + tol_.relative * std::max(std::abs(y[i]), std::abs(ynew_[i]));
            const double q = e / scale;
            err += q * q;
        }
        err = std::sqrt(err / static_cast<double>(n));

        if (err <= 1.0 && std::isfinite(err)) {
            DenseStep dense;
            dense.t0_ = t;
            dense.h_ = hs;
            dense.owner_ = this;
            dense.y0_ = &y;
            observer(static_cast<const DenseStep&>(dense));
            t = final_step ? t_end : t + hs;
            y.swap(ynew_);
            k1_.swap(k7_);
            double factor = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
            factor = std::clamp(factor, 0.2, last_rejected ? 1.0 : 5.0);
            // a shortened final step says nothing about the natural step size
            if (!final_step || hs >= h) h = hs * factor;
            last_rejected = false;
        } else {
            const double factor = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
            h = hs * factor;
            last_rejected = true;
            if (h < tol_.min_step * std::max(1.0, std::abs(t)))
                throw StiffnessFailure("step size underflow at t = " + std::to_string(t), t);
        }
    }
    step = h;
}

} // namespace rotaens
