#include "rotaens/model_suite.hpp"

#include "rotaens/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace rotaens {

// ---------------------------------------------------------------------------
// Demography and forcing

AgeStructure AgeStructure::standard() {
    AgeStructure ages;
    ages.aging_rates = {1.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0, 1.0 / 24.0, 1.0 / 48.0, 1.0 / 144.0};
    ages.contact = {
        1,  1,  1,  1, 1, 1, //
        1,  1,  1,  1, 1, 1, //
        1,  1,  1,  1, 1, 1, //
        3,  3,  3,  1, 1, 1, //
        6,  6,  6,  2, 1, 1, //
        18, 18, 18, 6, 3, 1, //
    };
    return ages;
}

std::vector<double> AgeStructure::population_fractions() const {
    std::vector<double> f(class_count());
    double total = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = 1.0 / aging_rates[i];
        total += f[i];
    }
    for (double& x : f) x /= total;
    return f;
}

void AgeStructure::validate() const {
    const std::size_t n = class_count();
    if (n == 0) throw InvalidParams("age structure has no classes");
    if (contact.size() != n * n) throw InvalidParams("contact matrix must be square over the age classes");
    for (double a : aging_rates)
        if (!(a > 0.0) || !std::isfinite(a)) throw InvalidParams("aging rates must be positive");
    for (double c : contact)
        if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidParams("contact entries must be nonnegative");
}

double SeasonalForcing::multiplier(double t) const {
    return 1.0 + amplitude * std::cos((2.0 * std::numbers::pi * t - kWeeksPerYear * phase) / kWeeksPerYear);
}

double SeasonalForcing::rate(std::size_t age_class, double t) const {
    return baseline_rates.at(age_class) * multiplier(t);
}

void SeasonalForcing::validate() const {
    if (!(amplitude >= 0.0 && amplitude <= 1.0)) throw InvalidParams("seasonal amplitude must lie in [0, 1]");
    if (!std::isfinite(phase)) throw InvalidParams("seasonal phase must be finite");
    for (double b : baseline_rates)
        if (!(b >= 0.0) || !std::isfinite(b)) throw InvalidParams("baseline transmission rates must be nonnegative");
}

double transmission_rate(const SeasonalForcing& forcing, std::size_t age_class, double t) {
    return forcing.rate(age_class, t);
}

double peak_transmission_week(double phase) {
    // argument of the cosine vanishes at t = 26 phi / pi
    double week = std::fmod(kWeeksPerYear * phase / (2.0 * std::numbers::pi), kWeeksPerYear);
    if (week < 0.0) week += kWeeksPerYear;
    return week;
}

BirthSchedule BirthSchedule::standard() {
    BirthSchedule s;
    s.monthly_amplitudes = {-0.17, 0.01, 0.03, 0.25, 0.12, 0.03, -0.01, 0.09, 0.01, 0.13, -0.31, -0.17};
    return s;
}

BirthSchedule BirthSchedule::constant(double mean_rate) {
    BirthSchedule s;
    s.mean_rate = mean_rate;
    s.monthly_amplitudes.fill(0.0);
    return s;
}

std::size_t BirthSchedule::month_of(double t) {
    double week = std::fmod(std::floor(t), kWeeksPerYear);
    if (week < 0.0) week += kWeeksPerYear;
    auto month = static_cast<std::size_t>(std::floor(week * 12.0 / kWeeksPerYear));
    return std::min<std::size_t>(month, 11);
}

double BirthSchedule::rate(double t) const {
    return mean_rate * (1.0 + monthly_amplitudes[month_of(t)]);
}

void BirthSchedule::validate() const {
    if (!(mean_rate >= 0.0) || !std::isfinite(mean_rate)) throw InvalidParams("mean birth rate must be nonnegative");
    for (double a : monthly_amplitudes)
        if (!(1.0 + a > 0.0)) throw InvalidParams("monthly birth amplitude must exceed -1");
}

double birth_rate(const BirthSchedule& schedule, double t) { return schedule.rate(t); }

// ---------------------------------------------------------------------------
// Model identity

char to_char(ModelId id) { return static_cast<char>('A' + static_cast<int>(id)); }

ModelId model_from_char(char c) {
    const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (u < 'A' || u > 'E') throw ConfigError(std::string("unknown model '") + c + "'");
    return static_cast<ModelId>(u - 'A');
}

ModelId model_from_string(std::string_view s) {
    if (s.size() != 1) throw ConfigError("unknown model '" + std::string(s) + "'");
    return model_from_char(s.front());
}

ModelSpec::ModelSpec(ModelId id) : id_(id) {}

std::size_t ModelSpec::incidence_channels() const noexcept {
    switch (id_) {
    case ModelId::A: return 2;
    case ModelId::B:
    case ModelId::C: return 3;
    case ModelId::D:
    case ModelId::E: return 4;
    }
    return 0;
}

std::vector<double> ModelSpec::severe_weights() const {
    if (id_ == ModelId::A) return {1.0, 0.0}; // channel 0 already counts severe infections only
    std::vector<double> w(incidence_channels(), 0.0);
    for (std::size_t k = 0; k < severe_.size() && k < w.size(); ++k) w[k] = severe_[k];
    return w;
}

// ---------------------------------------------------------------------------
// Layouts

Layout::Layout(ModelId model, bool vaccine_class, std::vector<CompartmentKind> kinds, std::size_t channels)
    : model_(model), vaccine_class_(vaccine_class), kinds_(std::move(kinds)), channels_(channels) {}

std::size_t Layout::kind_index(std::string_view name) const {
    for (std::size_t k = 0; k < kinds_.size(); ++k)
        if (kinds_[k].name == name) return k;
    throw LayoutMismatch("model " + std::string(1, to_char(model_)) + " has no compartment '" + std::string(name) +
                         "'");
}

bool Layout::contains(std::string_view name) const {
    return std::any_of(kinds_.begin(), kinds_.end(), [&](const CompartmentKind& k) { return k.name == name; });
}

std::vector<Layout::Entry> Layout::entries() const {
    std::vector<Entry> out;
    out.reserve(size());
    for (const auto& k : kinds_)
        for (std::size_t a = 0; a < kAgeClasses; ++a) out.push_back({k.name, k.infection_order, a});
    return out;
}

namespace {

Layout make_layout(ModelId id, bool vaccine_class) {
    std::vector<CompartmentKind> kinds;
    switch (id) {
    case ModelId::A:
        kinds = {{"M", 0}, {"S", 0}, {"Is", 1}, {"Im", 1}, {"R", 1}};
        if (vaccine_class) kinds.push_back({"V", 0});
        break;
    case ModelId::B:
        kinds = {{"M", 0},  {"S1", 1}, {"I1", 1}, {"R1", 1}, {"S2", 2},
                 {"I2", 2}, {"R2", 2}, {"S3", 3}, {"I3", 3}, {"R3", 3}};
        break;
    case ModelId::C:
        kinds = {{"M", 0},  {"S1", 1}, {"E1", 1}, {"I1", 1}, {"R1", 1}, {"S2", 2}, {"E2", 2},
                 {"I2", 2}, {"R2", 2}, {"S3", 3}, {"E3", 3}, {"I3", 3}, {"R3", 3}};
        break;
    case ModelId::D:
    case ModelId::E:
        kinds = {{"M", 0},  {"S1", 1}, {"I1", 1}, {"S2", 2}, {"I2", 2},
                 {"S3", 3}, {"I3", 3}, {"S4", 4}, {"I4", 4}, {"Rfinal", 0}};
        break;
    }
    return Layout(id, vaccine_class && id == ModelId::A, std::move(kinds), ModelSpec(id).incidence_channels());
}

} // namespace

const Layout& layout_for(ModelId model, bool vaccine_class) {
    static const std::array<Layout, 6> layouts{
        make_layout(ModelId::A, false), make_layout(ModelId::B, false), make_layout(ModelId::C, false),
        make_layout(ModelId::D, false), make_layout(ModelId::E, false), make_layout(ModelId::A, true),
    };
    if (model == ModelId::A && vaccine_class) return layouts[5];
    return layouts[static_cast<std::size_t>(model)];
}

// ---------------------------------------------------------------------------
// StateVector

StateVector::StateVector(const Layout& layout) : layout_(&layout), values_(layout.size(), 0.0) {}

StateVector::StateVector(const Layout& layout, std::vector<double> values)
    : layout_(&layout), values_(std::move(values)) {
    if (values_.size() != layout.size())
        throw LayoutMismatch("state has " + std::to_string(values_.size()) + " values, layout needs " +
                             std::to_string(layout.size()));
}

double& StateVector::at(std::string_view compartment, std::size_t age) {
    if (age >= kAgeClasses) throw LayoutMismatch("age class out of range");
    return values_[layout_->index(layout_->kind_index(compartment), age)];
}

double StateVector::at(std::string_view compartment, std::size_t age) const {
    if (age >= kAgeClasses) throw LayoutMismatch("age class out of range");
    return values_[layout_->index(layout_->kind_index(compartment), age)];
}

double StateVector::class_population(std::size_t age) const {
    double n = 0.0;
    for (std::size_t k = 0; k < layout_->kind_count(); ++k) n += values_[layout_->index(k, age)];
    return n;
}

double StateVector::total() const {
    double n = 0.0;
    for (double v : values_) n += v;
    return n;
}

StateVector StateVector::clamped() const {
    StateVector out = *this;
    for (double& v : out.values_) v = std::max(v, 0.0);
    return out;
}

StateVector StateVector::with_vaccine_class() const {
    if (layout_->model() != ModelId::A || layout_->has_vaccine_class()) return *this;
    const Layout& target = layout_for(ModelId::A, true);
    std::vector<double> v(values_);
    v.resize(target.size(), 0.0);
    return StateVector(target, std::move(v));
}

StateVector StateVector::without_vaccine_class() const {
    if (!layout_->has_vaccine_class()) return *this;
    const Layout& target = layout_for(layout_->model(), false);
    for (std::size_t i = target.size(); i < values_.size(); ++i)
        if (values_[i] != 0.0) throw LayoutMismatch("vaccine class is occupied");
    return StateVector(target, std::vector<double>(values_.begin(), values_.begin() + target.size()));
}

void VaccinePolicy::validate() const {
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!unit(coverage)) throw InvalidParams("coverage must lie in [0, 1]");
    if (!unit(seroconversion)) throw InvalidParams("seroconversion must lie in [0, 1]");
    if (!unit(efficacy_severe) || !unit(efficacy_mild)) throw InvalidParams("vaccine efficacy must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// ModelSystem

namespace {

// Kind indices per layout.
namespace a_kind {
constexpr std::size_t M = 0, S = 1, Is = 2, Im = 3, R = 4, V = 5;
}
namespace b_kind {
constexpr std::size_t M = 0, S1 = 1, I1 = 2, R1 = 3, S2 = 4, I2 = 5, R2 = 6, S3 = 7, I3 = 8, R3 = 9;
}
namespace c_kind {
constexpr std::size_t M = 0, S1 = 1, E1 = 2, I1 = 3, R1 = 4, S2 = 5, E2 = 6, I2 = 7, R2 = 8, S3 = 9, E3 = 10,
                      I3 = 11, R3 = 12;
}
namespace d_kind {
constexpr std::size_t M = 0, S1 = 1, I1 = 2, S2 = 3, I2 = 4, S3 = 5, I3 = 6, S4 = 7, I4 = 8, R = 9;
}

constexpr std::size_t at(std::size_t kind, std::size_t age) { return kind * kAgeClasses + age; }

} // namespace

ModelSystem::ModelSystem(ModelSpec spec, AgeStructure ages, SeasonalForcing forcing, BirthSchedule births,
                         double birth_reference)
    : spec_(spec), ages_(std::move(ages)), forcing_(forcing), births_(births), birth_reference_(birth_reference),
      layout_(&layout_for(spec.model_id(), false)) {
    ages_.validate();
    if (ages_.class_count() != kAgeClasses)
        throw InvalidParams("transmission models need exactly " + std::to_string(kAgeClasses) + " age classes");
    forcing_.validate();
    births_.validate();
    if (!(birth_reference_ >= 0.0)) throw InvalidParams("birth reference population must be nonnegative");

    const auto& iota = spec_.relative_infectiousness();
    kind_infectiousness_.assign(layout_for(spec.model_id(), true).kind_count(), 0.0);
    switch (spec_.model_id()) {
    case ModelId::A:
        kind_infectiousness_[a_kind::Is] = iota[0];
        kind_infectiousness_[a_kind::Im] = iota[1];
        break;
    case ModelId::B:
        kind_infectiousness_[b_kind::I1] = iota[0];
        kind_infectiousness_[b_kind::I2] = iota[1];
        kind_infectiousness_[b_kind::I3] = iota[2];
        break;
    case ModelId::C:
        kind_infectiousness_[c_kind::I1] = iota[0];
        kind_infectiousness_[c_kind::I2] = iota[1];
        kind_infectiousness_[c_kind::I3] = iota[2];
        break;
    case ModelId::D:
    case ModelId::E:
        kind_infectiousness_[d_kind::I1] = iota[0];
        kind_infectiousness_[d_kind::I2] = iota[1];
        kind_infectiousness_[d_kind::I3] = iota[2];
        kind_infectiousness_[d_kind::I4] = iota[3];
        break;
    }
}

ModelSystem ModelSystem::with_policy(const VaccinePolicy& policy) const {
    policy.validate();
    ModelSystem out = *this;
    out.policy_ = policy;
    out.layout_ = &layout_for(spec_.model_id(), true);
    return out;
}

ModelSystem apply_vaccination_wiring(const ModelSystem& base, const VaccinePolicy& policy) {
    return base.with_policy(policy);
}

std::array<double, kAgeClasses> ModelSystem::force_of_infection(double t,
                                                                std::span<const double> compartments) const {
    const std::size_t kinds = layout_->kind_count();
    const double m = forcing_.multiplier(t);
    std::array<double, kAgeClasses> pressure{};
    for (std::size_t j = 0; j < kAgeClasses; ++j) {
        double pop = 0.0;
        double infectious = 0.0;
        for (std::size_t k = 0; k < kinds; ++k) {
            const double x = compartments[at(k, j)];
            pop += x;
            infectious += kind_infectiousness_[k] * x;
        }
        if (pop < 0.0) throw ZeroPopulation("age class " + std::to_string(j + 1) + " has negative population");
        pressure[j] = pop > 0.0 ? forcing_.baseline_rates[j] * m * infectious / pop : 0.0;
    }
    std::array<double, kAgeClasses> foi{};
    for (std::size_t i = 0; i < kAgeClasses; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < kAgeClasses; ++j) s += ages_.contact[i * kAgeClasses + j] * pressure[j];
        foi[i] = s;
    }
    return foi;
}

void ModelSystem::flows_a(std::span<const double> y, const std::array<double, kAgeClasses>& foi,
                          std::span<double> dy, std::span<double> inc) const {
    using namespace a_kind;
    const double delta = spec_.maternal_waning();
    const double tau = spec_.immunity_waning();
    const double gs = spec_.recovery_first();
    const double gm = spec_.recovery_later();
    for (std::size_t i = 0; i < kAgeClasses; ++i) {
        const double lam_s = spec_.severe_split() * foi[i];
        const double lam_m = spec_.mild_split() * foi[i];
        const double waned = delta * y[at(M, i)];
        const double severe = lam_s * y[at(S, i)];
        const double mild = lam_m * y[at(S, i)];
        const double rec_s = gs * y[at(Is, i)];
        const double rec_m = gm * y[at(Im, i)];
        const double lost = tau * y[at(R, i)];
        dy[at(M, i)] -= waned;
        dy[at(S, i)] += waned - severe - mild + lost;
        dy[at(Is, i)] += severe - rec_s;
        dy[at(Im, i)] += mild - rec_m;
        dy[at(R, i)] += rec_s + rec_m - lost;
        inc[0 * kAgeClasses + i] += severe;
        inc[1 * kAgeClasses + i] += mild;
    }
}

void ModelSystem::flows_b(std::span<const double> y, const std::array<double, kAgeClasses>& foi,
                          std::span<double> dy, std::span<double> inc) const {
    using namespace b_kind;
    const double delta = spec_.maternal_waning();
    const double tau = spec_.immunity_waning();
    const double g1 = spec_.recovery_first();
    const double g2 = spec_.recovery_later();
    const auto& sigma = spec_.relative_susceptibility();
    for (std::size_t i = 0; i < kAgeClasses; ++i) {
        const double waned = delta * y[at(M, i)];
        const double inf1 = foi[i] * y[at(S1, i)];
        const double inf2 = sigma[1] * foi[i] * y[at(S2, i)];
        const double inf3 = sigma[2] * foi[i] * y[at(S3, i)];
        const double rec1 = g1 * y[at(I1, i)];
        const double rec2 = g2 * y[at(I2, i)];
        const double rec3 = g2 * y[at(I3, i)];
        const double wane1 = tau * y[at(R1, i)];
        const double wane2 = tau * y[at(R2, i)];
        const double wane3 = tau * y[at(R3, i)];
        dy[at(M, i)] -= waned;
        dy[at(S1, i)] += waned - inf1;
        dy[at(I1, i)] += inf1 - rec1;
        dy[at(R1, i)] += rec1 - wane1;
        dy[at(S2, i)] += wane1 - inf2;
        dy[at(I2, i)] += inf2 - rec2;
        dy[at(R2, i)] += rec2 - wane2;
        dy[at(S3, i)] += wane2 + wane3 - inf3;
        dy[at(I3, i)] += inf3 - rec3;
        dy[at(R3, i)] += rec3 - wane3;
        inc[0 * kAgeClasses + i] += inf1;
        inc[1 * kAgeClasses + i] += inf2;
        inc[2 * kAgeClasses + i] += inf3;
    }
}

void ModelSystem::flows_c(std::span<const double> y, const std::array<double, kAgeClasses>& foi,
                          std::span<double> dy, std::span<double> inc) const {
    using namespace c_kind;
    const double delta = spec_.maternal_waning();
    const double tau = spec_.immunity_waning();
    const double g1 = spec_.recovery_first();
    const double g2 = spec_.recovery_later();
    const double xi = spec_.incubation_rate();
    const auto& sigma = spec_.relative_susceptibility();
    for (std::size_t i = 0; i < kAgeClasses; ++i) {
        const double waned = delta * y[at(M, i)];
        const double inf1 = foi[i] * y[at(S1, i)];
        const double inf2 = sigma[1] * foi[i] * y[at(S2, i)];
        const double inf3 = sigma[2] * foi[i] * y[at(S3, i)];
        const double onset1 = xi * y[at(E1, i)];
        const double onset2 = xi * y[at(E2, i)];
        const double onset3 = xi * y[at(E3, i)];
        const double rec1 = g1 * y[at(I1, i)];
        const double rec2 = g2 * y[at(I2, i)];
        const double rec3 = g2 * y[at(I3, i)];
        const double wane1 = tau * y[at(R1, i)];
        const double wane2 = tau * y[at(R2, i)];
        const double wane3 = tau * y[at(R3, i)];
        dy[at(M, i)] -= waned;
        dy[at(S1, i)] += waned - inf1;
        dy[at(E1, i)] += inf1 - onset1;
        dy[at(I1, i)] += onset1 - rec1;
        dy[at(R1, i)] += rec1 - wane1;
        dy[at(S2, i)] += wane1 - inf2;
        dy[at(E2, i)] += inf2 - onset2;
        dy[at(I2, i)] += onset2 - rec2;
        dy[at(R2, i)] += rec2 - wane2;
        dy[at(S3, i)] += wane2 + wane3 - inf3;
        dy[at(E3, i)] += inf3 - onset3;
        dy[at(I3, i)] += onset3 - rec3;
        dy[at(R3, i)] += rec3 - wane3;
        inc[0 * kAgeClasses + i] += inf1;
        inc[1 * kAgeClasses + i] += inf2;
        inc[2 * kAgeClasses + i] += inf3;
    }
}

void ModelSystem::flows_de(std::span<const double> y, const std::array<double, kAgeClasses>& foi,
                           std::span<double> dy, std::span<double> inc) const {
    using namespace d_kind;
    const double delta = spec_.maternal_waning();
    const double g1 = spec_.recovery_first();
    const double g2 = spec_.recovery_later();
    const auto& sigma = spec_.relative_susceptibility();
    // Model D: every recovery moves to the next susceptible class; Model E
    // returns only a kappa fraction, the rest become fully immune.
    std::array<double, 3> kappa{1.0, 1.0, 1.0};
    if (spec_.model_id() == ModelId::E) kappa = spec_.return_probabilities();
    for (std::size_t i = 0; i < kAgeClasses; ++i) {
        const double waned = delta * y[at(M, i)];
        const double inf1 = sigma[0] * foi[i] * y[at(S1, i)];
        const double inf2 = sigma[1] * foi[i] * y[at(S2, i)];
        const double inf3 = sigma[2] * foi[i] * y[at(S3, i)];
        const double inf4 = sigma[3] * foi[i] * y[at(S4, i)];
        const double rec1 = g1 * y[at(I1, i)];
        const double rec2 = g2 * y[at(I2, i)];
        const double rec3 = g2 * y[at(I3, i)];
        const double rec4 = g2 * y[at(I4, i)];
        const double back1 = kappa[0] * rec1;
        const double back2 = kappa[1] * rec2;
        const double back3 = kappa[2] * rec3;
        dy[at(M, i)] -= waned;
        dy[at(S1, i)] += waned - inf1;
        dy[at(I1, i)] += inf1 - rec1;
        dy[at(S2, i)] += back1 - inf2;
        dy[at(I2, i)] += inf2 - rec2;
        dy[at(S3, i)] += back2 - inf3;
        dy[at(I3, i)] += inf3 - rec3;
        dy[at(S4, i)] += back3 - inf4;
        dy[at(I4, i)] += inf4 - rec4;
        dy[at(R, i)] += (rec1 - back1) + (rec2 - back2) + (rec3 - back3) + rec4;
        inc[0 * kAgeClasses + i] += inf1;
        inc[1 * kAgeClasses + i] += inf2;
        inc[2 * kAgeClasses + i] += inf3;
        inc[3 * kAgeClasses + i] += inf4;
    }
}

void ModelSystem::vaccination_flows(std::span<const double> y, const std::array<double, kAgeClasses>& foi,
                                    std::span<double> dy, std::span<double> inc) const {
    const VaccinePolicy& p = *policy_;
    const auto& alpha = ages_.aging_rates;

    if (spec_.model_id() == ModelId::A) {
        using namespace a_kind;
        const double tau = spec_.immunity_waning();
        for (std::size_t i = 0; i < kAgeClasses; ++i) {
            const double v = y[at(V, i)];
            const double waned = tau * v;
            const double severe = spec_.severe_split() * foi[i] * (1.0 - p.efficacy_severe) * v;
            const double mild = spec_.mild_split() * foi[i] * (1.0 - p.efficacy_mild) * v;
            dy[at(V, i)] -= waned + severe + mild;
            dy[at(S, i)] += waned;
            dy[at(Is, i)] += severe;
            dy[at(Im, i)] += mild;
            inc[0 * kAgeClasses + i] += severe;
            inc[1 * kAgeClasses + i] += mild;
        }
        // single dose at the 2-month boundary diverts a fraction c into V
        const double c = p.coverage;
        const double from_m = c * alpha[0] * y[at(M, 0)];
        const double from_s = c * alpha[0] * y[at(S, 0)];
        dy[at(M, 1)] -= from_m;
        dy[at(S, 1)] -= from_s;
        dy[at(V, 1)] += from_m + from_s;
        return;
    }

    const double sc = p.seroconversion * p.coverage;
    std::size_t dose1_sources[2];
    std::size_t dose1_target;
    std::size_t dose2_sources[2];
    std::size_t dose2_target;
    std::size_t dose2_source_count = 2;
    switch (spec_.model_id()) {
    case ModelId::B:
        dose1_sources[0] = b_kind::M;
        dose1_sources[1] = b_kind::S1;
        dose1_target = b_kind::R1;
        dose2_sources[0] = b_kind::R1;
        dose2_sources[1] = b_kind::S2;
        dose2_target = b_kind::R2;
        break;
    case ModelId::C:
        dose1_sources[0] = c_kind::M;
        dose1_sources[1] = c_kind::S1;
        dose1_target = c_kind::R1;
        dose2_sources[0] = c_kind::R1;
        dose2_sources[1] = c_kind::S2;
        dose2_target = c_kind::R2;
        break;
    default:
        // no temporary-immunity classes: a dose moves people on to the next susceptible class
        dose1_sources[0] = d_kind::M;
        dose1_sources[1] = d_kind::S1;
        dose1_target = d_kind::S2;
        dose2_sources[0] = d_kind::S2;
        dose2_target = d_kind::S3;
        dose2_source_count = 1;
        break;
    }
    for (std::size_t kind : dose1_sources) {
        const double moved = sc * alpha[0] * y[at(kind, 0)];
        dy[at(kind, 1)] -= moved;
        dy[at(dose1_target, 1)] += moved;
    }
    for (std::size_t s = 0; s < dose2_source_count; ++s) {
        const double moved = sc * alpha[1] * y[at(dose2_sources[s], 1)];
        dy[at(dose2_sources[s], 2)] -= moved;
        dy[at(dose2_target, 2)] += moved;
    }
}

void ModelSystem::rhs(double t, std::span<const double> y, std::span<double> dydt) const {
    const std::size_t nc = compartment_count();
    std::fill(dydt.begin(), dydt.end(), 0.0);
    const auto compartments = y.first(nc);
    const auto foi = force_of_infection(t, compartments);
    auto dy = dydt.first(nc);
    auto inc = dydt.subspan(nc);

    switch (spec_.model_id()) {
    case ModelId::A: flows_a(compartments, foi, dy, inc); break;
    case ModelId::B: flows_b(compartments, foi, dy, inc); break;
    case ModelId::C: flows_c(compartments, foi, dy, inc); break;
    case ModelId::D:
    case ModelId::E: flows_de(compartments, foi, dy, inc); break;
    }

    const auto& alpha = ages_.aging_rates;
    for (std::size_t k = 0; k < layout_->kind_count(); ++k) {
        for (std::size_t i = 0; i < kAgeClasses; ++i) {
            const double out = alpha[i] * compartments[at(k, i)];
            dy[at(k, i)] -= out;
            if (i + 1 < kAgeClasses) dy[at(k, i + 1)] += out;
        }
    }
    dy[at(0, 0)] += births_.rate(t) * birth_reference_;

    if (policy_) vaccination_flows(compartments, foi, dy, inc);
}

// ---------------------------------------------------------------------------
// Free-function forms

std::array<double, kAgeClasses> force_of_infection(const ModelSpec& spec, const StateVector& state,
                                                   const AgeStructure& ages, const SeasonalForcing& forcing,
                                                   double t) {
    if (state.layout().model() != spec.model_id()) throw LayoutMismatch("state layout belongs to another model");
    for (std::size_t j = 0; j < kAgeClasses; ++j)
        if (!(state.class_population(j) > 0.0))
            throw ZeroPopulation("age class " + std::to_string(j + 1) + " has no population");
    ModelSystem system(spec, ages, forcing, BirthSchedule::constant(0.0));
    if (state.layout().has_vaccine_class()) system = system.with_policy(VaccinePolicy{});
    return system.force_of_infection(t, state.values());
}

StateVector derivatives(const ModelSpec& spec, const StateVector& state, const AgeStructure& ages,
                        const SeasonalForcing& forcing, const BirthSchedule& births, double t,
                        const std::optional<VaccinePolicy>& policy) {
    ModelSystem system(spec, ages, forcing, births);
    if (policy) system = system.with_policy(*policy);
    if (!(state.layout() == system.layout()))
        throw LayoutMismatch("state layout does not match model " + std::string(1, to_char(spec.model_id())));
    std::vector<double> y(system.dimension(), 0.0);
    std::copy(state.values().begin(), state.values().end(), y.begin());
    std::vector<double> dy(system.dimension());
    system.rhs(t, y, dy);
    dy.resize(system.compartment_count());
    return StateVector(state.layout(), std::move(dy));
}

} // namespace rotaens
