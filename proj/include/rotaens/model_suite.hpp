#pragma once

// Age-structured rotavirus transmission models A-E: demographic scaffolding,
// seasonal forcing, compartment layouts and the right-hand sides of the ODEs.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rotaens {

inline constexpr std::size_t kAgeClasses = 6;
inline constexpr double kWeeksPerYear = 52.0;

/// Age classes 0-1m, 2-3m, 4-5m, 6-11m, 1y, 2-4y with weekly aging rates and
/// the fixed contact matrix. contact is row-major: contact[i * n + j] = C_ij,
/// the weight age class i puts on infectious members of class j.
struct AgeStructure {
    std::vector<double> aging_rates;
    std::vector<double> contact;

    static AgeStructure standard();

    std::size_t class_count() const noexcept { return aging_rates.size(); }
    double contact_at(std::size_t i, std::size_t j) const { return contact[i * class_count() + j]; }

    /// Stationary age distribution implied by the aging rates (f_i proportional to 1/alpha_i).
    std::vector<double> population_fractions() const;

    /// Throws InvalidParams when rates are nonpositive or the matrix is malformed.
    void validate() const;
};

/// beta_i(t) = beta0_i * (1 + b cos((2 pi t - 52 phi) / 52)), t in weeks.
struct SeasonalForcing {
    std::array<double, kAgeClasses> baseline_rates{};
    double amplitude = 0.0;
    double phase = 0.0;

    double rate(std::size_t age_class, double t) const;
    /// The seasonal multiplier 1 + b cos(...), shared by every age class.
    double multiplier(double t) const;
    void validate() const;
};

double transmission_rate(const SeasonalForcing& forcing, std::size_t age_class, double t);

/// Calendar week (fractional, in [0, 52)) at which the transmission multiplier peaks.
double peak_transmission_week(double phase);

/// Piecewise-constant monthly birth rate around a weekly mean.
struct BirthSchedule {
    double mean_rate = 1.0 / (5.0 * 52.0);
    std::array<double, 12> monthly_amplitudes{};

    /// Mean 1/260 per week with the Niger monthly amplitudes (Jan -0.17 ... Dec -0.17).
    static BirthSchedule standard();
    /// Same mean rate, no seasonal variation.
    static BirthSchedule constant(double mean_rate = 1.0 / (5.0 * 52.0));

    /// Zero-based month for model time t (weeks since the calendar origin).
    /// Week index w = floor(t) + 1 maps to month floor(((w - 1) mod 52) * 12 / 52).
    static std::size_t month_of(double t);

    double rate(double t) const;
    void validate() const;
};

double birth_rate(const BirthSchedule& schedule, double t);

enum class ModelId { A, B, C, D, E };

inline constexpr std::array<ModelId, 5> kAllModels{ModelId::A, ModelId::B, ModelId::C, ModelId::D,
                                                   ModelId::E};

char to_char(ModelId id);
/// Accepts 'A'..'E' (case-insensitive); throws ConfigError otherwise.
ModelId model_from_char(char c);
ModelId model_from_string(std::string_view s);

/// Fixed epidemiological constants of one model variant. Rates are per week.
class ModelSpec {
public:
    explicit ModelSpec(ModelId id);

    ModelId model_id() const noexcept { return id_; }
    double maternal_waning() const noexcept { return 1.0 / 13.0; }
    double immunity_waning() const noexcept { return 1.0 / 52.0; }
    double recovery_first() const noexcept { return 1.0; }
    double recovery_later() const noexcept { return 2.0; }
    double incubation_rate() const noexcept { return 7.0; }
    /// Indexed by infection order 1..4 (index 0 = first infection).
    const std::array<double, 4>& relative_susceptibility() const noexcept { return susceptibility_; }
    const std::array<double, 4>& relative_infectiousness() const noexcept { return infectiousness_; }
    const std::array<double, 3>& severe_fractions() const noexcept { return severe_; }
    const std::array<double, 3>& any_rvge_fractions() const noexcept { return any_rvge_; }
    const std::array<double, 3>& return_probabilities() const noexcept { return kappa_; }
    double severe_split() const noexcept { return 0.24; }
    double mild_split() const noexcept { return 0.76; }

    /// Number of incidence channels tracked: A has two (severe, mild); B and C
    /// three infection orders; D and E four.
    std::size_t incidence_channels() const noexcept;

    /// Weight that turns each incidence channel into severe RVGE cases.
    std::vector<double> severe_weights() const;

private:
    ModelId id_;
    std::array<double, 4> susceptibility_{1.0, 0.62, 0.37, 0.37};
    std::array<double, 4> infectiousness_{1.0, 0.5, 0.2, 0.2};
    std::array<double, 3> severe_{0.13, 0.03, 0.0};
    std::array<double, 3> any_rvge_{0.47, 0.25, 0.32};
    std::array<double, 3> kappa_{0.62, 0.65, 0.85};
};

struct CompartmentKind {
    std::string name;
    int infection_order; // 0 for compartments not tied to an infection order
};

/// Ordered compartment kinds of a model; each kind is replicated over the six
/// age classes. Values are stored kind-major: index = kind * 6 + age.
class Layout {
public:
    Layout(ModelId model, bool vaccine_class, std::vector<CompartmentKind> kinds, std::size_t channels);

    ModelId model() const noexcept { return model_; }
    bool has_vaccine_class() const noexcept { return vaccine_class_; }
    std::size_t kind_count() const noexcept { return kinds_.size(); }
    std::size_t age_classes() const noexcept { return kAgeClasses; }
    std::size_t size() const noexcept { return kinds_.size() * kAgeClasses; }
    std::size_t incidence_channels() const noexcept { return channels_; }
    std::size_t index(std::size_t kind, std::size_t age) const noexcept { return kind * kAgeClasses + age; }
    const CompartmentKind& kind(std::size_t k) const { return kinds_.at(k); }
    /// Throws LayoutMismatch for unknown names.
    std::size_t kind_index(std::string_view name) const;
    bool contains(std::string_view name) const;

    struct Entry {
        std::string_view compartment;
        int infection_order;
        std::size_t age_class;
    };
    std::vector<Entry> entries() const;

    friend bool operator==(const Layout& a, const Layout& b) noexcept {
        return a.model_ == b.model_ && a.vaccine_class_ == b.vaccine_class_;
    }

private:
    ModelId model_;
    bool vaccine_class_;
    std::vector<CompartmentKind> kinds_;
    std::size_t channels_;
};

/// Layouts are interned; the reference stays valid for the program lifetime.
const Layout& layout_for(ModelId model, bool vaccine_class = false);

/// Compartment occupancies for one model layout.
class StateVector {
public:
    explicit StateVector(const Layout& layout);
    StateVector(const Layout& layout, std::vector<double> values);

    const Layout& layout() const noexcept { return *layout_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& at(std::string_view compartment, std::size_t age);
    double at(std::string_view compartment, std::size_t age) const;

    double class_population(std::size_t age) const;
    double total() const;

    /// Copy with negative entries set to zero.
    StateVector clamped() const;
    /// Re-expresses the state in the layout with a vaccine class (Model A);
    /// the added compartments start empty. Other models are returned unchanged.
    StateVector with_vaccine_class() const;
    /// Drops an empty vaccine class again; throws LayoutMismatch if it is occupied.
    StateVector without_vaccine_class() const;

private:
    const Layout* layout_;
    std::vector<double> values_;
};

/// Vaccination scenario: dose 1 at the 2-month boundary (class 1 -> 2), dose 2
/// at the 4-month boundary (class 2 -> 3). The efficacies are used by Model A only.
struct VaccinePolicy {
    double coverage = 0.0;
    double seroconversion = 0.63;
    double efficacy_severe = 0.796;
    double efficacy_mild = 0.609;

    void validate() const;
};

/// The full ODE system of one model: compartments followed by per-age
/// incidence accumulators (channel-major, channel * 6 + age). Births enter M of
/// the first class at mu(t) * birth_reference; aging out of the last class
/// leaves the system.
class ModelSystem {
public:
    ModelSystem(ModelSpec spec, AgeStructure ages, SeasonalForcing forcing, BirthSchedule births,
                double birth_reference = 1.0);

    const ModelSpec& spec() const noexcept { return spec_; }
    const AgeStructure& ages() const noexcept { return ages_; }
    const SeasonalForcing& forcing() const noexcept { return forcing_; }
    const BirthSchedule& births() const noexcept { return births_; }
    const std::optional<VaccinePolicy>& policy() const noexcept { return policy_; }
    double birth_reference() const noexcept { return birth_reference_; }
    const Layout& layout() const noexcept { return *layout_; }

    std::size_t compartment_count() const noexcept { return layout_->size(); }
    std::size_t dimension() const noexcept { return layout_->size() + layout_->incidence_channels() * kAgeClasses; }
    std::size_t incidence_offset() const noexcept { return layout_->size(); }

    /// Derivative of compartments and incidence accumulators. y and dydt have dimension().
    void rhs(double t, std::span<const double> y, std::span<double> dydt) const;

    /// Force of infection per age class from the compartment part of y. Empty
    /// age classes contribute nothing; negative populations throw ZeroPopulation.
    std::array<double, kAgeClasses> force_of_infection(double t, std::span<const double> compartments) const;

    /// Same system with the vaccination transitions switched on.
    ModelSystem with_policy(const VaccinePolicy& policy) const;

private:
    void flows_a(std::span<const double> y, const std::array<double, kAgeClasses>& foi, std::span<double> dy,
                 std::span<double> inc) const;
    void flows_b(std::span<const double> y, const std::array<double, kAgeClasses>& foi, std::span<double> dy,
                 std::span<double> inc) const;
    void flows_c(std::span<const double> y, const std::array<double, kAgeClasses>& foi, std::span<double> dy,
                 std::span<double> inc) const;
    void flows_de(std::span<const double> y, const std::array<double, kAgeClasses>& foi, std::span<double> dy,
                  std::span<double> inc) const;
    void vaccination_flows(std::span<const double> y, const std::array<double, kAgeClasses>& foi,
                           std::span<double> dy, std::span<double> inc) const;

    ModelSpec spec_;
    AgeStructure ages_;
    SeasonalForcing forcing_;
    BirthSchedule births_;
    double birth_reference_;
    std::optional<VaccinePolicy> policy_;
    const Layout* layout_;
    std::vector<double> kind_infectiousness_;
};

ModelSystem apply_vaccination_wiring(const ModelSystem& base, const VaccinePolicy& policy);

/// Force of infection for a state; throws ZeroPopulation if any class population is <= 0.
std::array<double, kAgeClasses> force_of_infection(const ModelSpec& spec, const StateVector& state,
                                                   const AgeStructure& ages, const SeasonalForcing& forcing,
                                                   double t);

/// Compartment derivatives (same layout as state). Throws LayoutMismatch when the
/// state layout does not belong to spec (or lacks the vaccine class the policy needs).
StateVector derivatives(const ModelSpec& spec, const StateVector& state, const AgeStructure& ages,
                        const SeasonalForcing& forcing, const BirthSchedule& births, double t,
                        const std::optional<VaccinePolicy>& policy = std::nullopt);

} // namespace rotaens
