#include "rotaens/errors.hpp"
#include "rotaens/model_suite.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace rotaens;

namespace {

SeasonalForcing flat_forcing(double beta0) {
    SeasonalForcing f;
    f.baseline_rates.fill(beta0);
    f.amplitude = 0.0;
    f.phase = 3.0;
    return f;
}

double sum(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

} // namespace

TEST(AgeStructure, StandardValues) {
    const auto ages = AgeStructure::standard();
    ASSERT_EQ(ages.class_count(), 6u);
    const double expected[] = {1.0 / 8, 1.0 / 8, 1.0 / 8, 1.0 / 24, 1.0 / 48, 1.0 / 144};
    for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(ages.aging_rates[i], expected[i]);
    const double rows[6][6] = {{1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1},
                               {3, 3, 3, 1, 1, 1}, {6, 6, 6, 2, 1, 1}, {18, 18, 18, 6, 3, 1}};
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(ages.contact_at(i, j), rows[i][j]);
    EXPECT_NO_THROW(ages.validate());
}

TEST(AgeStructure, PopulationFractionsFollowResidenceTimes) {
    const auto f = AgeStructure::standard().population_fractions();
    // residence times 8, 8, 8, 24, 48, 144 weeks out of 240
    const double expected[] = {8.0 / 240, 8.0 / 240, 8.0 / 240, 24.0 / 240, 48.0 / 240, 144.0 / 240};
    double total = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_NEAR(f[i], expected[i], 1e-15);
        total += f[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-15);
}

// The printed matrix balances contacts when the row class is weighted by the
// population of the column class: f_j C_ij = f_i C_ji.
TEST(AgeStructure, ContactReciprocity) {
    const auto ages = AgeStructure::standard();
    const auto f = ages.population_fractions();
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            EXPECT_NEAR(f[j] * ages.contact_at(i, j), f[i] * ages.contact_at(j, i), 1e-15) << i << "," << j;
}

TEST(AgeStructure, ValidateRejectsBadInput) {
    auto ages = AgeStructure::standard();
    ages.aging_rates[2] = 0.0;
    EXPECT_THROW(ages.validate(), InvalidParams);
    ages = AgeStructure::standard();
    ages.contact.pop_back();
    EXPECT_THROW(ages.validate(), InvalidParams);
}

TEST(TransmissionRate, NoAmplitudeIsConstant) {
    const auto f = flat_forcing(20.0);
    for (double t : {0.0, 3.3, 17.0, 40.25, 400.0}) EXPECT_DOUBLE_EQ(transmission_rate(f, 2, t), 20.0);
}

TEST(TransmissionRate, CosineMaximum) {
    SeasonalForcing f = flat_forcing(20.0);
    f.amplitude = 0.5;
    f.phase = 7.4;
    const double t = 26.0 * f.phase / std::numbers::pi;
    EXPECT_NEAR(transmission_rate(f, 0, t), 30.0, 1e-12);
    EXPECT_NEAR(transmission_rate(f, 0, t + 26.0), 10.0, 1e-12);
}

TEST(TransmissionRate, PeakWeekEarlyMarch) {
    const double week = peak_transmission_week(7.4);
    EXPECT_NEAR(week, std::fmod(26.0 * 7.4 / std::numbers::pi, 52.0), 1e-12);
    EXPECT_NEAR(week, 9.3, 0.1);
    // brute-force scan of the multiplier agrees
    SeasonalForcing f = flat_forcing(1.0);
    f.amplitude = 0.3;
    f.phase = 7.4;
    double best_t = 0.0;
    double best = -1.0;
    for (int k = 0; k < 52000; ++k) {
        const double t = k * 0.001;
        if (f.multiplier(t) > best) {
            best = f.multiplier(t);
            best_t = t;
        }
    }
    EXPECT_NEAR(best_t, week, 2e-3);
}

TEST(TransmissionRate, PeriodicProperty) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n = 0; n < 500; ++n) {
        SeasonalForcing f = flat_forcing(5.0 + 30.0 * u(rng));
        f.amplitude = u(rng);
        f.phase = 2.0 + 6.28 * u(rng);
        const double t = 52.0 * u(rng);
        const double a = transmission_rate(f, 3, t);
        EXPECT_NEAR(a, transmission_rate(f, 3, t + 52.0), 1e-12 * a);
        EXPECT_NEAR(a, transmission_rate(f, 3, t + 520.0), 1e-11 * a);
        EXPECT_GE(a, 0.0);
    }
}

TEST(BirthRate, StandardAmplitudes) {
    const auto s = BirthSchedule::standard();
    const std::array<double, 12> table{-0.17, 0.01, 0.03, 0.25, 0.12, 0.03, -0.01, 0.09, 0.01, 0.13, -0.31, -0.17};
    for (std::size_t m = 0; m < 12; ++m) {
        EXPECT_EQ(s.monthly_amplitudes[m], table[m]);
        EXPECT_GT(1.0 + s.monthly_amplitudes[m], 0.0);
    }
    EXPECT_DOUBLE_EQ(s.mean_rate, 1.0 / 260.0);
}

TEST(BirthRate, JanuaryAndNovember) {
    const auto s = BirthSchedule::standard();
    EXPECT_NEAR(birth_rate(s, 0.5), 0.83 / 260.0, 1e-15);
    EXPECT_NEAR(birth_rate(s, 2.9), 0.83 / 260.0, 1e-15);
    // week index 46 (t in [45, 46)) lies in November
    EXPECT_EQ(BirthSchedule::month_of(45.5), 10u);
    EXPECT_NEAR(birth_rate(s, 45.5), 0.69 / 260.0, 1e-15);
}

TEST(BirthRate, ZeroAmplitudeGivesMean) {
    auto s = BirthSchedule::standard();
    s.monthly_amplitudes[5] = 0.0;
    const double t = 23.0; // week index 24 -> June
    ASSERT_EQ(BirthSchedule::month_of(t), 5u);
    EXPECT_DOUBLE_EQ(birth_rate(s, t), 1.0 / 260.0);
}

TEST(BirthRate, MonthMappingCoversYear) {
    std::array<int, 12> weeks_per_month{};
    for (int w = 0; w < 52; ++w) ++weeks_per_month[BirthSchedule::month_of(w + 0.5)];
    for (int n : weeks_per_month) {
        EXPECT_GE(n, 4);
        EXPECT_LE(n, 5);
    }
    EXPECT_EQ(BirthSchedule::month_of(0.0), 0u);
    EXPECT_EQ(BirthSchedule::month_of(51.99), 11u);
}

TEST(BirthRate, PeriodicProperty) {
    const auto s = BirthSchedule::standard();
    for (double t = 0.0; t < 52.0; t += 0.37) {
        EXPECT_EQ(birth_rate(s, t), birth_rate(s, t + 52.0));
        EXPECT_EQ(birth_rate(s, t), birth_rate(s, t + 5200.0));
    }
}

TEST(BirthRate, ValidateRejectsNonPositiveMonths) {
    auto s = BirthSchedule::standard();
    s.monthly_amplitudes[3] = -1.0;
    EXPECT_THROW(s.validate(), InvalidParams);
}

TEST(ModelSpec, Constants) {
    const ModelSpec spec(ModelId::C);
    EXPECT_DOUBLE_EQ(spec.maternal_waning(), 1.0 / 13.0);
    EXPECT_DOUBLE_EQ(spec.immunity_waning(), 1.0 / 52.0);
    EXPECT_EQ(spec.recovery_first(), 1.0);
    EXPECT_EQ(spec.recovery_later(), 2.0);
    EXPECT_EQ(spec.incubation_rate(), 7.0);
    EXPECT_EQ(spec.relative_susceptibility()[1], 0.62);
    EXPECT_EQ(spec.relative_infectiousness()[3], 0.2);
    EXPECT_EQ(spec.severe_fractions()[0], 0.13);
    EXPECT_EQ(spec.return_probabilities()[2], 0.85);
    EXPECT_EQ(ModelSpec(ModelId::A).severe_split() + ModelSpec(ModelId::A).mild_split(), 1.0);
}

TEST(ModelSpec, IdRoundTrip) {
    for (ModelId id : kAllModels) EXPECT_EQ(model_from_char(to_char(id)), id);
    EXPECT_EQ(model_from_string("c"), ModelId::C);
    EXPECT_THROW(model_from_char('F'), ConfigError);
    EXPECT_THROW(model_from_string("BC"), ConfigError);
}

TEST(Layout, CompartmentSets) {
    EXPECT_EQ(layout_for(ModelId::A).size(), 30u);
    EXPECT_EQ(layout_for(ModelId::A, true).size(), 36u);
    EXPECT_EQ(layout_for(ModelId::B).size(), 60u);
    EXPECT_EQ(layout_for(ModelId::C).size(), 78u);
    EXPECT_EQ(layout_for(ModelId::D).size(), 60u);
    EXPECT_EQ(layout_for(ModelId::E).size(), 60u);
    for (const char* name : {"M", "S1", "I1", "R1", "S2", "I2", "R2", "S3", "I3", "R3"})
        EXPECT_TRUE(layout_for(ModelId::B).contains(name)) << name;
    for (const char* name : {"E1", "E2", "E3"}) EXPECT_TRUE(layout_for(ModelId::C).contains(name));
    for (const char* name : {"S4", "I4", "Rfinal"}) EXPECT_TRUE(layout_for(ModelId::E).contains(name));
    EXPECT_FALSE(layout_for(ModelId::D).contains("R1"));
    EXPECT_THROW((void)layout_for(ModelId::B).kind_index("E1"), LayoutMismatch);
    const auto entries = layout_for(ModelId::B).entries();
    EXPECT_EQ(entries[13].compartment, "I1");
    EXPECT_EQ(entries[13].age_class, 1u);
    EXPECT_EQ(entries[13].infection_order, 1);
}

TEST(StateVector, AccessAndVaccineClass) {
    StateVector s(layout_for(ModelId::A));
    s.at("S", 2) = 5.0;
    s.at("R", 2) = 3.0;
    EXPECT_EQ(s.class_population(2), 8.0);
    EXPECT_EQ(s.total(), 8.0);
    auto v = s.with_vaccine_class();
    EXPECT_TRUE(v.layout().has_vaccine_class());
    EXPECT_EQ(v.at("S", 2), 5.0);
    EXPECT_EQ(v.at("V", 2), 0.0);
    EXPECT_EQ(v.without_vaccine_class().values()[s.layout().index(1, 2)], 5.0);
    v.at("V", 0) = 1.0;
    EXPECT_THROW(v.without_vaccine_class(), LayoutMismatch);
    EXPECT_THROW(StateVector(layout_for(ModelId::B), std::vector<double>(10)), LayoutMismatch);
}

TEST(ForceOfInfection, NoInfectiousGivesZero) {
    std::mt19937_64 rng(3);
    for (ModelId id : kAllModels) {
        const Layout& layout = layout_for(id);
        StateVector s = fixtures::random_state(layout, rng);
        for (std::size_t k = 0; k < layout.kind_count(); ++k)
            if (layout.kind(k).name[0] == 'I')
                for (std::size_t a = 0; a < 6; ++a) s.values()[layout.index(k, a)] = 0.0;
        const auto foi = force_of_infection(ModelSpec(id), s, AgeStructure::standard(), flat_forcing(20.0), 1.0);
        for (double x : foi) EXPECT_EQ(x, 0.0);
    }
}

TEST(ForceOfInfection, ModelAMildCountsHalf) {
    StateVector severe(layout_for(ModelId::A));
    StateVector mild(layout_for(ModelId::A));
    for (std::size_t a = 0; a < 6; ++a) {
        severe.at("S", a) = mild.at("S", a) = 100.0 + a;
        severe.at("Is", a) = 7.0 + a;
        mild.at("Im", a) = 7.0 + a;
    }
    SeasonalForcing f = flat_forcing(20.0);
    f.amplitude = 0.4;
    const auto ls = force_of_infection(ModelSpec(ModelId::A), severe, AgeStructure::standard(), f, 4.0);
    const auto lm = force_of_infection(ModelSpec(ModelId::A), mild, AgeStructure::standard(), f, 4.0);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(lm[i], 0.5 * ls[i], 1e-12 * ls[i]);
}

TEST(ForceOfInfection, ModelBAllInfectedHandSum) {
    const double beta0 = 17.0;
    const auto ages = AgeStructure::standard();
    StateVector s(layout_for(ModelId::B));
    for (std::size_t a = 0; a < 6; ++a) s.at("I1", a) = 10.0 * (a + 1);
    const auto foi = force_of_infection(ModelSpec(ModelId::B), s, ages, flat_forcing(beta0), 9.0);
    for (std::size_t i = 0; i < 6; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 6; ++j) row += ages.contact_at(i, j);
        EXPECT_NEAR(foi[i], beta0 * row, 1e-12 * beta0 * row);
    }
    EXPECT_NEAR(foi[0], 6.0 * beta0, 1e-12);
}

TEST(ForceOfInfection, ZeroPopulationThrows) {
    StateVector s(layout_for(ModelId::B));
    for (std::size_t a = 0; a < 5; ++a) s.at("S1", a) = 1.0;
    EXPECT_THROW(force_of_infection(ModelSpec(ModelId::B), s, AgeStructure::standard(), flat_forcing(20.0), 0.0),
                 ZeroPopulation);
}

TEST(Derivatives, ZeroStateNoBirths) {
    for (ModelId id : kAllModels) {
        StateVector s(layout_for(id));
        const auto d = derivatives(ModelSpec(id), s, AgeStructure::standard(), flat_forcing(20.0),
                                   BirthSchedule::constant(0.0), 3.0);
        for (double x : d.values()) EXPECT_EQ(x, 0.0);
    }
}

TEST(Derivatives, LayoutMismatchThrows) {
    StateVector s(layout_for(ModelId::B));
    EXPECT_THROW(derivatives(ModelSpec(ModelId::C), s, AgeStructure::standard(), flat_forcing(20.0),
                             BirthSchedule::standard(), 0.0),
                 LayoutMismatch);
}

// sum of derivatives = births - aging out of the last class
TEST(Derivatives, FlowConservationProperty) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ut(0.0, 104.0);
    const auto ages = AgeStructure::standard();
    const auto births = BirthSchedule::standard();
    for (ModelId id : kAllModels) {
        for (int n = 0; n < 200; ++n) {
            const StateVector s = fixtures::random_state(layout_for(id), rng);
            const ParamVector p = fixtures::random_params(rng);
            const double t = ut(rng);
            const auto d = derivatives(ModelSpec(id), s, ages, p.forcing(), births, t);
            double n6 = s.class_population(5);
            const double expected = births.rate(t) * 1.0 - ages.aging_rates[5] * n6;
            double scale = 0.0;
            for (double x : d.values()) scale += std::abs(x);
            EXPECT_NEAR(sum(d.values()), expected, 1e-12 * (scale + 1.0)) << to_char(id);
        }
    }
}

TEST(Derivatives, ZeroCompartmentsDoNotGoNegative) {
    std::mt19937_64 rng(77);
    const auto ages = AgeStructure::standard();
    for (ModelId id : kAllModels) {
        for (int n = 0; n < 200; ++n) {
            const StateVector s = fixtures::random_state(layout_for(id), rng);
            const ParamVector p = fixtures::random_params(rng);
            const auto d = derivatives(ModelSpec(id), s, ages, p.forcing(), BirthSchedule::standard(), 11.0);
            for (std::size_t k = 0; k < s.size(); ++k)
                if (s.values()[k] == 0.0) EXPECT_GE(d.values()[k], 0.0) << to_char(id) << " entry " << k;
        }
    }
}

// Independent term-by-term evaluation of the Model B equations for one small state.
TEST(Derivatives, ModelBTermByTerm) {
    const double alpha[6] = {1.0 / 8, 1.0 / 8, 1.0 / 8, 1.0 / 24, 1.0 / 48, 1.0 / 144};
    const double C[6][6] = {{1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 1, 1},
                            {3, 3, 3, 1, 1, 1}, {6, 6, 6, 2, 1, 1}, {18, 18, 18, 6, 3, 1}};
    double M[6], S1[6], I1[6], R1[6], S2[6], I2[6], R2[6], S3[6], I3[6], R3[6];
    for (int a = 0; a < 6; ++a) {
        M[a] = 4.0 + a;
        S1[a] = 20.0 + 3 * a;
        I1[a] = 1.0 + 0.5 * a;
        R1[a] = 6.0 + a;
        S2[a] = 9.0 + 2 * a;
        I2[a] = 0.5 + 0.25 * a;
        R2[a] = 3.0 + a;
        S3[a] = 12.0 + a;
        I3[a] = 0.2 * (a + 1);
        R3[a] = 2.0 + 0.5 * a;
    }
    const double beta0[6] = {18, 19, 20, 21, 22, 23};
    const double b = 0.3, phi = 5.1, t = 2.25;
    const double season = 1.0 + b * std::cos((2 * std::numbers::pi * t - 52 * phi) / 52);
    const double mu = (1.0 / 260) * (1 - 0.17); // t in January
    const double delta = 1.0 / 13, tau = 1.0 / 52, g1 = 1, g2 = 2, s2 = 0.62, s3 = 0.37;

    double lambda[6];
    for (int i = 0; i < 6; ++i) {
        lambda[i] = 0;
        for (int j = 0; j < 6; ++j) {
            const double N = M[j] + S1[j] + I1[j] + R1[j] + S2[j] + I2[j] + R2[j] + S3[j] + I3[j] + R3[j];
            lambda[i] += beta0[j] * season * C[i][j] * (I1[j] + 0.5 * I2[j] + 0.2 * I3[j]) / N;
        }
    }
    auto in = [&](const double* x, int i) { return i == 0 ? 0.0 : alpha[i - 1] * x[i - 1]; };

    StateVector s(layout_for(ModelId::B));
    for (std::size_t a = 0; a < 6; ++a) {
        s.at("M", a) = M[a];
        s.at("S1", a) = S1[a];
        s.at("I1", a) = I1[a];
        s.at("R1", a) = R1[a];
        s.at("S2", a) = S2[a];
        s.at("I2", a) = I2[a];
        s.at("R2", a) = R2[a];
        s.at("S3", a) = S3[a];
        s.at("I3", a) = I3[a];
        s.at("R3", a) = R3[a];
    }
    SeasonalForcing f;
    for (int j = 0; j < 6; ++j) f.baseline_rates[j] = beta0[j];
    f.amplitude = b;
    f.phase = phi;
    const auto d = derivatives(ModelSpec(ModelId::B), s, AgeStructure::standard(), f, BirthSchedule::standard(), t);

    for (int i = 0; i < 6; ++i) {
        const double birth = i == 0 ? mu : 0.0;
        const double dM = birth + in(M, i) - delta * M[i] - alpha[i] * M[i];
        const double dS1 = in(S1, i) + delta * M[i] - lambda[i] * S1[i] - alpha[i] * S1[i];
        const double dI1 = in(I1, i) + lambda[i] * S1[i] - g1 * I1[i] - alpha[i] * I1[i];
        const double dR1 = in(R1, i) + g1 * I1[i] - tau * R1[i] - alpha[i] * R1[i];
        const double dS2 = in(S2, i) + tau * R1[i] - s2 * lambda[i] * S2[i] - alpha[i] * S2[i];
        const double dI2 = in(I2, i) + s2 * lambda[i] * S2[i] - g2 * I2[i] - alpha[i] * I2[i];
        const double dR2 = in(R2, i) + g2 * I2[i] - tau * R2[i] - alpha[i] * R2[i];
        const double dS3 = in(S3, i) + tau * R2[i] + tau * R3[i] - s3 * lambda[i] * S3[i] - alpha[i] * S3[i];
        const double dI3 = in(I3, i) + s3 * lambda[i] * S3[i] - g2 * I3[i] - alpha[i] * I3[i];
        const double dR3 = in(R3, i) + g2 * I3[i] - tau * R3[i] - alpha[i] * R3[i];
        const std::size_t a = static_cast<std::size_t>(i);
        EXPECT_NEAR(d.at("M", a), dM, 1e-12);
        EXPECT_NEAR(d.at("S1", a), dS1, 1e-12);
        EXPECT_NEAR(d.at("I1", a), dI1, 1e-12);
        EXPECT_NEAR(d.at("R1", a), dR1, 1e-12);
        EXPECT_NEAR(d.at("S2", a), dS2, 1e-12);
        EXPECT_NEAR(d.at("I2", a), dI2, 1e-12);
        EXPECT_NEAR(d.at("R2", a), dR2, 1e-12);
        EXPECT_NEAR(d.at("S3", a), dS3, 1e-12);
        EXPECT_NEAR(d.at("I3", a), dI3, 1e-12);
        EXPECT_NEAR(d.at("R3", a), dR3, 1e-12);
    }
}

TEST(Vaccination, ZeroCoverageIsNeutral) {
    std::mt19937_64 rng(5);
    const auto ages = AgeStructure::standard();
    for (ModelId id : kAllModels) {
        for (int n = 0; n < 50; ++n) {
            const StateVector s = fixtures::random_state(layout_for(id), rng);
            const ParamVector p = fixtures::random_params(rng);
            const auto base = derivatives(ModelSpec(id), s, ages, p.forcing(), BirthSchedule::standard(), 20.5);
            VaccinePolicy policy;
            policy.coverage = 0.0;
            const auto vac = derivatives(ModelSpec(id), s.with_vaccine_class(), ages, p.forcing(),
                                         BirthSchedule::standard(), 20.5, policy);
            for (std::size_t k = 0; k < base.size(); ++k) EXPECT_EQ(base.values()[k], vac.values()[k]);
            for (std::size_t k = base.size(); k < vac.size(); ++k) EXPECT_EQ(vac.values()[k], 0.0);
        }
    }
}

TEST(Vaccination, ModelBFullDiversion) {
    std::mt19937_64 rng(8);
    const auto ages = AgeStructure::standard();
    const StateVector s = fixtures::random_state(layout_for(ModelId::B), rng);
    const auto forcing = flat_forcing(20.0);
    const auto base = derivatives(ModelSpec(ModelId::B), s, ages, forcing, BirthSchedule::standard(), 1.0);
    const auto vac = derivatives(ModelSpec(ModelId::B), s, ages, forcing, BirthSchedule::standard(), 1.0,
                                 VaccinePolicy{1.0, 1.0});
    const double a1 = ages.aging_rates[0], a2 = ages.aging_rates[1];
    // class 2 receives no aging inflow into M or S1, all of it lands in R1
    EXPECT_NEAR(vac.at("M", 1) - base.at("M", 1), -a1 * s.at("M", 0), 1e-12);
    EXPECT_NEAR(vac.at("S1", 1) - base.at("S1", 1), -a1 * s.at("S1", 0), 1e-12);
    EXPECT_NEAR(vac.at("R1", 1) - base.at("R1", 1), a1 * (s.at("M", 0) + s.at("S1", 0)), 1e-12);
    // second dose: R1 and S2 leaving class 2 land in R2 of class 3
    EXPECT_NEAR(vac.at("R1", 2) - base.at("R1", 2), -a2 * s.at("R1", 1), 1e-12);
    EXPECT_NEAR(vac.at("S2", 2) - base.at("S2", 2), -a2 * s.at("S2", 1), 1e-12);
    EXPECT_NEAR(vac.at("R2", 2) - base.at("R2", 2), a2 * (s.at("R1", 1) + s.at("S2", 1)), 1e-12);
    double total = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) total += vac.values()[k] - base.values()[k];
    EXPECT_NEAR(total, 0.0, 1e-12);
}

TEST(Vaccination, ModelALeakyProtection) {
    std::mt19937_64 rng(9);
    const auto ages = AgeStructure::standard();
    const auto forcing = flat_forcing(20.0);
    StateVector s = fixtures::random_state(layout_for(ModelId::A), rng).with_vaccine_class();
    VaccinePolicy policy{0.0, 0.63, 0.796, 0.609};
    const double v = 40.0;
    s.at("V", 3) = v;
    // V changes N, hence lambda; evaluate lambda at the new state
    const auto lambda = force_of_infection(ModelSpec(ModelId::A), s, ages, forcing, 2.0);
    const auto with_v = derivatives(ModelSpec(ModelId::A), s, ages, forcing, BirthSchedule::standard(), 2.0, policy);
    // same lambda with V removed from the source terms: compare against a state
    // where V is relabelled as R (same N, no leak)
    StateVector s_r = s;
    s_r.at("V", 3) = 0.0;
    s_r.at("R", 3) += v;
    const auto as_r = derivatives(ModelSpec(ModelId::A), s_r, ages, forcing, BirthSchedule::standard(), 2.0, policy);
    const double severe = (1.0 - 0.796) * 0.24 * lambda[3] * v;
    const double mild = (1.0 - 0.609) * 0.76 * lambda[3] * v;
    EXPECT_NEAR(with_v.at("Is", 3) - as_r.at("Is", 3), severe, 1e-10);
    EXPECT_NEAR(with_v.at("Im", 3) - as_r.at("Im", 3), mild, 1e-10);
    EXPECT_NEAR(with_v.at("V", 3), -(1.0 / 52.0) * v - severe - mild - ages.aging_rates[3] * v, 1e-10);
}

TEST(Vaccination, ModelADoseEntersV) {
    std::mt19937_64 rng(10);
    const auto ages = AgeStructure::standard();
    const StateVector s = fixtures::random_state(layout_for(ModelId::A), rng).with_vaccine_class();
    const auto forcing = flat_forcing(20.0);
    const auto base = derivatives(ModelSpec(ModelId::A), s, ages, forcing, BirthSchedule::standard(), 1.0,
                                  VaccinePolicy{0.0});
    const auto vac = derivatives(ModelSpec(ModelId::A), s, ages, forcing, BirthSchedule::standard(), 1.0,
                                 VaccinePolicy{0.7});
    const double a1 = ages.aging_rates[0];
    EXPECT_NEAR(vac.at("V", 1) - base.at("V", 1), 0.7 * a1 * (s.at("M", 0) + s.at("S", 0)), 1e-12);
    EXPECT_NEAR(vac.at("S", 1) - base.at("S", 1), -0.7 * a1 * s.at("S", 0), 1e-12);
}

TEST(Vaccination, ConservationWithPolicy) {
    std::mt19937_64 rng(12);
    const auto ages = AgeStructure::standard();
    for (ModelId id : kAllModels) {
        for (int n = 0; n < 50; ++n) {
            StateVector s = fixtures::random_state(layout_for(id, true), rng);
            const ParamVector p = fixtures::random_params(rng);
            const double t = 30.2;
            const auto d = derivatives(ModelSpec(id), s, ages, p.forcing(), BirthSchedule::standard(), t,
                                       VaccinePolicy{0.8, 0.63});
            double scale = 0.0;
            for (double x : d.values()) scale += std::abs(x);
            EXPECT_NEAR(sum(d.values()), BirthSchedule::standard().rate(t) - ages.aging_rates[5] * s.class_population(5),
                        1e-12 * (scale + 1.0));
        }
    }
}

TEST(Vaccination, PolicyValidation) {
    EXPECT_THROW(VaccinePolicy{1.2}.validate(), InvalidParams);
    EXPECT_THROW((VaccinePolicy{0.5, -0.1}.validate()), InvalidParams);
    EXPECT_NO_THROW(VaccinePolicy{}.validate());
}
