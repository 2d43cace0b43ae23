#pragma once

#include <stdexcept>
#include <string>

namespace rotaens {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define ROTAENS_DEFINE_ERROR(Name)              \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

ROTAENS_DEFINE_ERROR(ZeroPopulation);
ROTAENS_DEFINE_ERROR(LayoutMismatch);
ROTAENS_DEFINE_ERROR(InvalidParams);
ROTAENS_DEFINE_ERROR(ShapeMismatch);
ROTAENS_DEFINE_ERROR(ConfigError);
ROTAENS_DEFINE_ERROR(InsufficientSamples);
ROTAENS_DEFINE_ERROR(WeightMismatch);
ROTAENS_DEFINE_ERROR(GridMismatch);
ROTAENS_DEFINE_ERROR(SingularTransition);
ROTAENS_DEFINE_ERROR(AllZero);
ROTAENS_DEFINE_ERROR(ZeroDenominator);
ROTAENS_DEFINE_ERROR(Unattainable);
ROTAENS_DEFINE_ERROR(GridIncomplete);
ROTAENS_DEFINE_ERROR(MissingArtifact);

#undef ROTAENS_DEFINE_ERROR

/// Integration step size collapsed below the minimum step.
class StiffnessFailure : public Error {
public:
    StiffnessFailure(const std::string& what, double t) : Error(what), time_(t) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// The periodic-solution search ran out of simulated years.
class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, double discrepancy, int years)
        : Error(what), discrepancy_(discrepancy), years_(years) {}
    double discrepancy() const noexcept { return discrepancy_; }
    int years() const noexcept { return years_; }

private:
    double discrepancy_;
    int years_;
};

/// Malformed input text; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace rotaens
