#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sae {

enum class ErrorKind {
    // data / validation
    EmptyDataset,
    InconsistentCovariateLength,
    NonPositiveSamplingVariance,
    NegativeWeight,
    NonFiniteValue,
    RankDeficientDesign,
    TooFewAreas,
    AllWeightsZero,
    MissingColumn,
    NonNumericCell,
    DuplicateArea,
    InvalidConfig,
    InvalidArgument,
    Io,
    // numerical
    SingularNormalEquations,
    BootstrapUnstable,
    SimulationUnstable,
    // command line
    Usage,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Process exit code for an error kind: 1 usage, 2 data/validation, 3 numerical.
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace sae
