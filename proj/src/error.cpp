#include "sae/error.hpp"

namespace sae {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::InconsistentCovariateLength: return "InconsistentCovariateLength";
        case ErrorKind::NonPositiveSamplingVariance: return "NonPositiveSamplingVariance";
        case ErrorKind::NegativeWeight: return "NegativeWeight";
        case ErrorKind::NonFiniteValue: return "NonFiniteValue";
        case ErrorKind::RankDeficientDesign: return "RankDeficientDesign";
        case ErrorKind::TooFewAreas: return "TooFewAreas";
        case ErrorKind::AllWeightsZero: return "AllWeightsZero";
        case ErrorKind::MissingColumn: return "MissingColumn";
        case ErrorKind::NonNumericCell: return "NonNumericCell";
        case ErrorKind::DuplicateArea: return "DuplicateArea";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Io: return "Io";
        case ErrorKind::SingularNormalEquations: return "SingularNormalEquations";
        case ErrorKind::BootstrapUnstable: return "BootstrapUnstable";
        case ErrorKind::SimulationUnstable: return "SimulationUnstable";
        case ErrorKind::Usage: return "Usage";
    }
    return "Unknown";
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Usage:
            return 1;
        case ErrorKind::SingularNormalEquations:
        case ErrorKind::BootstrapUnstable:
        case ErrorKind::SimulationUnstable:
            return 3;
        default:
            return 2;
    }
}

}  // namespace sae
