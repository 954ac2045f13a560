#pragma once

// Area-level data for the Fay-Herriot model
//
//     direct_i = theta_i + e_i,   e_i ~ N(0, D_i)     (D_i known)
//     theta_i  = x_i' beta + u_i, u_i ~ N(0, sigma_u^2)
//
// A Dataset is the validated, immutable form of a list of AreaRecords. It owns
// the design matrix and the OLS quantities (Gram factorization, leverages)
// that every estimator downstream reuses.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sae {

struct AreaRecord {
    std::string area_id;
    double direct_estimate = 0.0;
    double sampling_variance = 0.0;
    std::vector<double> covariates;
    double weight = 1.0;  // raw; normalized by the Dataset
};

class Dataset {
public:
    const std::vector<AreaRecord>& records() const noexcept { return records_; }
    std::size_t m() const noexcept { return records_.size(); }
    std::size_t p() const noexcept { return static_cast<std::size_t>(design_.cols()); }

    const Eigen::MatrixXd& design() const noexcept { return design_; }
    const Eigen::VectorXd& direct_estimates() const noexcept { return direct_; }
    const Eigen::VectorXd& sampling_variances() const noexcept { return variances_; }
    const Eigen::VectorXd& weights() const noexcept { return weights_; }

    /// OLS leverages h_ii = x_i'(X'X)^{-1}x_i.
    const Eigen::VectorXd& leverages() const noexcept { return leverage_; }

    /// sum_i D_i (1 - h_ii), the bias correction of the moment estimator.
    double leverage_adjusted_variance() const noexcept { return adjusted_variance_; }

    /// (X'X)^{-1} X' y for an arbitrary response on this design.
    Eigen::VectorXd ols_beta(const Eigen::VectorXd& y) const;

private:
    friend Dataset validate_dataset(std::vector<AreaRecord> records);
    Dataset() = default;

    std::vector<AreaRecord> records_;
    Eigen::MatrixXd design_;
    Eigen::VectorXd direct_;
    Eigen::VectorXd variances_;
    Eigen::VectorXd weights_;
    Eigen::VectorXd leverage_;
    Eigen::LLT<Eigen::MatrixXd> gram_;
    double adjusted_variance_ = 0.0;
};

/// Relative pivot threshold used to declare X'X rank deficient.
inline constexpr double kRankTolerance = 1e-10;

/// Validates records and builds the immutable Dataset. Weights are divided by
/// their sum; zero weights are allowed as long as one weight is positive.
/// Throws sae::Error (EmptyDataset, InconsistentCovariateLength,
/// NonPositiveSamplingVariance, NegativeWeight, NonFiniteValue,
/// RankDeficientDesign, TooFewAreas, AllWeightsZero).
Dataset validate_dataset(std::vector<AreaRecord> records);

struct RegularityDiagnostics {
    double d_min = 0.0;
    double d_max = 0.0;
    double max_leverage = 0.0;
    double max_weight = 0.0;
    std::vector<std::string> flags;
};

/// Checks the homogeneity conditions behind the second-order MSE expansion:
/// bounded D_i, max h_ii = O(1/m), max w_i = O(1/m). Violations only produce
/// warning flags (leverage above 4p/m, weight above 4/m, m = p + 1).
RegularityDiagnostics regularity_diagnostics(const Dataset& ds);

}  // namespace sae
