#pragma once

#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sae/dataset.hpp"

namespace sae {

struct VarianceComponent {
    double sigma_tilde = 0.0;  // untruncated moment estimate, may be negative
    double sigma_hat = 0.0;    // max(0, sigma_tilde)
    bool truncated = false;    // sigma_tilde < 0
};

struct ModelFit {
    VarianceComponent variance;
    Eigen::VectorXd direct_estimates;    // the responses this fit was computed from
    Eigen::VectorXd beta_gls;            // GLS beta at sigma_hat
    Eigen::VectorXd beta_ols;
    Eigen::VectorXd shrinkage;           // B_i = D_i / (sigma_hat + D_i)
    Eigen::VectorXd marginal_variances;  // V_i = sigma_hat + D_i
    Eigen::VectorXd eb_estimates;
    double benchmark_target = 0.0;       // sum_i w_i direct_i
    double benchmark_offset = 0.0;       // target - sum_i w_i eb_i
    Eigen::VectorXd benchmarked_estimates;
    bool near_zero_variance = false;
    std::vector<std::string> warnings;
};

/// Relative size of the moment-estimator numerator treated as cancellation noise.
inline constexpr double kMomentCancellationTolerance = 64 * std::numeric_limits<double>::epsilon();

/// sigma_hat below this fraction of median(D_i) raises the near-zero warning.
inline constexpr double kNearZeroVarianceFraction = 0.05;

/// The generalized least squares system at a fixed sigma_u^2:
/// V = diag(sigma_u^2 + D_i), G = X'V^{-1}X factored once and reused for
/// beta, h^V_ij and quadratic forms in G^{-1}.
class GlsSystem {
public:
    GlsSystem(const Dataset& ds, double sigma_u2);

    double sigma_u2() const noexcept { return sigma_u2_; }
    const Eigen::VectorXd& marginal_variances() const noexcept { return v_; }

    Eigen::VectorXd beta(const Eigen::VectorXd& y) const;

    /// h^V_ij = x_i' G^{-1} x_j.
    double h(std::size_t i, std::size_t j) const;

    /// h^V_ii for every area.
    Eigen::VectorXd h_diagonal() const;

    /// q' G^{-1} q.
    double quadratic_form(const Eigen::VectorXd& q) const;

private:
    const Dataset* ds_;
    double sigma_u2_;
    Eigen::VectorXd v_;
    Eigen::LLT<Eigen::MatrixXd> gram_;
};

/// Prasad-Rao moment estimator computed from OLS residuals:
/// sigma_tilde = (sum u_i^2 - sum D_i(1 - h_ii)) / (m - p).
VarianceComponent estimate_sigma_moment(const Dataset& ds);
VarianceComponent estimate_sigma_moment(const Dataset& ds, const Eigen::VectorXd& direct);

Eigen::VectorXd gls_beta(const Dataset& ds, double sigma_u2);
Eigen::VectorXd gls_beta(const Dataset& ds, const Eigen::VectorXd& direct, double sigma_u2);

/// Shrinkage estimates (1 - B_i) direct_i + B_i x_i' beta(sigma_u2) at a known
/// sigma_u2.
Eigen::VectorXd bayes_estimates(const Dataset& ds, double sigma_u2);
Eigen::VectorXd bayes_estimates(const Dataset& ds, const Eigen::VectorXd& direct, double sigma_u2);

/// Empirical Bayes step: plugs sigma_hat into the shrinkage formula. The
/// benchmark fields are left empty.
ModelFit eb_estimates(const Dataset& ds, const VarianceComponent& vc);
ModelFit eb_estimates(const Dataset& ds, const Eigen::VectorXd& direct, const VarianceComponent& vc);

/// Adds the constant that makes sum_i w_i estimate_i equal sum_i w_i direct_i.
ModelFit benchmark(ModelFit fit, const Dataset& ds);

/// estimate_sigma_moment -> eb_estimates -> benchmark.
ModelFit fit_model(const Dataset& ds);
ModelFit fit_model(const Dataset& ds, const Eigen::VectorXd& direct);

}  // namespace sae
