#pragma once

// Simulation studies for the Fay-Herriot estimators: empirical MSE versus the
// analytic and bootstrap MSE estimators, O(1/m) scaling of the MSE components,
// and Monte Carlo checks of the quadratic-form covariance identities and of
// the second moment of the moment estimator.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sae/bootstrap.hpp"
#include "sae/dataset.hpp"
#include "sae/rng.hpp"

namespace sae {

struct SimulationConfig {
    Eigen::VectorXd beta_true;
    double sigma_u2_true = 1.0;
    Eigen::VectorXd sampling_variances;
    Eigen::MatrixXd design;
    Eigen::VectorXd weights;
    std::size_t replicates = 1000;
    std::uint64_t base_seed = 0;
    std::size_t workers = 0;  // 0: default_worker_count()
};

/// Throws InvalidConfig on inconsistent dimensions or non-positive sigma_u2_true.
void validate_config(const SimulationConfig& cfg);

/// Dataset with the config's design, variances and weights; direct estimates
/// are placeholders (x_i'beta_true).
Dataset config_dataset(const SimulationConfig& cfg);

/// Sampling variances of the 51 state-level direct estimates in the 1997
/// SAIPE application (the mse(direct) column of the published table).
const std::vector<double>& saipe_1997_sampling_variances();

/// Intercept followed by (p - 1) standard normal columns, m rows.
Eigen::MatrixXd synthetic_design(std::size_t m, std::size_t p, std::uint64_t seed);

/// Configuration of the published simulation at desk scale: SAIPE 1997
/// sampling variances, synthetic design, beta = (-3, 0.5, 1, 1, 0.5),
/// sigma_u^2 = 5, equal weights.
SimulationConfig saipe_like_config(std::size_t replicates, std::uint64_t seed);

struct Replicate {
    Eigen::VectorXd theta;
    Eigen::VectorXd theta_hat;
};

/// theta_i = x_i'beta + u_i, theta_hat_i = theta_i + e_i. Draws all u_i, then
/// all e_i.
Replicate generate_replicate(const SimulationConfig& cfg, RandomStream& stream);

struct SimulationSummary {
    Eigen::VectorXd empirical_mse_direct;
    Eigen::VectorXd empirical_mse_eb;
    Eigen::VectorXd empirical_mse_bm;
    Eigen::VectorXd mean_analytic_mse_pr;
    Eigen::VectorXd mean_analytic_mse_bm;
    std::optional<Eigen::VectorXd> mean_bootstrap_mse_eb;
    std::optional<Eigen::VectorXd> mean_bootstrap_mse_bm;
    std::size_t replicates_run = 0;
    std::size_t aborted = 0;
    std::size_t zero_variance_replicates = 0;  // replicates with sigma_hat = 0
    double max_benchmark_violation = 0.0;      // max |sum w (bm - direct)| seen
};

/// Aborted replicates above this fraction raise SimulationUnstable.
inline constexpr double kMaxSimulationAbortFraction = 0.01;

/// Replicate r draws from RandomStream(derive_seed(base_seed, kSimulation, 0), r);
/// its bootstrap, if any, uses base seed derive_seed(base_seed, kBootstrap, r)
/// and runs single-threaded inside the replicate.
SimulationSummary run_simulation(const SimulationConfig& cfg, const std::optional<BootstrapConfig>& bootstrap);

struct ScalingRow {
    std::size_t m = 0;
    double mean_g1 = 0.0;
    double mean_g2 = 0.0;
    double mean_g3 = 0.0;
    double g4 = 0.0;
    double mse_inflation = 0.0;  // mean_i (empirical MSE_bm - empirical MSE_eb)
};

/// For each m, resamples (D_i, x_i, w_i) triples i.i.d. from the base config,
/// evaluates the MSE components at the true sigma_u^2, and simulates
/// base.replicates data sets for the empirical benchmarking inflation.
std::vector<ScalingRow> scaling_study(const SimulationConfig& base, std::span<const std::size_t> m_grid);

/// Resampled configuration used by scaling_study for one grid point.
SimulationConfig resample_config(const SimulationConfig& base, std::size_t m);

struct QuadformReport {
    std::size_t p_dim = 0;
    std::size_t trials = 0;
    double cov_linear_empirical = 0.0;     // Cov(z'Az, z'Bz)
    double cov_linear_theory = 0.0;        // 2 tr(A S B S)
    double cov_linear_se = 0.0;            // batch-means standard error
    double cov_quadratic_empirical = 0.0;  // Cov(z'Az, (z'Bz)^2)
    double cov_quadratic_theory = 0.0;     // 4 tr(ASBS) tr(BS) + 8 tr(ASBSBS)
    double cov_quadratic_se = 0.0;
    double abs_error_linear() const;
    double rel_error_linear() const;
    double abs_error_quadratic() const;
    double rel_error_quadratic() const;
};

/// Empirical check of both identities for given A, symmetric B and SPD Sigma.
QuadformReport verify_quadform_identities(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                          const Eigen::MatrixXd& sigma, std::size_t trials, std::uint64_t seed,
                                          std::size_t workers = 0);

/// Same with matrices generated from the seed: A with a dominant positive
/// diagonal, B symmetric positive definite, Sigma SPD. p_dim = 1 uses
/// A = B = Sigma = 1.
QuadformReport verify_quadform_identities(std::size_t p_dim, std::size_t trials, std::uint64_t seed,
                                          std::size_t workers = 0);

struct SigmaMomentCheck {
    double mean_error = 0.0;      // mean(sigma_tilde) - sigma_u2_true
    double standard_error = 0.0;  // Monte Carlo standard error of the mean
    double mc_variance = 0.0;
    double leading_term = 0.0;    // 2 (m-p)^{-2} sum (sigma_u2 + D_i)^2
    double variance_ratio = 0.0;  // mc_variance / leading_term
    std::size_t replicates = 0;
};

SigmaMomentCheck verify_sigma_tilde_moments(const SimulationConfig& cfg);

/// m areas, intercept plus (p - 1) normal covariates, D_i ~ U(d_lo, d_hi),
/// equal weights, beta = (1, ..., 1).
SimulationConfig uniform_variance_config(std::size_t m, std::size_t p, double sigma_u2, double d_lo, double d_hi,
                                         std::size_t replicates, std::uint64_t seed);

}  // namespace sae
