#pragma once

// Parametric bootstrap MSE estimators for the EB and benchmarked EB estimators.
//
// Bootstrap world: u*_i ~ N(0, sigma_hat), direct*_i | u*_i ~ N(x_i'beta_gls + u*_i, D_i).
// Each replicate re-estimates sigma*, then
//
//   v_boot_i   = 2[g1_i + g2_i](sigma_hat) - E*[g1_i + g2_i](sigma*) + E*[(eb*_i - eb_i)^2]
//   v_b_boot_i = 2[g1_i + g2_i + g4](sigma_hat) - E*[g1_i + g2_i + g4](sigma*) + E*[(eb*_i - eb_i)^2]
//
// where eb*_i = (1 - B_i(sigma*)) direct_i + B_i(sigma*) x_i' beta* uses the
// ORIGINAL direct estimates; beta* depends on BootstrapConfig::beta_mode.

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sae/dataset.hpp"
#include "sae/fit.hpp"
#include "sae/rng.hpp"

namespace sae {

// How x_i'beta* enters eb*_i. OriginalGls changes eb* only through sigma*, so
// E*[(eb*_i - eb_i)^2] tracks g5_i. RefitGls adds the sampling variance of
// beta* on top (about g2_i), which g1 + g2 already cover.
enum class BootstrapBeta {
    OriginalGls,  // beta* = GLS fit to the original direct estimates at sigma*
    RefitGls,     // beta* = GLS fit to the bootstrap sample at sigma*
    OriginalOls,  // beta* = OLS fit to the original direct estimates
};

struct BootstrapConfig {
    std::size_t replicates = 10000;
    std::uint64_t base_seed = 0;
    bool truncate_negative = false;
    BootstrapBeta beta_mode = BootstrapBeta::OriginalGls;
    std::size_t workers = 0;  // 0: default_worker_count()
};

/// Aborted replicates above this fraction raise BootstrapUnstable.
inline constexpr double kMaxAbortedFraction = 0.01;

struct BootstrapResult {
    Eigen::VectorXd v_boot;
    Eigen::VectorXd v_b_boot;
    Eigen::VectorXd mean_g5_empirical;  // E*[(eb*_i - eb_i)^2]
    std::vector<bool> negative_flags;   // v_b_boot_i < 0 before truncation
    std::size_t truncation_count = 0;   // replicates with sigma* clipped to 0
    std::size_t aborted_count = 0;
    std::size_t replicates_used = 0;
    bool near_zero_warning = false;

    // Pieces of the estimator, kept for reporting.
    Eigen::VectorXd g12_hat;
    Eigen::VectorXd mean_g12_star;
    double g4_hat = 0.0;
    double mean_g4_star = 0.0;
};

/// One draw from the fitted model, consuming 2m normals from the stream:
/// all u*_i first, then all e*_i.
Eigen::VectorXd draw_bootstrap_sample(const Dataset& ds, const ModelFit& fit, RandomStream& stream);

/// Replicate b uses RandomStream(cfg.base_seed, b). Replicates whose GLS system
/// is singular are skipped and counted.
BootstrapResult bootstrap_mse(const Dataset& ds, const ModelFit& fit, const BootstrapConfig& cfg);

/// g5_i = B_i^4 D_i^{-2} (direct_i - x_i'beta_gls)^2 at sigma_hat: the limit of
/// E*[(eb*_i - eb_i)^2].
Eigen::VectorXd g5_analytic(const Dataset& ds, const ModelFit& fit);

}  // namespace sae
