#pragma once

// Second-order MSE of the (benchmarked) EB estimator:
//
//   MSE(benchmarked_i) = g1_i + g2_i + g3_i + g4 + o(1/m)
//
//   g1_i = B_i sigma_u^2
//   g2_i = B_i^2 h^V_ii
//   g3_i = B_i^3 Var(sigma_tilde) / D_i,  Var(sigma_tilde) ~ 2 sum_k V_k^2 / (m-p)^2
//   g4   = sum_i w_i^2 B_i^2 V_i - sum_ij w_i w_j B_i B_j h^V_ij
//
// The estimator evaluates everything at sigma_hat and doubles g3 to remove the
// plug-in bias of g1. g4 is the same for every area and is the price of
// benchmarking.

#include <cstddef>

#include <Eigen/Dense>

#include "sae/dataset.hpp"
#include "sae/fit.hpp"

namespace sae {

struct MseComponents {
    Eigen::VectorXd g1;
    Eigen::VectorXd g2;
    Eigen::VectorXd g3;
    double g4 = 0.0;
    double var_sigma_tilde = 0.0;
    double evaluated_at = 0.0;
};

struct MseReport {
    MseComponents components;
    Eigen::VectorXd mse_pr;           // g1 + g2 + 2 g3
    Eigen::VectorXd mse_benchmarked;  // g1 + g2 + 2 g3 + g4
};

double h_value(const Dataset& ds, double sigma_u2, std::size_t i, std::size_t j);

/// Leading term 2 (m-p)^{-2} sum_k (sigma_u2 + D_k)^2.
double var_sigma_tilde(const Dataset& ds, double sigma_u2);

/// g4 uses the O(mp + p^2) form sum_i w_i^2 B_i^2 V_i - q'G^{-1}q with
/// q = sum_i w_i B_i x_i.
MseComponents mse_components(const Dataset& ds, double sigma_u2);

/// g4 from the literal O(m^2) double sum. Verification route only.
double g4_double_sum(const Dataset& ds, double sigma_u2);

/// g4 as the squared norm of the residual of q_i = w_i B_i V_i^{1/2} after
/// projecting onto the columns of V^{-1/2}X (QR based). Non-negative by
/// construction; an independent cross-check of mse_components().g4.
double g4_nonnegativity_certificate(const Dataset& ds, double sigma_u2);

MseReport mse_estimate(const Dataset& ds, const ModelFit& fit);

}  // namespace sae
