#include "sae/bootstrap.hpp"

#include <cmath>
#include <optional>
#include <sstream>

#include "sae/error.hpp"
#include "sae/mse.hpp"
#include "sae/parallel.hpp"

namespace sae {

namespace {

struct ReplicateTerms {
    Eigen::VectorXd g12;
    Eigen::VectorXd sq_diff;
    double g4 = 0.0;
    bool truncated = false;
};

std::optional<ReplicateTerms> run_replicate(const Dataset& ds, const ModelFit& fit, const BootstrapConfig& cfg,
                                            const Eigen::VectorXd& ols_synthetic, std::size_t b) {
    RandomStream stream(cfg.base_seed, b);
    const Eigen::VectorXd sample = draw_bootstrap_sample(ds, fit, stream);
    try {
        const VarianceComponent vc = estimate_sigma_moment(ds, sample);
        const MseComponents comp = mse_components(ds, vc.sigma_hat);
        const Eigen::ArrayXd shrink =
            ds.sampling_variances().array() / (ds.sampling_variances().array() + vc.sigma_hat);
        Eigen::VectorXd synthetic;
        switch (cfg.beta_mode) {
            case BootstrapBeta::RefitGls:
                synthetic = ds.design() * gls_beta(ds, sample, vc.sigma_hat);
                break;
            case BootstrapBeta::OriginalOls:
                synthetic = ols_synthetic;
                break;
            case BootstrapBeta::OriginalGls:
                synthetic = ds.design() * gls_beta(ds, fit.direct_estimates, vc.sigma_hat);
                break;
        }
        const Eigen::ArrayXd eb_star =
            (1.0 - shrink) * fit.direct_estimates.array() + shrink * synthetic.array();

        ReplicateTerms out;
        out.g12 = comp.g1 + comp.g2;
        out.sq_diff = (eb_star - fit.eb_estimates.array()).square().matrix();
        out.g4 = comp.g4;
        out.truncated = vc.truncated;
        return out;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::SingularNormalEquations) throw;
        return std::nullopt;
    }
}

}  // namespace

Eigen::VectorXd draw_bootstrap_sample(const Dataset& ds, const ModelFit& fit, RandomStream& stream) {
    const Eigen::Index m = static_cast<Eigen::Index>(ds.m());
    const Eigen::VectorXd mean = ds.design() * fit.beta_gls;
    const double sd_u = std::sqrt(fit.variance.sigma_hat);
    Eigen::VectorXd u(m);
    for (Eigen::Index i = 0; i < m; ++i) u(i) = sd_u * stream.normal();
    Eigen::VectorXd out(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        out(i) = mean(i) + u(i) + std::sqrt(ds.sampling_variances()(i)) * stream.normal();
    }
    return out;
}

BootstrapResult bootstrap_mse(const Dataset& ds, const ModelFit& fit, const BootstrapConfig& cfg) {
    if (cfg.replicates < 2) {
        throw Error(ErrorKind::InvalidConfig, "bootstrap needs at least 2 replicates");
    }
    const Eigen::Index m = static_cast<Eigen::Index>(ds.m());
    if (fit.direct_estimates.size() != m || fit.eb_estimates.size() != m) {
        throw Error(ErrorKind::InvalidArgument, "fit does not belong to this dataset");
    }

    const Eigen::VectorXd ols_synthetic = ds.design() * ds.ols_beta(fit.direct_estimates);

    Eigen::VectorXd sum_g12 = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(m);
    double sum_g4 = 0.0;
    BootstrapResult result;

    ordered_map_consume(
        cfg.replicates, cfg.workers,
        [&](std::size_t b) { return run_replicate(ds, fit, cfg, ols_synthetic, b); },
        [&](std::size_t, std::optional<ReplicateTerms>&& terms) {
            if (!terms) {
                ++result.aborted_count;
                return;
            }
            sum_g12 += terms->g12;
            sum_sq += terms->sq_diff;
            sum_g4 += terms->g4;
            if (terms->truncated) ++result.truncation_count;
        });

    if (static_cast<double>(result.aborted_count) > kMaxAbortedFraction * static_cast<double>(cfg.replicates)) {
        std::ostringstream msg;
        msg << result.aborted_count << " of " << cfg.replicates << " bootstrap replicates had singular fits";
        throw Error(ErrorKind::BootstrapUnstable, msg.str());
    }
    result.replicates_used = cfg.replicates - result.aborted_count;
    const double n = static_cast<double>(result.replicates_used);

    const MseComponents at_hat = mse_components(ds, fit.variance.sigma_hat);
    result.g12_hat = at_hat.g1 + at_hat.g2;
    result.g4_hat = at_hat.g4;
    result.mean_g12_star = sum_g12 / n;
    result.mean_g4_star = sum_g4 / n;
    result.mean_g5_empirical = sum_sq / n;

    result.v_boot = 2.0 * result.g12_hat - result.mean_g12_star + result.mean_g5_empirical;
    const double benchmark_correction = 2.0 * result.g4_hat - result.mean_g4_star;
    result.v_b_boot = result.v_boot.array() + benchmark_correction;

    result.negative_flags.resize(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        result.negative_flags[static_cast<std::size_t>(i)] = result.v_b_boot(i) < 0.0;
    }
    if (cfg.truncate_negative) {
        result.v_boot = result.v_boot.cwiseMax(0.0);
        result.v_b_boot = result.v_b_boot.cwiseMax(0.0);
    }
    result.near_zero_warning = fit.near_zero_variance;
    return result;
}

Eigen::VectorXd g5_analytic(const Dataset& ds, const ModelFit& fit) {
    const Eigen::ArrayXd resid = fit.direct_estimates - ds.design() * fit.beta_gls;
    const Eigen::ArrayXd d = ds.sampling_variances().array();
    return (fit.shrinkage.array().pow(4) / d.square() * resid.square()).matrix();
}

}  // namespace sae
