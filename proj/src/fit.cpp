#include "sae/fit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sae/error.hpp"

namespace sae {

namespace {

void require_length(const Dataset& ds, const Eigen::VectorXd& direct) {
    if (static_cast<std::size_t>(direct.size()) != ds.m()) {
        throw Error(ErrorKind::InvalidArgument, "response length does not match the number of areas");
    }
}

void require_non_negative(double sigma_u2) {
    if (!(sigma_u2 >= 0.0) || !std::isfinite(sigma_u2)) {
        throw Error(ErrorKind::InvalidArgument, "sigma_u2 must be a finite non-negative value");
    }
}

double median(Eigen::VectorXd v) {
    auto* begin = v.data();
    auto* end = begin + v.size();
    auto* mid = begin + v.size() / 2;
    std::nth_element(begin, mid, end);
    if (v.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(begin, mid);
    return 0.5 * (lower + upper);
}

}  // namespace

GlsSystem::GlsSystem(const Dataset& ds, double sigma_u2) : ds_(&ds), sigma_u2_(sigma_u2) {
    require_non_negative(sigma_u2);
    v_ = ds.sampling_variances().array() + sigma_u2;
    const Eigen::MatrixXd& x = ds.design();
    const Eigen::MatrixXd weighted = x.array().colwise() / v_.array();
    const Eigen::MatrixXd gram = x.transpose() * weighted;
    gram_.compute(gram);
    bool singular = gram_.info() != Eigen::Success;
    if (!singular) {
        const Eigen::VectorXd diag = gram_.matrixLLT().diagonal().cwiseAbs2();
        singular = !(diag.minCoeff() > kRankTolerance * diag.maxCoeff());
    }
    if (singular) {
        throw Error(ErrorKind::SingularNormalEquations, "X'V^{-1}X is numerically singular");
    }
}

Eigen::VectorXd GlsSystem::beta(const Eigen::VectorXd& y) const {
    const Eigen::VectorXd scaled = y.array() / v_.array();
    return gram_.solve(ds_->design().transpose() * scaled);
}

double GlsSystem::h(std::size_t i, std::size_t j) const {
    const Eigen::VectorXd xi = ds_->design().row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::VectorXd xj = ds_->design().row(static_cast<Eigen::Index>(j)).transpose();
    return xi.dot(gram_.solve(xj));
}

Eigen::VectorXd GlsSystem::h_diagonal() const {
    const Eigen::MatrixXd z = gram_.matrixL().solve(ds_->design().transpose());
    return z.colwise().squaredNorm().transpose();
}

double GlsSystem::quadratic_form(const Eigen::VectorXd& q) const {
    const Eigen::VectorXd z = gram_.matrixL().solve(q);
    return z.squaredNorm();
}

VarianceComponent estimate_sigma_moment(const Dataset& ds) {
    return estimate_sigma_moment(ds, ds.direct_estimates());
}

VarianceComponent estimate_sigma_moment(const Dataset& ds, const Eigen::VectorXd& direct) {
    require_length(ds, direct);
    const Eigen::VectorXd beta = ds.ols_beta(direct);
    const Eigen::VectorXd resid = direct - ds.design() * beta;
    const double dof = static_cast<double>(ds.m() - ds.p());
    VarianceComponent vc;
    const double rss = resid.squaredNorm();
    double numerator = rss - ds.leverage_adjusted_variance();
    // Differences at the level of rounding in either term are reported as an exact zero.
    if (std::abs(numerator) <= kMomentCancellationTolerance * (rss + ds.leverage_adjusted_variance())) {
        numerator = 0.0;
    }
    vc.sigma_tilde = numerator / dof;
    vc.truncated = vc.sigma_tilde < 0.0;
    vc.sigma_hat = std::max(0.0, vc.sigma_tilde);
    return vc;
}

Eigen::VectorXd gls_beta(const Dataset& ds, double sigma_u2) {
    return gls_beta(ds, ds.direct_estimates(), sigma_u2);
}

Eigen::VectorXd gls_beta(const Dataset& ds, const Eigen::VectorXd& direct, double sigma_u2) {
    require_length(ds, direct);
    return GlsSystem(ds, sigma_u2).beta(direct);
}

Eigen::VectorXd bayes_estimates(const Dataset& ds, double sigma_u2) {
    return bayes_estimates(ds, ds.direct_estimates(), sigma_u2);
}

Eigen::VectorXd bayes_estimates(const Dataset& ds, const Eigen::VectorXd& direct, double sigma_u2) {
    require_length(ds, direct);
    const GlsSystem gls(ds, sigma_u2);
    const Eigen::VectorXd synthetic = ds.design() * gls.beta(direct);
    const Eigen::ArrayXd b = ds.sampling_variances().array() / gls.marginal_variances().array();
    return ((1.0 - b) * direct.array() + b * synthetic.array()).matrix();
}

ModelFit eb_estimates(const Dataset& ds, const VarianceComponent& vc) {
    return eb_estimates(ds, ds.direct_estimates(), vc);
}

ModelFit eb_estimates(const Dataset& ds, const Eigen::VectorXd& direct, const VarianceComponent& vc) {
    require_length(ds, direct);
    ModelFit fit;
    fit.variance = vc;
    fit.direct_estimates = direct;
    const GlsSystem gls(ds, vc.sigma_hat);
    fit.beta_gls = gls.beta(direct);
    fit.beta_ols = ds.ols_beta(direct);
    fit.marginal_variances = gls.marginal_variances();
    fit.shrinkage = (ds.sampling_variances().array() / fit.marginal_variances.array()).matrix();
    const Eigen::VectorXd synthetic = ds.design() * fit.beta_gls;
    fit.eb_estimates =
        ((1.0 - fit.shrinkage.array()) * direct.array() + fit.shrinkage.array() * synthetic.array()).matrix();

    const double threshold = kNearZeroVarianceFraction * median(ds.sampling_variances());
    if (vc.sigma_hat < threshold) {
        fit.near_zero_variance = true;
        std::ostringstream msg;
        msg << "NearZeroVariance: sigma_u2_hat = " << vc.sigma_hat << " is below "
            << kNearZeroVarianceFraction << " * median(D) = " << threshold
            << "; bootstrap MSE estimates may be negative";
        fit.warnings.push_back(msg.str());
    }
    return fit;
}

ModelFit benchmark(ModelFit fit, const Dataset& ds) {
    const Eigen::VectorXd& w = ds.weights();
    fit.benchmark_target = w.dot(fit.direct_estimates);
    fit.benchmark_offset = fit.benchmark_target - w.dot(fit.eb_estimates);
    fit.benchmarked_estimates = fit.eb_estimates.array() + fit.benchmark_offset;
    return fit;
}

ModelFit fit_model(const Dataset& ds) { return fit_model(ds, ds.direct_estimates()); }

ModelFit fit_model(const Dataset& ds, const Eigen::VectorXd& direct) {
    return benchmark(eb_estimates(ds, direct, estimate_sigma_moment(ds, direct)), ds);
}

}  // namespace sae
