#include "sae/mse.hpp"

#include "sae/error.hpp"

namespace sae {

namespace {

void require_index(const Dataset& ds, std::size_t i) {
    if (i >= ds.m()) {
        throw Error(ErrorKind::InvalidArgument, "area index out of range");
    }
}

}  // namespace

double h_value(const Dataset& ds, double sigma_u2, std::size_t i, std::size_t j) {
    require_index(ds, i);
    require_index(ds, j);
    return GlsSystem(ds, sigma_u2).h(i, j);
}

double var_sigma_tilde(const Dataset& ds, double sigma_u2) {
    const double dof = static_cast<double>(ds.m() - ds.p());
    const double sum_sq = (ds.sampling_variances().array() + sigma_u2).square().sum();
    return 2.0 * sum_sq / (dof * dof);
}

MseComponents mse_components(const Dataset& ds, double sigma_u2) {
    const GlsSystem gls(ds, sigma_u2);
    const Eigen::ArrayXd d = ds.sampling_variances().array();
    const Eigen::ArrayXd v = gls.marginal_variances().array();
    const Eigen::ArrayXd b = d / v;
    const Eigen::ArrayXd w = ds.weights().array();

    MseComponents out;
    out.evaluated_at = sigma_u2;
    out.var_sigma_tilde = var_sigma_tilde(ds, sigma_u2);
    out.g1 = (b * sigma_u2).matrix();
    out.g2 = (b.square() * gls.h_diagonal().array()).matrix();
    out.g3 = (b.cube() / d * out.var_sigma_tilde).matrix();

    const Eigen::VectorXd wb = (w * b).matrix();
    const Eigen::VectorXd q = ds.design().transpose() * wb;
    double first = 0.0;
    for (Eigen::Index i = 0; i < wb.size(); ++i) first += wb(i) * wb(i) * v(i);
    out.g4 = first - gls.quadratic_form(q);
    return out;
}

double g4_double_sum(const Dataset& ds, double sigma_u2) {
    const GlsSystem gls(ds, sigma_u2);
    const Eigen::VectorXd& v = gls.marginal_variances();
    const Eigen::VectorXd& w = ds.weights();
    const Eigen::VectorXd b = ds.sampling_variances().cwiseQuotient(v);
    const std::size_t m = ds.m();

    double first = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        first += w(ii) * w(ii) * b(ii) * b(ii) * v(ii);
    }
    double second = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const auto ii = static_cast<Eigen::Index>(i);
            const auto jj = static_cast<Eigen::Index>(j);
            second += w(ii) * w(jj) * b(ii) * b(jj) * gls.h(i, j);
        }
    }
    return first - second;
}

double g4_nonnegativity_certificate(const Dataset& ds, double sigma_u2) {
    if (!(sigma_u2 >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "sigma_u2 must be non-negative");
    }
    const Eigen::ArrayXd v = ds.sampling_variances().array() + sigma_u2;
    const Eigen::ArrayXd root = v.sqrt();
    const Eigen::VectorXd q =
        (ds.weights().array() * (ds.sampling_variances().array() / v) * root).matrix();
    const Eigen::MatrixXd xs = ds.design().array().colwise() / root;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
    qr.setThreshold(kRankTolerance);
    if (static_cast<std::size_t>(qr.rank()) < ds.p()) {
        throw Error(ErrorKind::SingularNormalEquations, "V^{-1/2}X is numerically rank deficient");
    }
    // Q'q; the trailing m - p coordinates span the orthogonal complement.
    Eigen::VectorXd rotated = q;
    rotated.applyOnTheLeft(qr.householderQ().adjoint());
    return rotated.tail(rotated.size() - static_cast<Eigen::Index>(ds.p())).squaredNorm();
}

MseReport mse_estimate(const Dataset& ds, const ModelFit& fit) {
    MseReport report;
    report.components = mse_components(ds, fit.variance.sigma_hat);
    const MseComponents& c = report.components;
    report.mse_pr = c.g1 + c.g2 + 2.0 * c.g3;
    report.mse_benchmarked = report.mse_pr.array() + c.g4;
    return report;
}

}  // namespace sae
