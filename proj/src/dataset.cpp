#include "sae/dataset.hpp"

#include <cmath>
#include <sstream>

#include "sae/error.hpp"

namespace sae {

namespace {

void require_finite(double v, const std::string& area_id, const char* field) {
    if (!std::isfinite(v)) {
        throw Error(ErrorKind::NonFiniteValue,
                    "area '" + area_id + "': " + field + " is not finite");
    }
}

}  // namespace

Eigen::VectorXd Dataset::ols_beta(const Eigen::VectorXd& y) const {
    return gram_.solve(design_.transpose() * y);
}

Dataset validate_dataset(std::vector<AreaRecord> records) {
    if (records.empty()) {
        throw Error(ErrorKind::EmptyDataset, "dataset has no areas");
    }
    const std::size_t m = records.size();
    const std::size_t p = records.front().covariates.size();
    if (p == 0) {
        throw Error(ErrorKind::InconsistentCovariateLength, "areas carry no covariates");
    }

    double weight_sum = 0.0;
    for (const auto& r : records) {
        if (r.covariates.size() != p) {
            std::ostringstream msg;
            msg << "area '" << r.area_id << "' has " << r.covariates.size()
                << " covariates, expected " << p;
            throw Error(ErrorKind::InconsistentCovariateLength, msg.str());
        }
        require_finite(r.direct_estimate, r.area_id, "direct_estimate");
        require_finite(r.sampling_variance, r.area_id, "sampling_variance");
        require_finite(r.weight, r.area_id, "weight");
        for (double x : r.covariates) require_finite(x, r.area_id, "covariate");
        if (!(r.sampling_variance > 0.0)) {
            throw Error(ErrorKind::NonPositiveSamplingVariance,
                        "area '" + r.area_id + "': sampling_variance must be > 0");
        }
        if (r.weight < 0.0) {
            throw Error(ErrorKind::NegativeWeight, "area '" + r.area_id + "': weight must be >= 0");
        }
        weight_sum += r.weight;
    }
    if (m <= p) {
        std::ostringstream msg;
        msg << "need more areas than covariates (m=" << m << ", p=" << p << ")";
        throw Error(ErrorKind::TooFewAreas, msg.str());
    }
    if (!(weight_sum > 0.0)) {
        throw Error(ErrorKind::AllWeightsZero, "all benchmark weights are zero");
    }

    Dataset ds;
    ds.design_.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
    ds.direct_.resize(static_cast<Eigen::Index>(m));
    ds.variances_.resize(static_cast<Eigen::Index>(m));
    ds.weights_.resize(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const auto& r = records[i];
        for (std::size_t k = 0; k < p; ++k) {
            ds.design_(row, static_cast<Eigen::Index>(k)) = r.covariates[k];
        }
        ds.direct_(row) = r.direct_estimate;
        ds.variances_(row) = r.sampling_variance;
        ds.weights_(row) = r.weight / weight_sum;
    }

    const Eigen::MatrixXd gram = ds.design_.transpose() * ds.design_;
    const Eigen::LDLT<Eigen::MatrixXd> pivoted(gram);
    const Eigen::VectorXd pivots = pivoted.vectorD().cwiseAbs();
    if (pivoted.info() != Eigen::Success || pivots.minCoeff() <= kRankTolerance * pivots.maxCoeff()) {
        throw Error(ErrorKind::RankDeficientDesign, "design matrix is not of full column rank");
    }
    ds.gram_.compute(gram);
    if (ds.gram_.info() != Eigen::Success) {
        throw Error(ErrorKind::RankDeficientDesign, "X'X is not positive definite");
    }

    const Eigen::MatrixXd z = ds.gram_.matrixL().solve(ds.design_.transpose());
    ds.leverage_ = z.colwise().squaredNorm().transpose();
    ds.adjusted_variance_ = 0.0;
    for (Eigen::Index i = 0; i < ds.leverage_.size(); ++i) {
        ds.adjusted_variance_ += ds.variances_(i) * (1.0 - ds.leverage_(i));
    }

    ds.records_ = std::move(records);
    return ds;
}

RegularityDiagnostics regularity_diagnostics(const Dataset& ds) {
    RegularityDiagnostics out;
    const double m = static_cast<double>(ds.m());
    const double p = static_cast<double>(ds.p());
    out.d_min = ds.sampling_variances().minCoeff();
    out.d_max = ds.sampling_variances().maxCoeff();
    out.max_leverage = ds.leverages().maxCoeff();
    out.max_weight = ds.weights().maxCoeff();

    std::ostringstream msg;
    if (out.max_leverage > 4.0 * p / m) {
        msg << "max leverage " << out.max_leverage << " exceeds 4p/m = " << 4.0 * p / m;
        out.flags.push_back(msg.str());
        msg.str("");
    }
    if (out.max_weight > 4.0 / m) {
        msg << "max normalized weight " << out.max_weight << " exceeds 4/m = " << 4.0 / m;
        out.flags.push_back(msg.str());
        msg.str("");
    }
    if (ds.m() == ds.p() + 1) {
        out.flags.push_back("m = p + 1: moment estimator has a single residual degree of freedom");
    }
    return out;
}

}  // namespace sae
