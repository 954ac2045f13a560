#include "sae/simlab.hpp"

#include <cmath>
#include <sstream>

#include "sae/error.hpp"
#include "sae/fit.hpp"
#include "sae/mse.hpp"
#include "sae/parallel.hpp"

namespace sae {

namespace {

bool is_numerical(ErrorKind kind) {
    return kind == ErrorKind::SingularNormalEquations || kind == ErrorKind::BootstrapUnstable;
}

std::vector<AreaRecord> config_records(const SimulationConfig& cfg) {
    const Eigen::Index m = cfg.design.rows();
    const Eigen::VectorXd mean = cfg.design * cfg.beta_true;
    std::vector<AreaRecord> records(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        auto& r = records[static_cast<std::size_t>(i)];
        r.area_id = std::to_string(i + 1);
        r.direct_estimate = mean(i);
        r.sampling_variance = cfg.sampling_variances(i);
        r.weight = cfg.weights(i);
        r.covariates.resize(static_cast<std::size_t>(cfg.design.cols()));
        for (Eigen::Index k = 0; k < cfg.design.cols(); ++k) {
            r.covariates[static_cast<std::size_t>(k)] = cfg.design(i, k);
        }
    }
    return records;
}

struct ReplicateOutcome {
    Eigen::VectorXd sq_direct;
    Eigen::VectorXd sq_eb;
    Eigen::VectorXd sq_bm;
    Eigen::VectorXd mse_pr;
    Eigen::VectorXd mse_bm;
    Eigen::VectorXd boot_eb;
    Eigen::VectorXd boot_bm;
    bool zero_variance = false;
    double violation = 0.0;
};

// Welford accumulator for a pair of centred co-moments.
struct CoMoments {
    double n = 0.0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double mean_c = 0.0;
    double c_ab = 0.0;
    double c_ac = 0.0;

    void push(double a, double b, double c) {
        n += 1.0;
        const double da = a - mean_a;
        mean_a += da / n;
        mean_b += (b - mean_b) / n;
        mean_c += (c - mean_c) / n;
        c_ab += da * (b - mean_b);
        c_ac += da * (c - mean_c);
    }

    void merge(const CoMoments& o) {
        if (o.n == 0.0) return;
        const double total = n + o.n;
        const double da = o.mean_a - mean_a;
        const double db = o.mean_b - mean_b;
        const double dc = o.mean_c - mean_c;
        c_ab += o.c_ab + da * db * n * o.n / total;
        c_ac += o.c_ac + da * dc * n * o.n / total;
        mean_a += da * o.n / total;
        mean_b += db * o.n / total;
        mean_c += dc * o.n / total;
        n = total;
    }

    double cov_ab() const { return c_ab / (n - 1.0); }
    double cov_ac() const { return c_ac / (n - 1.0); }
};

double batch_standard_error(const std::vector<double>& values) {
    const double k = static_cast<double>(values.size());
    if (values.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= k;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / (k - 1.0) / k);
}

Eigen::MatrixXd random_matrix(RandomStream& stream, Eigen::Index p) {
    Eigen::MatrixXd out(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < p; ++i) out(i, j) = stream.normal();
    }
    return out;
}

}  // namespace

void validate_config(const SimulationConfig& cfg) {
    const Eigen::Index m = cfg.design.rows();
    const Eigen::Index p = cfg.design.cols();
    std::ostringstream msg;
    if (m == 0 || p == 0) {
        msg << "design matrix is empty";
    } else if (cfg.sampling_variances.size() != m || cfg.weights.size() != m) {
        msg << "design has " << m << " rows but " << cfg.sampling_variances.size() << " sampling variances and "
            << cfg.weights.size() << " weights";
    } else if (cfg.beta_true.size() != p) {
        msg << "design has " << p << " columns but beta_true has " << cfg.beta_true.size() << " entries";
    } else if (!(cfg.sigma_u2_true > 0.0) || !std::isfinite(cfg.sigma_u2_true)) {
        msg << "sigma_u2_true must be positive";
    } else if (cfg.replicates == 0) {
        msg << "replicates must be positive";
    } else {
        return;
    }
    throw Error(ErrorKind::InvalidConfig, msg.str());
}

Dataset config_dataset(const SimulationConfig& cfg) {
    validate_config(cfg);
    return validate_dataset(config_records(cfg));
}

const std::vector<double>& saipe_1997_sampling_variances() {
    static const std::vector<double> values = {
        15.72, 10.44, 11.84, 13.85, 2.39,  6.38,  9.85,  17.56, 32.35, 3.70,  12.93, 20.87, 12.38,
        3.56,  7.58,  8.49,  9.34,  13.98, 15.19, 13.63, 9.28,  7.66,  4.04,  9.91,  15.07, 15.24,
        12.95, 7.18,  10.23, 11.35, 5.52,  13.18, 3.10,  5.70,  11.92, 3.95,  11.14, 10.35, 3.73,
        18.53, 14.57, 12.94, 11.94, 3.38,  9.45,  11.95, 11.51, 9.33,  13.73, 6.41,  8.86,
    };
    return values;
}

Eigen::MatrixXd synthetic_design(std::size_t m, std::size_t p, std::uint64_t seed) {
    RandomStream stream(derive_seed(seed, stream_domain::kSynthetic, 0), 0);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, 0) = 1.0;
        for (Eigen::Index k = 1; k < x.cols(); ++k) x(i, k) = stream.normal();
    }
    return x;
}

SimulationConfig saipe_like_config(std::size_t replicates, std::uint64_t seed) {
    const auto& d = saipe_1997_sampling_variances();
    SimulationConfig cfg;
    cfg.beta_true = Eigen::VectorXd{{-3.0, 0.5, 1.0, 1.0, 0.5}};
    cfg.sigma_u2_true = 5.0;
    cfg.sampling_variances = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
    cfg.design = synthetic_design(d.size(), 5, seed);
    cfg.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d.size()), 1.0);
    cfg.replicates = replicates;
    cfg.base_seed = seed;
    return cfg;
}

SimulationConfig uniform_variance_config(std::size_t m, std::size_t p, double sigma_u2, double d_lo, double d_hi,
                                         std::size_t replicates, std::uint64_t seed) {
    SimulationConfig cfg;
    cfg.design = synthetic_design(m, p, seed);
    RandomStream stream(derive_seed(seed, stream_domain::kSynthetic, 1), 0);
    cfg.sampling_variances.resize(static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < cfg.sampling_variances.size(); ++i) {
        cfg.sampling_variances(i) = stream.uniform(d_lo, d_hi);
    }
    cfg.beta_true = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(p));
    cfg.sigma_u2_true = sigma_u2;
    cfg.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m));
    cfg.replicates = replicates;
    cfg.base_seed = seed;
    return cfg;
}

Replicate generate_replicate(const SimulationConfig& cfg, RandomStream& stream) {
    const Eigen::Index m = cfg.design.rows();
    const double sd_u = std::sqrt(cfg.sigma_u2_true);
    Replicate out;
    out.theta = cfg.design * cfg.beta_true;
    for (Eigen::Index i = 0; i < m; ++i) out.theta(i) += sd_u * stream.normal();
    out.theta_hat = out.theta;
    for (Eigen::Index i = 0; i < m; ++i) {
        out.theta_hat(i) += std::sqrt(cfg.sampling_variances(i)) * stream.normal();
    }
    return out;
}

SimulationSummary run_simulation(const SimulationConfig& cfg, const std::optional<BootstrapConfig>& bootstrap) {
    const Dataset ds = config_dataset(cfg);
    const Eigen::Index m = static_cast<Eigen::Index>(ds.m());
    const std::uint64_t data_seed = derive_seed(cfg.base_seed, stream_domain::kSimulation, 0);

    auto replicate = [&](std::size_t r) -> std::optional<ReplicateOutcome> {
        RandomStream stream(data_seed, r);
        const Replicate rep = generate_replicate(cfg, stream);
        try {
            const ModelFit fit = fit_model(ds, rep.theta_hat);
            const MseReport mse = mse_estimate(ds, fit);
            ReplicateOutcome out;
            out.sq_direct = (rep.theta_hat - rep.theta).array().square().matrix();
            out.sq_eb = (fit.eb_estimates - rep.theta).array().square().matrix();
            out.sq_bm = (fit.benchmarked_estimates - rep.theta).array().square().matrix();
            out.mse_pr = mse.mse_pr;
            out.mse_bm = mse.mse_benchmarked;
            out.zero_variance = fit.variance.sigma_hat == 0.0;
            out.violation = std::abs(ds.weights().dot(fit.benchmarked_estimates - rep.theta_hat));
            if (bootstrap) {
                BootstrapConfig bc = *bootstrap;
                bc.base_seed = derive_seed(bootstrap->base_seed, stream_domain::kBootstrap, r);
                bc.workers = 1;
                const BootstrapResult boot = bootstrap_mse(ds, fit, bc);
                out.boot_eb = boot.v_boot;
                out.boot_bm = boot.v_b_boot;
            }
            return out;
        } catch (const Error& e) {
            if (!is_numerical(e.kind())) throw;
            return std::nullopt;
        }
    };

    SimulationSummary s;
    s.empirical_mse_direct = Eigen::VectorXd::Zero(m);
    s.empirical_mse_eb = Eigen::VectorXd::Zero(m);
    s.empirical_mse_bm = Eigen::VectorXd::Zero(m);
    s.mean_analytic_mse_pr = Eigen::VectorXd::Zero(m);
    s.mean_analytic_mse_bm = Eigen::VectorXd::Zero(m);
    if (bootstrap) {
        s.mean_bootstrap_mse_eb = Eigen::VectorXd::Zero(m);
        s.mean_bootstrap_mse_bm = Eigen::VectorXd::Zero(m);
    }

    ordered_map_consume(cfg.replicates, cfg.workers, replicate,
                        [&](std::size_t, std::optional<ReplicateOutcome>&& out) {
                            if (!out) {
                                ++s.aborted;
                                return;
                            }
                            s.empirical_mse_direct += out->sq_direct;
                            s.empirical_mse_eb += out->sq_eb;
                            s.empirical_mse_bm += out->sq_bm;
                            s.mean_analytic_mse_pr += out->mse_pr;
                            s.mean_analytic_mse_bm += out->mse_bm;
                            if (bootstrap) {
                                *s.mean_bootstrap_mse_eb += out->boot_eb;
                                *s.mean_bootstrap_mse_bm += out->boot_bm;
                            }
                            if (out->zero_variance) ++s.zero_variance_replicates;
                            s.max_benchmark_violation = std::max(s.max_benchmark_violation, out->violation);
                        });

    if (static_cast<double>(s.aborted) > kMaxSimulationAbortFraction * static_cast<double>(cfg.replicates)) {
        std::ostringstream msg;
        msg << s.aborted << " of " << cfg.replicates << " simulation replicates failed";
        throw Error(ErrorKind::SimulationUnstable, msg.str());
    }
    s.replicates_run = cfg.replicates - s.aborted;
    const double n = static_cast<double>(s.replicates_run);
    s.empirical_mse_direct /= n;
    s.empirical_mse_eb /= n;
    s.empirical_mse_bm /= n;
    s.mean_analytic_mse_pr /= n;
    s.mean_analytic_mse_bm /= n;
    if (bootstrap) {
        *s.mean_bootstrap_mse_eb /= n;
        *s.mean_bootstrap_mse_bm /= n;
    }
    return s;
}

SimulationConfig resample_config(const SimulationConfig& base, std::size_t m) {
    validate_config(base);
    const auto p = static_cast<std::size_t>(base.design.cols());
    if (m <= p) {
        throw Error(ErrorKind::InvalidConfig, "grid value m must exceed the number of covariates");
    }
    const auto base_m = static_cast<std::uint64_t>(base.design.rows());
    constexpr std::uint64_t kAttempts = 100;
    for (std::uint64_t attempt = 0; attempt < kAttempts; ++attempt) {
        RandomStream stream(derive_seed(base.base_seed, stream_domain::kScaling, m), attempt);
        SimulationConfig cfg = base;
        cfg.design.resize(static_cast<Eigen::Index>(m), base.design.cols());
        cfg.sampling_variances.resize(static_cast<Eigen::Index>(m));
        cfg.weights.resize(static_cast<Eigen::Index>(m));
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(m); ++i) {
            const auto src = static_cast<Eigen::Index>(stream.below(base_m));
            cfg.design.row(i) = base.design.row(src);
            cfg.sampling_variances(i) = base.sampling_variances(src);
            cfg.weights(i) = base.weights(src);
        }
        cfg.base_seed = derive_seed(base.base_seed, stream_domain::kScaling, m ^ 0xFFFF);
        try {
            (void)config_dataset(cfg);
            return cfg;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::RankDeficientDesign && e.kind() != ErrorKind::AllWeightsZero) throw;
        }
    }
    throw Error(ErrorKind::InvalidConfig, "could not resample a full-rank design of the requested size");
}

std::vector<ScalingRow> scaling_study(const SimulationConfig& base, std::span<const std::size_t> m_grid) {
    std::vector<ScalingRow> rows;
    rows.reserve(m_grid.size());
    for (std::size_t m : m_grid) {
        const SimulationConfig cfg = resample_config(base, m);
        const Dataset ds = config_dataset(cfg);
        const MseComponents comp = mse_components(ds, cfg.sigma_u2_true);
        const SimulationSummary sim = run_simulation(cfg, std::nullopt);

        ScalingRow row;
        row.m = m;
        row.mean_g1 = comp.g1.mean();
        row.mean_g2 = comp.g2.mean();
        row.mean_g3 = comp.g3.mean();
        row.g4 = comp.g4;
        row.mse_inflation = (sim.empirical_mse_bm - sim.empirical_mse_eb).mean();
        rows.push_back(row);
    }
    return rows;
}

double QuadformReport::abs_error_linear() const { return std::abs(cov_linear_empirical - cov_linear_theory); }
double QuadformReport::rel_error_linear() const { return abs_error_linear() / std::abs(cov_linear_theory); }
double QuadformReport::abs_error_quadratic() const {
    return std::abs(cov_quadratic_empirical - cov_quadratic_theory);
}
double QuadformReport::rel_error_quadratic() const {
    return abs_error_quadratic() / std::abs(cov_quadratic_theory);
}

QuadformReport verify_quadform_identities(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                          const Eigen::MatrixXd& sigma, std::size_t trials, std::uint64_t seed,
                                          std::size_t workers) {
    const Eigen::Index p = sigma.rows();
    if (p == 0 || sigma.cols() != p || a.rows() != p || a.cols() != p || b.rows() != p || b.cols() != p) {
        throw Error(ErrorKind::InvalidArgument, "A, B and Sigma must be square matrices of the same size");
    }
    if (!b.isApprox(b.transpose(), 1e-12)) {
        throw Error(ErrorKind::InvalidArgument, "B must be symmetric");
    }
    const Eigen::LLT<Eigen::MatrixXd> chol(sigma);
    if (chol.info() != Eigen::Success) {
        throw Error(ErrorKind::InvalidArgument, "Sigma must be positive definite");
    }
    if (trials < 2) {
        throw Error(ErrorKind::InvalidArgument, "need at least 2 trials");
    }
    const Eigen::MatrixXd lower = chol.matrixL();

    QuadformReport report;
    report.p_dim = static_cast<std::size_t>(p);
    report.trials = trials;
    const Eigen::MatrixXd asb = a * sigma * b * sigma;
    const double tr_asbs = asb.trace();
    report.cov_linear_theory = 2.0 * tr_asbs;
    report.cov_quadratic_theory = 4.0 * tr_asbs * (b * sigma).trace() + 8.0 * (asb * b * sigma).trace();

    constexpr std::size_t kBatches = 100;
    const std::size_t batches = std::min(kBatches, trials / 2);
    const std::uint64_t stream_seed = derive_seed(seed, stream_domain::kQuadform, 0);
    std::vector<CoMoments> parts(batches);
    parallel_for(batches, workers, [&](std::size_t k) {
        const std::size_t size = trials / batches + (k < trials % batches ? 1 : 0);
        RandomStream stream(stream_seed, k);
        Eigen::VectorXd n(p);
        CoMoments acc;
        for (std::size_t t = 0; t < size; ++t) {
            for (Eigen::Index i = 0; i < p; ++i) n(i) = stream.normal();
            const Eigen::VectorXd z = lower * n;
            const double qa = z.dot(a * z);
            const double qb = z.dot(b * z);
            acc.push(qa, qb, qb * qb);
        }
        parts[k] = acc;
    });

    CoMoments total;
    std::vector<double> lin, quad;
    for (const auto& part : parts) {
        total.merge(part);
        lin.push_back(part.cov_ab());
        quad.push_back(part.cov_ac());
    }
    report.cov_linear_empirical = total.cov_ab();
    report.cov_quadratic_empirical = total.cov_ac();
    report.cov_linear_se = batch_standard_error(lin);
    report.cov_quadratic_se = batch_standard_error(quad);
    return report;
}

QuadformReport verify_quadform_identities(std::size_t p_dim, std::size_t trials, std::uint64_t seed,
                                          std::size_t workers) {
    if (p_dim == 0) {
        throw Error(ErrorKind::InvalidArgument, "p_dim must be at least 1");
    }
    const auto p = static_cast<Eigen::Index>(p_dim);
    if (p_dim == 1) {
        const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
        return verify_quadform_identities(one, one, one, trials, seed, workers);
    }
    RandomStream stream(derive_seed(seed, stream_domain::kQuadform, 1), 0);
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(p, p);
    const Eigen::MatrixXd a = random_matrix(stream, p) * 0.5 + 2.0 * identity;
    const Eigen::MatrixXd mb = random_matrix(stream, p);
    const Eigen::MatrixXd b = mb.transpose() * mb / static_cast<double>(p) + identity;
    const Eigen::MatrixXd ms = random_matrix(stream, p);
    const Eigen::MatrixXd sigma = ms.transpose() * ms / static_cast<double>(p) + 0.5 * identity;
    return verify_quadform_identities(a, b, sigma, trials, seed, workers);
}

SigmaMomentCheck verify_sigma_tilde_moments(const SimulationConfig& cfg) {
    const Dataset ds = config_dataset(cfg);
    if (cfg.replicates < 2) {
        throw Error(ErrorKind::InvalidConfig, "need at least 2 replicates");
    }
    const std::uint64_t data_seed = derive_seed(cfg.base_seed, stream_domain::kSimulation, 0);
    double n = 0.0, mean = 0.0, m2 = 0.0;
    ordered_map_consume(
        cfg.replicates, cfg.workers,
        [&](std::size_t r) {
            RandomStream stream(data_seed, r);
            const Replicate rep = generate_replicate(cfg, stream);
            return estimate_sigma_moment(ds, rep.theta_hat).sigma_tilde;
        },
        [&](std::size_t, double value) {
            n += 1.0;
            const double delta = value - mean;
            mean += delta / n;
            m2 += delta * (value - mean);
        });

    SigmaMomentCheck out;
    out.replicates = cfg.replicates;
    out.mean_error = mean - cfg.sigma_u2_true;
    out.mc_variance = m2 / (n - 1.0);
    out.standard_error = std::sqrt(out.mc_variance / n);
    out.leading_term = var_sigma_tilde(ds, cfg.sigma_u2_true);
    out.variance_ratio = out.mc_variance / out.leading_term;
    return out;
}

}  // namespace sae
