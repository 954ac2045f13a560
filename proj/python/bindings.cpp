#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sae/bootstrap.hpp"
#include "sae/dataset.hpp"
#include "sae/error.hpp"
#include "sae/fit.hpp"
#include "sae/io.hpp"
#include "sae/mse.hpp"
#include "sae/simlab.hpp"

#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)

namespace py = pybind11;

namespace {

sae::Dataset dataset_from_arrays(const Eigen::VectorXd& direct, const Eigen::VectorXd& sampling_variance,
                                 const Eigen::MatrixXd& design, std::optional<Eigen::VectorXd> weights,
                                 std::optional<std::vector<std::string>> area_ids) {
    const Eigen::Index m = design.rows();
    if (direct.size() != m || sampling_variance.size() != m || (weights && weights->size() != m) ||
        (area_ids && static_cast<Eigen::Index>(area_ids->size()) != m)) {
        throw sae::Error(sae::ErrorKind::InconsistentCovariateLength, "array lengths must match design rows");
    }
    std::vector<sae::AreaRecord> records(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        auto& r = records[static_cast<std::size_t>(i)];
        r.area_id = area_ids ? (*area_ids)[static_cast<std::size_t>(i)] : std::to_string(i + 1);
        r.direct_estimate = direct(i);
        r.sampling_variance = sampling_variance(i);
        r.weight = weights ? (*weights)(i) : 1.0;
        r.covariates.assign(static_cast<std::size_t>(design.cols()), 0.0);
        for (Eigen::Index k = 0; k < design.cols(); ++k) r.covariates[static_cast<std::size_t>(k)] = design(i, k);
    }
    return sae::validate_dataset(std::move(records));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Fay-Herriot benchmarked empirical Bayes estimation and MSE estimators";

    static py::exception<sae::Error> sae_error(m, "SaeError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const sae::Error& e) {
            PyErr_SetString(sae_error.ptr(), (std::string(sae::to_string(e.kind())) + ": " + e.what()).c_str());
        }
    });

    py::class_<sae::AreaRecord>(m, "AreaRecord")
        .def(py::init<>())
        .def_readwrite("area_id", &sae::AreaRecord::area_id)
        .def_readwrite("direct_estimate", &sae::AreaRecord::direct_estimate)
        .def_readwrite("sampling_variance", &sae::AreaRecord::sampling_variance)
        .def_readwrite("covariates", &sae::AreaRecord::covariates)
        .def_readwrite("weight", &sae::AreaRecord::weight);

    py::class_<sae::Dataset>(m, "Dataset")
        .def_static("from_arrays", &dataset_from_arrays, py::arg("direct"), py::arg("sampling_variance"),
                    py::arg("design"), py::arg("weights") = py::none(), py::arg("area_ids") = py::none())
        .def_property_readonly("m", &sae::Dataset::m)
        .def_property_readonly("p", &sae::Dataset::p)
        .def_property_readonly("records", &sae::Dataset::records)
        .def_property_readonly("design", &sae::Dataset::design)
        .def_property_readonly("direct_estimates", &sae::Dataset::direct_estimates)
        .def_property_readonly("sampling_variances", &sae::Dataset::sampling_variances)
        .def_property_readonly("weights", &sae::Dataset::weights)
        .def_property_readonly("leverages", &sae::Dataset::leverages);

    m.def("validate_dataset", &sae::validate_dataset, py::arg("records"));
    m.def("read_dataset_csv",
          [](const std::string& path, bool equal_weights, bool add_intercept) {
              sae::CsvReadOptions opts;
              opts.equal_weights = equal_weights;
              opts.add_intercept = add_intercept;
              return sae::read_dataset_csv(path, opts);
          },
          py::arg("path"), py::arg("equal_weights") = false, py::arg("add_intercept") = false);

    py::class_<sae::RegularityDiagnostics>(m, "RegularityDiagnostics")
        .def_readonly("d_min", &sae::RegularityDiagnostics::d_min)
        .def_readonly("d_max", &sae::RegularityDiagnostics::d_max)
        .def_readonly("max_leverage", &sae::RegularityDiagnostics::max_leverage)
        .def_readonly("max_weight", &sae::RegularityDiagnostics::max_weight)
        .def_readonly("flags", &sae::RegularityDiagnostics::flags);
    m.def("regularity_diagnostics", &sae::regularity_diagnostics);

    py::class_<sae::VarianceComponent>(m, "VarianceComponent")
        .def_readonly("sigma_tilde", &sae::VarianceComponent::sigma_tilde)
        .def_readonly("sigma_hat", &sae::VarianceComponent::sigma_hat)
        .def_readonly("truncated", &sae::VarianceComponent::truncated);

    py::class_<sae::ModelFit>(m, "ModelFit")
        .def_readonly("variance", &sae::ModelFit::variance)
        .def_readonly("direct_estimates", &sae::ModelFit::direct_estimates)
        .def_readonly("beta_gls", &sae::ModelFit::beta_gls)
        .def_readonly("beta_ols", &sae::ModelFit::beta_ols)
        .def_readonly("shrinkage", &sae::ModelFit::shrinkage)
        .def_readonly("marginal_variances", &sae::ModelFit::marginal_variances)
        .def_readonly("eb_estimates", &sae::ModelFit::eb_estimates)
        .def_readonly("benchmark_target", &sae::ModelFit::benchmark_target)
        .def_readonly("benchmark_offset", &sae::ModelFit::benchmark_offset)
        .def_readonly("benchmarked_estimates", &sae::ModelFit::benchmarked_estimates)
        .def_readonly("near_zero_variance", &sae::ModelFit::near_zero_variance)
        .def_readonly("warnings", &sae::ModelFit::warnings);

    m.def("estimate_sigma_moment", py::overload_cast<const sae::Dataset&>(&sae::estimate_sigma_moment));
    m.def("gls_beta", py::overload_cast<const sae::Dataset&, double>(&sae::gls_beta), py::arg("ds"),
          py::arg("sigma_u2"));
    m.def("bayes_estimates", py::overload_cast<const sae::Dataset&, double>(&sae::bayes_estimates), py::arg("ds"),
          py::arg("sigma_u2"));
    m.def("eb_estimates",
          py::overload_cast<const sae::Dataset&, const sae::VarianceComponent&>(&sae::eb_estimates));
    m.def("benchmark", &sae::benchmark, py::arg("fit"), py::arg("ds"));
    m.def("fit_model", py::overload_cast<const sae::Dataset&>(&sae::fit_model));

    py::class_<sae::MseComponents>(m, "MseComponents")
        .def_readonly("g1", &sae::MseComponents::g1)
        .def_readonly("g2", &sae::MseComponents::g2)
        .def_readonly("g3", &sae::MseComponents::g3)
        .def_readonly("g4", &sae::MseComponents::g4)
        .def_readonly("var_sigma_tilde", &sae::MseComponents::var_sigma_tilde)
        .def_readonly("evaluated_at", &sae::MseComponents::evaluated_at);
    py::class_<sae::MseReport>(m, "MseReport")
        .def_readonly("components", &sae::MseReport::components)
        .def_readonly("mse_pr", &sae::MseReport::mse_pr)
        .def_readonly("mse_benchmarked", &sae::MseReport::mse_benchmarked);

    m.def("h_value", &sae::h_value, py::arg("ds"), py::arg("sigma_u2"), py::arg("i"), py::arg("j"));
    m.def("var_sigma_tilde", &sae::var_sigma_tilde, py::arg("ds"), py::arg("sigma_u2"));
    m.def("mse_components", &sae::mse_components, py::arg("ds"), py::arg("sigma_u2"));
    m.def("g4_double_sum", &sae::g4_double_sum, py::arg("ds"), py::arg("sigma_u2"));
    m.def("g4_nonnegativity_certificate", &sae::g4_nonnegativity_certificate, py::arg("ds"), py::arg("sigma_u2"));
    m.def("mse_estimate", &sae::mse_estimate, py::arg("ds"), py::arg("fit"));

    py::enum_<sae::BootstrapBeta>(m, "BootstrapBeta")
        .value("original_gls", sae::BootstrapBeta::OriginalGls)
        .value("refit_gls", sae::BootstrapBeta::RefitGls)
        .value("original_ols", sae::BootstrapBeta::OriginalOls);
    py::class_<sae::BootstrapConfig>(m, "BootstrapConfig")
        .def(py::init<>())
        .def_readwrite("replicates", &sae::BootstrapConfig::replicates)
        .def_readwrite("base_seed", &sae::BootstrapConfig::base_seed)
        .def_readwrite("truncate_negative", &sae::BootstrapConfig::truncate_negative)
        .def_readwrite("beta_mode", &sae::BootstrapConfig::beta_mode)
        .def_readwrite("workers", &sae::BootstrapConfig::workers);
    py::class_<sae::BootstrapResult>(m, "BootstrapResult")
        .def_readonly("v_boot", &sae::BootstrapResult::v_boot)
        .def_readonly("v_b_boot", &sae::BootstrapResult::v_b_boot)
        .def_readonly("mean_g5_empirical", &sae::BootstrapResult::mean_g5_empirical)
        .def_readonly("negative_flags", &sae::BootstrapResult::negative_flags)
        .def_readonly("truncation_count", &sae::BootstrapResult::truncation_count)
        .def_readonly("aborted_count", &sae::BootstrapResult::aborted_count)
        .def_readonly("replicates_used", &sae::BootstrapResult::replicates_used)
        .def_readonly("near_zero_warning", &sae::BootstrapResult::near_zero_warning);
    m.def("bootstrap_mse", &sae::bootstrap_mse, py::arg("ds"), py::arg("fit"), py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
    m.def("g5_analytic", &sae::g5_analytic, py::arg("ds"), py::arg("fit"));

    py::class_<sae::SimulationConfig>(m, "SimulationConfig")
        .def(py::init<>())
        .def_readwrite("beta_true", &sae::SimulationConfig::beta_true)
        .def_readwrite("sigma_u2_true", &sae::SimulationConfig::sigma_u2_true)
        .def_readwrite("sampling_variances", &sae::SimulationConfig::sampling_variances)
        .def_readwrite("design", &sae::SimulationConfig::design)
        .def_readwrite("weights", &sae::SimulationConfig::weights)
        .def_readwrite("replicates", &sae::SimulationConfig::replicates)
        .def_readwrite("base_seed", &sae::SimulationConfig::base_seed)
        .def_readwrite("workers", &sae::SimulationConfig::workers);
    py::class_<sae::SimulationSummary>(m, "SimulationSummary")
        .def_readonly("empirical_mse_direct", &sae::SimulationSummary::empirical_mse_direct)
        .def_readonly("empirical_mse_eb", &sae::SimulationSummary::empirical_mse_eb)
        .def_readonly("empirical_mse_bm", &sae::SimulationSummary::empirical_mse_bm)
        .def_readonly("mean_analytic_mse_pr", &sae::SimulationSummary::mean_analytic_mse_pr)
        .def_readonly("mean_analytic_mse_bm", &sae::SimulationSummary::mean_analytic_mse_bm)
        .def_readonly("mean_bootstrap_mse_eb", &sae::SimulationSummary::mean_bootstrap_mse_eb)
        .def_readonly("mean_bootstrap_mse_bm", &sae::SimulationSummary::mean_bootstrap_mse_bm)
        .def_readonly("replicates_run", &sae::SimulationSummary::replicates_run)
        .def_readonly("aborted", &sae::SimulationSummary::aborted)
        .def_readonly("zero_variance_replicates", &sae::SimulationSummary::zero_variance_replicates);
    py::class_<sae::ScalingRow>(m, "ScalingRow")
        .def_readonly("m", &sae::ScalingRow::m)
        .def_readonly("mean_g1", &sae::ScalingRow::mean_g1)
        .def_readonly("mean_g2", &sae::ScalingRow::mean_g2)
        .def_readonly("mean_g3", &sae::ScalingRow::mean_g3)
        .def_readonly("g4", &sae::ScalingRow::g4)
        .def_readonly("mse_inflation", &sae::ScalingRow::mse_inflation);
    py::class_<sae::QuadformReport>(m, "QuadformReport")
        .def_readonly("cov_linear_empirical", &sae::QuadformReport::cov_linear_empirical)
        .def_readonly("cov_linear_theory", &sae::QuadformReport::cov_linear_theory)
        .def_readonly("cov_quadratic_empirical", &sae::QuadformReport::cov_quadratic_empirical)
        .def_readonly("cov_quadratic_theory", &sae::QuadformReport::cov_quadratic_theory)
        .def_property_readonly("rel_error_linear", &sae::QuadformReport::rel_error_linear)
        .def_property_readonly("rel_error_quadratic", &sae::QuadformReport::rel_error_quadratic);
    py::class_<sae::SigmaMomentCheck>(m, "SigmaMomentCheck")
        .def_readonly("mean_error", &sae::SigmaMomentCheck::mean_error)
        .def_readonly("standard_error", &sae::SigmaMomentCheck::standard_error)
        .def_readonly("variance_ratio", &sae::SigmaMomentCheck::variance_ratio)
        .def_readonly("leading_term", &sae::SigmaMomentCheck::leading_term);

    m.def("saipe_like_config", &sae::saipe_like_config, py::arg("replicates"), py::arg("seed"));
    m.def("uniform_variance_config", &sae::uniform_variance_config, py::arg("m"), py::arg("p"),
          py::arg("sigma_u2"), py::arg("d_lo"), py::arg("d_hi"), py::arg("replicates"), py::arg("seed"));
    m.def("run_simulation", &sae::run_simulation, py::arg("config"), py::arg("bootstrap") = py::none(),
          py::call_guard<py::gil_scoped_release>());
    m.def("scaling_study",
          [](const sae::SimulationConfig& base, const std::vector<std::size_t>& grid) {
              return sae::scaling_study(base, grid);
          },
          py::arg("base"), py::arg("m_grid"), py::call_guard<py::gil_scoped_release>());
    m.def("verify_quadform_identities",
          py::overload_cast<std::size_t, std::size_t, std::uint64_t, std::size_t>(&sae::verify_quadform_identities),
          py::arg("p_dim"), py::arg("trials"), py::arg("seed"), py::arg("workers") = 0,
          py::call_guard<py::gil_scoped_release>());
    m.def("verify_sigma_tilde_moments", &sae::verify_sigma_tilde_moments, py::arg("config"),
          py::call_guard<py::gil_scoped_release>());

#ifdef VERSION_INFO
    m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
    m.attr("__version__") = "dev";
#endif
}
