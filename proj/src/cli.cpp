#include "sae/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "sae/bootstrap.hpp"
#include "sae/error.hpp"
#include "sae/fit.hpp"
#include "sae/io.hpp"
#include "sae/mse.hpp"
#include "sae/simlab.hpp"

namespace sae {

namespace {

struct GlobalOptions {
    std::string format = "csv";
    std::string out_path;
    std::string seed_text;
    std::size_t threads = 0;
    bool rounded = false;
};

struct DataOptions {
    std::string path;
    bool equal_weights = false;
    bool add_intercept = false;
};

void add_data_options(CLI::App* cmd, DataOptions& opts) {
    cmd->add_option("data", opts.path, "Area-level CSV (area_id, direct_estimate, sampling_variance, weight, x1..xp)")
        ->required();
    cmd->add_flag("--equal-weights", opts.equal_weights, "Use weights 1/m; the weight column may be absent");
    cmd->add_flag("--add-intercept", opts.add_intercept, "Prepend an intercept column to x1..xp");
}

void emit(const std::string& text, const GlobalOptions& g, std::ostream& out) {
    if (g.out_path.empty()) {
        out << text;
        return;
    }
    std::ofstream file(g.out_path, std::ios::binary);
    if (!file) throw Error(ErrorKind::Io, "cannot open '" + g.out_path + "' for writing");
    file << text;
    if (!file.flush()) throw Error(ErrorKind::Io, "failed writing '" + g.out_path + "'");
}

void print_summary_lines(const ModelFit& fit, const MseReport* mse, std::ostream& out) {
    out << "# sigma_u2_hat = " << format_double(fit.variance.sigma_hat) << '\n';
    out << "# sigma_u2_tilde = " << format_double(fit.variance.sigma_tilde) << '\n';
    out << "# beta_gls =";
    for (Eigen::Index k = 0; k < fit.beta_gls.size(); ++k) out << ' ' << format_double(fit.beta_gls(k));
    out << '\n';
    out << "# benchmark_offset = " << format_double(fit.benchmark_offset) << '\n';
    if (mse) out << "# g4 = " << format_double(mse->components.g4) << '\n';
}

int run_area_command(const std::string& mode, const DataOptions& data, const GlobalOptions& g,
                     const BootstrapConfig* boot_cfg, std::ostream& out, std::ostream& err) {
    const ReportFormat format = parse_report_format(g.format);
    CsvReadOptions read_opts;
    read_opts.equal_weights = data.equal_weights;
    read_opts.add_intercept = data.add_intercept;
    const Dataset ds = read_dataset_csv(data.path, read_opts);
    const RegularityDiagnostics diag = regularity_diagnostics(ds);
    const ModelFit fit = fit_model(ds);

    std::optional<MseReport> mse;
    if (mode != "fit") mse = mse_estimate(ds, fit);
    std::optional<BootstrapResult> boot;
    if (boot_cfg) boot = bootstrap_mse(ds, fit, *boot_cfg);

    const auto rows = build_report_rows(ds, fit, mse ? &*mse : nullptr, boot ? &*boot : nullptr);
    const auto summary = report_summary(fit, mse ? &*mse : nullptr, boot ? &*boot : nullptr, &diag);
    for (const auto& w : summary.at("warnings")) err << "warning: " << w.get<std::string>() << '\n';

    if (g.out_path.empty()) {
        if (format == ReportFormat::Csv) print_summary_lines(fit, mse ? &*mse : nullptr, out);
        out << render_report(rows, summary, format, g.rounded);
    } else {
        write_report(rows, summary, format, g.out_path);
        print_summary_lines(fit, mse ? &*mse : nullptr, out);
    }
    return 0;
}

std::vector<std::size_t> parse_grid(const std::string& text) {
    std::vector<std::size_t> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const unsigned long v = std::stoul(item, &pos);
            if (pos != item.size()) throw std::invalid_argument(item);
            grid.push_back(v);
        } catch (const std::exception&) {
            throw Error(ErrorKind::Usage, "invalid --m-grid entry '" + item + "'");
        }
    }
    if (grid.empty()) throw Error(ErrorKind::Usage, "--m-grid is empty");
    return grid;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fay-Herriot benchmarked empirical Bayes estimation and MSE toolkit", "saebench"};
    app.fallthrough();
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--format", g.format, "Output format: csv or json")->capture_default_str();
    app.add_option("--out", g.out_path, "Output file (CSV also writes <stem>.rounded<ext>)");
    app.add_option("--seed", g.seed_text, "64-bit seed, decimal or 0x-prefixed hex");
    app.add_option("--threads", g.threads, "Worker threads (default: SAE_BENCH_THREADS or hardware)");
    app.add_flag("--rounded", g.rounded, "Round CSV printed to stdout to 2 decimals");

    DataOptions fit_data, mse_data, boot_data;
    auto* fit_cmd = app.add_subcommand("fit", "Moment estimate, EB and benchmarked EB estimates");
    add_data_options(fit_cmd, fit_data);
    auto* mse_cmd = app.add_subcommand("mse", "Adds Prasad-Rao and benchmarked analytic MSE estimates");
    add_data_options(mse_cmd, mse_data);

    auto* boot_cmd = app.add_subcommand("bootstrap", "Adds parametric bootstrap MSE estimates");
    add_data_options(boot_cmd, boot_data);
    std::size_t reps = 10000;
    bool truncate = false;
    std::string beta_mode = "original_gls";
    boot_cmd->add_option("--reps", reps, "Bootstrap replicates")->capture_default_str();
    boot_cmd->add_flag("--truncate-negative", truncate, "Report max(estimate, 0); flags keep the raw sign");
    boot_cmd->add_option("--beta-mode", beta_mode, "original_gls, refit_gls or original_ols")
        ->check(CLI::IsMember({"original_gls", "refit_gls", "original_ols"}))
        ->capture_default_str();

    auto* sim_cmd = app.add_subcommand("simulate", "Simulation study: empirical vs estimated MSE");
    std::string sim_config;
    std::size_t sim_boot_reps = 0;
    sim_cmd->add_option("--config", sim_config, "Simulation config JSON")->required();
    sim_cmd->add_option("--bootstrap-reps", sim_boot_reps, "Bootstrap replicates per simulated data set (0: off)");

    auto* scale_cmd = app.add_subcommand("scaling", "O(1/m) scaling study of the MSE components");
    std::string scale_config;
    std::string grid_text = "25,50,100,200,400";
    scale_cmd->add_option("--config", scale_config, "Base simulation config JSON")->required();
    scale_cmd->add_option("--m-grid", grid_text, "Comma-separated area counts")->capture_default_str();

    auto* verify_cmd = app.add_subcommand("verify", "Monte Carlo checks of the moment identities");
    bool lemma3 = false, sigma_moments = false;
    std::size_t trials = 1000000;
    std::size_t p_dim = 3;
    std::string verify_config;
    verify_cmd->add_flag("--lemma3", lemma3, "Quadratic-form covariance identities");
    verify_cmd->add_flag("--sigma-moments", sigma_moments, "Mean and variance of the moment estimator");
    verify_cmd->add_option("--trials", trials, "Trials for --lemma3")->capture_default_str();
    verify_cmd->add_option("--p-dim", p_dim, "Dimension for --lemma3")->capture_default_str();
    verify_cmd->add_option("--config", verify_config,
                           "Config for --sigma-moments (default: m=100, p=2, sigma_u2=5, D~U(1,9), 20000 reps)");

    std::vector<std::string> argv_store(args.begin(), args.end());
    if (argv_store.empty()) argv_store.emplace_back("saebench");
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        const bool has_seed = !g.seed_text.empty();
        const std::uint64_t seed_value = has_seed ? parse_seed(g.seed_text) : 0;
        const ReportFormat format = parse_report_format(g.format);

        if (fit_cmd->parsed()) return run_area_command("fit", fit_data, g, nullptr, out, err);
        if (mse_cmd->parsed()) return run_area_command("mse", mse_data, g, nullptr, out, err);
        if (boot_cmd->parsed()) {
            BootstrapConfig cfg;
            cfg.replicates = reps;
            cfg.base_seed = seed_value;
            cfg.truncate_negative = truncate;
            cfg.beta_mode = beta_mode == "original_ols" ? BootstrapBeta::OriginalOls
                            : beta_mode == "refit_gls"  ? BootstrapBeta::RefitGls
                                                        : BootstrapBeta::OriginalGls;
            cfg.workers = g.threads;
            return run_area_command("bootstrap", boot_data, g, &cfg, out, err);
        }
        if (sim_cmd->parsed()) {
            SimulationConfig cfg = load_simulation_config(sim_config);
            if (has_seed) cfg.base_seed = seed_value;
            cfg.workers = g.threads;
            std::optional<BootstrapConfig> boot;
            if (sim_boot_reps > 0) {
                BootstrapConfig bc;
                bc.replicates = sim_boot_reps;
                bc.base_seed = cfg.base_seed;
                boot = bc;
            }
            const SimulationSummary s = run_simulation(cfg, boot);
            if (s.zero_variance_replicates > 0) {
                err << "warning: " << s.zero_variance_replicates << " of " << s.replicates_run
                    << " replicates had sigma_u2_hat = 0\n";
            }
            emit(format == ReportFormat::Json ? to_json(s).dump(2) + "\n" : simulation_plot_csv(s), g, out);
            return 0;
        }
        if (scale_cmd->parsed()) {
            SimulationConfig cfg = load_simulation_config(scale_config);
            if (has_seed) cfg.base_seed = seed_value;
            cfg.workers = g.threads;
            const auto grid = parse_grid(grid_text);
            const auto rows = scaling_study(cfg, grid);
            emit(format == ReportFormat::Json ? to_json(rows).dump(2) + "\n" : scaling_csv(rows), g, out);
            return 0;
        }
        if (verify_cmd->parsed()) {
            if (lemma3 == sigma_moments) {
                throw Error(ErrorKind::Usage, "verify needs exactly one of --lemma3 or --sigma-moments");
            }
            nlohmann::json report;
            if (lemma3) {
                report = to_json(verify_quadform_identities(p_dim, trials, seed_value, g.threads));
            } else {
                SimulationConfig cfg = verify_config.empty()
                                           ? uniform_variance_config(100, 2, 5.0, 1.0, 9.0, 20000, 0)
                                           : load_simulation_config(verify_config);
                if (has_seed) cfg.base_seed = seed_value;
                cfg.workers = g.threads;
                report = to_json(verify_sigma_tilde_moments(cfg));
            }
            if (format == ReportFormat::Json) {
                emit(report.dump(2) + "\n", g, out);
            } else {
                std::ostringstream text;
                text << "key,value\n";
                for (const auto& [key, value] : report.flatten().items()) text << key << ',' << value.dump() << '\n';
                emit(text.str(), g, out);
            }
            return 0;
        }
        throw Error(ErrorKind::Usage, "no subcommand given");
    } catch (const Error& e) {
        err << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace sae
