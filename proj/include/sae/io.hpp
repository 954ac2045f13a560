#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sae/bootstrap.hpp"
#include "sae/dataset.hpp"
#include "sae/fit.hpp"
#include "sae/mse.hpp"
#include "sae/simlab.hpp"

namespace sae {

// ---------------------------------------------------------------------------
// Dataset CSV
//
// Header: area_id, direct_estimate, sampling_variance, weight, x1..xp (any
// column order; x-columns must be x1..xp without gaps). Rows keep file order.

struct CsvReadOptions {
    bool equal_weights = false;  // ignore/permit a missing weight column, use 1/m
    bool add_intercept = false;  // prepend a column of ones to the covariates
};

std::vector<AreaRecord> parse_dataset_csv(std::istream& in, const CsvReadOptions& options = {});
Dataset read_dataset_csv(const std::filesystem::path& path, const CsvReadOptions& options = {});

/// Writes raw records with shortest round-trip decimal formatting.
void write_dataset_csv(std::ostream& out, const std::vector<AreaRecord>& records);
void write_dataset_csv(const std::filesystem::path& path, const std::vector<AreaRecord>& records);

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Decimal or 0x-prefixed hexadecimal unsigned 64-bit value.
std::uint64_t parse_seed(const std::string& text);

// ---------------------------------------------------------------------------
// Reports (columns follow the published table of estimates)

struct ReportRow {
    std::string area_id;
    double direct_estimate = 0.0;
    double eb_estimate = 0.0;
    double benchmarked_estimate = 0.0;
    double direct_variance = 0.0;
    std::optional<double> mse_eb;           // Prasad-Rao
    std::optional<double> mse_benchmarked;  // Prasad-Rao + g4
    std::optional<double> mse_boot;
    std::optional<double> mse_b_boot;
    std::optional<bool> negative_flag;
};

enum class ReportFormat { Csv, Json };

ReportFormat parse_report_format(const std::string& text);

std::vector<ReportRow> build_report_rows(const Dataset& ds, const ModelFit& fit, const MseReport* mse = nullptr,
                                         const BootstrapResult* boot = nullptr);

/// The JSON `summary` object: sigma estimates, beta, offset, g4, warnings.
nlohmann::json report_summary(const ModelFit& fit, const MseReport* mse, const BootstrapResult* boot,
                              const RegularityDiagnostics* diagnostics);

/// CSV (optionally rounded to 2 decimals) or JSON text of a report.
std::string render_report(const std::vector<ReportRow>& rows, const nlohmann::json& summary, ReportFormat format,
                          bool rounded = false);

/// CSV writes `path` at full precision and `<stem>.rounded<ext>` at 2
/// decimals; JSON writes `path`. Throws InvalidArgument on empty rows (no file
/// is created) and Io on write failures.
void write_report(const std::vector<ReportRow>& rows, const nlohmann::json& summary, ReportFormat format,
                  const std::filesystem::path& path);

std::filesystem::path rounded_path(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Simulation configuration and outputs

/// JSON fields: beta_true, sigma_u2_true, replicates, base_seed;
/// sampling_variances: array | "saipe1997"; design: matrix |
/// {"synthetic": {"p": P, "seed": S}}; weights: array | "equal" (default).
/// `data_csv` (relative to the config file) may supply design, variances and
/// weights instead.
SimulationConfig parse_simulation_config(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir = {});
SimulationConfig load_simulation_config(const std::filesystem::path& path);

nlohmann::json to_json(const SimulationSummary& summary);
nlohmann::json to_json(const std::vector<ScalingRow>& rows);
nlohmann::json to_json(const QuadformReport& report);
nlohmann::json to_json(const SigmaMomentCheck& check);

/// Per-area (area, empirical, analytic, bootstrap) rows for plotting.
std::string simulation_plot_csv(const SimulationSummary& summary);
std::string scaling_csv(const std::vector<ScalingRow>& rows);

}  // namespace sae
