#include "sae/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sae/error.hpp"

namespace sae {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV line; double quotes delimit fields that may contain commas,
// and "" inside a quoted field is a literal quote.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(was_quoted ? current : trim(current));
            current.clear();
            was_quoted = false;
        } else {
            current += c;
        }
    }
    fields.push_back(was_quoted ? current : trim(current));
    return fields;
}

bool parse_double(const std::string& text, double& out) {
    if (text.empty()) return false;
    const char* begin = text.data();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

json vector_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const json& j, const char* field) {
    if (!j.is_array()) {
        throw Error(ErrorKind::InvalidConfig, std::string("'") + field + "' must be an array of numbers");
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            throw Error(ErrorKind::InvalidConfig, std::string("'") + field + "' must contain only numbers");
        }
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

std::uint64_t seed_from_json(const json& j) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
    if (j.is_string()) return parse_seed(j.get<std::string>());
    throw Error(ErrorKind::InvalidConfig, "seed must be a non-negative integer or a decimal/hex string");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

std::uint64_t parse_seed(const std::string& text) {
    const std::string t = trim(text);
    int base = 10;
    std::size_t offset = 0;
    if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
        base = 16;
        offset = 2;
    }
    std::uint64_t value = 0;
    const char* begin = t.data() + offset;
    const char* end = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value, base);
    if (t.size() == offset || ec != std::errc() || ptr != end) {
        throw Error(ErrorKind::Usage, "invalid seed '" + text + "' (expected decimal or 0x-prefixed hex)");
    }
    return value;
}

std::vector<AreaRecord> parse_dataset_csv(std::istream& in, const CsvReadOptions& options) {
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) {
            header = split_csv_line(line);
            break;
        }
    }
    if (header.empty()) throw Error(ErrorKind::EmptyDataset, "CSV input has no header");
    if (header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);

    std::map<std::string, std::size_t> column;
    for (std::size_t c = 0; c < header.size(); ++c) column.emplace(header[c], c);
    auto require = [&](const std::string& name) -> std::size_t {
        const auto it = column.find(name);
        if (it == column.end()) throw Error(ErrorKind::MissingColumn, "missing column '" + name + "'");
        return it->second;
    };
    const std::size_t id_col = require("area_id");
    const std::size_t direct_col = require("direct_estimate");
    const std::size_t var_col = require("sampling_variance");
    std::optional<std::size_t> weight_col;
    if (options.equal_weights) {
        if (const auto it = column.find("weight"); it != column.end()) weight_col = it->second;
    } else {
        weight_col = require("weight");
    }
    std::vector<std::size_t> x_cols;
    for (std::size_t k = 1;; ++k) {
        const auto it = column.find("x" + std::to_string(k));
        if (it == column.end()) break;
        x_cols.push_back(it->second);
    }
    for (const auto& name : header) {
        if (name.size() > 1 && name[0] == 'x' && name.find_first_not_of("0123456789", 1) == std::string::npos) {
            const auto k = std::stoul(name.substr(1));
            if (k == 0 || k > x_cols.size()) {
                throw Error(ErrorKind::MissingColumn,
                            "missing column 'x" + std::to_string(x_cols.size() + 1) + "' (found '" + name + "')");
            }
        }
    }
    if (x_cols.empty() && !options.add_intercept) throw Error(ErrorKind::MissingColumn, "missing column 'x1'");

    std::vector<AreaRecord> records;
    std::set<std::string> seen;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            std::ostringstream msg;
            msg << "row " << row << " has " << fields.size() << " fields, header has " << header.size();
            throw Error(ErrorKind::NonNumericCell, msg.str());
        }
        auto number = [&](std::size_t col) {
            double v = 0.0;
            if (!parse_double(fields[col], v)) {
                std::ostringstream msg;
                msg << "row " << row << ", column '" << header[col] << "': '" << fields[col] << "' is not a number";
                throw Error(ErrorKind::NonNumericCell, msg.str());
            }
            return v;
        };
        AreaRecord r;
        r.area_id = fields[id_col];
        if (!seen.insert(r.area_id).second) {
            throw Error(ErrorKind::DuplicateArea, "duplicate area_id '" + r.area_id + "'");
        }
        r.direct_estimate = number(direct_col);
        r.sampling_variance = number(var_col);
        r.weight = (options.equal_weights || !weight_col) ? 1.0 : number(*weight_col);
        if (options.add_intercept) r.covariates.push_back(1.0);
        for (std::size_t c : x_cols) r.covariates.push_back(number(c));
        records.push_back(std::move(r));
    }
    return records;
}

Dataset read_dataset_csv(const std::filesystem::path& path, const CsvReadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    return validate_dataset(parse_dataset_csv(in, options));
}

void write_dataset_csv(std::ostream& out, const std::vector<AreaRecord>& records) {
    const std::size_t p = records.empty() ? 0 : records.front().covariates.size();
    out << "area_id,direct_estimate,sampling_variance,weight";
    for (std::size_t k = 1; k <= p; ++k) out << ",x" << k;
    out << '\n';
    for (const auto& r : records) {
        out << quote_if_needed(r.area_id) << ',' << format_double(r.direct_estimate) << ','
            << format_double(r.sampling_variance) << ',' << format_double(r.weight);
        for (double x : r.covariates) out << ',' << format_double(x);
        out << '\n';
    }
}

void write_dataset_csv(const std::filesystem::path& path, const std::vector<AreaRecord>& records) {
    std::ostringstream text;
    write_dataset_csv(text, records);
    write_text(path, text.str());
}

ReportFormat parse_report_format(const std::string& text) {
    if (text == "csv") return ReportFormat::Csv;
    if (text == "json") return ReportFormat::Json;
    throw Error(ErrorKind::Usage, "unknown format '" + text + "' (expected csv or json)");
}

std::vector<ReportRow> build_report_rows(const Dataset& ds, const ModelFit& fit, const MseReport* mse,
                                         const BootstrapResult* boot) {
    std::vector<ReportRow> rows(ds.m());
    for (std::size_t i = 0; i < ds.m(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        ReportRow& r = rows[i];
        r.area_id = ds.records()[i].area_id;
        r.direct_estimate = fit.direct_estimates(ii);
        r.eb_estimate = fit.eb_estimates(ii);
        r.benchmarked_estimate = fit.benchmarked_estimates(ii);
        r.direct_variance = ds.sampling_variances()(ii);
        if (mse) {
            r.mse_eb = mse->mse_pr(ii);
            r.mse_benchmarked = mse->mse_benchmarked(ii);
        }
        if (boot) {
            r.mse_boot = boot->v_boot(ii);
            r.mse_b_boot = boot->v_b_boot(ii);
            r.negative_flag = static_cast<bool>(boot->negative_flags[i]);
        }
    }
    return rows;
}

json report_summary(const ModelFit& fit, const MseReport* mse, const BootstrapResult* boot,
                    const RegularityDiagnostics* diagnostics) {
    json s;
    s["sigma_u2_hat"] = fit.variance.sigma_hat;
    s["sigma_u2_tilde"] = fit.variance.sigma_tilde;
    s["truncated"] = fit.variance.truncated;
    s["beta_gls"] = vector_json(fit.beta_gls);
    s["beta_ols"] = vector_json(fit.beta_ols);
    s["benchmark_target"] = fit.benchmark_target;
    s["benchmark_offset"] = fit.benchmark_offset;
    json warnings = json::array();
    for (const auto& w : fit.warnings) warnings.push_back(w);
    if (mse) {
        s["g4"] = mse->components.g4;
        s["var_sigma_tilde"] = mse->components.var_sigma_tilde;
    }
    if (boot) {
        std::size_t negatives = 0;
        for (bool f : boot->negative_flags) negatives += f ? 1 : 0;
        s["bootstrap"] = {
            {"replicates_used", boot->replicates_used},
            {"aborted", boot->aborted_count},
            {"truncation_count", boot->truncation_count},
            {"g4_hat", boot->g4_hat},
            {"mean_g4_star", boot->mean_g4_star},
            {"negative_count", negatives},
            {"near_zero_warning", boot->near_zero_warning},
        };
        if (negatives > 0) {
            warnings.push_back("NegativeBootstrapMse: " + std::to_string(negatives) +
                               " areas have a negative benchmarked bootstrap MSE");
        }
    }
    if (diagnostics) {
        s["diagnostics"] = {
            {"d_min", diagnostics->d_min},
            {"d_max", diagnostics->d_max},
            {"max_leverage", diagnostics->max_leverage},
            {"max_weight", diagnostics->max_weight},
        };
        for (const auto& f : diagnostics->flags) warnings.push_back("Regularity: " + f);
    }
    s["warnings"] = std::move(warnings);
    return s;
}

std::string render_report(const std::vector<ReportRow>& rows, const json& summary, ReportFormat format,
                          bool rounded) {
    if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "report has no rows");
    const bool has_mse = rows.front().mse_eb.has_value();
    const bool has_boot = rows.front().mse_boot.has_value();

    if (format == ReportFormat::Json) {
        json areas = json::array();
        for (const auto& r : rows) {
            json a = {
                {"area_id", r.area_id},
                {"direct_estimate", r.direct_estimate},
                {"eb_estimate", r.eb_estimate},
                {"benchmarked_estimate", r.benchmarked_estimate},
                {"direct_variance", r.direct_variance},
            };
            if (has_mse) {
                a["mse_eb"] = *r.mse_eb;
                a["mse_benchmarked"] = *r.mse_benchmarked;
            }
            if (has_boot) {
                a["mse_boot"] = *r.mse_boot;
                a["mse_b_boot"] = *r.mse_b_boot;
                a["negative_flag"] = *r.negative_flag;
            }
            areas.push_back(std::move(a));
        }
        json doc = {{"areas", std::move(areas)}, {"summary", summary}};
        return doc.dump(2) + "\n";
    }

    auto num = [rounded](double v) { return rounded ? fixed2(v) : format_double(v); };
    std::ostringstream out;
    out << "area_id,direct_estimate,eb_estimate,benchmarked_estimate,direct_variance";
    if (has_mse) out << ",mse_eb,mse_benchmarked";
    if (has_boot) out << ",mse_boot,mse_b_boot,negative_flag";
    out << '\n';
    for (const auto& r : rows) {
        out << quote_if_needed(r.area_id) << ',' << num(r.direct_estimate) << ',' << num(r.eb_estimate) << ','
            << num(r.benchmarked_estimate) << ',' << num(r.direct_variance);
        if (has_mse) out << ',' << num(*r.mse_eb) << ',' << num(*r.mse_benchmarked);
        if (has_boot) out << ',' << num(*r.mse_boot) << ',' << num(*r.mse_b_boot) << ',' << (*r.negative_flag ? 1 : 0);
        out << '\n';
    }
    return out.str();
}

std::filesystem::path rounded_path(const std::filesystem::path& path) {
    std::filesystem::path out = path;
    out.replace_filename(path.stem().string() + ".rounded" + path.extension().string());
    return out;
}

void write_report(const std::vector<ReportRow>& rows, const json& summary, ReportFormat format,
                  const std::filesystem::path& path) {
    const std::string full = render_report(rows, summary, format, false);
    if (format == ReportFormat::Csv) {
        const std::string two_dp = render_report(rows, summary, format, true);
        write_text(path, full);
        write_text(rounded_path(path), two_dp);
    } else {
        write_text(path, full);
    }
}

SimulationConfig parse_simulation_config(const json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw Error(ErrorKind::InvalidConfig, "simulation config must be a JSON object");
    auto field = [&](const char* name) -> const json& {
        if (!doc.contains(name)) throw Error(ErrorKind::InvalidConfig, std::string("missing field '") + name + "'");
        return doc.at(name);
    };
    try {
        SimulationConfig cfg;
        cfg.beta_true = vector_from_json(field("beta_true"), "beta_true");
        cfg.sigma_u2_true = field("sigma_u2_true").get<double>();
        cfg.replicates = doc.value("replicates", std::size_t{1000});
        cfg.base_seed = doc.contains("base_seed") ? seed_from_json(doc.at("base_seed")) : 0;

        if (doc.contains("data_csv")) {
            std::filesystem::path csv = doc.at("data_csv").get<std::string>();
            if (csv.is_relative()) csv = base_dir / csv;
            CsvReadOptions opts;
            opts.equal_weights = doc.value("equal_weights", false);
            opts.add_intercept = doc.value("add_intercept", false);
            const Dataset ds = read_dataset_csv(csv, opts);
            cfg.design = ds.design();
            cfg.sampling_variances = ds.sampling_variances();
            cfg.weights = ds.weights();
        } else {
            const json& d = field("sampling_variances");
            if (d.is_string()) {
                if (d.get<std::string>() != "saipe1997") {
                    throw Error(ErrorKind::InvalidConfig, "unknown sampling_variances preset '" + d.get<std::string>() + "'");
                }
                const auto& values = saipe_1997_sampling_variances();
                cfg.sampling_variances =
                    Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
            } else {
                cfg.sampling_variances = vector_from_json(d, "sampling_variances");
            }
            const auto m = static_cast<std::size_t>(cfg.sampling_variances.size());

            const json& x = field("design");
            if (x.is_object() && x.contains("synthetic")) {
                const json& syn = x.at("synthetic");
                const std::size_t p = syn.value("p", static_cast<std::size_t>(cfg.beta_true.size()));
                const std::uint64_t seed = syn.contains("seed") ? seed_from_json(syn.at("seed")) : cfg.base_seed;
                cfg.design = synthetic_design(m, p, seed);
            } else if (x.is_array()) {
                cfg.design.resize(static_cast<Eigen::Index>(x.size()), cfg.beta_true.size());
                for (std::size_t i = 0; i < x.size(); ++i) {
                    const Eigen::VectorXd row = vector_from_json(x[i], "design row");
                    if (row.size() != cfg.beta_true.size()) {
                        throw Error(ErrorKind::InvalidConfig, "design row " + std::to_string(i + 1) +
                                                                  " length does not match beta_true");
                    }
                    cfg.design.row(static_cast<Eigen::Index>(i)) = row.transpose();
                }
            } else {
                throw Error(ErrorKind::InvalidConfig, "'design' must be a matrix or {\"synthetic\": {...}}");
            }

            const json w = doc.value("weights", json("equal"));
            if (w.is_string()) {
                if (w.get<std::string>() != "equal") {
                    throw Error(ErrorKind::InvalidConfig, "unknown weights preset '" + w.get<std::string>() + "'");
                }
                cfg.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m));
            } else {
                cfg.weights = vector_from_json(w, "weights");
            }
        }
        validate_config(cfg);
        return cfg;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("malformed simulation config: ") + e.what());
    }
}

SimulationConfig load_simulation_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_simulation_config(doc, path.parent_path());
}

json to_json(const SimulationSummary& s) {
    json j = {
        {"empirical_mse_direct", vector_json(s.empirical_mse_direct)},
        {"empirical_mse_eb", vector_json(s.empirical_mse_eb)},
        {"empirical_mse_bm", vector_json(s.empirical_mse_bm)},
        {"mean_analytic_mse_pr", vector_json(s.mean_analytic_mse_pr)},
        {"mean_analytic_mse_bm", vector_json(s.mean_analytic_mse_bm)},
        {"replicates_run", s.replicates_run},
        {"aborted", s.aborted},
        {"zero_variance_replicates", s.zero_variance_replicates},
        {"max_benchmark_violation", s.max_benchmark_violation},
    };
    if (s.mean_bootstrap_mse_bm) {
        j["mean_bootstrap_mse_eb"] = vector_json(*s.mean_bootstrap_mse_eb);
        j["mean_bootstrap_mse_bm"] = vector_json(*s.mean_bootstrap_mse_bm);
    }
    json plot = json::array();
    for (Eigen::Index i = 0; i < s.empirical_mse_bm.size(); ++i) {
        json row = {{"area", i + 1}, {"empirical", s.empirical_mse_bm(i)}, {"analytic", s.mean_analytic_mse_bm(i)}};
        row["bootstrap"] = s.mean_bootstrap_mse_bm ? json((*s.mean_bootstrap_mse_bm)(i)) : json(nullptr);
        plot.push_back(std::move(row));
    }
    j["plot"] = std::move(plot);
    return j;
}

json to_json(const std::vector<ScalingRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        out.push_back({{"m", r.m},
                       {"mean_g1", r.mean_g1},
                       {"mean_g2", r.mean_g2},
                       {"mean_g3", r.mean_g3},
                       {"g4", r.g4},
                       {"mse_inflation", r.mse_inflation}});
    }
    return out;
}

json to_json(const QuadformReport& r) {
    return {
        {"p_dim", r.p_dim},
        {"trials", r.trials},
        {"cov_linear", {{"empirical", r.cov_linear_empirical}, {"theory", r.cov_linear_theory},
                        {"standard_error", r.cov_linear_se}, {"abs_error", r.abs_error_linear()},
                        {"rel_error", r.rel_error_linear()}}},
        {"cov_quadratic", {{"empirical", r.cov_quadratic_empirical}, {"theory", r.cov_quadratic_theory},
                           {"standard_error", r.cov_quadratic_se}, {"abs_error", r.abs_error_quadratic()},
                           {"rel_error", r.rel_error_quadratic()}}},
    };
}

json to_json(const SigmaMomentCheck& c) {
    return {
        {"replicates", c.replicates},       {"mean_error", c.mean_error},     {"standard_error", c.standard_error},
        {"mc_variance", c.mc_variance},     {"leading_term", c.leading_term}, {"variance_ratio", c.variance_ratio},
    };
}

std::string simulation_plot_csv(const SimulationSummary& s) {
    std::ostringstream out;
    out << "area,empirical_mse_eb,empirical_mse_bm,mean_analytic_mse_pr,mean_analytic_mse_bm,"
           "mean_bootstrap_mse_eb,mean_bootstrap_mse_bm\n";
    for (Eigen::Index i = 0; i < s.empirical_mse_bm.size(); ++i) {
        out << i + 1 << ',' << format_double(s.empirical_mse_eb(i)) << ',' << format_double(s.empirical_mse_bm(i))
            << ',' << format_double(s.mean_analytic_mse_pr(i)) << ',' << format_double(s.mean_analytic_mse_bm(i));
        if (s.mean_bootstrap_mse_bm) {
            out << ',' << format_double((*s.mean_bootstrap_mse_eb)(i)) << ','
                << format_double((*s.mean_bootstrap_mse_bm)(i));
        } else {
            out << ",,";
        }
        out << '\n';
    }
    return out.str();
}

std::string scaling_csv(const std::vector<ScalingRow>& rows) {
    std::ostringstream out;
    out << "m,mean_g1,mean_g2,mean_g3,g4,mse_inflation\n";
    for (const auto& r : rows) {
        out << r.m << ',' << format_double(r.mean_g1) << ',' << format_double(r.mean_g2) << ','
            << format_double(r.mean_g3) << ',' << format_double(r.g4) << ',' << format_double(r.mse_inflation)
            << '\n';
    }
    return out.str();
}

}  // namespace sae
