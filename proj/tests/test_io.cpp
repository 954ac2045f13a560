#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "sae/error.hpp"
#include "sae/io.hpp"
#include "test_support.hpp"

using namespace sae;
namespace fs = std::filesystem;
namespace ref = sae::test::ref;

namespace {

ErrorKind parse_error(const std::string& text, CsvReadOptions opts = {}) {
    std::istringstream in(text);
    try {
        (void)validate_dataset(parse_dataset_csv(in, opts));
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected sae::Error");
    return ErrorKind::Usage;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("sae_bench_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("reading the reference instance") {
    const Dataset ds = read_dataset_csv(fs::path(SAE_TEST_DATA_DIR) / "ref3.csv");
    const Dataset built = sae::test::reference_instance();
    CHECK(ds.direct_estimates() == built.direct_estimates());
    CHECK(ds.sampling_variances() == built.sampling_variances());
    CHECK(ds.design() == built.design());
    CHECK(ds.weights() == built.weights());
    CHECK(ds.records()[0].area_id == "A");
}

TEST_CASE("weight column handling") {
    const std::string no_weight = "area_id,direct_estimate,sampling_variance,x1\na,0,1,1\nb,2,2,1\nc,7,3,1\n";
    CHECK(parse_error(no_weight) == ErrorKind::MissingColumn);
    try {
        std::istringstream in(no_weight);
        parse_dataset_csv(in);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("weight") != std::string::npos);
    }
    CsvReadOptions eq;
    eq.equal_weights = true;
    std::istringstream in(no_weight);
    const Dataset ds = validate_dataset(parse_dataset_csv(in, eq));
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(ds.weights()(i) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("column order, quoting, BOM and intercept") {
    const std::string text =
        "\xEF\xBB\xBFx2,weight,\"area_id\",x1,sampling_variance,direct_estimate\r\n"
        "5,1,\"North, East\",0.5,2,3\r\n"
        "6,2,South,1.5,2,4\r\n"
        "8,1,West,2.5,3,9\r\n"
        "1,1,Central,0.0,3,1\r\n";
    CsvReadOptions opts;
    opts.add_intercept = true;
    std::istringstream in(text);
    const auto records = parse_dataset_csv(in, opts);
    REQUIRE(records.size() == 4);
    CHECK(records[0].area_id == "North, East");
    CHECK(records[1].covariates == std::vector<double>{1.0, 1.5, 6.0});
    CHECK(records[2].direct_estimate == 9.0);
    CHECK(records[1].weight == 2.0);
}

TEST_CASE("malformed input") {
    const std::string header = "area_id,direct_estimate,sampling_variance,weight,x1\n";
    CHECK(parse_error(header + "a,1,1,1,1\nb,oops,1,1,1\nc,1,1,1,1\n") == ErrorKind::NonNumericCell);
    CHECK(parse_error(header + "a,1,1,1,1\na,2,1,1,1\nc,1,1,1,1\n") == ErrorKind::DuplicateArea);
    CHECK(parse_error("area_id,direct_estimate,weight,x1\na,1,1,1\n") == ErrorKind::MissingColumn);
    CHECK(parse_error("area_id,direct_estimate,sampling_variance,weight,x1,x3\na,1,1,1,1,1\n") ==
          ErrorKind::MissingColumn);
    CHECK(parse_error(header + "a,1,0,1,1\nb,2,1,1,1\n") == ErrorKind::NonPositiveSamplingVariance);
    CHECK(parse_error("") == ErrorKind::EmptyDataset);
    CHECK(parse_error(header) == ErrorKind::EmptyDataset);
    try {
        std::istringstream in(header + "a,1,1,1,1\nb,1,x,1,1\n");
        parse_dataset_csv(in);
        FAIL("expected NonNumericCell");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("sampling_variance") != std::string::npos);
    }
    CHECK_THROWS_AS(read_dataset_csv("/nonexistent/file.csv"), Error);
}

TEST_CASE("round trip at full precision") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Dataset ds = sae::test::random_dataset(seed, 15, 1 + seed % 4);
        std::vector<AreaRecord> recs = ds.records();
        recs[0].direct_estimate = 0.1 + 0.2;
        recs[1].sampling_variance = std::numeric_limits<double>::denorm_min() + 1e-300;
        std::stringstream io;
        write_dataset_csv(io, recs);
        const auto back = parse_dataset_csv(io);
        REQUIRE(back.size() == recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CHECK(back[i].area_id == recs[i].area_id);
            CHECK(back[i].direct_estimate == recs[i].direct_estimate);
            CHECK(back[i].sampling_variance == recs[i].sampling_variance);
            CHECK(back[i].covariates == recs[i].covariates);
            CHECK(back[i].weight == recs[i].weight);
        }
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("seeds") {
    CHECK(parse_seed("42") == 42);
    CHECK(parse_seed("0x2A") == 42);
    CHECK(parse_seed("0XffFFffFFffFFffFF") == std::numeric_limits<std::uint64_t>::max());
    CHECK(parse_seed("18446744073709551615") == std::numeric_limits<std::uint64_t>::max());
    for (const char* bad : {"", "-1", "0x", "12abc", "18446744073709551616", "4 2"}) {
        CHECK_THROWS_AS(parse_seed(bad), Error);
    }
}

TEST_CASE("reports") {
    const Dataset ds = sae::test::reference_instance();
    const ModelFit fit = fit_model(ds);
    const MseReport mse = mse_estimate(ds, fit);
    const auto rows = build_report_rows(ds, fit, &mse);
    const auto summary = report_summary(fit, &mse, nullptr, nullptr);
    REQUIRE(rows.size() == 3);
    CHECK(rows[2].area_id == "a3");
    CHECK(std::abs(summary.at("g4").get<double>() - ref::g4) < 1e-12);
    CHECK(summary.at("sigma_u2_hat").get<double>() == 11.0);

    SUBCASE("csv writes the full and rounded variants") {
        const fs::path dir = scratch_dir("csv");
        write_report(rows, summary, ReportFormat::Csv, dir / "out.csv");
        const std::string full = slurp(dir / "out.csv");
        const std::string two = slurp(dir / "out.rounded.csv");
        CHECK(full.find("0.23517786561264") != std::string::npos);
        CHECK(two.find("a1,0.00,0.24,0.41,1.00,1.24,1.26") != std::string::npos);
        std::istringstream lines(full);
        std::string line;
        int n = 0;
        while (std::getline(lines, line)) ++n;
        CHECK(n == 4);
    }
    SUBCASE("json") {
        const fs::path dir = scratch_dir("json");
        write_report(rows, summary, ReportFormat::Json, dir / "out.json");
        const auto doc = nlohmann::json::parse(slurp(dir / "out.json"));
        CHECK(doc.at("areas").size() == 3);
        CHECK(doc.at("areas")[1].at("area_id") == "a2");
        CHECK(std::abs(doc.at("summary").at("g4").get<double>() - ref::g4) < 1e-12);
        CHECK_FALSE(fs::exists(dir / "out.rounded.json"));
    }
    SUBCASE("empty rows create no file") {
        const fs::path dir = scratch_dir("empty");
        CHECK_THROWS_AS(write_report({}, summary, ReportFormat::Csv, dir / "none.csv"), Error);
        CHECK_FALSE(fs::exists(dir / "none.csv"));
        CHECK_FALSE(fs::exists(dir / "none.rounded.csv"));
    }
    SUBCASE("unwritable path") {
        CHECK_THROWS_AS(write_report(rows, summary, ReportFormat::Json, "/nonexistent/dir/out.json"), Error);
    }
    CHECK(parse_report_format("json") == ReportFormat::Json);
    CHECK_THROWS_AS(parse_report_format("xml"), Error);
}

TEST_CASE("simulation configs") {
    SUBCASE("presets") {
        const auto doc = nlohmann::json::parse(R"({
            "beta_true": [-3, 0.5, 1, 1, 0.5], "sigma_u2_true": 5, "replicates": 10, "base_seed": "0x10",
            "sampling_variances": "saipe1997", "design": {"synthetic": {"p": 5, "seed": 3}}, "weights": "equal"})");
        const SimulationConfig cfg = parse_simulation_config(doc);
        CHECK(cfg.design.rows() == 51);
        CHECK(cfg.design == synthetic_design(51, 5, 3));
        CHECK(cfg.base_seed == 16);
        CHECK(cfg.replicates == 10);
        CHECK(cfg.weights.size() == 51);
    }
    SUBCASE("explicit arrays") {
        const auto doc = nlohmann::json::parse(R"({
            "beta_true": [1], "sigma_u2_true": 2, "replicates": 5, "base_seed": 1,
            "sampling_variances": [1, 2, 3], "design": [[1], [1], [1]], "weights": [1, 2, 1]})");
        const SimulationConfig cfg = parse_simulation_config(doc);
        CHECK(cfg.sampling_variances(2) == 3.0);
        CHECK(cfg.weights(1) == 2.0);
    }
    SUBCASE("data file") {
        const SimulationConfig cfg = load_simulation_config(fs::path(SAE_TEST_DATA_DIR) / "sim_ref3.json");
        CHECK(cfg.design.rows() == 3);
        CHECK(cfg.sampling_variances(1) == 2.0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(parse_simulation_config(nlohmann::json::parse("[1]")), Error);
        CHECK_THROWS_AS(parse_simulation_config(nlohmann::json::parse(R"({"beta_true": [1]})")), Error);
        CHECK_THROWS_AS(parse_simulation_config(nlohmann::json::parse(R"({
            "beta_true": [1], "sigma_u2_true": 2, "replicates": 5, "base_seed": 1,
            "sampling_variances": "unknown", "design": [[1], [1], [1]]})")),
                        Error);
        CHECK_THROWS_AS(load_simulation_config("/nonexistent.json"), Error);
    }
}
