#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mpe/bench.hpp"

using namespace mpe;

namespace {

TrialRow row(const std::string& est, Variant v, std::size_t trial, double err, const std::string& error = "") {
    TrialRow r;
    r.dataset = "toy";
    r.fraction = 0.5;
    r.size = 100;
    r.trial = trial;
    r.estimator = est;
    r.variant = v;
    r.kappa_star = 0.3;
    r.kappa_hat = error.empty() ? 0.3 + err : std::nan("");
    r.abs_error = error.empty() ? err : std::nan("");
    r.error = error;
    return r;
}

const CellAggregate& find(const ExperimentReport& r, const std::string& est, Variant v, const std::string& cell) {
    for (const auto& a : r.aggregates) {
        if (a.estimator == est && a.variant == v && a.cell == cell) return a;
    }
    throw std::runtime_error("aggregate not found");
}

// Small but complete manifest: irreducible data, one cell, cheap classifier.
RunManifest tiny_manifest() {
    RunManifest m;
    SyntheticSpec s;
    s.n = 120;
    s.dim = 2;
    s.seed = 3;
    m.dataset.synthetic = s;
    m.grid.sides = {ComponentSide::positive};
    m.grid.fractions = {0.5};
    m.grid.sizes = {50};
    m.repeats = 5;
    m.master_seed = 17;
    m.regroup.classifier.epochs = 5;
    m.regroup.classifier.hidden_units = 8;
    EstimatorSpec roc;
    EstimatorSpec en;
    en.method = Method::en;
    m.estimators = {roc, en};
    return m;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "mpe_test_bench" / name;
    std::filesystem::remove_all(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST(Summarize, AggregatesUseSampleVariance) {
    ExperimentReport r;
    r.rows = {row("roc", Variant::plain, 0, 0.1), row("roc", Variant::plain, 1, 0.3),
              row("roc", Variant::plain, 2, 0.2), row("roc", Variant::plain, 3, 0.0, "boom")};
    summarize(r);
    const auto& a = find(r, "roc", Variant::plain, "all");
    EXPECT_EQ(a.n, 3u);
    EXPECT_EQ(a.failed, 1u);
    EXPECT_NEAR(a.mean_abs_error, 0.2, 1e-15);
    EXPECT_NEAR(a.variance_abs_error, 0.01, 1e-15);  // ((.1)^2 + (.1)^2 + 0) / 2
    EXPECT_NEAR(a.mean_kappa_hat, 0.5, 1e-15);
    EXPECT_EQ(r.failed_rows, 1u);
    EXPECT_EQ(find(r, "roc", Variant::plain, "positive/0.5/100").n, 3u);
}

TEST(Summarize, PairedComparisonRegroupedBetter) {
    ExperimentReport r;
    for (std::size_t t = 0; t < 5; ++t) {
        r.rows.push_back(row("en", Variant::plain, t, 0.2 + 0.01 * static_cast<double>(t)));
        r.rows.push_back(row("en", Variant::regrouped, t, 0.1));
    }
    summarize(r);
    const PairedComparison* all = nullptr;
    for (const auto& c : r.comparisons) {
        if (c.estimator == "en" && c.cell == "all") all = &c;
    }
    ASSERT_NE(all, nullptr);
    EXPECT_EQ(all->n_pairs, 5u);
    ASSERT_TRUE(all->test.has_value());
    EXPECT_DOUBLE_EQ(all->test->p_value, 1.0 / 32.0);
}

TEST(Summarize, FailedSideDropsThePairAndFewPairsSkipTheTest) {
    ExperimentReport r;
    for (std::size_t t = 0; t < 5; ++t) {
        r.rows.push_back(row("km1", Variant::plain, t, 0.2));
        r.rows.push_back(row("km1", Variant::regrouped, t, 0.1, t == 0 ? "kernel QP did not converge" : ""));
    }
    summarize(r);
    for (const auto& c : r.comparisons) {
        if (c.estimator != "km1") continue;
        EXPECT_EQ(c.n_pairs, 4u);
        EXPECT_FALSE(c.test.has_value());
    }
}

TEST(TrialsCsv, RoundTripsIncludingFailures) {
    ExperimentReport r;
    r.rows = {row("roc", Variant::plain, 0, 0.125), row("roc", Variant::regrouped, 0, 0.0, "bad, \"quoted\" thing")};
    r.rows[0].seed = 123456789012345ULL;
    const std::string csv = trials_csv(r);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "dataset,side,fraction,size,repeat,trial,estimator,variant,kappa_star,kappa_hat,abs_error,seed,status");
    std::istringstream in(csv);
    const auto back = parse_trials_csv(in);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].abs_error, 0.125);
    EXPECT_EQ(back[0].seed, 123456789012345ULL);
    EXPECT_TRUE(back[0].ok());
    EXPECT_EQ(back[1].error, "bad, \"quoted\" thing");
    EXPECT_TRUE(std::isnan(back[1].kappa_hat));
    std::istringstream bad("nope\n");
    EXPECT_THROW(parse_trials_csv(bad), std::invalid_argument);
}

TEST(PGrid, RangesAndLists) {
    const auto g = parse_p_grid("0:0.5:0.05");
    ASSERT_EQ(g.size(), 11u);
    EXPECT_EQ(g[3], 0.15);
    EXPECT_EQ(g.back(), 0.5);
    EXPECT_EQ(parse_p_grid("0.05,0.1, 0.15"), (std::vector<double>{0.05, 0.1, 0.15}));
    EXPECT_THROW(parse_p_grid("0:0.5"), std::invalid_argument);
    EXPECT_THROW(parse_p_grid("0.1,abc"), std::invalid_argument);
    EXPECT_THROW(parse_p_grid("0.6"), std::invalid_argument);
    EXPECT_THROW(parse_p_grid("0.3:0.1:0.05"), std::invalid_argument);
}

TEST(Manifest, JsonRoundTripAndValidation) {
    auto m = tiny_manifest();
    m.p_grid = {0.05, 0.1};
    EstimatorSpec km;
    km.method = Method::km;
    km.km.variant = KmVariant::km1;
    km.km.step_rule = StepRule::diminishing;
    m.estimators.push_back(km);
    const auto j = to_json(m);
    EXPECT_EQ(j["schema"], kManifestSchema);
    const auto back = manifest_from_json(j);
    EXPECT_EQ(to_json(back), j);

    auto bad = j;
    bad["schema"] = 99;
    EXPECT_THROW(manifest_from_json(bad), std::invalid_argument);
    bad = j;
    bad["estimators"] = nlohmann::json::array();
    EXPECT_THROW(manifest_from_json(bad), std::invalid_argument);
    bad = j;
    bad["estimators"][0]["method"] = "magic";
    EXPECT_THROW(manifest_from_json(bad), std::invalid_argument);
    bad = j;
    bad["dataset"]["csv"] = {{"path", "x.csv"}, {"label_column", "y"}, {"positive_labels", {"1"}}};
    EXPECT_THROW(manifest_from_json(bad), std::invalid_argument);
}

TEST(Manifest, CsvPathsResolveAgainstManifestDirectory) {
    const auto dir = scratch_dir("csvref");
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "data.csv") << "a,label\n1,y\n2,n\n3,y\n4,n\n";
    nlohmann::json j = to_json(tiny_manifest());
    j["dataset"] = {{"csv", {{"path", "data.csv"}, {"label_column", "label"}, {"positive_labels", {"y"}}}}};
    std::ofstream(dir / "m.json") << j.dump();
    const auto m = load_manifest(dir / "m.json");
    EXPECT_EQ(*m.dataset.csv_path, dir / "data.csv");
    EXPECT_EQ(load_dataset(m.dataset).size(), 4u);
    EXPECT_THROW(load_manifest(dir / "missing.json"), std::runtime_error);
    std::ofstream(dir / "broken.json") << "{ not json";
    EXPECT_THROW(load_manifest(dir / "broken.json"), std::invalid_argument);
}

TEST(RunGrid, ProducesPairedRowsPerTrial) {
    const auto m = tiny_manifest();
    const auto report = run_grid(m);
    ASSERT_EQ(report.rows.size(), 5u * 2u * 2u);
    EXPECT_EQ(report.failed_rows, 0u);
    for (const auto& r : report.rows) {
        EXPECT_TRUE(r.ok()) << r.error;
        EXPECT_NEAR(r.abs_error, std::abs(r.kappa_hat - r.kappa_star), 1e-15);
        EXPECT_EQ(r.cell(), "positive/0.5/50");
    }
    // both variants of a trial see the same split
    EXPECT_EQ(report.rows[0].kappa_star, report.rows[1].kappa_star);
    EXPECT_EQ(report.rows[0].seed, report.rows[3].seed);
}

TEST(RunGrid, ReportBytesAreDeterministicAcrossRunsAndWorkers) {
    const auto m = tiny_manifest();
    const auto a = run_grid(m);
    const auto b = run_grid(m, RunOptions{3});
    EXPECT_EQ(trials_csv(a), trials_csv(b));
    EXPECT_EQ(aggregate_json(a).dump(), aggregate_json(b).dump());

    auto other = m;
    other.master_seed = 18;
    EXPECT_NE(trials_csv(run_grid(other)), trials_csv(a));
}

TEST(RunGrid, SplitErrorsBecomeFailedRows) {
    auto m = tiny_manifest();
    m.grid.sizes = {500};  // more rows than the pools hold
    m.repeats = 1;
    const auto report = run_grid(m);
    EXPECT_EQ(report.failed_rows, report.rows.size());
    EXPECT_NE(report.rows[0].error.find("insufficient rows"), std::string::npos);
}

TEST(EmitReport, WritesFilesAndKeepsTimingsSeparate) {
    const auto report = run_grid(tiny_manifest());
    const auto dir = scratch_dir("emit");
    const auto files = emit_report(report, dir);
    ASSERT_EQ(files.size(), 3u);
    EXPECT_TRUE(std::filesystem::exists(dir / "trials.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "aggregate.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "timings.csv"));
    EXPECT_EQ(slurp(dir / "trials.csv"), trials_csv(report));
    const auto agg = nlohmann::json::parse(slurp(dir / "aggregate.json"));
    EXPECT_EQ(agg["variance_denominator"], "n-1");
    EXPECT_EQ(agg["rows"], 20);
    EXPECT_EQ(slurp(dir / "trials.csv").find("wallclock"), std::string::npos);

    EXPECT_THROW(emit_report(report, "/proc/mpe-not-writable"), std::runtime_error);
}

TEST(Sweep, NestedCopiesAndCurvePoints) {
    auto m = tiny_manifest();
    m.repeats = 2;
    const std::vector<double> grid{0.0, 0.1, 0.2};
    const auto s = sweep_copy_fraction(m, grid);
    EXPECT_EQ(s.failed, 0u);
    ASSERT_EQ(s.trials.size(), 2u * 3u * 2u);
    for (const auto& t : s.trials) {
        EXPECT_EQ(t.copied, copy_count(t.p, 50));
        if (t.p == 0.0) EXPECT_EQ(t.kappa_hat, t.kappa_hat_prime);
    }
    ASSERT_EQ(s.points.size(), 3u * 2u);
    for (const auto& p : s.points) EXPECT_EQ(p.n, 2u);
    const auto dir = scratch_dir("sweep");
    EXPECT_EQ(emit_sweep(s, dir).size(), 2u);
    EXPECT_EQ(slurp(dir / "sweep.csv").substr(0, 8), "estimato");
}

TEST(Workers, ReadFromEnvironment) {
    ::setenv("MPE_WORKERS", "3", 1);
    EXPECT_EQ(workers_from_env(), 3u);
    ::setenv("MPE_WORKERS", "zero", 1);
    EXPECT_THROW(workers_from_env(), std::invalid_argument);
    ::unsetenv("MPE_WORKERS");
    EXPECT_EQ(workers_from_env(), 1u);
}
