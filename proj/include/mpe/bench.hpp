// Experiment harness: trial grids of plain vs regrouped estimates, copy
// fraction sweeps, paired signed-rank comparisons and report files.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpe/datagen.hpp"
#include "mpe/estimators.hpp"
#include "mpe/regrouping.hpp"
#include "mpe/wilcoxon.hpp"

namespace mpe {

inline constexpr int kManifestSchema = 1;

/// Either a synthetic generator or a CSV file (exactly one is set).
struct DatasetRef {
    std::optional<SyntheticSpec> synthetic;
    std::optional<std::filesystem::path> csv_path;
    CsvOptions csv;
};

struct SplitGrid {
    std::vector<ComponentSide> sides{ComponentSide::positive, ComponentSide::negative};
    std::vector<double> fractions{0.25, 0.5, 0.75};
    std::vector<std::size_t> sizes{800, 1600, 3200};
};

struct RunManifest {
    DatasetRef dataset;
    SplitGrid grid;
    std::vector<EstimatorSpec> estimators;
    RegroupConfig regroup;
    std::size_t repeats = 10;
    std::uint64_t master_seed = 0;
    std::filesystem::path output_dir = "mpe-out";
    std::vector<double> p_grid;  // copy fractions for sweeps

    void validate() const;
};

nlohmann::json to_json(const EstimatorSpec& spec);
EstimatorSpec estimator_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunManifest& m);
/// Relative CSV paths are resolved against `base_dir`.
RunManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunManifest load_manifest(const std::filesystem::path& path);

LabeledDataset load_dataset(const DatasetRef& ref);

enum class Variant { plain, regrouped };
std::string to_string(Variant v);

struct TrialRow {
    std::string dataset;
    ComponentSide side = ComponentSide::positive;
    double fraction = 0.0;
    std::size_t size = 0;
    std::size_t repeat = 0;
    std::size_t trial = 0;
    std::string estimator;
    Variant variant = Variant::plain;
    double kappa_star = 0.0;
    double kappa_hat = 0.0;   // NaN when the trial failed
    double abs_error = 0.0;   // NaN when the trial failed
    std::uint64_t seed = 0;
    double wallclock_s = 0.0;
    std::string error;        // empty on success

    bool ok() const { return error.empty(); }
    std::string cell() const;
};

struct CellAggregate {
    std::string estimator;
    Variant variant = Variant::plain;
    std::string cell;  // "<side>/<fraction>/<size>" or "all"
    std::size_t n = 0;
    std::size_t failed = 0;
    double mean_abs_error = 0.0;
    double variance_abs_error = 0.0;  // n - 1 denominator
    double mean_kappa_hat = 0.0;
};

/// Plain vs regrouped absolute errors on pairs where both succeeded. The
/// test alternative is "regrouped error < plain error".
struct PairedComparison {
    std::string estimator;
    std::string cell;
    std::size_t n_pairs = 0;
    std::optional<WilcoxonResult> test;  // absent below 5 pairs
};

struct ExperimentReport {
    std::string dataset;
    std::vector<TrialRow> rows;
    std::vector<CellAggregate> aggregates;
    std::vector<PairedComparison> comparisons;
    std::size_t failed_rows = 0;
};

/// Recomputes aggregates, comparisons and the failure count from rows.
void summarize(ExperimentReport& report);

struct RunOptions {
    std::size_t workers = 1;
};

/// Worker count from MPE_WORKERS (default 1).
std::size_t workers_from_env();

ExperimentReport run_grid(const RunManifest& manifest, const RunOptions& opts = {});
ExperimentReport run_grid(const RunManifest& manifest, const LabeledDataset& ds, const RunOptions& opts = {});

struct SweepTrial {
    std::size_t trial = 0;
    std::string estimator;
    double p = 0.0;
    double kappa_star = 0.0;
    double kappa_hat = 0.0;        // plain
    double kappa_hat_prime = 0.0;  // regrouped at p
    std::size_t copied = 0;
    std::string error;
};

struct SweepPoint {
    std::string estimator;
    double p = 0.0;
    std::size_t n = 0;
    std::size_t failed = 0;
    double mean_kappa_diff = 0.0;  // mean(kappa_hat - kappa_hat')
    double mean_error_diff = 0.0;  // mean(|err| - |err'|)
};

struct SweepReport {
    std::string dataset;
    std::vector<SweepTrial> trials;
    std::vector<SweepPoint> points;
    std::size_t failed = 0;
};

/// One ranking fit per trial serves every p, so the copied sets are nested.
SweepReport sweep_copy_fraction(const RunManifest& manifest, const std::vector<double>& p_grid,
                                const RunOptions& opts = {});
SweepReport sweep_copy_fraction(const RunManifest& manifest, const LabeledDataset& ds,
                                const std::vector<double>& p_grid, const RunOptions& opts = {});

/// "start:stop:step" inclusive of stop (within half a step), or a comma list.
std::vector<double> parse_p_grid(const std::string& text);

struct ReportFormats {
    bool csv = true;
    bool json = true;
    bool timings = true;
};

/// trials.csv, aggregate.json and timings.csv. Wallclock only goes to
/// timings.csv so the other two are a pure function of the manifest.
std::vector<std::filesystem::path> emit_report(const ExperimentReport& report,
                                               const std::filesystem::path& dir,
                                               const ReportFormats& formats = {});
/// sweep.csv (curve per estimator) and sweep_trials.csv.
std::vector<std::filesystem::path> emit_sweep(const SweepReport& report, const std::filesystem::path& dir);

std::string trials_csv(const ExperimentReport& report);
nlohmann::json aggregate_json(const ExperimentReport& report);
std::vector<TrialRow> parse_trials_csv(std::istream& in);

}  // namespace mpe
