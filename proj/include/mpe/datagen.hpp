// Synthetic Gaussian benchmarks, the mixture/component split protocol and
// CSV ingestion.
#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mpe/classifier.hpp"
#include "mpe/sample.hpp"

namespace mpe {

struct SyntheticSpec {
    enum class Kind { irreducible, reducible };

    Kind kind = Kind::irreducible;
    std::size_t dim = 10;
    std::size_t n = 1000;  // rows per class
    double kappa_star = 0.5;
    std::uint64_t seed = 0;
    double filter_low = 0.02;
    double filter_high = 0.98;
    TrainConfig filter_classifier;  // seed is derived from `seed`, not read from here

    void validate() const;
};

std::string to_string(SyntheticSpec::Kind k);

struct LabeledDataset {
    Eigen::MatrixXd features;
    std::vector<int> labels;  // 1 = positive, 0 = negative
    std::string name;
    std::vector<std::string> columns;
    Eigen::VectorXd standardization_mean;   // empty when features are raw
    Eigen::VectorXd standardization_scale;
    nlohmann::json provenance;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t count(int label) const;
    void validate() const;
};

LabeledDataset gen_irreducible(const SyntheticSpec& spec);

struct ReducibleDraw {
    LabeledDataset data;
    PosteriorModel filter;  // the model whose posterior defined the retained region
};

/// Positives ~ N(1, I), negatives ~ N(0, I), keeping only rows whose filter
/// posterior lies in [filter_low, filter_high]. The filter is trained once on
/// the first draw and reused on later draws.
ReducibleDraw gen_reducible_with_filter(const SyntheticSpec& spec);
LabeledDataset gen_reducible(const SyntheticSpec& spec);

LabeledDataset generate(const SyntheticSpec& spec);

enum class ComponentSide { positive, negative };
std::string to_string(ComponentSide s);

struct SplitSpec {
    ComponentSide component_side = ComponentSide::positive;
    double component_fraction = 0.5;
    std::size_t sample_size = 800;
    std::size_t repeat = 0;
    std::uint64_t seed = 0;
};

struct MpePair {
    Sample x_f;
    Sample x_h;
    double kappa_star = 0.0;  // realized share of component-class rows in x_f
};

/// component_fraction of the chosen class forms the component pool; every
/// other row forms the mixture pool; sample_size rows are drawn from each
/// pool without replacement. Sample ids are dataset row indices.
MpePair make_mpe_pair(const LabeledDataset& ds, const SplitSpec& split);

struct CsvOptions {
    std::string label_column;
    std::set<std::string> positive_labels;
    std::set<std::string> negative_labels;  // empty: everything else is negative
};

/// Header-first RFC-4180 file. Numeric columns are kept, other columns are
/// one-hot encoded, all-missing columns and rows with any missing value are
/// dropped (both recorded in provenance), and every feature column is
/// standardised to mean 0 / variance 1.
LabeledDataset load_csv(const std::filesystem::path& path, const CsvOptions& opts);

/// Fields of each record; handles quoting, doubled quotes and CRLF.
std::vector<std::vector<std::string>> parse_csv(std::istream& in);

void write_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path);
nlohmann::json dataset_manifest(const LabeledDataset& ds);

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

}  // namespace mpe
