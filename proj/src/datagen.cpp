#include "mpe/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mpe/rng.hpp"

namespace mpe {

namespace {

constexpr std::size_t kMaxFilterRounds = 50;
constexpr double kMinFilterYield = 0.10;

Eigen::MatrixXd gaussian_block(std::size_t n, std::size_t dim, double mean, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = mean + z(rng);
    }
    return out;
}

std::vector<std::string> default_columns(std::size_t dim) {
    std::vector<std::string> cols;
    for (std::size_t j = 0; j < dim; ++j) cols.push_back("x" + std::to_string(j));
    return cols;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

bool is_missing(const std::string& v) {
    return v.empty() || v == "?" || v == "NA" || v == "N/A" || v == "nan" || v == "NaN";
}

bool parse_number(const std::string& v, double& out) {
    const char* first = v.data();
    const char* last = v.data() + v.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

void SyntheticSpec::validate() const {
    if (n < 50) throw std::invalid_argument("synthetic spec needs n >= 50 per class");
    if (dim < 1) throw std::invalid_argument("synthetic spec needs dim >= 1");
    if (!(kappa_star > 0.0 && kappa_star < 1.0)) throw std::invalid_argument("kappa_star must lie in (0, 1)");
    if (!(filter_low > 0.0 && filter_low < filter_high && filter_high < 1.0)) {
        throw std::invalid_argument("filter bounds must satisfy 0 < low < high < 1");
    }
}

std::string to_string(SyntheticSpec::Kind k) {
    return k == SyntheticSpec::Kind::irreducible ? "irreducible" : "reducible";
}

std::string to_string(ComponentSide s) { return s == ComponentSide::positive ? "positive" : "negative"; }

std::size_t LabeledDataset::count(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

void LabeledDataset::validate() const {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw std::invalid_argument("features and labels disagree in length");
    }
    if (count(0) == 0 || count(1) == 0) throw std::invalid_argument("dataset needs both classes");
    if (!features.allFinite()) throw std::invalid_argument("dataset contains non-finite features");
}

LabeledDataset gen_irreducible(const SyntheticSpec& spec) {
    spec.validate();
    if (spec.kind != SyntheticSpec::Kind::irreducible) throw std::invalid_argument("spec kind is not irreducible");
    std::mt19937_64 rng(derive_seed(spec.seed, {10}));
    LabeledDataset ds;
    ds.features.resize(static_cast<Eigen::Index>(2 * spec.n), static_cast<Eigen::Index>(spec.dim));
    ds.features.topRows(static_cast<Eigen::Index>(spec.n)) = gaussian_block(spec.n, spec.dim, 10.0, rng);
    ds.features.bottomRows(static_cast<Eigen::Index>(spec.n)) = gaussian_block(spec.n, spec.dim, 0.0, rng);
    ds.labels.assign(spec.n, 1);
    ds.labels.insert(ds.labels.end(), spec.n, 0);
    ds.name = "synthetic-irreducible";
    ds.columns = default_columns(spec.dim);
    ds.provenance = {{"generator", to_json(spec)}};
    return ds;
}

ReducibleDraw gen_reducible_with_filter(const SyntheticSpec& spec) {
    spec.validate();
    if (spec.kind != SyntheticSpec::Kind::reducible) throw std::invalid_argument("spec kind is not reducible");
    std::mt19937_64 rng(derive_seed(spec.seed, {20}));

    TrainConfig filter_cfg = spec.filter_classifier;
    filter_cfg.seed = derive_seed(spec.seed, {21});

    std::vector<Eigen::RowVectorXd> kept_pos;
    std::vector<Eigen::RowVectorXd> kept_neg;
    std::size_t drawn = 0;
    std::size_t rounds = 0;
    std::optional<PosteriorModel> filter;
    while (rounds < kMaxFilterRounds && (kept_pos.size() < spec.n || kept_neg.size() < spec.n)) {
        ++rounds;
        Eigen::MatrixXd pos = gaussian_block(spec.n, spec.dim, 1.0, rng);
        Eigen::MatrixXd neg = gaussian_block(spec.n, spec.dim, 0.0, rng);
        drawn += spec.n;
        if (!filter) filter = fit(Sample(pos, Provenance::mixture), Sample(neg, Provenance::component), filter_cfg);
        auto keep = [&](const Eigen::MatrixXd& block, std::vector<Eigen::RowVectorXd>& into) {
            const Eigen::VectorXd post = predict_posterior(*filter, block);
            for (Eigen::Index i = 0; i < block.rows() && into.size() < spec.n; ++i) {
                if (post(i) >= spec.filter_low && post(i) <= spec.filter_high) into.push_back(block.row(i));
            }
        };
        keep(pos, kept_pos);
        keep(neg, kept_neg);
    }
    const double yield =
        static_cast<double>(std::min(kept_pos.size(), kept_neg.size())) / static_cast<double>(drawn);
    if (kept_pos.size() < spec.n || kept_neg.size() < spec.n || yield < kMinFilterYield) {
        throw std::runtime_error("filter too aggressive");
    }

    ReducibleDraw out{LabeledDataset{}, std::move(*filter)};
    LabeledDataset& ds = out.data;
    ds.features.resize(static_cast<Eigen::Index>(2 * spec.n), static_cast<Eigen::Index>(spec.dim));
    for (std::size_t i = 0; i < spec.n; ++i) {
        ds.features.row(static_cast<Eigen::Index>(i)) = kept_pos[i];
        ds.features.row(static_cast<Eigen::Index>(spec.n + i)) = kept_neg[i];
    }
    ds.labels.assign(spec.n, 1);
    ds.labels.insert(ds.labels.end(), spec.n, 0);
    ds.name = "synthetic-reducible";
    ds.columns = default_columns(spec.dim);
    ds.provenance = {{"generator", to_json(spec)},
                     {"filter_seed", filter_cfg.seed},
                     {"filter_rounds", rounds},
                     {"filter_rows_drawn_per_class", drawn}};
    return out;
}

LabeledDataset gen_reducible(const SyntheticSpec& spec) { return gen_reducible_with_filter(spec).data; }

LabeledDataset generate(const SyntheticSpec& spec) {
    return spec.kind == SyntheticSpec::Kind::irreducible ? gen_irreducible(spec) : gen_reducible(spec);
}

MpePair make_mpe_pair(const LabeledDataset& ds, const SplitSpec& split) {
    ds.validate();
    if (!(split.component_fraction > 0.0 && split.component_fraction < 1.0)) {
        throw std::invalid_argument("component_fraction must lie in (0, 1)");
    }
    if (split.sample_size < 1) throw std::invalid_argument("sample_size must be >= 1");
    const int side_label = split.component_side == ComponentSide::positive ? 1 : 0;
    std::mt19937_64 rng(split.seed);

    std::vector<std::size_t> side_rows;
    std::vector<std::size_t> other_rows;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        (ds.labels[i] == side_label ? side_rows : other_rows).push_back(i);
    }
    std::shuffle(side_rows.begin(), side_rows.end(), rng);
    const auto n_component = static_cast<std::size_t>(
        std::llround(split.component_fraction * static_cast<double>(side_rows.size())));
    std::vector<std::size_t> component_pool(side_rows.begin(),
                                            side_rows.begin() + static_cast<std::ptrdiff_t>(n_component));
    std::vector<std::size_t> mixture_pool(side_rows.begin() + static_cast<std::ptrdiff_t>(n_component),
                                          side_rows.end());
    mixture_pool.insert(mixture_pool.end(), other_rows.begin(), other_rows.end());
    std::sort(mixture_pool.begin(), mixture_pool.end());

    if (component_pool.size() < split.sample_size) {
        throw std::invalid_argument("insufficient rows: component pool has " +
                                    std::to_string(component_pool.size()) + " rows, need " +
                                    std::to_string(split.sample_size));
    }
    if (mixture_pool.size() < split.sample_size) {
        throw std::invalid_argument("insufficient rows: mixture pool has " +
                                    std::to_string(mixture_pool.size()) + " rows, need " +
                                    std::to_string(split.sample_size));
    }
    std::shuffle(component_pool.begin(), component_pool.end(), rng);
    std::shuffle(mixture_pool.begin(), mixture_pool.end(), rng);
    component_pool.resize(split.sample_size);
    mixture_pool.resize(split.sample_size);

    auto build = [&](const std::vector<std::size_t>& rows, Provenance prov) {
        Eigen::MatrixXd pts(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
        std::vector<std::int64_t> ids;
        ids.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            pts.row(static_cast<Eigen::Index>(i)) = ds.features.row(static_cast<Eigen::Index>(rows[i]));
            ids.push_back(static_cast<std::int64_t>(rows[i]));
        }
        return Sample(std::move(pts), prov, std::move(ids));
    };

    MpePair pair;
    pair.x_f = build(mixture_pool, Provenance::mixture);
    pair.x_h = build(component_pool, Provenance::component);
    const auto component_rows = std::count_if(mixture_pool.begin(), mixture_pool.end(),
                                               [&](std::size_t r) { return ds.labels[r] == side_label; });
    pair.kappa_star = static_cast<double>(component_rows) / static_cast<double>(mixture_pool.size());
    return pair;
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    char c;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
    };
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field_started && field.empty()) {
                    quoted = true;
                    field_started = true;
                } else {
                    field.push_back(c);
                }
                break;
            case ',': end_field(); break;
            case '\r':
                if (in.peek() == '\n') in.get(c);
                end_record();
                break;
            case '\n': end_record(); break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (quoted) throw std::invalid_argument("unterminated quoted field");
    if (!field.empty() || !record.empty()) end_record();
    return records;
}

LabeledDataset load_csv(const std::filesystem::path& path, const CsvOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    auto records = parse_csv(in);
    if (records.empty()) throw std::invalid_argument("CSV file is empty");
    std::vector<std::string> header;
    for (const auto& h : records.front()) header.push_back(trim(h));
    const std::size_t width = header.size();
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != width) {
            throw std::invalid_argument("non-rectangular file: row " + std::to_string(r + 1) + " has " +
                                        std::to_string(records[r].size()) + " fields, header has " +
                                        std::to_string(width));
        }
        for (auto& v : records[r]) v = trim(v);
    }
    const auto label_it = std::find(header.begin(), header.end(), opts.label_column);
    if (label_it == header.end()) {
        std::string names;
        for (const auto& h : header) names += (names.empty() ? "" : ", ") + h;
        throw std::invalid_argument("label column '" + opts.label_column + "' not found; available columns: " + names);
    }
    const std::size_t label_col = static_cast<std::size_t>(label_it - header.begin());

    // Drop feature columns with no observed value at all.
    std::vector<std::size_t> feature_cols;
    std::vector<std::string> dropped_columns;
    for (std::size_t c = 0; c < width; ++c) {
        if (c == label_col) continue;
        const bool any = std::any_of(records.begin() + 1, records.end(),
                                     [&](const auto& rec) { return !is_missing(rec[c]); });
        if (any) {
            feature_cols.push_back(c);
        } else {
            dropped_columns.push_back(header[c]);
        }
    }

    std::vector<std::size_t> rows;
    std::size_t dropped_rows = 0;
    for (std::size_t r = 1; r < records.size(); ++r) {
        bool complete = !is_missing(records[r][label_col]);
        for (std::size_t c : feature_cols) complete = complete && !is_missing(records[r][c]);
        if (complete) {
            rows.push_back(r);
        } else {
            ++dropped_rows;
        }
    }

    // Column encodings: numeric when every kept value parses, else one-hot.
    struct Encoding {
        std::size_t source;
        bool numeric;
        std::vector<std::string> levels;
    };
    std::vector<Encoding> encodings;
    std::vector<std::string> columns;
    for (std::size_t c : feature_cols) {
        Encoding enc{c, true, {}};
        double tmp;
        for (std::size_t r : rows) {
            if (!parse_number(records[r][c], tmp)) {
                enc.numeric = false;
                break;
            }
        }
        if (enc.numeric) {
            columns.push_back(header[c]);
        } else {
            std::set<std::string> levels;
            for (std::size_t r : rows) levels.insert(records[r][c]);
            enc.levels.assign(levels.begin(), levels.end());
            for (const auto& l : enc.levels) columns.push_back(header[c] + "=" + l);
        }
        encodings.push_back(std::move(enc));
    }

    LabeledDataset ds;
    ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& rec = records[rows[i]];
        Eigen::Index out = 0;
        for (const auto& enc : encodings) {
            if (enc.numeric) {
                double v = 0.0;
                parse_number(rec[enc.source], v);
                ds.features(static_cast<Eigen::Index>(i), out++) = v;
            } else {
                for (const auto& l : enc.levels) {
                    ds.features(static_cast<Eigen::Index>(i), out++) = rec[enc.source] == l ? 1.0 : 0.0;
                }
            }
        }
        const std::string& label = rec[label_col];
        if (opts.positive_labels.count(label)) {
            ds.labels.push_back(1);
        } else if (opts.negative_labels.empty() || opts.negative_labels.count(label)) {
            ds.labels.push_back(0);
        } else {
            throw std::invalid_argument("unknown label value '" + label + "'");
        }
    }
    if (ds.count(1) == 0 || ds.count(0) == 0) {
        throw std::invalid_argument("a class is empty after binarising labels");
    }

    const auto n = static_cast<double>(rows.size());
    ds.standardization_mean = ds.features.colwise().mean().transpose();
    ds.standardization_scale.resize(ds.features.cols());
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
        const double var = (ds.features.col(j).array() - ds.standardization_mean(j)).square().sum() / n;
        const double sd = std::sqrt(var);
        ds.standardization_scale(j) = sd > 1e-12 ? sd : 1.0;
        ds.features.col(j) = (ds.features.col(j).array() - ds.standardization_mean(j)) / ds.standardization_scale(j);
    }
    ds.columns = std::move(columns);
    ds.name = path.stem().string();
    ds.provenance = {{"path", path.string()},
                     {"label_column", opts.label_column},
                     {"positive_labels", opts.positive_labels},
                     {"dropped_columns", dropped_columns},
                     {"dropped_rows", dropped_rows}};
    return ds;
}

void write_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(17);
    for (std::size_t j = 0; j < ds.columns.size(); ++j) out << ds.columns[j] << ',';
    out << "label\n";
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < ds.features.cols(); ++j) out << ds.features(i, j) << ',';
        out << ds.labels[static_cast<std::size_t>(i)] << '\n';
    }
}

nlohmann::json dataset_manifest(const LabeledDataset& ds) {
    nlohmann::json j;
    j["name"] = ds.name;
    j["n"] = ds.size();
    j["d"] = ds.features.cols();
    j["class_counts"] = {{"positive", ds.count(1)}, {"negative", ds.count(0)}};
    j["columns"] = ds.columns;
    if (ds.standardization_mean.size() > 0) {
        const auto& m = ds.standardization_mean;
        const auto& s = ds.standardization_scale;
        j["standardization"] = {{"mean", std::vector<double>(m.data(), m.data() + m.size())},
                                {"scale", std::vector<double>(s.data(), s.data() + s.size())}};
    }
    j["provenance"] = ds.provenance;
    if (ds.provenance.contains("generator")) j["seed"] = ds.provenance["generator"].value("seed", 0ULL);
    return j;
}

nlohmann::json to_json(const SyntheticSpec& spec) {
    return {{"kind", to_string(spec.kind)},
            {"dim", spec.dim},
            {"n", spec.n},
            {"kappa_star", spec.kappa_star},
            {"seed", spec.seed},
            {"filter_low", spec.filter_low},
            {"filter_high", spec.filter_high},
            {"filter_classifier", to_json(spec.filter_classifier)}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    const std::string kind = j.value("kind", std::string("irreducible"));
    if (kind == "irreducible") {
        s.kind = SyntheticSpec::Kind::irreducible;
    } else if (kind == "reducible") {
        s.kind = SyntheticSpec::Kind::reducible;
    } else {
        throw std::invalid_argument("unknown synthetic kind '" + kind + "'");
    }
    s.dim = j.value("dim", s.dim);
    s.n = j.value("n", s.n);
    s.kappa_star = j.value("kappa_star", s.kappa_star);
    s.seed = j.value("seed", s.seed);
    s.filter_low = j.value("filter_low", s.filter_low);
    s.filter_high = j.value("filter_high", s.filter_high);
    if (j.contains("filter_classifier")) s.filter_classifier = train_config_from_json(j["filter_classifier"]);
    s.validate();
    return s;
}

}  // namespace mpe
