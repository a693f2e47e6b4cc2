#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mpe/datagen.hpp"

using namespace mpe;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
    const auto dir = std::filesystem::temp_directory_path() / "mpe_test_datagen";
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    std::ofstream(path, std::ios::binary) << body;
    return path;
}

SyntheticSpec small_spec(SyntheticSpec::Kind kind, std::uint64_t seed) {
    SyntheticSpec s;
    s.kind = kind;
    s.n = 200;
    s.dim = 3;
    s.seed = seed;
    s.filter_classifier.epochs = 20;
    return s;
}

}  // namespace

TEST(Synthetic, IrreducibleShapeAndMeans) {
    const auto ds = gen_irreducible(small_spec(SyntheticSpec::Kind::irreducible, 1));
    ASSERT_EQ(ds.size(), 400u);
    EXPECT_EQ(ds.count(1), 200u);
    EXPECT_EQ(ds.features.cols(), 3);
    const Eigen::RowVectorXd pos_mean = ds.features.topRows(200).colwise().mean();
    const Eigen::RowVectorXd neg_mean = ds.features.bottomRows(200).colwise().mean();
    for (Eigen::Index j = 0; j < 3; ++j) {
        EXPECT_NEAR(pos_mean(j), 10.0, 0.3);
        EXPECT_NEAR(neg_mean(j), 0.0, 0.3);
    }
    EXPECT_EQ(ds.columns, (std::vector<std::string>{"x0", "x1", "x2"}));
}

TEST(Synthetic, DeterministicInSeed) {
    const auto a = gen_irreducible(small_spec(SyntheticSpec::Kind::irreducible, 2));
    const auto b = gen_irreducible(small_spec(SyntheticSpec::Kind::irreducible, 2));
    const auto c = gen_irreducible(small_spec(SyntheticSpec::Kind::irreducible, 3));
    EXPECT_TRUE(a.features == b.features);
    EXPECT_FALSE(a.features == c.features);
}

TEST(Synthetic, ReducibleRowsLieInsideFilterBand) {
    const auto spec = small_spec(SyntheticSpec::Kind::reducible, 4);
    const auto draw = gen_reducible_with_filter(spec);
    ASSERT_EQ(draw.data.size(), 400u);
    const Eigen::VectorXd post = predict_posterior(draw.filter, draw.data.features);
    EXPECT_GE(post.minCoeff(), spec.filter_low);
    EXPECT_LE(post.maxCoeff(), spec.filter_high);
    EXPECT_TRUE(draw.data.provenance.contains("filter_rounds"));
    const auto again = gen_reducible(spec);
    EXPECT_TRUE(again.features == draw.data.features);
}

TEST(Synthetic, SpecValidationAndJson) {
    auto s = small_spec(SyntheticSpec::Kind::reducible, 5);
    EXPECT_EQ(to_json(synthetic_spec_from_json(to_json(s))), to_json(s));
    s.n = 10;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = small_spec(SyntheticSpec::Kind::reducible, 5);
    s.filter_low = 0.9;
    s.filter_high = 0.1;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    EXPECT_THROW(synthetic_spec_from_json({{"kind", "weird"}}), std::invalid_argument);
    EXPECT_THROW(gen_irreducible(small_spec(SyntheticSpec::Kind::reducible, 1)), std::invalid_argument);
}

TEST(MpePair, SplitProtocol) {
    const auto ds = gen_irreducible(small_spec(SyntheticSpec::Kind::irreducible, 6));
    SplitSpec split;
    split.component_fraction = 0.5;
    split.sample_size = 100;
    split.seed = 99;
    const auto pair = make_mpe_pair(ds, split);
    ASSERT_EQ(pair.x_f.size(), 100u);
    ASSERT_EQ(pair.x_h.size(), 100u);
    std::set<std::int64_t> f_ids(pair.x_f.ids().begin(), pair.x_f.ids().end());
    std::size_t from_side = 0;
    for (auto id : pair.x_h.ids()) {
        EXPECT_EQ(ds.labels[static_cast<std::size_t>(id)], 1);
        EXPECT_FALSE(f_ids.count(id)) << "row " << id << " in both samples";
    }
    for (auto id : pair.x_f.ids()) from_side += ds.labels[static_cast<std::size_t>(id)] == 1;
    EXPECT_DOUBLE_EQ(pair.kappa_star, static_cast<double>(from_side) / 100.0);
    // mixture pool holds 100 positives and 200 negatives
    EXPECT_NEAR(pair.kappa_star, 1.0 / 3.0, 0.15);
    for (std::size_t i = 0; i < pair.x_f.size(); ++i) {
        EXPECT_TRUE(pair.x_f.points().row(static_cast<Eigen::Index>(i)) ==
                    ds.features.row(pair.x_f.ids()[i]));
    }
    EXPECT_TRUE(make_mpe_pair(ds, split).x_f == pair.x_f);
}

TEST(MpePair, NegativeSideAndInsufficientRows) {
    const auto ds = gen_irreducible(small_spec(SyntheticSpec::Kind::irreducible, 7));
    SplitSpec split;
    split.component_side = ComponentSide::negative;
    split.component_fraction = 0.25;
    split.sample_size = 50;
    const auto pair = make_mpe_pair(ds, split);
    for (auto id : pair.x_h.ids()) EXPECT_EQ(ds.labels[static_cast<std::size_t>(id)], 0);
    split.sample_size = 51;
    try {
        make_mpe_pair(ds, split);
        FAIL() << "expected an error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("insufficient rows"), std::string::npos);
    }
    split.component_fraction = 1.0;
    EXPECT_THROW(make_mpe_pair(ds, split), std::invalid_argument);
}

TEST(Csv, ParsesQuotingAndLineEndings) {
    std::istringstream in("a,b,c\r\n\"x,1\",\"say \"\"hi\"\"\",\n\"multi\nline\",2,3\n\n");
    const auto rows = parse_csv(in);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1], (std::vector<std::string>{"x,1", "say \"hi\"", ""}));
    EXPECT_EQ(rows[2][0], "multi\nline");
    std::istringstream bad("a,\"open\n");
    EXPECT_THROW(parse_csv(bad), std::invalid_argument);
}

TEST(Csv, EncodesStandardisesAndDrops) {
    const auto path = temp_file("mixed.csv",
                                "num,color,empty,label\n"
                                "1,red,,yes\n"
                                "2,blue,,no\n"
                                "?,red,,yes\n"
                                "3,red,,no\n"
                                "6,green,NA,yes\n");
    CsvOptions opts;
    opts.label_column = "label";
    opts.positive_labels = {"yes"};
    const auto ds = load_csv(path, opts);
    ASSERT_EQ(ds.size(), 4u);
    EXPECT_EQ(ds.columns, (std::vector<std::string>{"num", "color=blue", "color=green", "color=red"}));
    EXPECT_EQ(ds.labels, (std::vector<int>{1, 0, 0, 1}));
    EXPECT_EQ(ds.provenance["dropped_rows"], 1);
    EXPECT_EQ(ds.provenance["dropped_columns"], nlohmann::json::array({"empty"}));
    // num column raw values 1,2,3,6: mean 3, population sd sqrt(3.5)
    EXPECT_DOUBLE_EQ(ds.standardization_mean(0), 3.0);
    EXPECT_NEAR(ds.standardization_scale(0), std::sqrt(3.5), 1e-15);
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
        EXPECT_NEAR(ds.features.col(j).mean(), 0.0, 1e-12);
        EXPECT_NEAR(ds.features.col(j).squaredNorm() / 4.0, 1.0, 1e-12);
    }
}

TEST(Csv, LabelErrors) {
    const auto path = temp_file("labels.csv", "x,y\n1,a\n2,b\n3,c\n");
    CsvOptions opts;
    opts.label_column = "z";
    try {
        load_csv(path, opts);
        FAIL() << "expected an error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("available columns: x, y"), std::string::npos);
    }
    opts.label_column = "y";
    opts.positive_labels = {"a"};
    opts.negative_labels = {"b"};
    EXPECT_THROW(load_csv(path, opts), std::invalid_argument);
    opts.negative_labels.clear();
    EXPECT_EQ(load_csv(path, opts).count(0), 2u);
    opts.positive_labels = {"q"};
    EXPECT_THROW(load_csv(path, opts), std::invalid_argument);
    EXPECT_THROW(load_csv(temp_file("ragged.csv", "x,y\n1\n"), opts), std::invalid_argument);
    EXPECT_THROW(load_csv("/nonexistent/file.csv", opts), std::runtime_error);
}

TEST(Csv, WrittenDatasetReloads) {
    const auto ds = gen_irreducible(small_spec(SyntheticSpec::Kind::irreducible, 8));
    const auto dir = std::filesystem::temp_directory_path() / "mpe_test_datagen";
    std::filesystem::create_directories(dir);
    const auto path = dir / "synthetic.csv";
    write_dataset_csv(ds, path);
    CsvOptions opts;
    opts.label_column = "label";
    opts.positive_labels = {"1"};
    const auto back = load_csv(path, opts);
    EXPECT_EQ(back.labels, ds.labels);
    // reloading standardises, so compare against the standardised original
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
        const Eigen::ArrayXd col = ds.features.col(j).array();
        const double mean = col.mean();
        const double sd = std::sqrt((col - mean).square().mean());
        EXPECT_TRUE(back.features.col(j).isApprox(((col - mean) / sd).matrix(), 1e-12));
    }
    const auto manifest = dataset_manifest(ds);
    EXPECT_EQ(manifest["n"], 400);
    EXPECT_EQ(manifest["seed"], 8);
}
