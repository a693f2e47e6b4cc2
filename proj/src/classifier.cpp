#include "mpe/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "mpe/rng.hpp"

namespace mpe {

namespace {

constexpr std::size_t kPredictChunk = 1024;
constexpr std::size_t kMaxProbeRows = 8;
constexpr double kFiniteDifferenceStep = 1e-5;

double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Forward pass on standardized inputs laid out one sample per column.
struct Forward {
    std::vector<Eigen::MatrixXd> pre;   // per layer, units x batch
    std::vector<Eigen::MatrixXd> post;  // hidden activations; last entry unused
    Eigen::RowVectorXd logit;
};

Forward forward(const std::vector<PosteriorModel::Layer>& layers, const Eigen::MatrixXd& input) {
    Forward f;
    f.pre.reserve(layers.size());
    f.post.reserve(layers.size());
    const Eigen::MatrixXd* a = &input;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Eigen::MatrixXd z = layers[l].weight * (*a);
        z.colwise() += layers[l].bias;
        f.pre.push_back(std::move(z));
        if (l + 1 < layers.size()) {
            f.post.push_back(f.pre.back().cwiseMax(0.0));
            a = &f.post.back();
        }
    }
    f.logit = f.pre.back().row(0);
    return f;
}

struct Grads {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
};

// Gradient of mean BCE w.r.t. every parameter (no weight decay).
Grads backward(const std::vector<PosteriorModel::Layer>& layers, const Eigen::MatrixXd& input,
               const Forward& f, const Eigen::RowVectorXd& labels) {
    const double batch = static_cast<double>(input.cols());
    Grads g;
    g.w.resize(layers.size());
    g.b.resize(layers.size());
    Eigen::MatrixXd delta(1, input.cols());
    for (Eigen::Index j = 0; j < input.cols(); ++j) {
        delta(0, j) = (sigmoid(f.logit(j)) - labels(j)) / batch;
    }
    for (std::size_t l = layers.size(); l-- > 0;) {
        const Eigen::MatrixXd& a_in = l == 0 ? input : f.post[l - 1];
        g.w[l] = delta * a_in.transpose();
        g.b[l] = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd back = layers[l].weight.transpose() * delta;
            delta = back.cwiseProduct((f.pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return g;
}

double mean_bce(const Eigen::RowVectorXd& logit, const Eigen::RowVectorXd& labels) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < logit.size(); ++j) {
        total += softplus(logit(j)) - labels(j) * logit(j);
    }
    return total / static_cast<double>(logit.size());
}

double squared_norm(const std::vector<PosteriorModel::Layer>& layers) {
    double s = 0.0;
    for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
    return s;
}

Eigen::MatrixXd standardize_columns(const PosteriorModel& model, const Eigen::MatrixXd& points) {
    Eigen::MatrixXd t = points.transpose();
    t.colwise() -= model.input_shift();
    t.array().colwise() /= model.input_scale().array();
    return t;
}

double accuracy(const Eigen::RowVectorXd& logit, const Eigen::RowVectorXd& labels) {
    if (logit.size() == 0) return 0.0;
    std::size_t hits = 0;
    for (Eigen::Index j = 0; j < logit.size(); ++j) {
        const bool predicted = logit(j) > 0.0;
        if (predicted == (labels(j) > 0.5)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logit.size());
}

std::vector<std::size_t> shuffled_range(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

}  // namespace

void TrainConfig::validate() const {
    if (hidden_layers < 1 || hidden_units < 1 || epochs < 1 || batch_size < 1) {
        throw std::invalid_argument("TrainConfig counts must be >= 1");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be non-negative");
    if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
        throw std::invalid_argument("validation_fraction must lie in (0, 0.5]");
    }
}

PosteriorModel::PosteriorModel(std::vector<Layer> layers, Eigen::VectorXd input_shift,
                               Eigen::VectorXd input_scale, FitRecord record)
    : layers_(std::move(layers)),
      shift_(std::move(input_shift)),
      scale_(std::move(input_scale)),
      record_(std::move(record)) {
    if (layers_.empty()) throw std::invalid_argument("model needs at least one layer");
    Eigen::Index in = layers_.front().weight.cols();
    for (const auto& l : layers_) {
        if (l.weight.cols() != in || l.bias.size() != l.weight.rows()) {
            throw std::invalid_argument("inconsistent layer shapes");
        }
        in = l.weight.rows();
    }
    if (layers_.back().weight.rows() != 1) throw std::invalid_argument("output layer must have one unit");
    if (shift_.size() != layers_.front().weight.cols() || scale_.size() != shift_.size()) {
        throw std::invalid_argument("input transform does not match input dimension");
    }
    if ((scale_.array() <= 0.0).any()) throw std::invalid_argument("input scale must be positive");
}

std::size_t PosteriorModel::input_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

Eigen::VectorXd PosteriorModel::logits(const Eigen::MatrixXd& points) const {
    if (static_cast<std::size_t>(points.cols()) != input_dim()) {
        throw std::invalid_argument("input dimension does not match the model");
    }
    Eigen::VectorXd out(points.rows());
    for (Eigen::Index start = 0; start < points.rows();
         start += static_cast<Eigen::Index>(kPredictChunk)) {
        const Eigen::Index len =
            std::min<Eigen::Index>(static_cast<Eigen::Index>(kPredictChunk), points.rows() - start);
        const Eigen::MatrixXd cols = standardize_columns(*this, points.middleRows(start, len));
        out.segment(start, len) = forward(layers_, cols).logit.transpose();
    }
    return out;
}

PosteriorModel init_network(std::size_t input_dim, const TrainConfig& cfg) {
    cfg.validate();
    if (input_dim < 1) throw std::invalid_argument("input dimension must be >= 1");
    std::mt19937_64 rng(derive_seed(cfg.seed, {1}));
    std::vector<PosteriorModel::Layer> layers;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l <= cfg.hidden_layers; ++l) {
        const std::size_t out = l == cfg.hidden_layers ? 1 : cfg.hidden_units;
        const double limit = std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> u(-limit, limit);
        PosteriorModel::Layer layer;
        layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(rng);
        }
        layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
        layers.push_back(std::move(layer));
        in = out;
    }
    const auto d = static_cast<Eigen::Index>(input_dim);
    return PosteriorModel(std::move(layers), Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d));
}

PosteriorModel fit(const Sample& x_f, const Sample& x_h, const TrainConfig& cfg) {
    cfg.validate();
    if (x_f.empty() || x_h.empty()) throw std::invalid_argument("training samples must be non-empty");
    if (x_f.dim() != x_h.dim()) throw std::invalid_argument("sample dimensions differ");
    const std::size_t d = x_f.dim();

    // Stratified split: the last validation_fraction of a seeded shuffle of
    // each class is held out.
    std::mt19937_64 split_rng(derive_seed(cfg.seed, {2}));
    auto split = [&](std::size_t n, std::vector<std::size_t>& train, std::vector<std::size_t>& val) {
        auto order = shuffled_range(n, split_rng);
        const std::size_t n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(n))));
        if (n < n_val + 2) throw std::invalid_argument("fewer than 2 training rows per side after validation split");
        train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
        val.assign(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
        std::sort(val.begin(), val.end());
    };
    std::vector<std::size_t> train_f, val_f, train_h, val_h;
    split(x_f.size(), train_f, val_f);
    split(x_h.size(), train_h, val_h);

    // Columns: training rows first, then validation rows.
    const std::size_t n_train = train_f.size() + train_h.size();
    const std::size_t n_val = val_f.size() + val_h.size();
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n_train + n_val));
    Eigen::RowVectorXd labels(static_cast<Eigen::Index>(n_train + n_val));
    Eigen::Index col = 0;
    auto put = [&](const Sample& s, const std::vector<std::size_t>& rows, double label) {
        for (std::size_t r : rows) {
            raw.col(col) = s.points().row(static_cast<Eigen::Index>(r)).transpose();
            labels(col++) = label;
        }
    };
    put(x_f, train_f, 1.0);
    put(x_h, train_h, 0.0);
    put(x_f, val_f, 1.0);
    put(x_h, val_h, 0.0);

    const auto train_cols = raw.leftCols(static_cast<Eigen::Index>(n_train));
    Eigen::VectorXd shift = train_cols.rowwise().mean();
    Eigen::VectorXd scale =
        ((train_cols.colwise() - shift).array().square().rowwise().mean()).sqrt().matrix();
    for (Eigen::Index i = 0; i < scale.size(); ++i) {
        if (!(scale(i) > 1e-12)) scale(i) = 1.0;
    }
    Eigen::MatrixXd data = raw;
    data.colwise() -= shift;
    data.array().colwise() /= scale.array();
    const Eigen::MatrixXd val_data = data.rightCols(static_cast<Eigen::Index>(n_val));
    const Eigen::RowVectorXd val_labels = labels.tail(static_cast<Eigen::Index>(n_val));

    PosteriorModel init = init_network(d, cfg);
    std::vector<PosteriorModel::Layer> layers = init.layers();
    std::vector<PosteriorModel::Layer> velocity = layers;
    for (auto& v : velocity) {
        v.weight.setZero();
        v.bias.setZero();
    }

    FitRecord record;
    record.validation_mixture_rows = val_f;
    record.validation_component_rows = val_h;
    std::vector<PosteriorModel::Layer> best = layers;
    double best_acc = -1.0;

    std::mt19937_64 epoch_rng(derive_seed(cfg.seed, {3}));
    Eigen::MatrixXd batch(static_cast<Eigen::Index>(d), 0);
    Eigen::RowVectorXd batch_labels;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = shuffled_range(n_train, epoch_rng);
        double loss_sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n_train - start);
            batch.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(len));
            batch_labels.resize(static_cast<Eigen::Index>(len));
            for (std::size_t j = 0; j < len; ++j) {
                batch.col(static_cast<Eigen::Index>(j)) = data.col(static_cast<Eigen::Index>(order[start + j]));
                batch_labels(static_cast<Eigen::Index>(j)) = labels(static_cast<Eigen::Index>(order[start + j]));
            }
            const Forward fw = forward(layers, batch);
            loss_sum += mean_bce(fw.logit, batch_labels) * static_cast<double>(len);
            hits += static_cast<std::size_t>(
                std::lround(accuracy(fw.logit, batch_labels) * static_cast<double>(len)));
            const Grads g = backward(layers, batch, fw, batch_labels);
            for (std::size_t l = 0; l < layers.size(); ++l) {
                velocity[l].weight = cfg.momentum * velocity[l].weight + g.w[l] +
                                     cfg.weight_decay * layers[l].weight;
                velocity[l].bias =
                    cfg.momentum * velocity[l].bias + g.b[l] + cfg.weight_decay * layers[l].bias;
                layers[l].weight -= cfg.learning_rate * velocity[l].weight;
                layers[l].bias -= cfg.learning_rate * velocity[l].bias;
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n_train);
        rec.train_accuracy = static_cast<double>(hits) / static_cast<double>(n_train);
        rec.validation_accuracy = accuracy(forward(layers, val_data).logit, val_labels);
        record.history.push_back(rec);
        if (rec.validation_accuracy > best_acc) {
            best_acc = rec.validation_accuracy;
            best = layers;
            record.best_epoch = epoch;
        }
    }
    record.best_validation_accuracy = best_acc;
    return PosteriorModel(std::move(best), std::move(shift), std::move(scale), std::move(record));
}

Eigen::VectorXd predict_posterior(const PosteriorModel& model, const Eigen::MatrixXd& points) {
    Eigen::VectorXd z = model.logits(points);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = sigmoid(z(i));
    return z;
}

Backprop backprop(const PosteriorModel& model, const Eigen::MatrixXd& points,
                  const Eigen::VectorXd& labels, double weight_decay) {
    if (static_cast<std::size_t>(points.cols()) != model.input_dim()) {
        throw std::invalid_argument("input dimension does not match the model");
    }
    if (labels.size() != points.rows() || points.rows() == 0) {
        throw std::invalid_argument("labels must match a non-empty batch");
    }
    const Eigen::MatrixXd input = standardize_columns(model, points);
    const Eigen::RowVectorXd y = labels.transpose();
    const Forward fw = forward(model.layers(), input);
    Grads g = backward(model.layers(), input, fw, y);
    Backprop out;
    out.loss = mean_bce(fw.logit, y) + 0.5 * weight_decay * squared_norm(model.layers());
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        g.w[l] += weight_decay * model.layers()[l].weight;
        g.b[l] += weight_decay * model.layers()[l].bias;
    }
    out.weight_grads = std::move(g.w);
    out.bias_grads = std::move(g.b);
    out.hidden_activations = fw.post;
    return out;
}

GradientCheck gradient_check(const PosteriorModel& model, const Eigen::MatrixXd& probe,
                             const Eigen::VectorXd& labels, double weight_decay) {
    if (probe.rows() > static_cast<Eigen::Index>(kMaxProbeRows)) {
        throw std::invalid_argument("probe batch must have at most 8 rows");
    }
    const Backprop bp = backprop(model, probe, labels, weight_decay);
    GradientCheck result;
    result.initial_loss = bp.loss;

    // Finite differences are taken in extended precision: at step 1e-5 the
    // double-precision rounding of the loss alone swamps gradients near 1e-9.
    using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using RowL = Eigen::Matrix<long double, 1, Eigen::Dynamic>;
    const MatL input = standardize_columns(model, probe).cast<long double>();
    const RowL y = labels.transpose().cast<long double>();
    std::vector<MatL> weights;
    std::vector<MatL> biases;
    for (const auto& layer : model.layers()) {
        weights.push_back(layer.weight.cast<long double>());
        biases.push_back(layer.bias.cast<long double>());
    }
    using Pattern = std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>>;
    const std::size_t depth = weights.size();
    // Unperturbed pre-activations per layer and the inputs feeding each layer.
    std::vector<MatL> pre(depth);
    std::vector<MatL> feed(depth);
    long double base_decay = 0.0L;
    feed[0] = input;
    for (std::size_t l = 0; l < depth; ++l) {
        pre[l] = weights[l] * feed[l];
        pre[l].colwise() += biases[l].col(0);
        if (l + 1 < depth) feed[l + 1] = pre[l].cwiseMax(0.0L);
        base_decay += weights[l].squaredNorm() + biases[l].squaredNorm();
    }
    // Loss after changing one parameter of row `row` in layer `layer` from
    // `old_value` to its current value; only that row of the layer's
    // pre-activations moves, later layers are recomputed in full.
    auto evaluate = [&](std::size_t layer, Eigen::Index row, long double old_value, long double new_value,
                        Pattern& pattern) {
        pattern.clear();
        MatL z = pre[layer];
        z.row(row) = weights[layer].row(row) * feed[layer];
        z.row(row).array() += biases[layer](row, 0);
        MatL a;
        for (std::size_t l = layer;; ++l) {
            if (l > layer) {
                z = weights[l] * a;
                z.colwise() += biases[l].col(0);
            }
            if (l + 1 == depth) break;
            pattern.push_back((z.array() > 0.0L).matrix());
            a = z.cwiseMax(0.0L);
        }
        long double total = 0.0L;
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            const long double t = z(0, j);
            const long double softplus = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
            total += softplus - y(j) * t;
        }
        const long double decay = base_decay - old_value * old_value + new_value * new_value;
        return total / static_cast<long double>(z.cols()) + 0.5L * weight_decay * decay;
    };
    Pattern base_pattern;
    for (std::size_t l = 0; l + 1 < depth; ++l) base_pattern.push_back((pre[l].array() > 0.0L).matrix());
    // sign patterns are compared from the perturbed layer onward
    auto smooth = [&](std::size_t layer, const Pattern& moved) {
        for (std::size_t k = 0; k < moved.size(); ++k) {
            if (moved[k] != base_pattern[layer + k]) return false;
        }
        return true;
    };
    Pattern moved;
    auto relative = [](double a, double b) {
        return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
    };

    const long double h = kFiniteDifferenceStep;
    auto probe_param = [&](std::size_t layer, Eigen::Index row, long double& param, double analytic) {
        const long double saved = param;
        param = saved + h;
        const long double up = evaluate(layer, row, saved, param, moved);
        const bool up_smooth = smooth(layer, moved);
        param = saved - h;
        const long double down = evaluate(layer, row, saved, param, moved);
        const bool down_smooth = smooth(layer, moved);
        param = saved;
        // a central difference straddling a kink does not estimate the derivative
        if (!up_smooth || !down_smooth) {
            ++result.kinks_skipped;
            return;
        }
        ++result.parameters_checked;
        const double numeric = static_cast<double>((up - down) / (2.0L * h));
        result.max_relative_error = std::max(result.max_relative_error, relative(analytic, numeric));
    };
    for (std::size_t l = 0; l < depth; ++l) {
        for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < weights[l].cols(); ++c) probe_param(l, r, weights[l](r, c), bp.weight_grads[l](r, c));
            probe_param(l, r, biases[l](r, 0), bp.bias_grads[l](r));
        }
    }
    return result;
}

GradientCheck gradient_check(const TrainConfig& cfg, const Eigen::MatrixXd& probe,
                             const Eigen::VectorXd& labels) {
    return gradient_check(init_network(static_cast<std::size_t>(probe.cols()), cfg), probe, labels,
                          cfg.weight_decay);
}

nlohmann::json to_json(const TrainConfig& cfg) {
    return {{"hidden_layers", cfg.hidden_layers},     {"hidden_units", cfg.hidden_units},
            {"epochs", cfg.epochs},                   {"batch_size", cfg.batch_size},
            {"learning_rate", cfg.learning_rate},     {"momentum", cfg.momentum},
            {"weight_decay", cfg.weight_decay},       {"validation_fraction", cfg.validation_fraction},
            {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
    TrainConfig c = base;
    c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
    c.hidden_units = j.value("hidden_units", c.hidden_units);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

nlohmann::json to_json(const PosteriorModel& model) {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : model.layers()) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weight.size()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
        }
        j["layers"].push_back({{"rows", l.weight.rows()},
                               {"cols", l.weight.cols()},
                               {"weight", w},
                               {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    const auto& s = model.input_shift();
    const auto& k = model.input_scale();
    j["input_shift"] = std::vector<double>(s.data(), s.data() + s.size());
    j["input_scale"] = std::vector<double>(k.data(), k.data() + k.size());
    j["best_epoch"] = model.record().best_epoch;
    j["best_validation_accuracy"] = model.record().best_validation_accuracy;
    return j;
}

PosteriorModel model_from_json(const nlohmann::json& j) {
    std::vector<PosteriorModel::Layer> layers;
    for (const auto& jl : j.at("layers")) {
        const auto rows = jl.at("rows").get<Eigen::Index>();
        const auto cols = jl.at("cols").get<Eigen::Index>();
        const auto w = jl.at("weight").get<std::vector<double>>();
        const auto b = jl.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
            throw std::invalid_argument("layer arrays do not match declared shape");
        }
        PosteriorModel::Layer layer;
        layer.weight.resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
        }
        layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
        layers.push_back(std::move(layer));
    }
    const auto s = j.at("input_shift").get<std::vector<double>>();
    const auto k = j.at("input_scale").get<std::vector<double>>();
    FitRecord record;
    record.best_epoch = j.value("best_epoch", std::size_t{0});
    record.best_validation_accuracy = j.value("best_validation_accuracy", 0.0);
    return PosteriorModel(std::move(layers),
                          Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())),
                          Eigen::Map<const Eigen::VectorXd>(k.data(), static_cast<Eigen::Index>(k.size())),
                          std::move(record));
}

}  // namespace mpe
