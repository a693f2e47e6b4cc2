// Binary posterior estimator P(mu = F | X = x): a small rectifier network
// trained with mini-batch SGD on mixture (label 1) vs component (label 0).
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mpe/sample.hpp"

namespace mpe {

struct TrainConfig {
    std::size_t hidden_layers = 2;
    std::size_t hidden_units = 50;
    std::size_t epochs = 150;
    std::size_t batch_size = 50;
    double learning_rate = 0.01;
    double momentum = 0.0;
    double weight_decay = 1e-5;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double validation_accuracy = 0.0;
};

/// What happened during fit: per-epoch trace, the epoch whose weights were
/// kept, and which rows of each input sample were held out for validation.
struct FitRecord {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_validation_accuracy = 0.0;
    std::vector<std::size_t> validation_mixture_rows;
    std::vector<std::size_t> validation_component_rows;
};

class PosteriorModel {
public:
    struct Layer {
        Eigen::MatrixXd weight;  // out x in
        Eigen::VectorXd bias;    // out
    };

    PosteriorModel() = default;
    /// Hidden layers use the rectifier, the last layer (one unit) the
    /// logistic. Inputs are mapped through (x - shift) / scale first.
    PosteriorModel(std::vector<Layer> layers, Eigen::VectorXd input_shift,
                   Eigen::VectorXd input_scale, FitRecord record = {});

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    const Eigen::VectorXd& input_shift() const noexcept { return shift_; }
    const Eigen::VectorXd& input_scale() const noexcept { return scale_; }
    const FitRecord& record() const noexcept { return record_; }
    std::size_t input_dim() const;

    /// Pre-sigmoid output for each row of `points`.
    Eigen::VectorXd logits(const Eigen::MatrixXd& points) const;

private:
    std::vector<Layer> layers_;
    Eigen::VectorXd shift_;
    Eigen::VectorXd scale_;
    FitRecord record_;
};

/// He-style uniform initialisation from cfg.seed; identity input transform.
PosteriorModel init_network(std::size_t input_dim, const TrainConfig& cfg);

/// Trains on x_f (label 1) vs x_h (label 0) and returns the snapshot with
/// the best validation accuracy (earliest epoch on ties). Deterministic in
/// cfg.seed.
PosteriorModel fit(const Sample& x_f, const Sample& x_h, const TrainConfig& cfg);

/// Elementwise logistic output in [0, 1].
Eigen::VectorXd predict_posterior(const PosteriorModel& model, const Eigen::MatrixXd& points);

struct Backprop {
    double loss = 0.0;  // mean binary cross-entropy + (weight_decay / 2) * |theta|^2
    std::vector<Eigen::MatrixXd> weight_grads;
    std::vector<Eigen::VectorXd> bias_grads;
    std::vector<Eigen::MatrixXd> hidden_activations;  // units x batch, per hidden layer
};

Backprop backprop(const PosteriorModel& model, const Eigen::MatrixXd& points,
                  const Eigen::VectorXd& labels, double weight_decay);

struct GradientCheck {
    double max_relative_error = 0.0;
    double initial_loss = 0.0;
    std::size_t parameters_checked = 0;
    std::size_t kinks_skipped = 0;  // perturbation flipped a rectifier, so no valid difference
};

/// Compares backprop gradients with central differences (step 1e-5) on a
/// probe batch of at most 8 rows; error per parameter is
/// |g_bp - g_fd| / max(1e-8, |g_bp| + |g_fd|). Parameters whose +-step moves
/// any hidden pre-activation across zero are skipped and counted.
GradientCheck gradient_check(const PosteriorModel& model, const Eigen::MatrixXd& probe,
                             const Eigen::VectorXd& labels, double weight_decay);
GradientCheck gradient_check(const TrainConfig& cfg, const Eigen::MatrixXd& probe,
                             const Eigen::VectorXd& labels);

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Layer-major dump with row-major weight arrays.
nlohmann::json to_json(const PosteriorModel& model);
PosteriorModel model_from_json(const nlohmann::json& j);

}  // namespace mpe
