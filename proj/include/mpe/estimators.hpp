// Sample-based estimators of kappa(F|H), the maximum proportion of the
// component H present in the mixture F.
//
//   roc  - plug-in minimum of F(S)/H(S) over upper-level sets of a
//          component score, with a sqrt(log n / n) penalty
//   en   - Elkan-Noto style labeling-frequency estimator
//   km   - kernel mean matching: the distance curve d(lambda) between the
//          mixture embedding and the best lambda-mixture of H with a
//          reweighted mixture sample; kappa is read off where d starts to
//          grow (km1: absolute slope threshold, km2: threshold relative to
//          the terminal slope)
#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mpe/classifier.hpp"
#include "mpe/sample.hpp"

namespace mpe {

enum class Method { roc, en, km };
enum class KmVariant { km1, km2 };
/// Projected gradient steps for the simplex QP: 1/(L sqrt(t)), 1/L, or 1/L
/// with Nesterov momentum and restarts.
enum class StepRule { diminishing, constant, accelerated };
std::string to_string(StepRule r);
StepRule step_rule_from_string(const std::string& s);

struct ThresholdPoint {
    double threshold = 0.0;
    double f_hat = 0.0;  // fraction of the mixture sample scoring above threshold
    double h_hat = 0.0;  // same for the component sample
};

struct LambdaPoint {
    double lambda = 0.0;
    double distance = 0.0;
};

struct Estimate {
    double kappa_hat = 0.0;
    std::string method;
    std::uint64_t seed = 0;

    std::vector<ThresholdPoint> threshold_trace;  // roc
    std::optional<double> chosen_threshold;       // roc
    std::optional<double> labeling_frequency;     // en
    std::vector<LambdaPoint> distance_curve;      // km
    std::optional<double> bandwidth;              // km
    bool qp_converged = true;                     // km
};

struct RocConfig {
    double penalty_scale = 0.5;
    double min_component_mass = 0.05;
    std::size_t grid_size = 200;

    void validate() const;
};

struct KmConfig {
    KmVariant variant = KmVariant::km2;
    double bandwidth_multiplier = 1.0;
    std::size_t lambda_grid = 64;
    std::size_t qp_iterations = 500;
    StepRule step_rule = StepRule::accelerated;
    double qp_tolerance = 1e-4;
    double km1_slope = 0.1;   // absolute slope threshold
    double km2_ratio = 0.5;   // fraction of the terminal slope

    void validate() const;
};

/// Which estimator to run, with its configuration. KM ignores the model.
struct EstimatorSpec {
    Method method = Method::roc;
    RocConfig roc;
    KmConfig km;

    std::string name() const;
    bool needs_model() const { return method != Method::km; }
};

struct EmpiricalKappa {
    std::vector<ThresholdPoint> trace;
    double value = std::numeric_limits<double>::quiet_NaN();
    std::optional<std::size_t> best;  // index into trace
};

/// Plug-in min over thresholds t with H_t >= min_component_mass of
/// (F_t + penalty) / H_t, where F_t, H_t are the fractions of each sample
/// with score > t. Higher scores must mean "more component-like". The
/// threshold family is the distinct pooled scores (plus -inf) when there are
/// at most grid_size of them, otherwise grid_size pooled quantiles.
EmpiricalKappa empirical_kappa(const std::vector<double>& f_scores,
                               const std::vector<double>& h_scores, std::size_t grid_size,
                               double min_component_mass, double penalty = 0.0);

/// ROC estimator on precomputed component scores.
Estimate roc_estimate(const std::vector<double>& f_scores, const std::vector<double>& h_scores,
                      const RocConfig& cfg);
/// ROC estimator using 1 - P(mu = F | x) from a model trained on the pair.
Estimate roc_estimate(const Sample& x_f, const Sample& x_h, const PosteriorModel& model,
                      const RocConfig& cfg);

/// Elkan-Noto on component scores g(x): c = mean g over held-out component
/// rows, kappa = clamp(mean_F g / c, 0, 1).
Estimate en_estimate(const std::vector<double>& f_scores,
                     const std::vector<double>& heldout_h_scores);
/// Held-out rows are the model's validation rows of x_h (or the last fifth
/// of x_h when the model carries none).
Estimate en_estimate(const Sample& x_f, const Sample& x_h, const PosteriorModel& model);

Estimate km_estimate(const Sample& x_f, const Sample& x_h, const KmConfig& cfg);

Estimate run_estimator(const EstimatorSpec& spec, const Sample& x_f, const Sample& x_h,
                       const PosteriorModel* model);

struct SimplexQp {
    Eigen::VectorXd w;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Minimises a^2 w'Kw - 2a w'target + constant over the probability simplex
/// by projected gradient, starting from w0. Converged means one step changed
/// the objective by at most cfg.qp_tolerance * max(objective, 1e-3 * scale);
/// `scale` should be the size of the objective at w = uniform, lambda = 0.
SimplexQp solve_simplex_qp(const Eigen::MatrixXd& k, const Eigen::VectorXd& target, double a, double constant,
                           double top_eigenvalue, double scale, Eigen::VectorXd w0, const KmConfig& cfg);

/// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

/// Component scores 1 - P(mu = F | x), computed from logits.
std::vector<double> component_scores(const PosteriorModel& model, const Eigen::MatrixXd& points);

/// CSV trace: "threshold,f_hat,h_hat" or "lambda,distance".
std::string trace_csv(const Estimate& e);

}  // namespace mpe
