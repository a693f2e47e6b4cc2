// Sample-level regrouping: copy the mixture rows that look most like the
// component (lowest P(mu = F | x)) into the component sample, then estimate
// kappa(F | H~') instead of kappa(F | H).
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mpe/classifier.hpp"
#include "mpe/estimators.hpp"
#include "mpe/sample.hpp"

namespace mpe {

enum class Ranking { posterior_asc };

struct RegroupConfig {
    double copy_fraction = 0.10;
    Ranking ranking = Ranking::posterior_asc;
    TrainConfig classifier;
    /// Fit the estimation model with its own seed instead of sharing the
    /// ranking model's seed.
    bool independent_fits = false;

    void validate() const;
};

struct RegroupedSample {
    Sample h_tilde;                          // x_h rows, then the copied mixture rows
    std::vector<std::int64_t> copied_ids;    // in selection order
    std::vector<double> posteriors;          // P(mu = F | x) per mixture row
};

/// floor(p * n), guarding against p * n landing a hair below an integer.
std::size_t copy_count(double p, std::size_t n);

/// Positions of the floor(p * n) rows with the smallest posterior, ordered by
/// (posterior, id).
std::vector<std::size_t> select_regroup_rows(const std::vector<double>& posteriors,
                                             const std::vector<std::int64_t>& ids, double p);

std::vector<std::int64_t> select_regroup_set(const Sample& x_f, const PosteriorModel& model, double p);

RegroupedSample build_h_tilde(const Sample& x_f, const Sample& x_h, const RegroupConfig& cfg,
                              const PosteriorModel& ranking_model);
/// Trains the ranking model on (x_f, x_h) with cfg.classifier first.
RegroupedSample build_h_tilde(const Sample& x_f, const Sample& x_h, const RegroupConfig& cfg);

/// Seed of the model fitted on (x_f, h_tilde) for estimators that need one.
std::uint64_t estimation_seed(const RegroupConfig& cfg);

struct RegroupedEstimate {
    Estimate estimate;
    RegroupedSample regrouped;
};

/// Runs `estimator` on (x_f, h_tilde). Model-based estimators get a model
/// trained on (x_f, h_tilde); when nothing was copied and fits are shared,
/// that is the ranking model itself.
RegroupedEstimate regrouped_estimate(const Sample& x_f, const Sample& x_h, const RegroupConfig& cfg,
                                     const EstimatorSpec& estimator,
                                     const PosteriorModel* ranking_model = nullptr);

/// "id,posterior,copied" per mixture row.
std::string regrouped_csv(const Sample& x_f, const RegroupedSample& r);

}  // namespace mpe
