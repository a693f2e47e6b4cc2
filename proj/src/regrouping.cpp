#include "mpe/regrouping.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "mpe/rng.hpp"

namespace mpe {

void RegroupConfig::validate() const {
    if (!(copy_fraction >= 0.0 && copy_fraction <= 0.5)) {
        throw std::invalid_argument("copy fraction must lie in [0, 0.5]");
    }
    classifier.validate();
}

std::size_t copy_count(double p, std::size_t n) {
    return static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 1e-9));
}

std::vector<std::size_t> select_regroup_rows(const std::vector<double>& posteriors,
                                             const std::vector<std::int64_t>& ids, double p) {
    if (posteriors.size() != ids.size()) throw std::invalid_argument("posteriors and ids differ in length");
    if (!(p >= 0.0 && p <= 0.5)) throw std::invalid_argument("copy fraction must lie in [0, 0.5]");
    const std::size_t k = copy_count(p, posteriors.size());
    if (p > 0.0 && k < 1) throw std::invalid_argument("copy fraction too small for sample");
    std::vector<std::size_t> order(posteriors.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t b) {
        if (posteriors[a] != posteriors[b]) return posteriors[a] < posteriors[b];
        return ids[a] < ids[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
    order.resize(k);
    return order;
}

namespace {

std::vector<double> posteriors_of(const Sample& x_f, const PosteriorModel& model) {
    const Eigen::VectorXd p = predict_posterior(model, x_f.points());
    return {p.data(), p.data() + p.size()};
}

}  // namespace

std::vector<std::int64_t> select_regroup_set(const Sample& x_f, const PosteriorModel& model, double p) {
    const auto rows = select_regroup_rows(posteriors_of(x_f, model), x_f.ids(), p);
    std::vector<std::int64_t> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(x_f.ids()[r]);
    return out;
}

RegroupedSample build_h_tilde(const Sample& x_f, const Sample& x_h, const RegroupConfig& cfg,
                              const PosteriorModel& ranking_model) {
    cfg.validate();
    if (x_f.dim() != x_h.dim()) throw std::invalid_argument("sample dimensions differ");
    RegroupedSample out;
    out.posteriors = posteriors_of(x_f, ranking_model);
    const auto rows = select_regroup_rows(out.posteriors, x_f.ids(), cfg.copy_fraction);

    Eigen::MatrixXd pts(static_cast<Eigen::Index>(x_h.size() + rows.size()), x_h.points().cols());
    pts.topRows(static_cast<Eigen::Index>(x_h.size())) = x_h.points();
    std::vector<std::int64_t> ids = x_h.ids();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        pts.row(static_cast<Eigen::Index>(x_h.size() + i)) = x_f.points().row(static_cast<Eigen::Index>(rows[i]));
        ids.push_back(x_f.ids()[rows[i]]);
        out.copied_ids.push_back(x_f.ids()[rows[i]]);
    }
    out.h_tilde = Sample(std::move(pts), Provenance::component, std::move(ids));
    return out;
}

RegroupedSample build_h_tilde(const Sample& x_f, const Sample& x_h, const RegroupConfig& cfg) {
    return build_h_tilde(x_f, x_h, cfg, fit(x_f, x_h, cfg.classifier));
}

std::uint64_t estimation_seed(const RegroupConfig& cfg) {
    return cfg.independent_fits ? derive_seed(cfg.classifier.seed, {7}) : cfg.classifier.seed;
}

RegroupedEstimate regrouped_estimate(const Sample& x_f, const Sample& x_h, const RegroupConfig& cfg,
                                     const EstimatorSpec& estimator,
                                     const PosteriorModel* ranking_model) {
    cfg.validate();
    std::optional<PosteriorModel> owned;
    if (!ranking_model) {
        owned = fit(x_f, x_h, cfg.classifier);
        ranking_model = &*owned;
    }
    RegroupedEstimate out;
    out.regrouped = build_h_tilde(x_f, x_h, cfg, *ranking_model);

    std::optional<PosteriorModel> estimation_model;
    const PosteriorModel* model = nullptr;
    if (estimator.needs_model()) {
        if (out.regrouped.copied_ids.empty() && !cfg.independent_fits) {
            model = ranking_model;
        } else {
            TrainConfig c = cfg.classifier;
            c.seed = estimation_seed(cfg);
            estimation_model = fit(x_f, out.regrouped.h_tilde, c);
            model = &*estimation_model;
        }
    }
    out.estimate = run_estimator(estimator, x_f, out.regrouped.h_tilde, model);
    return out;
}

std::string regrouped_csv(const Sample& x_f, const RegroupedSample& r) {
    std::unordered_set<std::int64_t> copied(r.copied_ids.begin(), r.copied_ids.end());
    std::ostringstream os;
    os << std::setprecision(17) << "id,posterior,copied\n";
    for (std::size_t i = 0; i < x_f.size(); ++i) {
        const auto id = x_f.ids()[i];
        os << id << ',' << r.posteriors.at(i) << ',' << (copied.count(id) ? 1 : 0) << '\n';
    }
    return os.str();
}

}  // namespace mpe
