#include "mpe/estimators.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mpe {

namespace {

constexpr std::size_t kMinKmRows = 16;
constexpr std::size_t kMedianRows = 1000;
constexpr int kPowerIterations = 100;

double fraction_above(const std::vector<double>& sorted, double t) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
    return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

std::vector<double> threshold_family(const std::vector<double>& f, const std::vector<double>& h,
                                     std::size_t grid_size) {
    std::vector<double> pooled;
    pooled.reserve(f.size() + h.size());
    pooled.insert(pooled.end(), f.begin(), f.end());
    pooled.insert(pooled.end(), h.begin(), h.end());
    std::sort(pooled.begin(), pooled.end());

    std::vector<double> distinct = pooled;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::vector<double> out{-std::numeric_limits<double>::infinity()};
    if (distinct.size() <= grid_size) {
        out.insert(out.end(), distinct.begin(), distinct.end());
        return out;
    }
    const std::size_t n = pooled.size();
    for (std::size_t k = 1; k < grid_size; ++k) {
        const double t = pooled[k * n / grid_size];
        if (t != out.back()) out.push_back(t);
    }
    return out;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const Eigen::VectorXd na = a.rowwise().squaredNorm();
    const Eigen::VectorXd nb = b.rowwise().squaredNorm();
    Eigen::MatrixXd d = -2.0 * a * b.transpose();
    d.colwise() += na;
    d.rowwise() += nb.transpose();
    return d.cwiseMax(0.0);
}

Eigen::MatrixXd rbf(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double bandwidth) {
    const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    return (-gamma * squared_distances(a, b)).array().exp().matrix();
}

double median_pairwise_distance(const Eigen::MatrixXd& f, const Eigen::MatrixXd& h) {
    const Eigen::Index total = f.rows() + h.rows();
    const Eigen::Index keep = std::min<Eigen::Index>(total, static_cast<Eigen::Index>(kMedianRows));
    Eigen::MatrixXd pooled(keep, f.cols());
    for (Eigen::Index i = 0; i < keep; ++i) {
        const Eigen::Index src = i * total / keep;  // even stride over the pooled rows
        pooled.row(i) = src < f.rows() ? f.row(src) : h.row(src - f.rows());
    }
    const Eigen::MatrixXd d2 = squared_distances(pooled, pooled);
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(keep * (keep - 1) / 2));
    for (Eigen::Index i = 0; i < keep; ++i) {
        for (Eigen::Index j = i + 1; j < keep; ++j) dist.push_back(std::sqrt(d2(i, j)));
    }
    if (dist.empty()) return 1.0;
    auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    return *mid > 0.0 ? *mid : 1.0;
}

double top_eigenvalue(const Eigen::MatrixXd& k) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(k.rows()).normalized();
    double lambda = 0.0;
    for (int it = 0; it < kPowerIterations; ++it) {
        Eigen::VectorXd next = k * v;
        lambda = next.norm();
        if (lambda <= 0.0) return 0.0;
        v = next / lambda;
    }
    return lambda;
}

}  // namespace

SimplexQp solve_simplex_qp(const Eigen::MatrixXd& k, const Eigen::VectorXd& target, double a, double constant,
                           double top_eigenvalue, double scale, Eigen::VectorXd w0, const KmConfig& cfg) {
    // objective a^2 w'Kw - 2a w't + constant, gradient 2a^2 Kw - 2a t
    const double lipschitz = std::max(2.0 * a * a * top_eigenvalue, 1e-12);
    const bool accelerated = cfg.step_rule == StepRule::accelerated;
    auto objective = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& kx) {
        return a * a * x.dot(kx) - 2.0 * a * x.dot(target) + constant;
    };
    auto gradient = [&](const Eigen::VectorXd& kx) -> Eigen::VectorXd { return 2.0 * a * a * kx - 2.0 * a * target; };
    const double floor = std::max(1e-3 * scale, 1e-15);

    SimplexQp out;
    out.w = project_to_simplex(w0);
    Eigen::VectorXd kw = k * out.w;
    out.objective = objective(out.w, kw);
    Eigen::VectorXd y = out.w;
    Eigen::VectorXd ky = kw;
    double momentum = 1.0;
    for (std::size_t s = 1; s <= cfg.qp_iterations; ++s) {
        out.iterations = s;
        double eta = 1.0 / lipschitz;
        if (cfg.step_rule == StepRule::diminishing) eta /= std::sqrt(static_cast<double>(s));
        Eigen::VectorXd next = project_to_simplex(accelerated ? Eigen::VectorXd(y - eta * gradient(ky))
                                                              : Eigen::VectorXd(out.w - eta * gradient(kw)));
        Eigen::VectorXd k_next = k * next;
        const double next_obj = objective(next, k_next);
        if (accelerated) {
            if (next_obj > out.objective && momentum > 1.0) {
                // restart: drop the momentum and step again from the current iterate
                momentum = 1.0;
                y = out.w;
                ky = kw;
                continue;
            }
            const double m_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
            const double beta = (momentum - 1.0) / m_next;
            y = next + beta * (next - out.w);
            ky = k_next + beta * (k_next - kw);
            momentum = m_next;
        }
        const double change = std::abs(out.objective - next_obj) / std::max(std::abs(next_obj), floor);
        out.w = std::move(next);
        kw = std::move(k_next);
        out.objective = next_obj;
        if (change <= cfg.qp_tolerance) {
            out.converged = true;
            break;
        }
    }
    return out;
}

std::string to_string(StepRule r) {
    switch (r) {
        case StepRule::diminishing: return "diminishing";
        case StepRule::constant: return "constant";
        case StepRule::accelerated: return "accelerated";
    }
    return "unknown";
}

StepRule step_rule_from_string(const std::string& s) {
    if (s == "diminishing") return StepRule::diminishing;
    if (s == "constant") return StepRule::constant;
    if (s == "accelerated") return StepRule::accelerated;
    throw std::invalid_argument("unknown step rule: " + s);
}

void RocConfig::validate() const {
    if (penalty_scale < 0.0) throw std::invalid_argument("penalty_scale must be non-negative");
    if (!(min_component_mass > 0.0 && min_component_mass < 1.0)) {
        throw std::invalid_argument("min_component_mass must lie in (0, 1)");
    }
    if (grid_size < 10) throw std::invalid_argument("threshold grid must have at least 10 points");
}

void KmConfig::validate() const {
    if (!(bandwidth_multiplier > 0.0)) throw std::invalid_argument("bandwidth multiplier must be positive");
    if (lambda_grid < 8) throw std::invalid_argument("lambda grid must have at least 8 points");
    if (qp_iterations < 50) throw std::invalid_argument("qp iterations must be >= 50");
    if (!(qp_tolerance > 0.0)) throw std::invalid_argument("qp tolerance must be positive");
    if (km1_slope < 0.0 || !(km2_ratio > 0.0)) throw std::invalid_argument("invalid slope thresholds");
}

std::string EstimatorSpec::name() const {
    switch (method) {
        case Method::roc: return "roc";
        case Method::en: return "en";
        case Method::km: return km.variant == KmVariant::km1 ? "km1" : "km2";
    }
    return "unknown";
}

EmpiricalKappa empirical_kappa(const std::vector<double>& f_scores,
                               const std::vector<double>& h_scores, std::size_t grid_size,
                               double min_component_mass, double penalty) {
    if (f_scores.empty() || h_scores.empty()) throw std::invalid_argument("score vectors must be non-empty");
    std::vector<double> f = f_scores;
    std::vector<double> h = h_scores;
    std::sort(f.begin(), f.end());
    std::sort(h.begin(), h.end());

    EmpiricalKappa out;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (double t : threshold_family(f, h, grid_size)) {
        ThresholdPoint p{t, fraction_above(f, t), fraction_above(h, t)};
        out.trace.push_back(p);
        if (p.h_hat < min_component_mass) continue;
        const double ratio = (p.f_hat + penalty) / p.h_hat;
        if (ratio < best_ratio) {
            best_ratio = ratio;
            out.best = out.trace.size() - 1;
        }
    }
    if (out.best) out.value = std::clamp(best_ratio, 0.0, 1.0);
    return out;
}

Estimate roc_estimate(const std::vector<double>& f_scores, const std::vector<double>& h_scores,
                      const RocConfig& cfg) {
    cfg.validate();
    const double n = static_cast<double>(f_scores.size());
    const double penalty = n > 0 ? cfg.penalty_scale * std::sqrt(std::log(n) / n) : 0.0;
    EmpiricalKappa ek = empirical_kappa(f_scores, h_scores, cfg.grid_size, cfg.min_component_mass, penalty);
    if (!ek.best) throw std::runtime_error("degenerate score distribution");
    Estimate e;
    e.method = "roc";
    e.kappa_hat = ek.value;
    e.chosen_threshold = ek.trace[*ek.best].threshold;
    e.threshold_trace = std::move(ek.trace);
    return e;
}

std::vector<double> component_scores(const PosteriorModel& model, const Eigen::MatrixXd& points) {
    const Eigen::VectorXd z = model.logits(points);
    std::vector<double> s(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        // 1 - sigmoid(z) = sigmoid(-z)
        const double v = -z(i);
        s[static_cast<std::size_t>(i)] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return s;
}

Estimate roc_estimate(const Sample& x_f, const Sample& x_h, const PosteriorModel& model,
                      const RocConfig& cfg) {
    return roc_estimate(component_scores(model, x_f.points()), component_scores(model, x_h.points()), cfg);
}

Estimate en_estimate(const std::vector<double>& f_scores,
                     const std::vector<double>& heldout_h_scores) {
    if (f_scores.empty() || heldout_h_scores.empty()) {
        throw std::invalid_argument("score vectors must be non-empty");
    }
    const double c = std::accumulate(heldout_h_scores.begin(), heldout_h_scores.end(), 0.0) /
                     static_cast<double>(heldout_h_scores.size());
    if (c < 1e-6) throw std::runtime_error("degenerate labeling frequency");
    const double mean_f =
        std::accumulate(f_scores.begin(), f_scores.end(), 0.0) / static_cast<double>(f_scores.size());
    Estimate e;
    e.method = "en";
    e.labeling_frequency = c;
    e.kappa_hat = std::clamp(mean_f / c, 0.0, 1.0);
    return e;
}

Estimate en_estimate(const Sample& x_f, const Sample& x_h, const PosteriorModel& model) {
    std::vector<std::size_t> heldout = model.record().validation_component_rows;
    const bool usable = !heldout.empty() &&
                        std::all_of(heldout.begin(), heldout.end(), [&](std::size_t r) { return r < x_h.size(); });
    if (!usable) {
        heldout.clear();
        for (std::size_t r = x_h.size() - x_h.size() / 5; r < x_h.size(); ++r) heldout.push_back(r);
        if (heldout.empty()) heldout.push_back(x_h.size() - 1);
    }
    const std::vector<double> h_scores = component_scores(model, x_h.select(heldout).points());
    return en_estimate(component_scores(model, x_f.points()), h_scores);
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    if (n == 0) throw std::invalid_argument("cannot project an empty vector");
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        cumulative += u[static_cast<std::size_t>(j)];
        const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
        if (u[static_cast<std::size_t>(j)] - candidate > 0.0) theta = candidate;
    }
    Eigen::VectorXd w = (v.array() - theta).cwiseMax(0.0).matrix();
    // renormalise away rounding so the sum is 1 to machine precision
    const double s = w.sum();
    if (s > 0.0) w /= s;
    return w;
}

Estimate km_estimate(const Sample& x_f, const Sample& x_h, const KmConfig& cfg) {
    cfg.validate();
    if (x_f.size() < kMinKmRows || x_h.size() < kMinKmRows) {
        throw std::invalid_argument("kernel mean matching needs at least 16 rows per sample");
    }
    if (x_f.dim() != x_h.dim()) throw std::invalid_argument("sample dimensions differ");

    const Eigen::MatrixXd& pf = x_f.points();
    const Eigen::MatrixXd& ph = x_h.points();
    const double bandwidth = median_pairwise_distance(pf, ph) * cfg.bandwidth_multiplier;

    const Eigen::MatrixXd k_ff = rbf(pf, pf, bandwidth);
    const Eigen::VectorXd b_f = k_ff.rowwise().mean();
    Eigen::VectorXd b_h;
    double c_hh = 0.0;
    {
        const Eigen::MatrixXd k_fh = rbf(pf, ph, bandwidth);
        b_h = k_fh.rowwise().mean();
        c_hh = rbf(ph, ph, bandwidth).mean();
    }
    const double c_ff = b_f.mean();
    const double c_fh = b_h.mean();
    const double top = std::max(top_eigenvalue(k_ff), 1e-12);

    const auto n_f = static_cast<Eigen::Index>(x_f.size());
    Eigen::VectorXd w = Eigen::VectorXd::Constant(n_f, 1.0 / static_cast<double>(n_f));

    Estimate e;
    e.method = cfg.variant == KmVariant::km1 ? "km1" : "km2";
    e.bandwidth = bandwidth;
    const std::size_t grid = cfg.lambda_grid;
    for (std::size_t k = 0; k < grid; ++k) {
        const double lambda = static_cast<double>(k) / static_cast<double>(grid - 1);
        const double a = 1.0 - lambda;
        const double constant = c_ff - 2.0 * lambda * c_fh + lambda * lambda * c_hh;
        if (k + 1 == grid) {
            e.distance_curve.push_back({1.0, std::sqrt(std::max(0.0, c_hh - 2.0 * c_fh + c_ff))});
            break;
        }
        const SimplexQp qp = solve_simplex_qp(k_ff, b_f - lambda * b_h, a, constant, top, c_ff, w, cfg);
        w = qp.w;  // warm start for the next lambda
        if (!qp.converged) e.qp_converged = false;
        e.distance_curve.push_back({lambda, std::sqrt(std::max(0.0, qp.objective))});
    }

    const double step = 1.0 / static_cast<double>(grid - 1);
    const auto& curve = e.distance_curve;
    const std::size_t tail = std::max<std::size_t>(1, grid / 8);
    const double terminal_slope =
        (curve[grid - 1].distance - curve[grid - 1 - tail].distance) / (static_cast<double>(tail) * step);
    const double threshold =
        cfg.variant == KmVariant::km1 ? cfg.km1_slope : cfg.km2_ratio * terminal_slope;
    e.kappa_hat = 1.0;
    for (std::size_t k = 0; k + 1 < grid; ++k) {
        const double slope = (curve[k + 1].distance - curve[k].distance) / step;
        if (slope > threshold) {
            e.kappa_hat = curve[k].lambda;
            break;
        }
    }
    e.kappa_hat = std::clamp(e.kappa_hat, 0.0, 1.0);
    return e;
}

Estimate run_estimator(const EstimatorSpec& spec, const Sample& x_f, const Sample& x_h,
                       const PosteriorModel* model) {
    switch (spec.method) {
        case Method::roc:
            if (!model) throw std::invalid_argument("roc estimator needs a trained model");
            return roc_estimate(x_f, x_h, *model, spec.roc);
        case Method::en:
            if (!model) throw std::invalid_argument("en estimator needs a trained model");
            return en_estimate(x_f, x_h, *model);
        case Method::km:
            return km_estimate(x_f, x_h, spec.km);
    }
    throw std::invalid_argument("unknown estimator");
}

std::string trace_csv(const Estimate& e) {
    // shortest text that round-trips the double
    auto num = [](double v) {
        char buf[32];
        return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
    };
    std::string out;
    if (!e.distance_curve.empty()) {
        out = "lambda,distance\n";
        for (const auto& p : e.distance_curve) out += num(p.lambda) + ',' + num(p.distance) + '\n';
    } else {
        out = "threshold,f_hat,h_hat\n";
        for (const auto& p : e.threshold_trace) {
            out += num(p.threshold) + ',' + num(p.f_hat) + ',' + num(p.h_hat) + '\n';
        }
    }
    return out;
}

}  // namespace mpe
