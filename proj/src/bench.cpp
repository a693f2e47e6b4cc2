#include "mpe/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mpe/rng.hpp"

namespace mpe {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ComponentSide side_from_string(const std::string& s) {
    if (s == "positive") return ComponentSide::positive;
    if (s == "negative") return ComponentSide::negative;
    throw std::invalid_argument("unknown component side: " + s);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written to per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

struct TrialPlan {
    std::size_t index = 0;
    SplitSpec split;
    std::uint64_t trial_seed = 0;
    std::uint64_t classifier_seed = 0;
};

std::vector<TrialPlan> plan_trials(const RunManifest& m) {
    std::vector<TrialPlan> out;
    for (ComponentSide side : m.grid.sides) {
        for (double fraction : m.grid.fractions) {
            for (std::size_t size : m.grid.sizes) {
                for (std::size_t r = 0; r < m.repeats; ++r) {
                    TrialPlan t;
                    t.index = out.size();
                    t.trial_seed = derive_seed(m.master_seed, {t.index});
                    t.classifier_seed = derive_seed(t.trial_seed, {2});
                    t.split = SplitSpec{side, fraction, size, r, derive_seed(t.trial_seed, {1})};
                    out.push_back(t);
                }
            }
        }
    }
    return out;
}

bool any_needs_model(const std::vector<EstimatorSpec>& es) {
    return std::any_of(es.begin(), es.end(), [](const EstimatorSpec& e) { return e.needs_model(); });
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared per-trial state: the pair, the ranking model and the model used by
// plain estimates.
struct TrialContext {
    MpePair pair;
    RegroupConfig regroup;
    PosteriorModel ranking;
    std::optional<PosteriorModel> plain_separate;

    const PosteriorModel& plain_model() const { return plain_separate ? *plain_separate : ranking; }
};

TrialContext prepare_trial(const LabeledDataset& ds, const RunManifest& m, const TrialPlan& t) {
    TrialContext ctx;
    ctx.pair = make_mpe_pair(ds, t.split);
    ctx.regroup = m.regroup;
    ctx.regroup.classifier.seed = t.classifier_seed;
    ctx.ranking = fit(ctx.pair.x_f, ctx.pair.x_h, ctx.regroup.classifier);
    if (ctx.regroup.independent_fits && any_needs_model(m.estimators)) {
        TrainConfig c = ctx.regroup.classifier;
        c.seed = derive_seed(t.classifier_seed, {8});
        ctx.plain_separate = fit(ctx.pair.x_f, ctx.pair.x_h, c);
    }
    return ctx;
}

// Model for estimates on (x_f, h_tilde); nullopt means "reuse the ranking model".
std::optional<PosteriorModel> regrouped_model(const TrialContext& ctx, const RegroupedSample& rs,
                                              const std::vector<EstimatorSpec>& es) {
    if (!any_needs_model(es)) return std::nullopt;
    if (rs.copied_ids.empty() && !ctx.regroup.independent_fits) return std::nullopt;
    TrainConfig c = ctx.regroup.classifier;
    c.seed = estimation_seed(ctx.regroup);
    return fit(ctx.pair.x_f, rs.h_tilde, c);
}

RegroupedSample regroup_prefix(const Sample& x_f, const Sample& x_h, const std::vector<double>& posteriors,
                               const std::vector<std::size_t>& ranked, std::size_t k) {
    RegroupedSample out;
    out.posteriors = posteriors;
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(x_h.size() + k), x_h.points().cols());
    pts.topRows(static_cast<Eigen::Index>(x_h.size())) = x_h.points();
    std::vector<std::int64_t> ids = x_h.ids();
    for (std::size_t i = 0; i < k; ++i) {
        pts.row(static_cast<Eigen::Index>(x_h.size() + i)) = x_f.points().row(static_cast<Eigen::Index>(ranked[i]));
        ids.push_back(x_f.ids()[ranked[i]]);
        out.copied_ids.push_back(x_f.ids()[ranked[i]]);
    }
    out.h_tilde = Sample(std::move(pts), Provenance::component, std::move(ids));
    return out;
}

std::vector<TrialRow> run_trial(const LabeledDataset& ds, const RunManifest& m, const TrialPlan& t) {
    std::vector<TrialRow> rows;
    for (const auto& e : m.estimators) {
        for (Variant v : {Variant::plain, Variant::regrouped}) {
            TrialRow r;
            r.dataset = ds.name;
            r.side = t.split.component_side;
            r.fraction = t.split.component_fraction;
            r.size = t.split.sample_size;
            r.repeat = t.split.repeat;
            r.trial = t.index;
            r.estimator = e.name();
            r.variant = v;
            r.seed = t.trial_seed;
            r.kappa_star = kNaN;
            r.kappa_hat = kNaN;
            r.abs_error = kNaN;
            rows.push_back(r);
        }
    }
    auto fail_all = [&](const std::string& what) {
        for (auto& r : rows) r.error = what;
        return rows;
    };

    std::optional<TrialContext> ctx;
    RegroupedSample rs;
    std::optional<PosteriorModel> m1;
    try {
        ctx = prepare_trial(ds, m, t);
        rs = build_h_tilde(ctx->pair.x_f, ctx->pair.x_h, ctx->regroup, ctx->ranking);
        m1 = regrouped_model(*ctx, rs, m.estimators);
    } catch (const std::exception& ex) {
        return fail_all(ex.what());
    }
    const PosteriorModel& regrouped_fit = m1 ? *m1 : ctx->ranking;

    for (std::size_t i = 0; i < rows.size(); ++i) {
        TrialRow& r = rows[i];
        const EstimatorSpec& e = m.estimators[i / 2];
        r.kappa_star = ctx->pair.kappa_star;
        const bool plain = r.variant == Variant::plain;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const Estimate est = plain ? run_estimator(e, ctx->pair.x_f, ctx->pair.x_h, &ctx->plain_model())
                                       : run_estimator(e, ctx->pair.x_f, rs.h_tilde, &regrouped_fit);
            if (!est.qp_converged) throw std::runtime_error("kernel QP did not converge");
            r.kappa_hat = est.kappa_hat;
            r.abs_error = std::abs(est.kappa_hat - r.kappa_star);
        } catch (const std::exception& ex) {
            r.error = ex.what();
        }
        r.wallclock_s = seconds_since(t0);
    }
    return rows;
}

std::vector<SweepTrial> sweep_trial(const LabeledDataset& ds, const RunManifest& m, const TrialPlan& t,
                                    const std::vector<double>& p_grid) {
    std::vector<SweepTrial> out;
    for (double p : p_grid) {
        for (const auto& e : m.estimators) {
            SweepTrial s;
            s.trial = t.index;
            s.estimator = e.name();
            s.p = p;
            s.kappa_star = s.kappa_hat = s.kappa_hat_prime = kNaN;
            out.push_back(s);
        }
    }
    const std::size_t ne = m.estimators.size();
    std::optional<TrialContext> ctx;
    std::vector<double> posteriors;
    std::vector<std::size_t> ranked;
    try {
        ctx = prepare_trial(ds, m, t);
        const Eigen::VectorXd post = predict_posterior(ctx->ranking, ctx->pair.x_f.points());
        posteriors.assign(post.data(), post.data() + post.size());
        const double p_max = *std::max_element(p_grid.begin(), p_grid.end());
        ranked = select_regroup_rows(posteriors, ctx->pair.x_f.ids(), p_max);
    } catch (const std::exception& ex) {
        for (auto& s : out) s.error = ex.what();
        return out;
    }

    std::vector<std::optional<double>> plain(ne);
    std::vector<std::string> plain_error(ne);
    for (std::size_t k = 0; k < ne; ++k) {
        try {
            const Estimate est = run_estimator(m.estimators[k], ctx->pair.x_f, ctx->pair.x_h, &ctx->plain_model());
            if (!est.qp_converged) throw std::runtime_error("kernel QP did not converge");
            plain[k] = est.kappa_hat;
        } catch (const std::exception& ex) {
            plain_error[k] = ex.what();
        }
    }

    for (std::size_t pi = 0; pi < p_grid.size(); ++pi) {
        const double p = p_grid[pi];
        std::optional<PosteriorModel> m1;
        RegroupedSample rs;
        std::string setup_error;
        try {
            const std::size_t k = copy_count(p, ctx->pair.x_f.size());
            if (p > 0.0 && k < 1) throw std::invalid_argument("copy fraction too small for sample");
            rs = regroup_prefix(ctx->pair.x_f, ctx->pair.x_h, posteriors, ranked, k);
            m1 = regrouped_model(*ctx, rs, m.estimators);
        } catch (const std::exception& ex) {
            setup_error = ex.what();
        }
        for (std::size_t k = 0; k < ne; ++k) {
            SweepTrial& s = out[pi * ne + k];
            s.kappa_star = ctx->pair.kappa_star;
            s.copied = rs.copied_ids.size();
            if (!setup_error.empty()) {
                s.error = setup_error;
                continue;
            }
            if (!plain[k]) {
                s.error = plain_error[k];
                continue;
            }
            s.kappa_hat = *plain[k];
            try {
                const Estimate est = run_estimator(m.estimators[k], ctx->pair.x_f, rs.h_tilde,
                                                   m1 ? &*m1 : &ctx->ranking);
                if (!est.qp_converged) throw std::runtime_error("kernel QP did not converge");
                s.kappa_hat_prime = est.kappa_hat;
            } catch (const std::exception& ex) {
                s.error = ex.what();
            }
        }
    }
    return out;
}

}  // namespace

void RunManifest::validate() const {
    if (dataset.synthetic.has_value() == dataset.csv_path.has_value()) {
        throw std::invalid_argument("manifest needs exactly one of a synthetic spec or a csv dataset");
    }
    if (dataset.synthetic) dataset.synthetic->validate();
    if (estimators.empty()) throw std::invalid_argument("manifest needs at least one estimator");
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    if (grid.sides.empty() || grid.fractions.empty() || grid.sizes.empty()) {
        throw std::invalid_argument("split grid has an empty axis");
    }
    for (double f : grid.fractions) {
        if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("split fractions must lie in (0, 1)");
    }
    for (std::size_t s : grid.sizes) {
        if (s < 1) throw std::invalid_argument("split sizes must be >= 1");
    }
    for (double p : p_grid) {
        if (!(p >= 0.0 && p <= 0.5)) throw std::invalid_argument("p grid must lie in [0, 0.5]");
    }
    for (const auto& e : estimators) {
        e.roc.validate();
        e.km.validate();
    }
    regroup.validate();
}

std::string to_string(Variant v) { return v == Variant::plain ? "plain" : "regrouped"; }

json to_json(const EstimatorSpec& spec) {
    json j;
    switch (spec.method) {
        case Method::roc:
            j = {{"method", "roc"},
                 {"penalty_scale", spec.roc.penalty_scale},
                 {"min_component_mass", spec.roc.min_component_mass},
                 {"grid_size", spec.roc.grid_size}};
            break;
        case Method::en: j = {{"method", "en"}}; break;
        case Method::km:
            j = {{"method", spec.name()},
                 {"bandwidth_multiplier", spec.km.bandwidth_multiplier},
                 {"lambda_grid", spec.km.lambda_grid},
                 {"qp_iterations", spec.km.qp_iterations},
                 {"step_rule", to_string(spec.km.step_rule)},
                 {"qp_tolerance", spec.km.qp_tolerance},
                 {"km1_slope", spec.km.km1_slope},
                 {"km2_ratio", spec.km.km2_ratio}};
            break;
    }
    return j;
}

EstimatorSpec estimator_from_json(const json& j) {
    EstimatorSpec s;
    const std::string method = j.at("method").get<std::string>();
    if (method == "roc") {
        s.method = Method::roc;
        s.roc.penalty_scale = get_or(j, "penalty_scale", s.roc.penalty_scale);
        s.roc.min_component_mass = get_or(j, "min_component_mass", s.roc.min_component_mass);
        s.roc.grid_size = get_or(j, "grid_size", s.roc.grid_size);
        s.roc.validate();
    } else if (method == "en") {
        s.method = Method::en;
    } else if (method == "km" || method == "km1" || method == "km2") {
        s.method = Method::km;
        s.km.variant = method == "km1" ? KmVariant::km1 : KmVariant::km2;
        s.km.bandwidth_multiplier = get_or(j, "bandwidth_multiplier", s.km.bandwidth_multiplier);
        s.km.lambda_grid = get_or(j, "lambda_grid", s.km.lambda_grid);
        s.km.qp_iterations = get_or(j, "qp_iterations", s.km.qp_iterations);
        if (j.contains("step_rule")) s.km.step_rule = step_rule_from_string(j.at("step_rule").get<std::string>());
        s.km.qp_tolerance = get_or(j, "qp_tolerance", s.km.qp_tolerance);
        s.km.km1_slope = get_or(j, "km1_slope", s.km.km1_slope);
        s.km.km2_ratio = get_or(j, "km2_ratio", s.km.km2_ratio);
        s.km.validate();
    } else {
        throw std::invalid_argument("unknown estimator: " + method);
    }
    return s;
}

json to_json(const RunManifest& m) {
    json j;
    j["schema"] = kManifestSchema;
    if (m.dataset.synthetic) {
        j["dataset"] = {{"synthetic", to_json(*m.dataset.synthetic)}};
    } else if (m.dataset.csv_path) {
        j["dataset"] = {{"csv",
                         {{"path", m.dataset.csv_path->string()},
                          {"label_column", m.dataset.csv.label_column},
                          {"positive_labels", m.dataset.csv.positive_labels},
                          {"negative_labels", m.dataset.csv.negative_labels}}}};
    }
    json sides = json::array();
    for (auto s : m.grid.sides) sides.push_back(to_string(s));
    j["splits"] = {{"sides", sides}, {"fractions", m.grid.fractions}, {"sizes", m.grid.sizes}};
    j["repeats"] = m.repeats;
    j["master_seed"] = m.master_seed;
    json es = json::array();
    for (const auto& e : m.estimators) es.push_back(to_json(e));
    j["estimators"] = es;
    j["regroup"] = {{"copy_fraction", m.regroup.copy_fraction},
                    {"independent_fits", m.regroup.independent_fits},
                    {"classifier", to_json(m.regroup.classifier)}};
    j["output_dir"] = m.output_dir.string();
    if (!m.p_grid.empty()) j["p_grid"] = m.p_grid;
    return j;
}

RunManifest manifest_from_json(const json& j, const std::filesystem::path& base_dir) {
    const int schema = j.at("schema").get<int>();
    if (schema != kManifestSchema) {
        throw std::invalid_argument("unsupported manifest schema " + std::to_string(schema));
    }
    RunManifest m;
    const json& d = j.at("dataset");
    if (d.contains("synthetic")) m.dataset.synthetic = synthetic_spec_from_json(d.at("synthetic"));
    if (d.contains("csv")) {
        const json& c = d.at("csv");
        std::filesystem::path p = c.at("path").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        m.dataset.csv_path = p;
        m.dataset.csv.label_column = c.at("label_column").get<std::string>();
        m.dataset.csv.positive_labels = c.at("positive_labels").get<std::set<std::string>>();
        m.dataset.csv.negative_labels = get_or(c, "negative_labels", std::set<std::string>{});
    }
    if (j.contains("splits")) {
        const json& s = j.at("splits");
        if (s.contains("sides")) {
            m.grid.sides.clear();
            for (const auto& v : s.at("sides")) m.grid.sides.push_back(side_from_string(v.get<std::string>()));
        }
        m.grid.fractions = get_or(s, "fractions", m.grid.fractions);
        m.grid.sizes = get_or(s, "sizes", m.grid.sizes);
    }
    m.repeats = get_or(j, "repeats", m.repeats);
    m.master_seed = get_or(j, "master_seed", m.master_seed);
    for (const auto& e : j.at("estimators")) m.estimators.push_back(estimator_from_json(e));
    if (j.contains("regroup")) {
        const json& r = j.at("regroup");
        m.regroup.copy_fraction = get_or(r, "copy_fraction", m.regroup.copy_fraction);
        m.regroup.independent_fits = get_or(r, "independent_fits", m.regroup.independent_fits);
        if (r.contains("classifier")) m.regroup.classifier = train_config_from_json(r.at("classifier"));
    }
    if (j.contains("output_dir")) m.output_dir = j.at("output_dir").get<std::string>();
    m.p_grid = get_or(j, "p_grid", m.p_grid);
    m.validate();
    return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("manifest is not valid JSON: " + std::string(e.what()));
    }
    return manifest_from_json(j, path.parent_path());
}

LabeledDataset load_dataset(const DatasetRef& ref) {
    if (ref.synthetic) return generate(*ref.synthetic);
    if (ref.csv_path) return load_csv(*ref.csv_path, ref.csv);
    throw std::invalid_argument("dataset reference is empty");
}

std::size_t workers_from_env() {
    const char* v = std::getenv("MPE_WORKERS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    const unsigned long n = std::strtoul(v, &end, 10);
    if (*end != '\0' || n < 1) throw std::invalid_argument("MPE_WORKERS must be a positive integer");
    return n;
}

ExperimentReport run_grid(const RunManifest& manifest, const RunOptions& opts) {
    manifest.validate();
    return run_grid(manifest, load_dataset(manifest.dataset), opts);
}

ExperimentReport run_grid(const RunManifest& manifest, const LabeledDataset& ds, const RunOptions& opts) {
    manifest.validate();
    const auto plan = plan_trials(manifest);
    std::vector<std::vector<TrialRow>> slots(plan.size());
    parallel_for(plan.size(), opts.workers, [&](std::size_t i) { slots[i] = run_trial(ds, manifest, plan[i]); });
    ExperimentReport report;
    report.dataset = ds.name;
    for (auto& s : slots) report.rows.insert(report.rows.end(), s.begin(), s.end());
    summarize(report);
    return report;
}

SweepReport sweep_copy_fraction(const RunManifest& manifest, const std::vector<double>& p_grid,
                                const RunOptions& opts) {
    manifest.validate();
    return sweep_copy_fraction(manifest, load_dataset(manifest.dataset), p_grid, opts);
}

SweepReport sweep_copy_fraction(const RunManifest& manifest, const LabeledDataset& ds,
                                const std::vector<double>& p_grid, const RunOptions& opts) {
    manifest.validate();
    if (p_grid.empty()) throw std::invalid_argument("p grid is empty");
    for (double p : p_grid) {
        if (!(p >= 0.0 && p <= 0.5)) throw std::invalid_argument("p grid must lie in [0, 0.5]");
    }
    const auto plan = plan_trials(manifest);
    std::vector<std::vector<SweepTrial>> slots(plan.size());
    parallel_for(plan.size(), opts.workers,
                 [&](std::size_t i) { slots[i] = sweep_trial(ds, manifest, plan[i], p_grid); });

    SweepReport out;
    out.dataset = ds.name;
    for (auto& s : slots) out.trials.insert(out.trials.end(), s.begin(), s.end());
    for (const auto& e : manifest.estimators) {
        for (double p : p_grid) {
            SweepPoint pt;
            pt.estimator = e.name();
            pt.p = p;
            double kd = 0.0;
            double ed = 0.0;
            for (const auto& s : out.trials) {
                if (s.estimator != pt.estimator || s.p != p) continue;
                if (!s.error.empty()) {
                    ++pt.failed;
                    continue;
                }
                ++pt.n;
                kd += s.kappa_hat - s.kappa_hat_prime;
                ed += std::abs(s.kappa_hat - s.kappa_star) - std::abs(s.kappa_hat_prime - s.kappa_star);
            }
            pt.mean_kappa_diff = pt.n ? kd / static_cast<double>(pt.n) : kNaN;
            pt.mean_error_diff = pt.n ? ed / static_cast<double>(pt.n) : kNaN;
            out.failed += pt.failed;
            out.points.push_back(pt);
        }
    }
    return out;
}

std::vector<double> parse_p_grid(const std::string& text) {
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad p grid: " + text);
        }
        if (used != s.size()) throw std::invalid_argument("bad p grid: " + text);
        return v;
    };
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(tok);
        if (parts.size() != 3) throw std::invalid_argument("p grid range must be start:stop:step");
        const double start = number(parts[0]);
        const double stop = number(parts[1]);
        const double step = number(parts[2]);
        if (!(step > 0.0) || stop < start) throw std::invalid_argument("bad p grid range: " + text);
        const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 0.5));
        // Snap to 12 decimals so 0:0.25:0.025 yields the same doubles as the literals.
        for (std::size_t i = 0; i <= count; ++i) {
            out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
        }
    } else {
        std::stringstream ss(text);
        for (std::string tok; std::getline(ss, tok, ',');) out.push_back(number(tok));
    }
    if (out.empty()) throw std::invalid_argument("p grid is empty");
    for (double p : out) {
        if (!(p >= 0.0 && p <= 0.5)) throw std::invalid_argument("p grid must lie in [0, 0.5]");
    }
    return out;
}

}  // namespace mpe
