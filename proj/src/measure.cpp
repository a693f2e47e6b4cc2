#include "mpe/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace mpe {

namespace {

struct Aligned {
    std::vector<PointId> ids;
    std::vector<double> a;
    std::vector<double> b;
};

Aligned align(const DiscreteDistribution& x, const DiscreteDistribution& y) {
    Aligned out;
    out.ids = x.support();
    out.a = x.mass();
    out.b.assign(out.ids.size(), 0.0);
    for (std::size_t j = 0; j < y.size(); ++j) {
        const PointId id = y.support()[j];
        if (auto i = x.index_of(id)) {
            out.b[*i] = y.mass()[j];
        } else {
            out.ids.push_back(id);
            out.a.push_back(0.0);
            out.b.push_back(y.mass()[j]);
        }
    }
    return out;
}

void require_proportion_open(double kappa, const char* what) {
    if (!(kappa > 0.0 && kappa < 1.0)) {
        throw std::invalid_argument(std::string(what) + " must lie in (0, 1)");
    }
}

void require_members_known(const std::vector<PointId>& support, const SubsetMask& a) {
    for (PointId id : a.members()) {
        if (std::find(support.begin(), support.end(), id) == support.end()) {
            throw std::invalid_argument("subset references unknown point id " +
                                        std::to_string(id));
        }
    }
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<PointId> support,
                                           std::vector<double> mass, Kind kind)
    : support_(std::move(support)), mass_(std::move(mass)), kind_(kind) {
    if (support_.size() != mass_.size()) {
        throw std::invalid_argument("support and mass have different lengths");
    }
    std::unordered_set<PointId> seen;
    for (PointId id : support_) {
        if (!seen.insert(id).second) {
            throw std::invalid_argument("duplicate support id " + std::to_string(id));
        }
    }
    for (double m : mass_) {
        if (!std::isfinite(m) || m < 0.0) {
            throw std::invalid_argument("masses must be finite and non-negative");
        }
    }
    if (kind_ == Kind::probability && std::abs(total() - 1.0) > kMassTolerance) {
        throw std::invalid_argument("probability masses must sum to 1");
    }
}

DiscreteDistribution DiscreteDistribution::from_masses(std::vector<double> mass, Kind kind) {
    std::vector<PointId> ids(mass.size());
    std::iota(ids.begin(), ids.end(), PointId{1});
    return DiscreteDistribution(std::move(ids), std::move(mass), kind);
}

std::optional<std::size_t> DiscreteDistribution::index_of(PointId id) const {
    auto it = std::find(support_.begin(), support_.end(), id);
    if (it == support_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - support_.begin());
}

double DiscreteDistribution::at(PointId id) const {
    auto i = index_of(id);
    return i ? mass_[*i] : 0.0;
}

double DiscreteDistribution::total() const {
    return std::accumulate(mass_.begin(), mass_.end(), 0.0);
}

SubsetMask::SubsetMask(std::initializer_list<PointId> ids)
    : SubsetMask(std::vector<PointId>(ids)) {}

SubsetMask::SubsetMask(std::vector<PointId> ids) : members_(std::move(ids)) {
    std::sort(members_.begin(), members_.end());
    members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
}

bool SubsetMask::contains(PointId id) const {
    return std::binary_search(members_.begin(), members_.end(), id);
}

double measure_of(const DiscreteDistribution& m, const SubsetMask& s) {
    double total = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (s.contains(m.support()[i])) total += m.mass()[i];
    }
    return total;
}

DiscreteDistribution mix(const DiscreteDistribution& g, const DiscreteDistribution& h,
                         double kappa) {
    if (!(kappa >= 0.0 && kappa <= 1.0)) {
        throw std::invalid_argument("mixing proportion must lie in [0, 1]");
    }
    Aligned al = align(g, h);
    std::vector<double> f(al.ids.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = (1.0 - kappa) * al.a[i] + kappa * al.b[i];
    }
    const auto kind = (g.unnormalized() || h.unnormalized())
                          ? DiscreteDistribution::Kind::unnormalized
                          : DiscreteDistribution::Kind::probability;
    return DiscreteDistribution(std::move(al.ids), std::move(f), kind);
}

KappaMax kappa_max_detail(const DiscreteDistribution& f, const DiscreteDistribution& h) {
    Aligned al = align(f, h);
    KappaMax best;
    bool found = false;
    for (std::size_t i = 0; i < al.ids.size(); ++i) {
        if (al.b[i] <= 0.0) continue;
        const double ratio = al.a[i] / al.b[i];
        // strict < keeps the lowest support index on ties
        if (!found || ratio < best.value) {
            best.value = ratio;
            best.argmin = al.ids[i];
            found = true;
        }
    }
    if (!found) throw std::invalid_argument("degenerate component");
    best.value = std::clamp(best.value, 0.0, 1.0);
    return best;
}

double kappa_max(const DiscreteDistribution& f, const DiscreteDistribution& h) {
    return kappa_max_detail(f, h).value;
}

double max_proportion_search(const DiscreteDistribution& f, const DiscreteDistribution& h,
                             int iterations) {
    Aligned al = align(f, h);
    if (std::none_of(al.b.begin(), al.b.end(), [](double v) { return v > 0.0; })) {
        throw std::invalid_argument("degenerate component");
    }
    // (f - k h) / (1 - k) is a measure iff f - k h >= 0 everywhere.
    auto feasible = [&](double k) {
        for (std::size_t i = 0; i < al.ids.size(); ++i) {
            if (al.a[i] - k * al.b[i] < 0.0) return false;
        }
        return true;
    };
    if (feasible(1.0)) return 1.0;
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < iterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (feasible(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return lo;
}

std::pair<DiscreteDistribution, DiscreteDistribution> split_measure(
    const DiscreteDistribution& m, const SubsetMask& a) {
    require_members_known(m.support(), a);
    std::vector<double> inside(m.size(), 0.0);
    std::vector<double> outside(m.size(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (a.contains(m.support()[i])) {
            inside[i] = m.mass()[i];
        } else {
            outside[i] = m.mass()[i];
        }
    }
    using Kind = DiscreteDistribution::Kind;
    return {DiscreteDistribution(m.support(), std::move(inside), Kind::unnormalized),
            DiscreteDistribution(m.support(), std::move(outside), Kind::unnormalized)};
}

RegroupResult regroup(const DiscreteDistribution& g, const DiscreteDistribution& h,
                      double kappa_star, const SubsetMask& a) {
    require_proportion_open(kappa_star, "kappa_star");
    Aligned al = align(g, h);
    require_members_known(al.ids, a);

    double g_in = 0.0;
    double g_out = 0.0;
    double f_in = 0.0;
    for (std::size_t i = 0; i < al.ids.size(); ++i) {
        if (a.contains(al.ids[i])) {
            g_in += al.a[i];
            f_in += (1.0 - kappa_star) * al.a[i] + kappa_star * al.b[i];
        } else {
            g_out += al.a[i];
        }
    }
    if (f_in <= 0.0) throw std::invalid_argument("A outside support of F");
    if (g_out <= 0.0) throw std::invalid_argument("regrouping entire G");

    const double norm = (1.0 - kappa_star) * g_in + kappa_star;
    std::vector<double> gp(al.ids.size(), 0.0);
    std::vector<double> hp(al.ids.size(), 0.0);
    for (std::size_t i = 0; i < al.ids.size(); ++i) {
        const bool in_a = a.contains(al.ids[i]);
        if (!in_a) gp[i] = al.a[i] / g_out;
        const double moved = in_a ? (1.0 - kappa_star) * al.a[i] : 0.0;
        hp[i] = (moved + kappa_star * al.b[i]) / norm;
    }

    RegroupResult out;
    out.kappa_prime = kappa_star + (1.0 - kappa_star) * g_in;
    out.g_prime = DiscreteDistribution(al.ids, std::move(gp));
    out.h_prime = DiscreteDistribution(std::move(al.ids), std::move(hp));
    return out;
}

double bias_identity(double kappa_star, double beta) {
    return kappa_star + (1.0 - kappa_star) * beta;
}

std::string to_string(OrderingVerdict v) {
    switch (v) {
        case OrderingVerdict::equal: return "equal";
        case OrderingVerdict::strictly_between: return "strictly_between";
        case OrderingVerdict::violated: return "violated";
    }
    return "unknown";
}

OrderingVerdict check_ordering(const DiscreteDistribution& g, const DiscreteDistribution& h,
                               double kappa_star, const SubsetMask& a) {
    const double beta = kappa_max(g, h);
    const double g_a = measure_of(g, a);
    // Reducible case: A must carry some of G, else nothing moves and kappa' = kappa*.
    const bool selectable = beta > 0.0 ? (g_a > 0.0 && g_a < beta) : g_a == 0.0;
    if (!selectable) throw std::domain_error("selection condition failed");

    const RegroupResult r = regroup(g, h, kappa_star, a);
    if (beta == 0.0) {
        return r.kappa_prime == kappa_star ? OrderingVerdict::equal : OrderingVerdict::violated;
    }
    const double upper = bias_identity(kappa_star, beta);
    return (kappa_star < r.kappa_prime && r.kappa_prime < upper)
               ? OrderingVerdict::strictly_between
               : OrderingVerdict::violated;
}

DiscreteDistribution surrogate_h_tilde(const DiscreteDistribution& f,
                                       const DiscreteDistribution& h, const SubsetMask& a,
                                       double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    Aligned al = align(f, h);
    require_members_known(al.ids, a);
    double f_in = 0.0;
    for (std::size_t i = 0; i < al.ids.size(); ++i) {
        if (a.contains(al.ids[i])) f_in += al.a[i];
    }
    const double norm = f_in + gamma * h.total();
    std::vector<double> out(al.ids.size());
    for (std::size_t i = 0; i < al.ids.size(); ++i) {
        const double fa = a.contains(al.ids[i]) ? al.a[i] : 0.0;
        out[i] = (fa + gamma * al.b[i]) / norm;
    }
    return DiscreteDistribution(std::move(al.ids), std::move(out));
}

SurrogateGap surrogate_gap(const DiscreteDistribution& h_prime,
                           const DiscreteDistribution& h_tilde) {
    if (h_prime.size() != h_tilde.size()) throw std::invalid_argument("support mismatch");
    SurrogateGap gap;
    double l1 = 0.0;
    for (std::size_t i = 0; i < h_prime.size(); ++i) {
        auto j = h_tilde.index_of(h_prime.support()[i]);
        if (!j) throw std::invalid_argument("support mismatch");
        const double d = std::abs(h_prime.mass()[i] - h_tilde.mass()[*j]);
        gap.max_singleton = std::max(gap.max_singleton, d);
        l1 += d;
    }
    gap.total_variation = 0.5 * l1;
    return gap;
}

double deviation_epsilon(double rademacher, std::size_t n, double delta) {
    return 2.0 * rademacher +
           3.0 * std::sqrt(std::log(4.0 / delta) / (2.0 * static_cast<double>(n)));
}

double regrouped_error_bound(const BoundInputs& b) {
    if (b.n_f < 1 || b.n_hprime < 1) throw std::invalid_argument("sample sizes must be >= 1");
    if (!(b.delta > 0.0 && b.delta <= 0.5)) throw std::invalid_argument("delta must lie in (0, 0.5]");
    if (!(b.h_hat_a >= 0.0 && b.h_hat_a <= 1.0)) {
        throw std::invalid_argument("h_hat_A must lie in [0, 1]");
    }
    if (b.rademacher_f < 0.0 || b.rademacher_hprime < 0.0) {
        throw std::invalid_argument("Rademacher terms must be non-negative");
    }
    const double eps_h = deviation_epsilon(b.rademacher_hprime, b.n_hprime, b.delta);
    const double eps_f = deviation_epsilon(b.rademacher_f, b.n_f, b.delta);
    const double denom = b.h_hat_a + eps_h;
    if (denom <= 0.0) throw std::domain_error("bound denominator is zero");
    return eps_h / denom + eps_f / denom;
}

DiscreteDistribution non_identifiable_witness(const DiscreteDistribution& f,
                                              const DiscreteDistribution& h, double kappa,
                                              double delta) {
    if (!(kappa >= 0.0 && kappa <= 1.0)) throw std::invalid_argument("kappa must lie in [0, 1]");
    if (kappa > kappa_max(f, h) + kMassTolerance) {
        throw std::invalid_argument("kappa exceeds kappa(F|H)");
    }
    if (!(delta >= 0.0 && delta < kappa)) throw std::invalid_argument("delta must lie in [0, kappa)");
    Aligned al = align(f, h);
    const double denom = 1.0 - kappa + delta;
    std::vector<double> k(al.ids.size());
    for (std::size_t i = 0; i < k.size(); ++i) {
        double residual = al.a[i] - kappa * al.b[i];  // (1 - kappa) M
        if (residual < 0.0 && residual > -kMassTolerance) residual = 0.0;
        k[i] = (residual + delta * al.b[i]) / denom;
    }
    return DiscreteDistribution(std::move(al.ids), std::move(k));
}

nlohmann::json to_json(const DiscreteDistribution& d) {
    nlohmann::json j;
    j["support"] = d.support();
    j["mass"] = d.mass();
    if (d.unnormalized()) j["unnormalized"] = true;
    return j;
}

DiscreteDistribution distribution_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("support") || !j.contains("mass")) {
        throw std::invalid_argument("distribution JSON needs \"support\" and \"mass\"");
    }
    const bool raw = j.value("unnormalized", false);
    return DiscreteDistribution(j.at("support").get<std::vector<PointId>>(),
                                j.at("mass").get<std::vector<double>>(),
                                raw ? DiscreteDistribution::Kind::unnormalized
                                    : DiscreteDistribution::Kind::probability);
}

}  // namespace mpe
