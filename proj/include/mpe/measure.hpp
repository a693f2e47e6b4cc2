// Exact mixture-proportion calculus over finite discrete measures.
//
// Every quantity here is computed in closed form on a finite support, which
// makes this module the oracle the sample-based estimators are checked
// against. Supports are ordered lists of integer point ids; two distributions
// may have different supports, in which case operations work on the union
// (first operand's order, then ids only present in the second).
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace mpe {

using PointId = std::int64_t;

/// Tolerance used when checking that masses form a probability measure.
inline constexpr double kMassTolerance = 1e-12;

class DiscreteDistribution {
public:
    enum class Kind { probability, unnormalized };

    DiscreteDistribution() = default;

    /// Validates: equal lengths, unique ids, finite non-negative masses and,
    /// for `Kind::probability`, total mass 1 within kMassTolerance.
    DiscreteDistribution(std::vector<PointId> support, std::vector<double> mass,
                         Kind kind = Kind::probability);

    /// Convenience for tests and examples: ids 1..n in order.
    static DiscreteDistribution from_masses(std::vector<double> mass,
                                            Kind kind = Kind::probability);

    const std::vector<PointId>& support() const noexcept { return support_; }
    const std::vector<double>& mass() const noexcept { return mass_; }
    std::size_t size() const noexcept { return support_.size(); }
    Kind kind() const noexcept { return kind_; }
    bool unnormalized() const noexcept { return kind_ == Kind::unnormalized; }

    std::optional<std::size_t> index_of(PointId id) const;
    bool contains(PointId id) const { return index_of(id).has_value(); }

    /// Mass at `id`, zero for ids outside the support.
    double at(PointId id) const;
    double total() const;

    bool operator==(const DiscreteDistribution&) const = default;

private:
    std::vector<PointId> support_;
    std::vector<double> mass_;
    Kind kind_ = Kind::probability;
};

/// A set of point ids (S, A or A^c). Members are kept sorted and unique.
class SubsetMask {
public:
    SubsetMask() = default;
    SubsetMask(std::initializer_list<PointId> ids);
    explicit SubsetMask(std::vector<PointId> ids);

    const std::vector<PointId>& members() const noexcept { return members_; }
    bool contains(PointId id) const;
    bool empty() const noexcept { return members_.empty(); }
    std::size_t size() const noexcept { return members_.size(); }

private:
    std::vector<PointId> members_;
};

/// M(S) for any (possibly unnormalized) measure.
double measure_of(const DiscreteDistribution& m, const SubsetMask& s);

/// (1 - kappa) * g + kappa * h on the union support.
DiscreteDistribution mix(const DiscreteDistribution& g, const DiscreteDistribution& h,
                         double kappa);

struct KappaMax {
    double value = 0.0;
    PointId argmin = 0;  // singleton attaining the minimum (lowest support index on ties)
};

/// Maximum proportion of h embeddable in f: min over {x : h(x) > 0} of
/// f(x)/h(x), clamped to [0, 1]. On a finite support the infimum over sets
/// is attained at a singleton (mediant inequality).
KappaMax kappa_max_detail(const DiscreteDistribution& f, const DiscreteDistribution& h);
double kappa_max(const DiscreteDistribution& f, const DiscreteDistribution& h);

/// Largest kappa for which (f - kappa*h)/(1 - kappa) is still a
/// non-negative measure, found by bisection. Independent route to kappa_max.
double max_proportion_search(const DiscreteDistribution& f, const DiscreteDistribution& h,
                             int iterations = 64);

/// Restriction of m to a and to its complement. Both halves keep m's full
/// support and are tagged unnormalized; m_a + m_ac == m exactly.
std::pair<DiscreteDistribution, DiscreteDistribution> split_measure(
    const DiscreteDistribution& m, const SubsetMask& a);

struct RegroupResult {
    double kappa_prime = 0.0;
    DiscreteDistribution g_prime;
    DiscreteDistribution h_prime;
};

/// Moves the part of g living on `a` into the component:
///   kappa' = kappa* + (1 - kappa*) G(A)
///   G'     = G_{A^c} / G(A^c)
///   H'     = ((1 - kappa*) G_A + kappa* H) / ((1 - kappa*) G(A) + kappa*)
RegroupResult regroup(const DiscreteDistribution& g, const DiscreteDistribution& h,
                      double kappa_star, const SubsetMask& a);

/// kappa(F|H) when G itself contains a beta share of H.
double bias_identity(double kappa_star, double beta);

enum class OrderingVerdict { equal, strictly_between, violated };
std::string to_string(OrderingVerdict v);

/// Checks kappa* <= kappa' <= kappa(F|H) for a regrouping set chosen under
/// the selection condition 0 < G(A) < kappa(G|H). When g is irreducible
/// (kappa(G|H) = 0) the condition is read as G(A) = 0.
OrderingVerdict check_ordering(const DiscreteDistribution& g, const DiscreteDistribution& h,
                               double kappa_star, const SubsetMask& a);

/// (F_A + gamma H) / (F(A) + gamma): the sample-constructible stand-in for H'.
DiscreteDistribution surrogate_h_tilde(const DiscreteDistribution& f,
                                       const DiscreteDistribution& h, const SubsetMask& a,
                                       double gamma = 1.0);

struct SurrogateGap {
    double max_singleton = 0.0;    // max_x |H'(x) - H~'(x)|
    double total_variation = 0.0;  // sup over sets = half the L1 distance
};

SurrogateGap surrogate_gap(const DiscreteDistribution& h_prime,
                           const DiscreteDistribution& h_tilde);

struct BoundInputs {
    std::size_t n_f = 1;
    std::size_t n_hprime = 1;
    double h_hat_a = 0.0;
    double delta = 0.05;
    double rademacher_f = 0.0;
    double rademacher_hprime = 0.0;
};

/// 2 * rademacher + 3 * sqrt(log(4/delta) / (2 n)).
double deviation_epsilon(double rademacher, std::size_t n, double delta);

/// Finite-sample part of the regrouped-estimate error bound; the
/// (1 - kappa*) G(A) term is left to the caller.
double regrouped_error_bound(const BoundInputs& b);

/// K = ((1 - kappa) M + delta H) / (1 - kappa + delta) with
/// (1 - kappa) M = F - kappa H. For any kappa <= kappa(F|H) and
/// delta in [0, kappa), (1 - kappa + delta) K + (kappa - delta) H = F.
DiscreteDistribution non_identifiable_witness(const DiscreteDistribution& f,
                                              const DiscreteDistribution& h, double kappa,
                                              double delta);

nlohmann::json to_json(const DiscreteDistribution& d);
DiscreteDistribution distribution_from_json(const nlohmann::json& j);

}  // namespace mpe
