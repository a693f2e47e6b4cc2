// Hand-rolled generators and brute-force oracles shared by the test suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mpe/measure.hpp"
#include "mpe/sample.hpp"

namespace mpe::testing {

/// Probability vector on `n` points; each point is zeroed with probability
/// `zero_rate`, but at least one point keeps mass.
inline std::vector<double> random_masses(std::mt19937_64& rng, std::size_t n, double zero_rate = 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> m(n);
    double total = 0.0;
    for (auto& x : m) {
        x = u(rng) < zero_rate ? 0.0 : 0.05 + u(rng);
        total += x;
    }
    if (total == 0.0) {
        m[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
        total = 1.0;
    }
    for (auto& x : m) x /= total;
    return m;
}

inline DiscreteDistribution random_distribution(std::mt19937_64& rng, std::size_t n, double zero_rate = 0.0) {
    return DiscreteDistribution::from_masses(random_masses(rng, n, zero_rate));
}

/// Uniformly random subset of ids 1..n (each id kept with probability 1/2).
inline SubsetMask random_subset(std::mt19937_64& rng, std::size_t n) {
    std::bernoulli_distribution keep(0.5);
    std::vector<PointId> ids;
    for (std::size_t i = 1; i <= n; ++i) {
        if (keep(rng)) ids.push_back(static_cast<PointId>(i));
    }
    return SubsetMask(std::move(ids));
}

/// min over nonempty S with H(S) > 0 of F(S)/H(S) by enumerating all 2^n - 1
/// subsets of the (shared) support, clamped to [0, 1].
inline double kappa_by_enumeration(const std::vector<double>& f, const std::vector<double>& h) {
    const std::size_t n = f.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
        double fs = 0.0;
        double hs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::uint64_t{1} << i)) {
                fs += f[i];
                hs += h[i];
            }
        }
        if (hs > 0.0) best = std::min(best, fs / hs);
    }
    return std::clamp(best, 0.0, 1.0);
}

inline Eigen::MatrixXd gaussian_points(std::mt19937_64& rng, std::size_t n, std::size_t dim, double mean) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = mean + z(rng);
    }
    return out;
}

/// Rows from N(mean_h, I) with probability kappa and N(mean_g, I) otherwise.
inline Eigen::MatrixXd gaussian_mixture(std::mt19937_64& rng, std::size_t n, std::size_t dim, double mean_g,
                                        double mean_h, double kappa) {
    std::bernoulli_distribution from_h(kappa);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double mean = from_h(rng) ? mean_h : mean_g;
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = mean + z(rng);
    }
    return out;
}

/// Draws n point ids from a discrete distribution (ids stored as a one-column
/// point matrix so they can travel through Sample).
inline std::vector<double> draw_ids(std::mt19937_64& rng, const DiscreteDistribution& d, std::size_t n) {
    std::discrete_distribution<std::size_t> pick(d.mass().begin(), d.mass().end());
    std::vector<double> out(n);
    for (auto& x : out) x = static_cast<double>(d.support()[pick(rng)]);
    return out;
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace mpe::testing
