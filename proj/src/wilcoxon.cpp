#include "mpe/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mpe {

namespace {

constexpr std::size_t kMaxExactN = 20;

// Midranks of |d|, doubled so they stay integral.
std::vector<long> doubled_midranks(const std::vector<double>& abs_d, double& tie_term) {
    const std::size_t n = abs_d.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return abs_d[x] < abs_d[y]; });
    std::vector<long> r2(n);
    tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && abs_d[order[j + 1]] == abs_d[order[i]]) ++j;
        // positions i..j share ranks i+1..j+1; doubled mean = i+j+2
        for (std::size_t k = i; k <= j; ++k) r2[order[k]] = static_cast<long>(i + j + 2);
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    return r2;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    WilcoxonMode mode) {
    if (a.size() != b.size()) throw std::invalid_argument("paired samples differ in length");
    if (a.size() < 5) throw std::invalid_argument("signed-rank test needs at least 5 pairs");

    std::vector<double> abs_d;
    std::vector<bool> positive;
    WilcoxonResult out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (!std::isfinite(d)) throw std::invalid_argument("non-finite paired difference");
        if (d == 0.0) {
            ++out.zeros_dropped;
            continue;
        }
        abs_d.push_back(std::abs(d));
        positive.push_back(d > 0.0);
    }
    const std::size_t n = abs_d.size();
    out.n_used = n;
    if (n == 0) {
        out.all_zero = true;
        out.p_value = 1.0;
        out.exact = mode != WilcoxonMode::normal;
        return out;
    }

    double tie_term = 0.0;
    const std::vector<long> r2 = doubled_midranks(abs_d, tie_term);
    long w2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (positive[i]) w2 += r2[i];
    }
    out.statistic = static_cast<double>(w2) / 2.0;

    const bool exact = mode == WilcoxonMode::exact || (mode == WilcoxonMode::automatic && n <= kMaxExactN);
    out.exact = exact;
    if (exact) {
        if (n > 40) throw std::invalid_argument("exact signed-rank null limited to 40 pairs");
        // counts[s]: sign patterns whose doubled W+ equals s
        const long total = std::accumulate(r2.begin(), r2.end(), 0L);
        std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
        counts[0] = 1.0;
        long reach = 0;
        for (long r : r2) {
            for (long s = reach; s >= 0; --s) {
                if (counts[static_cast<std::size_t>(s)] != 0.0) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
            }
            reach += r;
        }
        double tail = 0.0;
        for (long s = w2; s <= total; ++s) tail += counts[static_cast<std::size_t>(s)];
        out.p_value = std::min(1.0, std::ldexp(tail, -static_cast<int>(n)));
        return out;
    }

    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
        out.p_value = out.statistic >= mean ? 0.5 : 1.0;
        return out;
    }
    const double z = (out.statistic - mean - 0.5) / std::sqrt(var);
    out.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
    return out;
}

}  // namespace mpe
