// One-sided Wilcoxon signed-rank test for paired samples.
#pragma once

#include <cstddef>
#include <vector>

namespace mpe {

enum class WilcoxonMode { automatic, exact, normal };

struct WilcoxonResult {
    double statistic = 0.0;   // W+: sum of (mid)ranks of positive differences
    double p_value = 1.0;     // P(W+ >= observed) under the null
    std::size_t n_used = 0;   // nonzero differences
    std::size_t zeros_dropped = 0;
    bool exact = false;
    bool all_zero = false;    // every difference was zero; p is reported as 1
};

/// Tests the alternative "a tends to exceed b" on d = a - b. Zero
/// differences are dropped. `automatic` enumerates the sign-flip null
/// exactly for n <= 20 and uses the tie- and continuity-corrected normal
/// approximation above that.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    WilcoxonMode mode = WilcoxonMode::automatic);

}  // namespace mpe
