#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "smx/rational.hpp"
#include "smx/structured.hpp"

namespace smx {

// Exact multiply-accumulate and parameter counts for one MVM. FLOPs are
// counted as MACs; pass double_flops=true at the presentation layer for the
// 2x convention. Fixed permutations, reshapes and residual additions are
// not counted.
struct CostReport {
    Family family = Family::Dense;
    std::int64_t width_out = 0;
    std::int64_t width_in = 0;
    int cores = 1;
    std::int64_t rank = 0;   // lowrank/tt/btt; 0 when not applicable
    std::int64_t blocks = 0; // monarch; 0 when not applicable
    long long flops = 0;     // MACs per MVM
    long long params = 0;
    Rational xi;             // flops / max(width_in, width_out)

    static std::string csv_header();
    std::string csv_row(bool double_flops = false) const;
};

// Closed-form counts: the exact sums over the core contractions the MVM
// executes.
CostReport cost(const StructuredMatrix &m);

// Runs the real MVM with a MAC counter threaded through the dense kernels
// and returns the count. Always equals cost(m).flops.
long long measured_flops(const StructuredMatrix &m, std::span<const double> x);

} // namespace smx
