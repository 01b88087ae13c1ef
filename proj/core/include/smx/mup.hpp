#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smx/rational.hpp"
#include "smx/structured.hpp"

namespace smx {

enum class Optimizer { Adam, Sgd };

// Per-component initialization and learning-rate plan for one structured
// layer. Components follow chain order; position k is the last applied.
struct ComponentPlan {
    std::string name;
    int position = 1;
    std::int64_t batch = 1;
    std::int64_t d_out = 0;
    std::int64_t d_in = 0;   // fan-in of this component
    double init_std = 0.0;   // 0 when zero_init
    double reference_std = 0.0; // the non-zero init scale (used as sigma by
                                // weight normalization even for zero-init)
    Rational kappa;          // learning-rate multiplier vs the dense layer
    double delta = 0.0;      // per-component share, 1/k by default
    double effective_lr = 0.0;
    bool zero_init = false;
};

struct MuPPlan {
    Optimizer optimizer = Optimizer::Adam;
    double base_lr = 0.0;
    std::int64_t base_width = 0;
    std::int64_t d_in = 0;
    std::int64_t d_out = 0;
    int k = 0; // number of learnable components
    std::vector<ComponentPlan> components;

    std::string to_json_string(int indent = -1) const;
    // Re-derives kappa and effective_lr after a delta override.
    void set_delta(int position, double delta);
};

// Structure-aware plan: every component i gets
//   init std  = sqrt(min(d_in_i, d_out_i)) / d_in_i
//   kappa_i   = (d_in / d_in_i) * delta_i                  (Adam)
//   kappa_i   = ((d_out_i/d_in_i) / (d_out/d_in)) * delta_i (SGD)
//   eta_i     = base_lr * (base_width / d_in) * kappa_i
// with delta_i = 1/k. When last_in_residual is set the final component is
// zero-initialized; a zero-initialized low-rank u relaxes v's std to
// 1/sqrt(d_in) so the first step still produces gradients for both factors.
MuPPlan plan(const StructuredMatrix &m, std::int64_t d_in, std::int64_t d_out,
             Optimizer opt, double base_lr, std::int64_t base_width,
             bool last_in_residual);

// sqrt(min(d_in, d_out)) / d_in with the hidden constant fixed to 1.
double dense_mup_init_std(std::int64_t d_in, std::int64_t d_out);

// Transfers a tuned Adam learning rate across widths: eta* d_in / d_in'.
double transfer_lr(double eta_star, std::int64_t d_in_from,
                   std::int64_t d_in_to);

} // namespace smx
