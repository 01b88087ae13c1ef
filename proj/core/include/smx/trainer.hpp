#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smx/mup.hpp"
#include "smx/structured.hpp"

namespace smx {

// --------------------------------------------------------------------------
// Weight normalization: M~ = gamma * min(1, sigma / rms(M)) * M. The clamp
// keeps a core's entry RMS at or below its init scale; gamma restores lost
// magnitude where needed.
// --------------------------------------------------------------------------
struct WeightNormState {
    double gamma = 1.0;
    double sigma = 0.0; // frozen init std of the core; must be > 0
};

DenseTensor weight_normalize(const DenseTensor &core,
                             const WeightNormState &state);

// --------------------------------------------------------------------------
// Model
// --------------------------------------------------------------------------

struct StructuredLayer {
    StructuredMatrix matrix; // raw trainable cores
    MuPPlan plan;
    std::vector<double> lrs;               // per core, honors structure_aware
    std::vector<WeightNormState> wn;       // empty when normalization is off
    double wn_gamma_lr = 0.0;
    // Adam state, lazily sized
    std::vector<DenseTensor> adam_m, adam_v;
    std::vector<double> gamma_m, gamma_v;
};

struct LayerNormParams {
    DenseTensor gamma; // (d)
    DenseTensor beta;  // (d)
    double lr = 0.0;
    DenseTensor adam_m_g, adam_v_g, adam_m_b, adam_v_b;
};

struct ResidualBlock {
    LayerNormParams ln;
    StructuredLayer w1; // (expansion*d, d)
    StructuredLayer w2; // (d, expansion*d), zero-initialized last component
};

struct ResidualMLP {
    StructuredLayer embed;
    std::vector<ResidualBlock> blocks;
    StructuredLayer head; // always dense
    std::int64_t width = 0;
    std::int64_t input_dim = 0;
    std::int64_t num_classes = 0;
    int expansion = 4;
};

struct TrainConfig {
    Family family = Family::Dense;
    std::int64_t width = 64;
    int depth = 2;
    std::int64_t input_dim = 32;
    std::int64_t num_classes = 8;
    int expansion = 4; // hidden blowup inside a block; use 1 for conv
    StructureOptions structure; // rank/cores/blocks/kernel
    Optimizer optimizer = Optimizer::Adam;
    double base_lr = 3e-3;
    std::int64_t base_width = 64;
    bool structure_aware = true;
    bool weight_norm = false;
    bool zero_init_residual = true; // zero-init last component of each w2
    bool zero_init_head = true;
    bool dense_input_for_lowrank = true; // avoid a rank bottleneck at input
    double input_lr_mult = 1.0; // optional small multiplier for the embed lr
    bool cosine_decay = false;
    int steps = 200;
    std::int64_t batch = 128;
    std::int64_t dataset_size = 2048;
    std::int64_t probe_size = 256;
    double class_separation = 3.0;
    std::uint64_t seed = 0;
};

ResidualMLP build_model(const TrainConfig &cfg);

// --------------------------------------------------------------------------
// Forward / backward
// --------------------------------------------------------------------------

struct LayerApply {
    ApplyCache cache;
    std::optional<StructuredMatrix> effective; // set when weight norm is on
    std::vector<double> wn_scale;              // min(1, sigma/rms) per core
    std::vector<double> wn_rms;                // rms of each raw core
};

struct BlockCache {
    DenseTensor h_in;
    DenseTensor xhat;    // normalized input
    std::vector<double> inv_std; // per sample
    DenseTensor u;       // ln output
    DenseTensor p;       // w1 u
    DenseTensor g;       // gelu(p)
    LayerApply a1, a2;
};

struct ForwardCache {
    DenseTensor input;
    LayerApply embed;
    std::vector<BlockCache> blocks;
    DenseTensor prehead; // activation entering the head
    LayerApply head;
    DenseTensor logits;
};

DenseTensor forward(const ResidualMLP &model, const DenseTensor &x,
                    ForwardCache *cache = nullptr);
DenseTensor prehead_activation(const ResidualMLP &model, const DenseTensor &x);

double cross_entropy(const DenseTensor &logits, std::span<const int> labels);

struct LayerGrads {
    std::vector<DenseTensor> cores; // chain order
    std::vector<double> gammas;     // weight-norm scalars, when active
};

struct BlockGrads {
    LayerGrads w1, w2;
    DenseTensor ln_gamma, ln_beta;
};

struct ModelGrads {
    LayerGrads embed;
    std::vector<BlockGrads> blocks;
    LayerGrads head;
};

ModelGrads make_grads(const ResidualMLP &model);

// Exact gradients of the mean cross-entropy; structured layers run the
// transposed contraction sequence, nothing is materialized.
double forward_backward(const ResidualMLP &model, const DenseTensor &x,
                        std::span<const int> labels, ModelGrads &grads);
ModelGrads backward(const ResidualMLP &model, const ForwardCache &cache,
                    std::span<const int> labels);

// --------------------------------------------------------------------------
// Optimizers. lr_scale multiplies every learning rate (cosine decay hook).
// Adam uses beta1 = 0.9, beta2 = 0.999, eps = 1e-8 with bias correction.
// --------------------------------------------------------------------------
void adam_update_tensor(DenseTensor &param, const DenseTensor &grad,
                        DenseTensor &m, DenseTensor &v, double lr, int step);
void adam_step(ResidualMLP &model, const ModelGrads &grads, int step,
               double lr_scale = 1.0);
void sgd_step(ResidualMLP &model, const ModelGrads &grads,
              double lr_scale = 1.0);

// --------------------------------------------------------------------------
// Training loop and coordinate check
// --------------------------------------------------------------------------

struct TrainRecord {
    int step = 0;
    double loss = 0.0;          // minibatch loss before the update
    double delta_h_rms = 0.0;   // RMS of the probe-batch prehead change
    double activation_rms = 0.0; // RMS of the probe-batch prehead activation
};

struct TrainResult {
    std::vector<TrainRecord> records;
    double final_loss = 0.0;
    bool diverged = false;
};

struct Dataset {
    DenseTensor x; // (input_dim, n)
    std::vector<int> labels;
};

Dataset gaussian_mixture(std::int64_t input_dim, std::int64_t classes,
                         std::int64_t n, double separation,
                         std::uint64_t seed);

TrainResult run_training(const TrainConfig &cfg,
                         ResidualMLP *model_out = nullptr);

std::string train_records_csv(const std::vector<TrainRecord> &records);

struct CoordinateCheckRow {
    std::int64_t width = 0;
    double mean_delta_h_rms = 0.0;
    bool diverged = false;
};

// Trains the same synthetic task at several widths and reports the mean
// feature-update RMS per width. With structure_aware=false the per-component
// multipliers are dropped and only the 1/width transfer is applied.
std::vector<CoordinateCheckRow>
coordinate_check(Family family, std::span<const std::int64_t> widths,
                 int steps, bool structure_aware, const TrainConfig &base);

} // namespace smx
