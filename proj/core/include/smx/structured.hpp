#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "smx/tensor.hpp"

namespace smx {

enum class Family {
    Dense,
    LowRank,
    Convolution,
    Kronecker,
    Monarch,
    TensorTrain,
    BlockTensorTrain,
};

const char *family_name(Family f);
std::optional<Family> family_from_name(std::string_view name);

// How a dimension d splits into per-core factors.
struct AxisFactorization {
    std::int64_t total = 1;
    std::vector<std::int64_t> factors;
};

// Ordered non-decreasing factors with product d, minimizing max/min ratio;
// ties resolved to the lexicographically smallest tuple. A prime d with
// c = 2 yields (1, d).
AxisFactorization balanced_factorization(std::int64_t d, int c);

// --------------------------------------------------------------------------
// The seven matrix families.
//
// Convention for multi-core families: cores are numbered t = 1..c with
// shapes chaining through ranks r_0 = r_c = 1, and the MVM contracts cores
// from t = c down to t = 1 (core c touches the fastest-varying input axis).
// Row and column indices group their per-core factors in row-major order.
// --------------------------------------------------------------------------

struct DenseMatrix {
    DenseTensor w; // (d_out, d_in)
};

struct LowRankMatrix {
    DenseTensor u; // (d_out, r)
    DenseTensor v; // (r, d_in)
};

// Circular (wrap-around) Toeplitz: W[i][j] = kernel[(i - j) mod dim] for
// offsets below the kernel length, zero otherwise. Square by construction.
struct ConvolutionMatrix {
    DenseTensor kernel; // (p)
    std::int64_t dim = 0;
};

struct KroneckerMatrix {
    DenseTensor l; // (m1, n1)
    DenseTensor r; // (m2, n2)
};

// Two block-diagonal factors conjugated by reshape-transpose permutations.
// The inner dimension equals d_in (square blocks on the input side).
struct MonarchMatrix {
    DenseTensor l; // (b, d_out/b, d_in/b)
    DenseTensor r; // (b, d_in/b, d_in/b)
};

// Core t has shape (r_{t-1}, m_t, n_t, r_t); ranks holds r_0..r_c.
struct TensorTrainMatrix {
    std::vector<DenseTensor> cores;
    std::vector<std::int64_t> out_factors;
    std::vector<std::int64_t> in_factors;
    std::vector<std::int64_t> ranks;
};

// Like TensorTrain but with independent parameters along the block axes.
// Core t is stored batch-first as (B_t, r_{t-1}*m_t, n_t*r_t) where
// B_t = prod(m_s, s>t) * prod(n_s, s<t) and the batch index runs row-major
// over (i_{t+1}, ..., i_c, j_1, ..., j_{t-1}). This layout turns each
// contraction step into a single batched matmul.
struct BlockTensorTrainMatrix {
    std::vector<DenseTensor> cores;
    std::vector<std::int64_t> out_factors;
    std::vector<std::int64_t> in_factors;
    std::vector<std::int64_t> ranks; // r_0..r_c
};

class StructuredMatrix {
  public:
    using Value = std::variant<DenseMatrix, LowRankMatrix, ConvolutionMatrix,
                               KroneckerMatrix, MonarchMatrix,
                               TensorTrainMatrix, BlockTensorTrainMatrix>;

    StructuredMatrix(); // 1x1 zero dense placeholder
    explicit StructuredMatrix(Value v); // validates shapes and rank chains

    Family family() const;
    std::int64_t rows() const { return rows_; }
    std::int64_t cols() const { return cols_; }

    const Value &value() const { return value_; }
    Value &value() { return value_; }

    template <class T> const T &as() const { return std::get<T>(value_); }
    template <class T> T &as() { return std::get<T>(value_); }

  private:
    Value value_;
    std::int64_t rows_ = 0;
    std::int64_t cols_ = 0;
};

StructuredMatrix make_dense(DenseTensor w);
StructuredMatrix make_low_rank(DenseTensor u, DenseTensor v);
StructuredMatrix make_convolution(DenseTensor kernel, std::int64_t dim);
StructuredMatrix make_kronecker(DenseTensor l, DenseTensor r);
StructuredMatrix make_monarch(DenseTensor l, DenseTensor r);
StructuredMatrix make_tensor_train(std::vector<DenseTensor> cores,
                                   std::vector<std::int64_t> out_factors,
                                   std::vector<std::int64_t> in_factors);
StructuredMatrix
make_block_tensor_train(std::vector<DenseTensor> cores,
                        std::vector<std::int64_t> out_factors,
                        std::vector<std::int64_t> in_factors,
                        std::vector<std::int64_t> ranks);

// Builds a zero-initialized instance of the requested family and shape.
// Factorizations are balanced; BTT ranks are clipped per position to the
// exact-representability bound.
struct StructureOptions {
    int cores = 2;            // tt/btt
    std::int64_t rank = 1;    // lowrank/tt/btt
    std::int64_t blocks = 4;  // monarch
    std::int64_t kernel = 5;  // convolution taps
};
StructuredMatrix make_structured(Family f, std::int64_t d_out,
                                 std::int64_t d_in,
                                 const StructureOptions &opts = {});

// --------------------------------------------------------------------------
// Learnable components, enumerated in application (chain) order: position 1
// is the first tensor the MVM touches, position k the last. Each component
// behaves as a batch of B dense (d_out x d_in) blocks.
// --------------------------------------------------------------------------
struct DenseComponent {
    std::string name;
    int position = 1; // 1-based chain position
    std::int64_t batch = 1;
    std::int64_t d_out = 0;
    std::int64_t d_in = 0;
};

std::vector<DenseComponent> components(const StructuredMatrix &m);
// Core tensors in the same chain order as components().
std::vector<DenseTensor *> core_tensors(StructuredMatrix &m);
std::vector<const DenseTensor *> core_tensors(const StructuredMatrix &m);

// --------------------------------------------------------------------------
// MVM and materialization
// --------------------------------------------------------------------------

// Per-stage inputs recorded during apply, consumed by structured_backward.
struct ApplyCache {
    std::vector<DenseTensor> stage_inputs;
};

// Applies m to a batch of column vectors X (d_in, nb) -> (d_out, nb) without
// materializing the represented matrix. Pass `mac` to count the exact
// multiply-accumulate cost, `cache` to enable a backward pass.
DenseTensor structured_apply(const StructuredMatrix &m, const DenseTensor &x,
                             MacCounter *mac = nullptr,
                             ApplyCache *cache = nullptr);

// Reverse-mode through structured_apply: returns dX and accumulates core
// gradients (chain order, pre-sized like core_tensors) into core_grads.
DenseTensor structured_backward(const StructuredMatrix &m,
                                const ApplyCache &cache, const DenseTensor &dy,
                                std::vector<DenseTensor> &core_grads);

std::vector<double> mvm(const StructuredMatrix &m, std::span<const double> x,
                        MacCounter *mac = nullptr);
DenseTensor mvm_batched(const StructuredMatrix &m, const DenseTensor &x,
                        MacCounter *mac = nullptr);

// The exact dense matrix the structure represents, computed by a separate
// element-level path (not by applying the fast MVM to basis vectors), so the
// two routes can check each other.
constexpr std::int64_t kDefaultMaterializeCap = std::int64_t(1) << 20;
DenseTensor materialize(const StructuredMatrix &m,
                        std::int64_t element_cap = kDefaultMaterializeCap);

// --------------------------------------------------------------------------
// Rank bounds for exact representability (square d, balanced factors).
// Ranks above the bound are redundant and construction rejects them.
// --------------------------------------------------------------------------
std::int64_t btt_rank_bound(int t, int c, std::int64_t d);
std::int64_t tt_rank_bound(int t, int c, std::int64_t d);
// Factor-level generalizations used for rectangular shapes.
std::vector<std::int64_t> btt_rank_bounds(std::span<const std::int64_t> m,
                                          std::span<const std::int64_t> n);

// --------------------------------------------------------------------------
// Self-describing JSON serialization; the float payload round-trips
// bit-exactly.
// --------------------------------------------------------------------------
std::string to_json_string(const StructuredMatrix &m, int indent = -1);
StructuredMatrix structured_from_json(std::string_view text);

} // namespace smx
