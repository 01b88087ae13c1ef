#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "smx/errors.hpp"

namespace smx {

// Counts multiply-accumulate operations executed by the dense kernels.
// Pass a counter through the structured MVM path to measure its exact cost.
struct MacCounter {
    long long macs = 0;
};

// Dense row-major tensor of 64-bit floats. Values are immutable by
// convention once built; all free functions below return new tensors.
class DenseTensor {
  public:
    DenseTensor() = default;
    explicit DenseTensor(std::vector<std::int64_t> shape);
    DenseTensor(std::vector<std::int64_t> shape, std::vector<double> data);

    static DenseTensor zeros(std::vector<std::int64_t> shape);
    static DenseTensor full(std::vector<std::int64_t> shape, double value);
    static DenseTensor identity(std::int64_t n);
    // Row-major 2-d literal, handy in tests.
    static DenseTensor
    from_rows(std::initializer_list<std::initializer_list<double>> rows);

    const std::vector<std::int64_t> &shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::int64_t extent(int axis) const;
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    double *data() { return data_.data(); }
    const double *data() const { return data_.data(); }
    std::span<const double> values() const { return data_; }
    std::vector<double> &storage() { return data_; }
    const std::vector<double> &storage() const { return data_; }

    double &operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // 2-d accessors (row-major).
    double &at2(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    double at2(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }

    // Reinterprets the extents without touching the data. The element count
    // must be preserved; data order is never changed.
    void reshape(std::vector<std::int64_t> new_shape);
    DenseTensor reshaped(std::vector<std::int64_t> new_shape) const;

    bool same_shape(const DenseTensor &o) const { return shape_ == o.shape_; }

  private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(std::span<const std::int64_t> shape);
std::int64_t shape_product(std::span<const std::int64_t> shape);

// --------------------------------------------------------------------------
// Dense kernels. All reductions run in a fixed order so results are
// bit-reproducible.
// --------------------------------------------------------------------------

// (m,k) x (k,n) -> (m,n)
DenseTensor matmul(const DenseTensor &a, const DenseTensor &b,
                   MacCounter *mac = nullptr);
// (m,k)^T x (m,n) -> (k,n)
DenseTensor matmul_tn(const DenseTensor &a, const DenseTensor &y,
                      MacCounter *mac = nullptr);
// (m,n) x (k,n)^T -> (m,k)
DenseTensor matmul_nt(const DenseTensor &y, const DenseTensor &x,
                      MacCounter *mac = nullptr);

// Batched matmul: (B,m,k) x (B,k,n) -> (B,m,n)
DenseTensor bmm(const DenseTensor &a, const DenseTensor &x,
                MacCounter *mac = nullptr);
// Shared left operand: (m,k) x (B,k,n) -> (B,m,n)
DenseTensor bmm_broadcast(const DenseTensor &a, const DenseTensor &x,
                          MacCounter *mac = nullptr);
// Transposed-left: (B,m,k)^T x (B,m,n) -> (B,k,n)
DenseTensor bmm_tn(const DenseTensor &a, const DenseTensor &y,
                   MacCounter *mac = nullptr);
DenseTensor bmm_tn_broadcast(const DenseTensor &a, const DenseTensor &y,
                             MacCounter *mac = nullptr);
// Transposed-right: (B,m,n) x (B,k,n)^T -> (B,m,k)
DenseTensor bmm_nt(const DenseTensor &y, const DenseTensor &x,
                   MacCounter *mac = nullptr);
// Same, summed over the batch axis: -> (m,k)
DenseTensor bmm_nt_reduce(const DenseTensor &y, const DenseTensor &x,
                          MacCounter *mac = nullptr);

// Axis permutation: result axis i carries old axis perm[i].
DenseTensor permute(const DenseTensor &t, std::span<const int> perm);
std::vector<int> inverse_permutation(std::span<const int> perm);
DenseTensor transpose2d(const DenseTensor &t);

DenseTensor add(const DenseTensor &a, const DenseTensor &b);
DenseTensor subtract(const DenseTensor &a, const DenseTensor &b);
DenseTensor scale(const DenseTensor &a, double s);
void add_inplace(DenseTensor &a, const DenseTensor &b);

double rms(const DenseTensor &t);
double frobenius_norm(const DenseTensor &t);
double max_abs(const DenseTensor &t);
double max_abs_diff(const DenseTensor &a, const DenseTensor &b);
double dot(const DenseTensor &a, const DenseTensor &b);

// --------------------------------------------------------------------------
// Seeded RNG: xoshiro256++ seeded through splitmix64. Normal variates come
// from the Marsaglia polar method. Fixed here so seeded runs reproduce.
// --------------------------------------------------------------------------
class Rng {
  public:
    explicit Rng(std::uint64_t seed);
    std::uint64_t next_u64();
    double uniform01(); // [0, 1)
    double normal();    // standard normal
    double normal(double mean, double stddev);
    std::int64_t below(std::int64_t n); // uniform in [0, n)

  private:
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// I.i.d. N(mean, stddev^2) entries, reproducible from the seed.
DenseTensor gaussian(std::vector<std::int64_t> shape, double mean,
                     double stddev, std::uint64_t seed);

// --------------------------------------------------------------------------
// Thin SVD via one-sided Jacobi; accurate at the small sizes this library
// works with (<= 512x512).
// --------------------------------------------------------------------------
struct SvdOptions {
    int max_sweeps = 100;
    double tol = 1e-12; // relative off-diagonal Gram threshold
};

struct SvdResult {
    DenseTensor u;         // (m, k) orthonormal columns
    std::vector<double> s; // k = min(m, n), non-increasing
    DenseTensor v;         // (n, k) orthonormal columns
};

SvdResult svd(const DenseTensor &a, const SvdOptions &opts = {});

} // namespace smx
