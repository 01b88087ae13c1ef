#include "smx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace smx {

namespace {

void check_positive_shape(std::span<const std::int64_t> shape) {
    for (std::int64_t e : shape) {
        if (e <= 0) {
            throw DimensionError("non-positive extent in shape " +
                                 shape_string(shape));
        }
    }
}

} // namespace

std::string shape_string(std::span<const std::int64_t> shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            out += " x ";
        }
        out += std::to_string(shape[i]);
    }
    out += "]";
    return out;
}

std::int64_t shape_product(std::span<const std::int64_t> shape) {
    std::int64_t p = 1;
    for (std::int64_t e : shape) {
        p *= e;
    }
    return p;
}

DenseTensor::DenseTensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)) {
    check_positive_shape(shape_);
    data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

DenseTensor::DenseTensor(std::vector<std::int64_t> shape,
                         std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_positive_shape(shape_);
    if (shape_product(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw DimensionError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }
}

DenseTensor DenseTensor::zeros(std::vector<std::int64_t> shape) {
    return DenseTensor(std::move(shape));
}

DenseTensor DenseTensor::full(std::vector<std::int64_t> shape, double value) {
    DenseTensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

DenseTensor DenseTensor::identity(std::int64_t n) {
    DenseTensor t({n, n});
    for (std::int64_t i = 0; i < n; ++i) {
        t.at2(i, i) = 1.0;
    }
    return t;
}

DenseTensor DenseTensor::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
    const std::int64_t m = static_cast<std::int64_t>(rows.size());
    const std::int64_t n =
        m > 0 ? static_cast<std::int64_t>(rows.begin()->size()) : 0;
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m * n));
    for (const auto &row : rows) {
        if (static_cast<std::int64_t>(row.size()) != n) {
            throw DimensionError("ragged row in tensor literal");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return DenseTensor({m, n}, std::move(data));
}

std::int64_t DenseTensor::extent(int axis) const {
    if (axis < 0 || axis >= ndim()) {
        throw DimensionError("axis " + std::to_string(axis) +
                             " out of range for shape " + shape_string(shape_));
    }
    return shape_[static_cast<std::size_t>(axis)];
}

void DenseTensor::reshape(std::vector<std::int64_t> new_shape) {
    check_positive_shape(new_shape);
    if (shape_product(new_shape) != size()) {
        throw DimensionError("reshape from " + shape_string(shape_) + " to " +
                             shape_string(new_shape) +
                             " changes the element count");
    }
    shape_ = std::move(new_shape);
}

DenseTensor DenseTensor::reshaped(std::vector<std::int64_t> new_shape) const {
    DenseTensor out = *this;
    out.reshape(std::move(new_shape));
    return out;
}

// --------------------------------------------------------------------------
// Kernels
// --------------------------------------------------------------------------

namespace {

void require_ndim(const DenseTensor &t, int nd, const char *who) {
    if (t.ndim() != nd) {
        throw DimensionError(std::string(who) + ": expected " +
                             std::to_string(nd) + "-d tensor, got shape " +
                             shape_string(t.shape()));
    }
}

// C (m,n) += A (m,k) B (k,n), row-major, k-major accumulation order.
void gemm_acc(const double *a, const double *b, double *c, std::int64_t m,
              std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double *arow = a + i * k;
        double *crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double *brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C (k,n) += A (m,k)^T Y (m,n)
void gemm_tn_acc(const double *a, const double *y, double *c, std::int64_t m,
                 std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double *arow = a + i * k;
        const double *yrow = y + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double *crow = c + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                crow[j] += av * yrow[j];
            }
        }
    }
}

// C (m,k) += Y (m,n) X (k,n)^T
void gemm_nt_acc(const double *y, const double *x, double *c, std::int64_t m,
                 std::int64_t n, std::int64_t k) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double *yrow = y + i * n;
        double *crow = c + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const double *xrow = x + p * n;
            double acc = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                acc += yrow[j] * xrow[j];
            }
            crow[p] += acc;
        }
    }
}

} // namespace

DenseTensor matmul(const DenseTensor &a, const DenseTensor &b,
                   MacCounter *mac) {
    require_ndim(a, 2, "matmul");
    require_ndim(b, 2, "matmul");
    if (a.extent(1) != b.extent(0)) {
        throw DimensionError("matmul: inner extents differ, " +
                             shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    const std::int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    DenseTensor c({m, n});
    gemm_acc(a.data(), b.data(), c.data(), m, k, n);
    if (mac) {
        mac->macs += m * k * n;
    }
    return c;
}

DenseTensor matmul_tn(const DenseTensor &a, const DenseTensor &y,
                      MacCounter *mac) {
    require_ndim(a, 2, "matmul_tn");
    require_ndim(y, 2, "matmul_tn");
    if (a.extent(0) != y.extent(0)) {
        throw DimensionError("matmul_tn: leading extents differ, " +
                             shape_string(a.shape()) + " vs " +
                             shape_string(y.shape()));
    }
    const std::int64_t m = a.extent(0), k = a.extent(1), n = y.extent(1);
    DenseTensor c({k, n});
    gemm_tn_acc(a.data(), y.data(), c.data(), m, k, n);
    if (mac) {
        mac->macs += m * k * n;
    }
    return c;
}

DenseTensor matmul_nt(const DenseTensor &y, const DenseTensor &x,
                      MacCounter *mac) {
    require_ndim(y, 2, "matmul_nt");
    require_ndim(x, 2, "matmul_nt");
    if (y.extent(1) != x.extent(1)) {
        throw DimensionError("matmul_nt: trailing extents differ, " +
                             shape_string(y.shape()) + " vs " +
                             shape_string(x.shape()));
    }
    const std::int64_t m = y.extent(0), n = y.extent(1), k = x.extent(0);
    DenseTensor c({m, k});
    gemm_nt_acc(y.data(), x.data(), c.data(), m, n, k);
    if (mac) {
        mac->macs += m * k * n;
    }
    return c;
}

DenseTensor bmm(const DenseTensor &a, const DenseTensor &x, MacCounter *mac) {
    require_ndim(a, 3, "bmm");
    require_ndim(x, 3, "bmm");
    if (a.extent(0) != x.extent(0) || a.extent(2) != x.extent(1)) {
        throw DimensionError("bmm: incompatible shapes " +
                             shape_string(a.shape()) + " vs " +
                             shape_string(x.shape()));
    }
    const std::int64_t bsz = a.extent(0), m = a.extent(1), k = a.extent(2),
                       n = x.extent(2);
    DenseTensor c({bsz, m, n});
    for (std::int64_t bi = 0; bi < bsz; ++bi) {
        gemm_acc(a.data() + bi * m * k, x.data() + bi * k * n,
                 c.data() + bi * m * n, m, k, n);
    }
    if (mac) {
        mac->macs += bsz * m * k * n;
    }
    return c;
}

DenseTensor bmm_broadcast(const DenseTensor &a, const DenseTensor &x,
                          MacCounter *mac) {
    require_ndim(a, 2, "bmm_broadcast");
    require_ndim(x, 3, "bmm_broadcast");
    if (a.extent(1) != x.extent(1)) {
        throw DimensionError("bmm_broadcast: incompatible shapes " +
                             shape_string(a.shape()) + " vs " +
                             shape_string(x.shape()));
    }
    const std::int64_t bsz = x.extent(0), m = a.extent(0), k = a.extent(1),
                       n = x.extent(2);
    DenseTensor c({bsz, m, n});
    for (std::int64_t bi = 0; bi < bsz; ++bi) {
        gemm_acc(a.data(), x.data() + bi * k * n, c.data() + bi * m * n, m, k,
                 n);
    }
    if (mac) {
        mac->macs += bsz * m * k * n;
    }
    return c;
}

DenseTensor bmm_tn(const DenseTensor &a, const DenseTensor &y,
                   MacCounter *mac) {
    require_ndim(a, 3, "bmm_tn");
    require_ndim(y, 3, "bmm_tn");
    if (a.extent(0) != y.extent(0) || a.extent(1) != y.extent(1)) {
        throw DimensionError("bmm_tn: incompatible shapes " +
                             shape_string(a.shape()) + " vs " +
                             shape_string(y.shape()));
    }
    const std::int64_t bsz = a.extent(0), m = a.extent(1), k = a.extent(2),
                       n = y.extent(2);
    DenseTensor c({bsz, k, n});
    for (std::int64_t bi = 0; bi < bsz; ++bi) {
        gemm_tn_acc(a.data() + bi * m * k, y.data() + bi * m * n,
                    c.data() + bi * k * n, m, k, n);
    }
    if (mac) {
        mac->macs += bsz * m * k * n;
    }
    return c;
}

DenseTensor bmm_tn_broadcast(const DenseTensor &a, const DenseTensor &y,
                             MacCounter *mac) {
    require_ndim(a, 2, "bmm_tn_broadcast");
    require_ndim(y, 3, "bmm_tn_broadcast");
    if (a.extent(0) != y.extent(1)) {
        throw DimensionError("bmm_tn_broadcast: incompatible shapes " +
                             shape_string(a.shape()) + " vs " +
                             shape_string(y.shape()));
    }
    const std::int64_t bsz = y.extent(0), m = a.extent(0), k = a.extent(1),
                       n = y.extent(2);
    DenseTensor c({bsz, k, n});
    for (std::int64_t bi = 0; bi < bsz; ++bi) {
        gemm_tn_acc(a.data(), y.data() + bi * m * n, c.data() + bi * k * n, m,
                    k, n);
    }
    if (mac) {
        mac->macs += bsz * m * k * n;
    }
    return c;
}

DenseTensor bmm_nt(const DenseTensor &y, const DenseTensor &x,
                   MacCounter *mac) {
    require_ndim(y, 3, "bmm_nt");
    require_ndim(x, 3, "bmm_nt");
    if (y.extent(0) != x.extent(0) || y.extent(2) != x.extent(2)) {
        throw DimensionError("bmm_nt: incompatible shapes " +
                             shape_string(y.shape()) + " vs " +
                             shape_string(x.shape()));
    }
    const std::int64_t bsz = y.extent(0), m = y.extent(1), n = y.extent(2),
                       k = x.extent(1);
    DenseTensor c({bsz, m, k});
    for (std::int64_t bi = 0; bi < bsz; ++bi) {
        gemm_nt_acc(y.data() + bi * m * n, x.data() + bi * k * n,
                    c.data() + bi * m * k, m, n, k);
    }
    if (mac) {
        mac->macs += bsz * m * k * n;
    }
    return c;
}

DenseTensor bmm_nt_reduce(const DenseTensor &y, const DenseTensor &x,
                          MacCounter *mac) {
    require_ndim(y, 3, "bmm_nt_reduce");
    require_ndim(x, 3, "bmm_nt_reduce");
    if (y.extent(0) != x.extent(0) || y.extent(2) != x.extent(2)) {
        throw DimensionError("bmm_nt_reduce: incompatible shapes " +
                             shape_string(y.shape()) + " vs " +
                             shape_string(x.shape()));
    }
    const std::int64_t bsz = y.extent(0), m = y.extent(1), n = y.extent(2),
                       k = x.extent(1);
    DenseTensor c({m, k});
    for (std::int64_t bi = 0; bi < bsz; ++bi) {
        gemm_nt_acc(y.data() + bi * m * n, x.data() + bi * k * n, c.data(), m,
                    n, k);
    }
    if (mac) {
        mac->macs += bsz * m * k * n;
    }
    return c;
}

DenseTensor permute(const DenseTensor &t, std::span<const int> perm) {
    const int nd = t.ndim();
    if (static_cast<int>(perm.size()) != nd) {
        throw DimensionError("permute: permutation length " +
                             std::to_string(perm.size()) +
                             " does not match rank " + std::to_string(nd));
    }
    std::vector<bool> seen(static_cast<std::size_t>(nd), false);
    for (int p : perm) {
        if (p < 0 || p >= nd || seen[static_cast<std::size_t>(p)]) {
            throw DimensionError("permute: invalid permutation");
        }
        seen[static_cast<std::size_t>(p)] = true;
    }

    std::vector<std::int64_t> old_strides(static_cast<std::size_t>(nd), 1);
    for (int i = nd - 2; i >= 0; --i) {
        old_strides[static_cast<std::size_t>(i)] =
            old_strides[static_cast<std::size_t>(i + 1)] * t.extent(i + 1);
    }

    std::vector<std::int64_t> new_shape(static_cast<std::size_t>(nd));
    std::vector<std::int64_t> src_stride(static_cast<std::size_t>(nd));
    for (int i = 0; i < nd; ++i) {
        new_shape[static_cast<std::size_t>(i)] = t.extent(perm[static_cast<std::size_t>(i)]);
        src_stride[static_cast<std::size_t>(i)] =
            old_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }

    DenseTensor out(new_shape);
    const double *src = t.data();
    double *dst = out.data();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(nd), 0);
    const std::int64_t total = t.size();
    std::int64_t src_off = 0;
    for (std::int64_t flat = 0; flat < total; ++flat) {
        dst[flat] = src[src_off];
        for (int ax = nd - 1; ax >= 0; --ax) {
            auto a = static_cast<std::size_t>(ax);
            idx[a] += 1;
            src_off += src_stride[a];
            if (idx[a] < new_shape[a]) {
                break;
            }
            src_off -= src_stride[a] * new_shape[a];
            idx[a] = 0;
        }
    }
    return out;
}

std::vector<int> inverse_permutation(std::span<const int> perm) {
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    }
    return inv;
}

DenseTensor transpose2d(const DenseTensor &t) {
    require_ndim(t, 2, "transpose2d");
    static const int p[2] = {1, 0};
    return permute(t, std::span<const int>(p, 2));
}

DenseTensor add(const DenseTensor &a, const DenseTensor &b) {
    if (!a.same_shape(b)) {
        throw DimensionError("add: shapes differ, " + shape_string(a.shape()) +
                             " vs " + shape_string(b.shape()));
    }
    DenseTensor c = a;
    for (std::int64_t i = 0; i < c.size(); ++i) {
        c[i] += b[i];
    }
    return c;
}

DenseTensor subtract(const DenseTensor &a, const DenseTensor &b) {
    if (!a.same_shape(b)) {
        throw DimensionError("subtract: shapes differ, " +
                             shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    DenseTensor c = a;
    for (std::int64_t i = 0; i < c.size(); ++i) {
        c[i] -= b[i];
    }
    return c;
}

DenseTensor scale(const DenseTensor &a, double s) {
    DenseTensor c = a;
    for (std::int64_t i = 0; i < c.size(); ++i) {
        c[i] *= s;
    }
    return c;
}

void add_inplace(DenseTensor &a, const DenseTensor &b) {
    if (!a.same_shape(b)) {
        throw DimensionError("add_inplace: shapes differ, " +
                             shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    for (std::int64_t i = 0; i < a.size(); ++i) {
        a[i] += b[i];
    }
}

double rms(const DenseTensor &t) {
    if (t.size() == 0) {
        throw DomainError("rms of an empty tensor");
    }
    double acc = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) {
        acc += t[i] * t[i];
    }
    return std::sqrt(acc / static_cast<double>(t.size()));
}

double frobenius_norm(const DenseTensor &t) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) {
        acc += t[i] * t[i];
    }
    return std::sqrt(acc);
}

double max_abs(const DenseTensor &t) {
    double m = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) {
        m = std::max(m, std::abs(t[i]));
    }
    return m;
}

double max_abs_diff(const DenseTensor &a, const DenseTensor &b) {
    if (a.size() != b.size()) {
        throw DimensionError("max_abs_diff: sizes differ");
    }
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

double dot(const DenseTensor &a, const DenseTensor &b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: sizes differ");
    }
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

// --------------------------------------------------------------------------
// RNG
// --------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t &state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto &s : s_) {
        s = splitmix64(sm);
    }
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl64(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl64(s_[3], 45);
    return result;
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform01() - 1.0;
        v = 2.0 * uniform01() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

double Rng::normal(double mean, double stddev) {
    return mean + stddev * normal();
}

std::int64_t Rng::below(std::int64_t n) {
    if (n <= 0) {
        throw DomainError("Rng::below requires n > 0");
    }
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::int64_t>(x % un);
}

DenseTensor gaussian(std::vector<std::int64_t> shape, double mean,
                     double stddev, std::uint64_t seed) {
    if (stddev < 0.0) {
        throw DomainError("gaussian: negative standard deviation");
    }
    DenseTensor t(std::move(shape));
    Rng rng(seed);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = mean + stddev * rng.normal();
    }
    return t;
}

// --------------------------------------------------------------------------
// SVD: one-sided Jacobi on the columns, rotations accumulated into V.
// --------------------------------------------------------------------------

namespace {

struct JacobiOutcome {
    DenseTensor w; // rotated copy of the input, columns orthogonal
    DenseTensor v; // accumulated rotations
    int sweeps = 0;
};

JacobiOutcome one_sided_jacobi(const DenseTensor &a, const SvdOptions &opts) {
    const std::int64_t m = a.extent(0), n = a.extent(1);
    JacobiOutcome out{a, DenseTensor::identity(n), 0};
    double *w = out.w.data();
    double *v = out.v.data();

    bool converged = n < 2;
    for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
        converged = true;
        out.sweeps = sweep + 1;
        for (std::int64_t p = 0; p + 1 < n; ++p) {
            for (std::int64_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::int64_t i = 0; i < m; ++i) {
                    const double wp = w[i * n + p];
                    const double wq = w[i * n + q];
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if (std::abs(apq) <= opts.tol * std::sqrt(app * aqq)) {
                    continue;
                }
                converged = false;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::int64_t i = 0; i < m; ++i) {
                    const double wp = w[i * n + p];
                    const double wq = w[i * n + q];
                    w[i * n + p] = c * wp - s * wq;
                    w[i * n + q] = s * wp + c * wq;
                }
                for (std::int64_t i = 0; i < n; ++i) {
                    const double vp = v[i * n + p];
                    const double vq = v[i * n + q];
                    v[i * n + p] = c * vp - s * vq;
                    v[i * n + q] = s * vp + c * vq;
                }
            }
        }
    }
    if (!converged) {
        throw NumericalError("svd did not converge within " +
                                 std::to_string(opts.max_sweeps) + " sweeps",
                             opts.max_sweeps);
    }
    return out;
}

// Fill near-null columns of u with an orthonormal completion so the factor
// keeps orthonormal columns even for rank-deficient input.
void complete_basis(DenseTensor &u, const std::vector<bool> &needs,
                    std::int64_t m, std::int64_t k) {
    for (std::int64_t j = 0; j < k; ++j) {
        if (!needs[static_cast<std::size_t>(j)]) {
            continue;
        }
        for (std::int64_t cand = 0; cand < m; ++cand) {
            std::vector<double> col(static_cast<std::size_t>(m), 0.0);
            col[static_cast<std::size_t>(cand)] = 1.0;
            // project out every other column (two passes for stability)
            for (int pass = 0; pass < 2; ++pass) {
                for (std::int64_t o = 0; o < k; ++o) {
                    if (o == j || needs[static_cast<std::size_t>(o)]) {
                        continue;
                    }
                    double proj = 0.0;
                    for (std::int64_t i = 0; i < m; ++i) {
                        proj += col[static_cast<std::size_t>(i)] * u.at2(i, o);
                    }
                    for (std::int64_t i = 0; i < m; ++i) {
                        col[static_cast<std::size_t>(i)] -= proj * u.at2(i, o);
                    }
                }
                for (std::int64_t o = 0; o < j; ++o) {
                    if (!needs[static_cast<std::size_t>(o)]) {
                        continue;
                    }
                    double proj = 0.0;
                    for (std::int64_t i = 0; i < m; ++i) {
                        proj += col[static_cast<std::size_t>(i)] * u.at2(i, o);
                    }
                    for (std::int64_t i = 0; i < m; ++i) {
                        col[static_cast<std::size_t>(i)] -= proj * u.at2(i, o);
                    }
                }
            }
            double norm = 0.0;
            for (double x : col) {
                norm += x * x;
            }
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (std::int64_t i = 0; i < m; ++i) {
                    u.at2(i, j) = col[static_cast<std::size_t>(i)] / norm;
                }
                break;
            }
        }
    }
}

} // namespace

SvdResult svd(const DenseTensor &a, const SvdOptions &opts) {
    if (a.ndim() != 2) {
        throw DimensionError("svd: expected a matrix, got shape " +
                             shape_string(a.shape()));
    }
    for (std::int64_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i])) {
            throw DomainError("svd: non-finite entry");
        }
    }
    const std::int64_t m = a.extent(0), n = a.extent(1);
    if (m < n) {
        SvdResult t = svd(transpose2d(a), opts);
        return SvdResult{std::move(t.v), std::move(t.s), std::move(t.u)};
    }

    JacobiOutcome jac = one_sided_jacobi(a, opts);
    const std::int64_t k = n;

    std::vector<double> norms(static_cast<std::size_t>(k), 0.0);
    for (std::int64_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < m; ++i) {
            acc += jac.w.at2(i, j) * jac.w.at2(i, j);
        }
        norms[static_cast<std::size_t>(j)] = std::sqrt(acc);
    }

    std::vector<std::int64_t> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::int64_t x, std::int64_t y) {
                         return norms[static_cast<std::size_t>(x)] >
                                norms[static_cast<std::size_t>(y)];
                     });

    SvdResult res;
    res.u = DenseTensor({m, k});
    res.v = DenseTensor({n, k});
    res.s.resize(static_cast<std::size_t>(k));
    const double smax = norms[static_cast<std::size_t>(order[0])];
    const double tiny = std::max(smax, 1.0) * 1e-300;
    std::vector<bool> needs_fill(static_cast<std::size_t>(k), false);
    for (std::int64_t j = 0; j < k; ++j) {
        const std::int64_t src = order[static_cast<std::size_t>(j)];
        const double sv = norms[static_cast<std::size_t>(src)];
        res.s[static_cast<std::size_t>(j)] = sv;
        for (std::int64_t i = 0; i < n; ++i) {
            res.v.at2(i, j) = jac.v.at2(i, src);
        }
        if (sv > tiny) {
            for (std::int64_t i = 0; i < m; ++i) {
                res.u.at2(i, j) = jac.w.at2(i, src) / sv;
            }
        } else {
            needs_fill[static_cast<std::size_t>(j)] = true;
        }
    }
    complete_basis(res.u, needs_fill, m, k);
    return res;
}

} // namespace smx
