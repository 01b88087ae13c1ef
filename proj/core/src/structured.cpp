#include "smx/structured.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace smx {

namespace {

using json = nlohmann::json;

std::int64_t product(std::span<const std::int64_t> v) {
    std::int64_t p = 1;
    for (auto e : v) {
        p *= e;
    }
    return p;
}

} // namespace

const char *family_name(Family f) {
    switch (f) {
    case Family::Dense:
        return "dense";
    case Family::LowRank:
        return "lowrank";
    case Family::Convolution:
        return "conv";
    case Family::Kronecker:
        return "kron";
    case Family::Monarch:
        return "monarch";
    case Family::TensorTrain:
        return "tt";
    case Family::BlockTensorTrain:
        return "btt";
    }
    return "?";
}

std::optional<Family> family_from_name(std::string_view name) {
    static constexpr Family all[] = {
        Family::Dense,    Family::LowRank,     Family::Convolution,
        Family::Kronecker, Family::Monarch,    Family::TensorTrain,
        Family::BlockTensorTrain,
    };
    for (Family f : all) {
        if (name == family_name(f)) {
            return f;
        }
    }
    return std::nullopt;
}

// --------------------------------------------------------------------------
// Balanced factorization
// --------------------------------------------------------------------------

namespace {

void enumerate_factorizations(std::int64_t d, int c, std::int64_t min_factor,
                              std::vector<std::int64_t> &cur,
                              std::vector<std::vector<std::int64_t>> &out) {
    if (c == 1) {
        if (d >= min_factor) {
            cur.push_back(d);
            out.push_back(cur);
            cur.pop_back();
        }
        return;
    }
    for (std::int64_t f = min_factor; f <= d; ++f) {
        if (d % f != 0) {
            continue;
        }
        cur.push_back(f);
        enumerate_factorizations(d / f, c - 1, f, cur, out);
        cur.pop_back();
    }
}

} // namespace

AxisFactorization balanced_factorization(std::int64_t d, int c) {
    if (d < 1 || c < 1) {
        throw DomainError("balanced_factorization requires d >= 1 and c >= 1");
    }
    std::vector<std::vector<std::int64_t>> candidates;
    std::vector<std::int64_t> cur;
    enumerate_factorizations(d, c, 1, cur, candidates);

    const std::vector<std::int64_t> *best = nullptr;
    double best_ratio = 0.0;
    for (const auto &cand : candidates) {
        const double ratio = static_cast<double>(cand.back()) /
                             static_cast<double>(cand.front());
        if (!best || ratio < best_ratio ||
            (ratio == best_ratio && cand < *best)) {
            best = &cand;
            best_ratio = ratio;
        }
    }
    return AxisFactorization{d, *best};
}

// --------------------------------------------------------------------------
// Rank bounds
// --------------------------------------------------------------------------

std::vector<std::int64_t> btt_rank_bounds(std::span<const std::int64_t> m,
                                          std::span<const std::int64_t> n) {
    const int c = static_cast<int>(m.size());
    if (static_cast<int>(n.size()) != c || c < 2) {
        throw DimensionError("btt_rank_bounds: need matching factor lists of "
                             "length >= 2");
    }
    // bound_t = min(prod(m_1..m_t), n_{t+1} * bound_{t+1}), bound_c = 1
    std::vector<std::int64_t> bounds(static_cast<std::size_t>(c - 1), 0);
    std::int64_t carry = 1; // bound_{t+1}
    for (int t = c - 1; t >= 1; --t) {
        std::int64_t mprod = 1;
        for (int s = 1; s <= t; ++s) {
            mprod *= m[static_cast<std::size_t>(s - 1)];
        }
        const std::int64_t b =
            std::min(mprod, n[static_cast<std::size_t>(t)] * carry);
        bounds[static_cast<std::size_t>(t - 1)] = b;
        carry = b;
    }
    return bounds;
}

std::int64_t btt_rank_bound(int t, int c, std::int64_t d) {
    if (t < 1 || t > c - 1) {
        throw DomainError("btt_rank_bound: t must lie in [1, c-1]");
    }
    const auto fac = balanced_factorization(d, c).factors;
    return btt_rank_bounds(fac, fac)[static_cast<std::size_t>(t - 1)];
}

std::int64_t tt_rank_bound(int t, int c, std::int64_t d) {
    if (t < 1 || t > c - 1) {
        throw DomainError("tt_rank_bound: t must lie in [1, c-1]");
    }
    const auto fac = balanced_factorization(d, c).factors;
    std::int64_t left = 1, right = 1;
    for (int s = 1; s <= c; ++s) {
        const std::int64_t mn = fac[static_cast<std::size_t>(s - 1)] *
                                fac[static_cast<std::size_t>(s - 1)];
        if (s <= t) {
            left *= mn;
        } else {
            right *= mn;
        }
    }
    return std::min({left, right, d});
}

// --------------------------------------------------------------------------
// Validation
// --------------------------------------------------------------------------

namespace {

struct Dims {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
};

// B_t for BTT core t given factor lists (1-based t).
std::int64_t btt_block_extent(std::span<const std::int64_t> m,
                              std::span<const std::int64_t> n, int t) {
    const int c = static_cast<int>(m.size());
    std::int64_t b = 1;
    for (int s = t + 1; s <= c; ++s) {
        b *= m[static_cast<std::size_t>(s - 1)];
    }
    for (int s = 1; s <= t - 1; ++s) {
        b *= n[static_cast<std::size_t>(s - 1)];
    }
    return b;
}

Dims validate(const DenseMatrix &m) {
    if (m.w.ndim() != 2) {
        throw DimensionError("dense matrix requires a 2-d tensor, got " +
                             shape_string(m.w.shape()));
    }
    return {m.w.extent(0), m.w.extent(1)};
}

Dims validate(const LowRankMatrix &m) {
    if (m.u.ndim() != 2 || m.v.ndim() != 2) {
        throw DimensionError("low-rank factors must be 2-d");
    }
    if (m.u.extent(1) != m.v.extent(0)) {
        throw DimensionError("low-rank factor ranks differ: u " +
                             shape_string(m.u.shape()) + " vs v " +
                             shape_string(m.v.shape()));
    }
    return {m.u.extent(0), m.v.extent(1)};
}

Dims validate(const ConvolutionMatrix &m) {
    if (m.kernel.ndim() != 1) {
        throw DimensionError("convolution kernel must be 1-d");
    }
    if (m.dim < 1 || m.kernel.extent(0) < 1 || m.kernel.extent(0) > m.dim) {
        throw DimensionError("convolution kernel length " +
                             std::to_string(m.kernel.extent(0)) +
                             " incompatible with dim " +
                             std::to_string(m.dim));
    }
    return {m.dim, m.dim};
}

Dims validate(const KroneckerMatrix &m) {
    if (m.l.ndim() != 2 || m.r.ndim() != 2) {
        throw DimensionError("kronecker factors must be 2-d");
    }
    return {m.l.extent(0) * m.r.extent(0), m.l.extent(1) * m.r.extent(1)};
}

Dims validate(const MonarchMatrix &m) {
    if (m.l.ndim() != 3 || m.r.ndim() != 3) {
        throw DimensionError("monarch factors must be 3-d block stacks");
    }
    if (m.l.extent(0) != m.r.extent(0)) {
        throw DimensionError("monarch block counts differ: " +
                             shape_string(m.l.shape()) + " vs " +
                             shape_string(m.r.shape()));
    }
    if (m.r.extent(1) != m.r.extent(2)) {
        throw DimensionError(
            "monarch r blocks must be square (inner dimension = d_in)");
    }
    if (m.l.extent(2) != m.r.extent(1)) {
        throw DimensionError("monarch l block width " +
                             std::to_string(m.l.extent(2)) +
                             " does not match inner block size " +
                             std::to_string(m.r.extent(1)));
    }
    return {m.l.extent(0) * m.l.extent(1), m.r.extent(0) * m.r.extent(2)};
}

Dims validate(const TensorTrainMatrix &m) {
    const int c = static_cast<int>(m.cores.size());
    if (c < 2) {
        throw DimensionError("tensor train requires at least 2 cores");
    }
    if (static_cast<int>(m.out_factors.size()) != c ||
        static_cast<int>(m.in_factors.size()) != c ||
        static_cast<int>(m.ranks.size()) != c + 1) {
        throw DimensionError("tensor train factor/rank lists do not match the "
                             "core count");
    }
    if (m.ranks.front() != 1 || m.ranks.back() != 1) {
        throw DimensionError("tensor train boundary ranks must be 1");
    }
    for (int t = 1; t <= c; ++t) {
        const auto &g = m.cores[static_cast<std::size_t>(t - 1)];
        if (g.ndim() != 4 ||
            g.extent(0) != m.ranks[static_cast<std::size_t>(t - 1)] ||
            g.extent(1) != m.out_factors[static_cast<std::size_t>(t - 1)] ||
            g.extent(2) != m.in_factors[static_cast<std::size_t>(t - 1)] ||
            g.extent(3) != m.ranks[static_cast<std::size_t>(t)]) {
            throw DimensionError(
                "tensor train core " + std::to_string(t) + " has shape " +
                shape_string(g.shape()) +
                ", expected (r_prev, m_t, n_t, r_t) from the declared chain");
        }
    }
    return {product(m.out_factors), product(m.in_factors)};
}

Dims validate(const BlockTensorTrainMatrix &m) {
    const int c = static_cast<int>(m.cores.size());
    if (c < 2) {
        throw DimensionError("block tensor train requires at least 2 cores");
    }
    if (static_cast<int>(m.out_factors.size()) != c ||
        static_cast<int>(m.in_factors.size()) != c ||
        static_cast<int>(m.ranks.size()) != c + 1) {
        throw DimensionError("block tensor train factor/rank lists do not "
                             "match the core count");
    }
    if (m.ranks.front() != 1 || m.ranks.back() != 1) {
        throw DimensionError("block tensor train boundary ranks must be 1");
    }
    const auto bounds = btt_rank_bounds(m.out_factors, m.in_factors);
    for (int t = 1; t <= c - 1; ++t) {
        const std::int64_t r = m.ranks[static_cast<std::size_t>(t)];
        const std::int64_t bound = bounds[static_cast<std::size_t>(t - 1)];
        if (r < 1 || r > bound) {
            throw DomainError(
                "btt rank r_" + std::to_string(t) + " = " + std::to_string(r) +
                " exceeds the exact-representability bound " +
                std::to_string(bound) + "; larger ranks are redundant");
        }
    }
    for (int t = 1; t <= c; ++t) {
        const auto &g = m.cores[static_cast<std::size_t>(t - 1)];
        const std::int64_t bt =
            btt_block_extent(m.out_factors, m.in_factors, t);
        const std::int64_t rows =
            m.ranks[static_cast<std::size_t>(t - 1)] *
            m.out_factors[static_cast<std::size_t>(t - 1)];
        const std::int64_t cols =
            m.in_factors[static_cast<std::size_t>(t - 1)] *
            m.ranks[static_cast<std::size_t>(t)];
        if (g.ndim() != 3 || g.extent(0) != bt || g.extent(1) != rows ||
            g.extent(2) != cols) {
            throw DimensionError(
                "block tensor train core " + std::to_string(t) +
                " has shape " + shape_string(g.shape()) + ", expected [" +
                std::to_string(bt) + " x " + std::to_string(rows) + " x " +
                std::to_string(cols) + "]");
        }
    }
    return {product(m.out_factors), product(m.in_factors)};
}

} // namespace

StructuredMatrix::StructuredMatrix()
    : StructuredMatrix(Value{DenseMatrix{DenseTensor({1, 1})}}) {}

StructuredMatrix::StructuredMatrix(Value v) : value_(std::move(v)) {
    const Dims d = std::visit([](const auto &m) { return validate(m); }, value_);
    rows_ = d.rows;
    cols_ = d.cols;
}

Family StructuredMatrix::family() const {
    return static_cast<Family>(value_.index());
}

StructuredMatrix make_dense(DenseTensor w) {
    return StructuredMatrix(DenseMatrix{std::move(w)});
}
StructuredMatrix make_low_rank(DenseTensor u, DenseTensor v) {
    return StructuredMatrix(LowRankMatrix{std::move(u), std::move(v)});
}
StructuredMatrix make_convolution(DenseTensor kernel, std::int64_t dim) {
    return StructuredMatrix(ConvolutionMatrix{std::move(kernel), dim});
}
StructuredMatrix make_kronecker(DenseTensor l, DenseTensor r) {
    return StructuredMatrix(KroneckerMatrix{std::move(l), std::move(r)});
}
StructuredMatrix make_monarch(DenseTensor l, DenseTensor r) {
    return StructuredMatrix(MonarchMatrix{std::move(l), std::move(r)});
}
StructuredMatrix make_tensor_train(std::vector<DenseTensor> cores,
                                   std::vector<std::int64_t> out_factors,
                                   std::vector<std::int64_t> in_factors) {
    std::vector<std::int64_t> ranks;
    ranks.push_back(1);
    for (const auto &g : cores) {
        ranks.push_back(g.ndim() == 4 ? g.extent(3) : -1);
    }
    return StructuredMatrix(TensorTrainMatrix{std::move(cores),
                                              std::move(out_factors),
                                              std::move(in_factors),
                                              std::move(ranks)});
}
StructuredMatrix
make_block_tensor_train(std::vector<DenseTensor> cores,
                        std::vector<std::int64_t> out_factors,
                        std::vector<std::int64_t> in_factors,
                        std::vector<std::int64_t> ranks) {
    return StructuredMatrix(BlockTensorTrainMatrix{
        std::move(cores), std::move(out_factors), std::move(in_factors),
        std::move(ranks)});
}

StructuredMatrix make_structured(Family f, std::int64_t d_out,
                                 std::int64_t d_in,
                                 const StructureOptions &opts) {
    if (d_out < 1 || d_in < 1) {
        throw DimensionError("make_structured: dimensions must be positive");
    }
    switch (f) {
    case Family::Dense:
        return make_dense(DenseTensor({d_out, d_in}));
    case Family::LowRank: {
        const std::int64_t r =
            std::clamp<std::int64_t>(opts.rank, 1, std::min(d_out, d_in));
        return make_low_rank(DenseTensor({d_out, r}), DenseTensor({r, d_in}));
    }
    case Family::Convolution: {
        if (d_out != d_in) {
            throw DimensionError("convolution layers are square; got " +
                                 std::to_string(d_out) + " x " +
                                 std::to_string(d_in));
        }
        const std::int64_t p = std::clamp<std::int64_t>(opts.kernel, 1, d_in);
        return make_convolution(DenseTensor({p}), d_in);
    }
    case Family::Kronecker: {
        const auto mo = balanced_factorization(d_out, 2).factors;
        const auto ni = balanced_factorization(d_in, 2).factors;
        return make_kronecker(DenseTensor({mo[0], ni[0]}),
                              DenseTensor({mo[1], ni[1]}));
    }
    case Family::Monarch: {
        const std::int64_t g = std::gcd(d_out, d_in);
        std::int64_t b = 1;
        for (std::int64_t cand = 1;
             cand <= std::min<std::int64_t>(opts.blocks, g); ++cand) {
            if (g % cand == 0) {
                b = cand;
            }
        }
        return make_monarch(DenseTensor({b, d_out / b, d_in / b}),
                            DenseTensor({b, d_in / b, d_in / b}));
    }
    case Family::TensorTrain: {
        const int c = std::max(2, opts.cores);
        const auto mo = balanced_factorization(d_out, c).factors;
        const auto ni = balanced_factorization(d_in, c).factors;
        std::vector<std::int64_t> ranks(static_cast<std::size_t>(c + 1), 1);
        for (int t = 1; t <= c - 1; ++t) {
            ranks[static_cast<std::size_t>(t)] = std::max<std::int64_t>(1, opts.rank);
        }
        std::vector<DenseTensor> cores;
        for (int t = 1; t <= c; ++t) {
            cores.emplace_back(std::vector<std::int64_t>{
                ranks[static_cast<std::size_t>(t - 1)],
                mo[static_cast<std::size_t>(t - 1)],
                ni[static_cast<std::size_t>(t - 1)],
                ranks[static_cast<std::size_t>(t)]});
        }
        return make_tensor_train(std::move(cores), mo, ni);
    }
    case Family::BlockTensorTrain: {
        const int c = std::max(2, opts.cores);
        const auto mo = balanced_factorization(d_out, c).factors;
        const auto ni = balanced_factorization(d_in, c).factors;
        const auto bounds = btt_rank_bounds(mo, ni);
        std::vector<std::int64_t> ranks(static_cast<std::size_t>(c + 1), 1);
        for (int t = 1; t <= c - 1; ++t) {
            ranks[static_cast<std::size_t>(t)] = std::clamp<std::int64_t>(
                opts.rank, 1, bounds[static_cast<std::size_t>(t - 1)]);
        }
        std::vector<DenseTensor> cores;
        for (int t = 1; t <= c; ++t) {
            cores.emplace_back(std::vector<std::int64_t>{
                btt_block_extent(mo, ni, t),
                ranks[static_cast<std::size_t>(t - 1)] *
                    mo[static_cast<std::size_t>(t - 1)],
                ni[static_cast<std::size_t>(t - 1)] *
                    ranks[static_cast<std::size_t>(t)]});
        }
        return make_block_tensor_train(std::move(cores), mo, ni,
                                       std::move(ranks));
    }
    }
    throw DomainError("make_structured: unknown family");
}

// --------------------------------------------------------------------------
// Components
// --------------------------------------------------------------------------

namespace {

std::string core_component_name(int c, int t) {
    if (c == 2) {
        return t == 1 ? "l" : "r";
    }
    return "core" + std::to_string(t);
}

} // namespace

std::vector<DenseComponent> components(const StructuredMatrix &m) {
    std::vector<DenseComponent> out;
    switch (m.family()) {
    case Family::Dense: {
        const auto &d = m.as<DenseMatrix>();
        out.push_back({"w", 1, 1, d.w.extent(0), d.w.extent(1)});
        break;
    }
    case Family::LowRank: {
        const auto &lr = m.as<LowRankMatrix>();
        out.push_back({"v", 1, 1, lr.v.extent(0), lr.v.extent(1)});
        out.push_back({"u", 2, 1, lr.u.extent(0), lr.u.extent(1)});
        break;
    }
    case Family::Convolution: {
        const auto &cv = m.as<ConvolutionMatrix>();
        out.push_back({"kernel", 1, 1, 1, cv.kernel.extent(0)});
        break;
    }
    case Family::Kronecker: {
        const auto &k = m.as<KroneckerMatrix>();
        out.push_back({"r", 1, 1, k.r.extent(0), k.r.extent(1)});
        out.push_back({"l", 2, 1, k.l.extent(0), k.l.extent(1)});
        break;
    }
    case Family::Monarch: {
        const auto &mo = m.as<MonarchMatrix>();
        out.push_back({"r", 1, mo.r.extent(0), mo.r.extent(1), mo.r.extent(2)});
        out.push_back({"l", 2, mo.l.extent(0), mo.l.extent(1), mo.l.extent(2)});
        break;
    }
    case Family::TensorTrain: {
        const auto &tt = m.as<TensorTrainMatrix>();
        const int c = static_cast<int>(tt.cores.size());
        for (int pos = 1; pos <= c; ++pos) {
            const int t = c - pos + 1;
            const auto &g = tt.cores[static_cast<std::size_t>(t - 1)];
            out.push_back({core_component_name(c, t), pos, 1,
                           g.extent(0) * g.extent(1),
                           g.extent(2) * g.extent(3)});
        }
        break;
    }
    case Family::BlockTensorTrain: {
        const auto &bt = m.as<BlockTensorTrainMatrix>();
        const int c = static_cast<int>(bt.cores.size());
        for (int pos = 1; pos <= c; ++pos) {
            const int t = c - pos + 1;
            const auto &g = bt.cores[static_cast<std::size_t>(t - 1)];
            out.push_back({core_component_name(c, t), pos, g.extent(0),
                           g.extent(1), g.extent(2)});
        }
        break;
    }
    }
    return out;
}

namespace {

template <class M>
std::vector<DenseTensor *> chain_cores(M &m) {
    std::vector<DenseTensor *> out;
    switch (m.family()) {
    case Family::Dense:
        out = {&m.template as<DenseMatrix>().w};
        break;
    case Family::LowRank:
        out = {&m.template as<LowRankMatrix>().v,
               &m.template as<LowRankMatrix>().u};
        break;
    case Family::Convolution:
        out = {&m.template as<ConvolutionMatrix>().kernel};
        break;
    case Family::Kronecker:
        out = {&m.template as<KroneckerMatrix>().r,
               &m.template as<KroneckerMatrix>().l};
        break;
    case Family::Monarch:
        out = {&m.template as<MonarchMatrix>().r,
               &m.template as<MonarchMatrix>().l};
        break;
    case Family::TensorTrain: {
        auto &cores = m.template as<TensorTrainMatrix>().cores;
        for (auto it = cores.rbegin(); it != cores.rend(); ++it) {
            out.push_back(&*it);
        }
        break;
    }
    case Family::BlockTensorTrain: {
        auto &cores = m.template as<BlockTensorTrainMatrix>().cores;
        for (auto it = cores.rbegin(); it != cores.rend(); ++it) {
            out.push_back(&*it);
        }
        break;
    }
    }
    return out;
}

} // namespace

std::vector<DenseTensor *> core_tensors(StructuredMatrix &m) {
    return chain_cores(m);
}

std::vector<const DenseTensor *> core_tensors(const StructuredMatrix &m) {
    auto ptrs = chain_cores(const_cast<StructuredMatrix &>(m));
    return {ptrs.begin(), ptrs.end()};
}

// --------------------------------------------------------------------------
// Apply: the contraction engine
// --------------------------------------------------------------------------

namespace {

struct ChainSpec {
    std::vector<std::int64_t> m; // out factors, 1-based conceptually
    std::vector<std::int64_t> n; // in factors
    std::vector<std::int64_t> r; // ranks r_0..r_c
};

ChainSpec chain_spec(const TensorTrainMatrix &tt) {
    return {tt.out_factors, tt.in_factors, tt.ranks};
}
ChainSpec chain_spec(const BlockTensorTrainMatrix &bt) {
    return {bt.out_factors, bt.in_factors, bt.ranks};
}
ChainSpec chain_spec(const KroneckerMatrix &k) {
    return {{k.l.extent(0), k.r.extent(0)},
            {k.l.extent(1), k.r.extent(1)},
            {1, 1, 1}};
}

// View shape of the step-t output before rotating m_t to the front:
// (m_{t+1}..m_c, n_1..n_{t-1}, r_{t-1}, m_t, nb)
std::vector<std::int64_t> step_view_shape(const ChainSpec &sp, int t,
                                          std::int64_t nb) {
    const int c = static_cast<int>(sp.m.size());
    std::vector<std::int64_t> shape;
    for (int s = t + 1; s <= c; ++s) {
        shape.push_back(sp.m[static_cast<std::size_t>(s - 1)]);
    }
    for (int s = 1; s <= t - 1; ++s) {
        shape.push_back(sp.n[static_cast<std::size_t>(s - 1)]);
    }
    shape.push_back(sp.r[static_cast<std::size_t>(t - 1)]);
    shape.push_back(sp.m[static_cast<std::size_t>(t - 1)]);
    shape.push_back(nb);
    return shape;
}

std::vector<int> step_rotation(int c) {
    // rotate axis c (m_t) to the front of a (c+2)-axis tensor
    std::vector<int> perm;
    perm.push_back(c);
    for (int i = 0; i < c; ++i) {
        perm.push_back(i);
    }
    perm.push_back(c + 1);
    return perm;
}

// State layout entering step t: (B_t, n_t * r_t, nb)
std::vector<std::int64_t> state_shape(const ChainSpec &sp, int t,
                                      std::int64_t nb) {
    const int c = static_cast<int>(sp.m.size());
    std::int64_t b = 1;
    for (int s = t + 1; s <= c; ++s) {
        b *= sp.m[static_cast<std::size_t>(s - 1)];
    }
    for (int s = 1; s <= t - 1; ++s) {
        b *= sp.n[static_cast<std::size_t>(s - 1)];
    }
    return {b,
            sp.n[static_cast<std::size_t>(t - 1)] *
                sp.r[static_cast<std::size_t>(t)],
            nb};
}

// Core t as a batched (or shared) matrix stack.
DenseTensor tt_core_matrix(const TensorTrainMatrix &tt, int t) {
    const auto &g = tt.cores[static_cast<std::size_t>(t - 1)];
    return g.reshaped({g.extent(0) * g.extent(1), g.extent(2) * g.extent(3)});
}

template <class GetCore>
DenseTensor chain_apply(const ChainSpec &sp, GetCore &&core_for_step,
                        bool batched, const DenseTensor &x, MacCounter *mac,
                        ApplyCache *cache) {
    const int c = static_cast<int>(sp.m.size());
    const std::int64_t nb = x.extent(1);
    DenseTensor z = x.reshaped(state_shape(sp, c, nb));
    for (int t = c; t >= 1; --t) {
        if (cache) {
            cache->stage_inputs.push_back(z);
        }
        const DenseTensor core = core_for_step(t);
        DenseTensor out = batched ? bmm(core, z, mac)
                                  : bmm_broadcast(core, z, mac);
        out.reshape(step_view_shape(sp, t, nb));
        const auto perm = step_rotation(c);
        z = permute(out, perm);
        if (t > 1) {
            z.reshape(state_shape(sp, t - 1, nb));
        }
    }
    z.reshape({product(sp.m), nb});
    return z;
}

template <class GetCore>
DenseTensor chain_backward(const ChainSpec &sp, GetCore &&core_for_step,
                           bool batched, const ApplyCache &cache,
                           const DenseTensor &dy,
                           std::vector<DenseTensor *> grads_chain_order) {
    const int c = static_cast<int>(sp.m.size());
    const std::int64_t nb = dy.extent(1);
    const auto perm = step_rotation(c);
    const auto inv = inverse_permutation(perm);

    DenseTensor g = dy;
    for (int t = 1; t <= c; ++t) {
        // Undo the rotation that followed the step-t matmul.
        auto rotated = step_view_shape(sp, t, nb);
        std::vector<std::int64_t> post(rotated.size());
        for (std::size_t i = 0; i < rotated.size(); ++i) {
            post[i] = rotated[static_cast<std::size_t>(perm[i])];
        }
        g.reshape(post);
        g = permute(g, inv);
        const auto st = state_shape(sp, t, nb);
        g.reshape({st[0], sp.r[static_cast<std::size_t>(t - 1)] *
                              sp.m[static_cast<std::size_t>(t - 1)],
                   nb});

        const DenseTensor &zin =
            cache.stage_inputs[static_cast<std::size_t>(c - t)];
        const DenseTensor core = core_for_step(t);
        // Chain position of core t is c - t + 1 (1-based).
        DenseTensor *grad = grads_chain_order[static_cast<std::size_t>(c - t)];
        if (batched) {
            add_inplace(*grad, bmm_nt(g, zin));
            g = bmm_tn(core, g);
        } else {
            DenseTensor gflat = bmm_nt_reduce(g, zin);
            gflat.reshape(grad->shape());
            add_inplace(*grad, gflat);
            g = bmm_tn_broadcast(core, g);
        }
    }
    g.reshape({product(sp.n), nb});
    return g;
}

// Monarch stages: block-diagonal r, reshape-transpose, block-diagonal l,
// reshape-transpose.
DenseTensor monarch_apply(const MonarchMatrix &mo, const DenseTensor &x,
                          MacCounter *mac, ApplyCache *cache) {
    const std::int64_t b = mo.r.extent(0), q = mo.r.extent(1),
                       nin = mo.r.extent(2), mout = mo.l.extent(1);
    const std::int64_t nb = x.extent(1);
    DenseTensor x3 = x.reshaped({b, nin, nb});
    if (cache) {
        cache->stage_inputs.push_back(x3);
    }
    DenseTensor u = bmm(mo.r, x3, mac); // (b, q, nb)
    static const int swap_bq[3] = {1, 0, 2};
    DenseTensor v = permute(u, std::span<const int>(swap_bq, 3)); // (q, b, nb)
    v.reshape({b, q, nb}); // reinterpret flat (q*b) per sample as b chunks
    if (cache) {
        cache->stage_inputs.push_back(v);
    }
    DenseTensor w = bmm(mo.l, v, mac); // (b, mout, nb)
    DenseTensor y = permute(w, std::span<const int>(swap_bq, 3));
    y.reshape({mout * b, nb});
    return y;
}

DenseTensor monarch_backward(const MonarchMatrix &mo, const ApplyCache &cache,
                             const DenseTensor &dy, DenseTensor &grad_r,
                             DenseTensor &grad_l) {
    const std::int64_t b = mo.r.extent(0), q = mo.r.extent(1),
                       nin = mo.r.extent(2), mout = mo.l.extent(1);
    const std::int64_t nb = dy.extent(1);
    static const int swap_bq[3] = {1, 0, 2};

    DenseTensor g = dy.reshaped({mout, b, nb});
    g = permute(g, std::span<const int>(swap_bq, 3)); // (b, mout, nb)
    const DenseTensor &v = cache.stage_inputs[1];
    add_inplace(grad_l, bmm_nt(g, v));
    DenseTensor dv = bmm_tn(mo.l, g); // (b, q, nb)
    dv.reshape({q, b, nb});
    DenseTensor du = permute(dv, std::span<const int>(swap_bq, 3)); // (b,q,nb)
    const DenseTensor &x3 = cache.stage_inputs[0];
    add_inplace(grad_r, bmm_nt(du, x3));
    DenseTensor dx = bmm_tn(mo.r, du); // (b, nin, nb)
    dx.reshape({b * nin, nb});
    return dx;
}

DenseTensor conv_apply(const ConvolutionMatrix &cv, const DenseTensor &x,
                       MacCounter *mac, ApplyCache *cache) {
    const std::int64_t d = cv.dim, p = cv.kernel.extent(0),
                       nb = x.extent(1);
    if (cache) {
        cache->stage_inputs.push_back(x);
    }
    DenseTensor y({d, nb});
    const double *k = cv.kernel.data();
    for (std::int64_t i = 0; i < d; ++i) {
        for (std::int64_t t = 0; t < p; ++t) {
            const std::int64_t j = (i - t + d) % d;
            const double kt = k[t];
            const double *xr = x.data() + j * nb;
            double *yr = y.data() + i * nb;
            for (std::int64_t s = 0; s < nb; ++s) {
                yr[s] += kt * xr[s];
            }
        }
    }
    if (mac) {
        mac->macs += d * p * nb;
    }
    return y;
}

DenseTensor conv_backward(const ConvolutionMatrix &cv, const ApplyCache &cache,
                          const DenseTensor &dy, DenseTensor &grad_kernel) {
    const std::int64_t d = cv.dim, p = cv.kernel.extent(0),
                       nb = dy.extent(1);
    const DenseTensor &x = cache.stage_inputs[0];
    for (std::int64_t t = 0; t < p; ++t) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
            const std::int64_t j = (i - t + d) % d;
            const double *dyr = dy.data() + i * nb;
            const double *xr = x.data() + j * nb;
            for (std::int64_t s = 0; s < nb; ++s) {
                acc += dyr[s] * xr[s];
            }
        }
        grad_kernel[t] += acc;
    }
    DenseTensor dx({d, nb});
    const double *k = cv.kernel.data();
    for (std::int64_t j = 0; j < d; ++j) {
        for (std::int64_t t = 0; t < p; ++t) {
            const std::int64_t i = (j + t) % d;
            const double kt = k[t];
            const double *dyr = dy.data() + i * nb;
            double *dxr = dx.data() + j * nb;
            for (std::int64_t s = 0; s < nb; ++s) {
                dxr[s] += kt * dyr[s];
            }
        }
    }
    return dx;
}

} // namespace

DenseTensor structured_apply(const StructuredMatrix &m, const DenseTensor &x,
                             MacCounter *mac, ApplyCache *cache) {
    if (x.ndim() != 2 || x.extent(0) != m.cols()) {
        throw DimensionError("structured_apply: input shape " +
                             shape_string(x.shape()) +
                             " incompatible with a " +
                             std::to_string(m.rows()) + " x " +
                             std::to_string(m.cols()) + " operator");
    }
    switch (m.family()) {
    case Family::Dense: {
        const auto &d = m.as<DenseMatrix>();
        if (cache) {
            cache->stage_inputs.push_back(x);
        }
        return matmul(d.w, x, mac);
    }
    case Family::LowRank: {
        const auto &lr = m.as<LowRankMatrix>();
        if (cache) {
            cache->stage_inputs.push_back(x);
        }
        DenseTensor t1 = matmul(lr.v, x, mac);
        if (cache) {
            cache->stage_inputs.push_back(t1);
        }
        return matmul(lr.u, t1, mac);
    }
    case Family::Convolution:
        return conv_apply(m.as<ConvolutionMatrix>(), x, mac, cache);
    case Family::Kronecker: {
        const auto &k = m.as<KroneckerMatrix>();
        const ChainSpec sp = chain_spec(k);
        auto core = [&](int t) -> DenseTensor {
            return t == 1 ? k.l : k.r;
        };
        return chain_apply(sp, core, false, x, mac, cache);
    }
    case Family::Monarch:
        return monarch_apply(m.as<MonarchMatrix>(), x, mac, cache);
    case Family::TensorTrain: {
        const auto &tt = m.as<TensorTrainMatrix>();
        const ChainSpec sp = chain_spec(tt);
        auto core = [&](int t) { return tt_core_matrix(tt, t); };
        return chain_apply(sp, core, false, x, mac, cache);
    }
    case Family::BlockTensorTrain: {
        const auto &bt = m.as<BlockTensorTrainMatrix>();
        const ChainSpec sp = chain_spec(bt);
        auto core = [&](int t) -> DenseTensor {
            return bt.cores[static_cast<std::size_t>(t - 1)];
        };
        return chain_apply(sp, core, true, x, mac, cache);
    }
    }
    throw DomainError("structured_apply: unknown family");
}

DenseTensor structured_backward(const StructuredMatrix &m,
                                const ApplyCache &cache, const DenseTensor &dy,
                                std::vector<DenseTensor> &core_grads) {
    const auto comps = components(m);
    if (core_grads.size() != comps.size()) {
        throw DimensionError("structured_backward: gradient list size " +
                             std::to_string(core_grads.size()) +
                             " does not match " +
                             std::to_string(comps.size()) + " components");
    }
    switch (m.family()) {
    case Family::Dense: {
        const auto &d = m.as<DenseMatrix>();
        const DenseTensor &x = cache.stage_inputs[0];
        add_inplace(core_grads[0], matmul_nt(dy, x));
        return matmul_tn(d.w, dy);
    }
    case Family::LowRank: {
        const auto &lr = m.as<LowRankMatrix>();
        const DenseTensor &x = cache.stage_inputs[0];
        const DenseTensor &t1 = cache.stage_inputs[1];
        add_inplace(core_grads[1], matmul_nt(dy, t1));
        DenseTensor dt = matmul_tn(lr.u, dy);
        add_inplace(core_grads[0], matmul_nt(dt, x));
        return matmul_tn(lr.v, dt);
    }
    case Family::Convolution:
        return conv_backward(m.as<ConvolutionMatrix>(), cache, dy,
                             core_grads[0]);
    case Family::Kronecker: {
        const auto &k = m.as<KroneckerMatrix>();
        const ChainSpec sp = chain_spec(k);
        auto core = [&](int t) -> DenseTensor {
            return t == 1 ? k.l : k.r;
        };
        return chain_backward(sp, core, false, cache, dy,
                              {&core_grads[0], &core_grads[1]});
    }
    case Family::Monarch:
        return monarch_backward(m.as<MonarchMatrix>(), cache, dy,
                                core_grads[0], core_grads[1]);
    case Family::TensorTrain: {
        const auto &tt = m.as<TensorTrainMatrix>();
        const ChainSpec sp = chain_spec(tt);
        auto core = [&](int t) { return tt_core_matrix(tt, t); };
        std::vector<DenseTensor *> grads;
        for (auto &g : core_grads) {
            grads.push_back(&g);
        }
        return chain_backward(sp, core, false, cache, dy, grads);
    }
    case Family::BlockTensorTrain: {
        const auto &bt = m.as<BlockTensorTrainMatrix>();
        const ChainSpec sp = chain_spec(bt);
        auto core = [&](int t) -> DenseTensor {
            return bt.cores[static_cast<std::size_t>(t - 1)];
        };
        std::vector<DenseTensor *> grads;
        for (auto &g : core_grads) {
            grads.push_back(&g);
        }
        return chain_backward(sp, core, true, cache, dy, grads);
    }
    }
    throw DomainError("structured_backward: unknown family");
}

std::vector<double> mvm(const StructuredMatrix &m, std::span<const double> x,
                        MacCounter *mac) {
    if (static_cast<std::int64_t>(x.size()) != m.cols()) {
        throw DimensionError(
            "mvm: input length " + std::to_string(x.size()) +
            " does not match operator columns " + std::to_string(m.cols()));
    }
    DenseTensor xt({m.cols(), 1}, std::vector<double>(x.begin(), x.end()));
    DenseTensor y = structured_apply(m, xt, mac);
    return {y.data(), y.data() + y.size()};
}

DenseTensor mvm_batched(const StructuredMatrix &m, const DenseTensor &x,
                        MacCounter *mac) {
    return structured_apply(m, x, mac);
}

// --------------------------------------------------------------------------
// Materialize: element-level route, separate from the fast MVM
// --------------------------------------------------------------------------

namespace {

void split_index(std::int64_t flat, std::span<const std::int64_t> extents,
                 std::vector<std::int64_t> &out) {
    out.resize(extents.size());
    for (int i = static_cast<int>(extents.size()) - 1; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] =
            flat % extents[static_cast<std::size_t>(i)];
        flat /= extents[static_cast<std::size_t>(i)];
    }
}

DenseTensor materialize_conv(const ConvolutionMatrix &cv) {
    const std::int64_t d = cv.dim, p = cv.kernel.extent(0);
    DenseTensor w({d, d});
    for (std::int64_t i = 0; i < d; ++i) {
        for (std::int64_t j = 0; j < d; ++j) {
            const std::int64_t off = (i - j + d) % d;
            if (off < p) {
                w.at2(i, j) = cv.kernel[off];
            }
        }
    }
    return w;
}

DenseTensor materialize_kron(const KroneckerMatrix &k) {
    const std::int64_t m1 = k.l.extent(0), n1 = k.l.extent(1),
                       m2 = k.r.extent(0), n2 = k.r.extent(1);
    DenseTensor w({m1 * m2, n1 * n2});
    for (std::int64_t a = 0; a < m1; ++a) {
        for (std::int64_t b = 0; b < m2; ++b) {
            for (std::int64_t g = 0; g < n1; ++g) {
                for (std::int64_t dd = 0; dd < n2; ++dd) {
                    w.at2(a * m2 + b, g * n2 + dd) =
                        k.l.at2(a, g) * k.r.at2(b, dd);
                }
            }
        }
    }
    return w;
}

// Monarch materializes as P_out * L * P_mid * R with explicit permutation
// matrices and contiguous block-diagonal factors.
DenseTensor materialize_monarch(const MonarchMatrix &mo) {
    const std::int64_t b = mo.r.extent(0), q = mo.r.extent(1),
                       nin = mo.r.extent(2), mout = mo.l.extent(1);
    const std::int64_t d = b * q, d_in = b * nin, d_out = b * mout;

    DenseTensor rdense({d, d_in});
    for (std::int64_t k = 0; k < b; ++k) {
        for (std::int64_t i = 0; i < q; ++i) {
            for (std::int64_t j = 0; j < nin; ++j) {
                rdense.at2(k * q + i, k * nin + j) =
                    mo.r[(k * q + i) * nin + j];
            }
        }
    }
    DenseTensor pmid({d, d}); // (gamma, beta)-layout -> (beta, gamma)-layout
    for (std::int64_t g = 0; g < b; ++g) {
        for (std::int64_t be = 0; be < q; ++be) {
            pmid.at2(be * b + g, g * q + be) = 1.0;
        }
    }
    DenseTensor ldense({d_out, d});
    for (std::int64_t k = 0; k < b; ++k) {
        for (std::int64_t i = 0; i < mout; ++i) {
            for (std::int64_t j = 0; j < q; ++j) {
                ldense.at2(k * mout + i, k * q + j) =
                    mo.l[(k * mout + i) * q + j];
            }
        }
    }
    DenseTensor pout({d_out, d_out}); // (k, alpha)-layout -> (alpha, k)-layout
    for (std::int64_t k = 0; k < b; ++k) {
        for (std::int64_t a = 0; a < mout; ++a) {
            pout.at2(a * b + k, k * mout + a) = 1.0;
        }
    }
    return matmul(pout, matmul(ldense, matmul(pmid, rdense)));
}

DenseTensor materialize_tt(const TensorTrainMatrix &tt) {
    const int c = static_cast<int>(tt.cores.size());
    const std::int64_t rows = product(tt.out_factors),
                       cols = product(tt.in_factors);
    DenseTensor w({rows, cols});
    std::vector<std::int64_t> iidx, jidx;
    std::vector<double> v, nv;
    for (std::int64_t i = 0; i < rows; ++i) {
        split_index(i, tt.out_factors, iidx);
        for (std::int64_t j = 0; j < cols; ++j) {
            split_index(j, tt.in_factors, jidx);
            v.assign(1, 1.0); // r_c = 1
            for (int t = c; t >= 1; --t) {
                const auto &g = tt.cores[static_cast<std::size_t>(t - 1)];
                const std::int64_t rp = g.extent(0), mt = g.extent(1),
                                   nt = g.extent(2), rt = g.extent(3);
                nv.assign(static_cast<std::size_t>(rp), 0.0);
                const std::int64_t it = iidx[static_cast<std::size_t>(t - 1)];
                const std::int64_t jt = jidx[static_cast<std::size_t>(t - 1)];
                for (std::int64_t a = 0; a < rp; ++a) {
                    double acc = 0.0;
                    const double *gp =
                        g.data() + ((a * mt + it) * nt + jt) * rt;
                    for (std::int64_t bb = 0; bb < rt; ++bb) {
                        acc += gp[bb] * v[static_cast<std::size_t>(bb)];
                    }
                    nv[static_cast<std::size_t>(a)] = acc;
                }
                v = nv;
            }
            w.at2(i, j) = v[0];
        }
    }
    return w;
}

DenseTensor materialize_btt(const BlockTensorTrainMatrix &bt) {
    const int c = static_cast<int>(bt.cores.size());
    const std::int64_t rows = product(bt.out_factors),
                       cols = product(bt.in_factors);
    DenseTensor w({rows, cols});
    std::vector<std::int64_t> iidx, jidx;
    std::vector<double> v, nv;
    for (std::int64_t i = 0; i < rows; ++i) {
        split_index(i, bt.out_factors, iidx);
        for (std::int64_t j = 0; j < cols; ++j) {
            split_index(j, bt.in_factors, jidx);
            v.assign(1, 1.0);
            for (int t = c; t >= 1; --t) {
                const auto &g = bt.cores[static_cast<std::size_t>(t - 1)];
                const std::int64_t mt =
                    bt.out_factors[static_cast<std::size_t>(t - 1)];
                const std::int64_t nt =
                    bt.in_factors[static_cast<std::size_t>(t - 1)];
                const std::int64_t rp =
                    bt.ranks[static_cast<std::size_t>(t - 1)];
                const std::int64_t rt = bt.ranks[static_cast<std::size_t>(t)];
                // batch index over (i_{t+1}..i_c, j_1..j_{t-1})
                std::int64_t bidx = 0;
                for (int s = t + 1; s <= c; ++s) {
                    bidx = bidx * bt.out_factors[static_cast<std::size_t>(s - 1)] +
                           iidx[static_cast<std::size_t>(s - 1)];
                }
                for (int s = 1; s <= t - 1; ++s) {
                    bidx = bidx * bt.in_factors[static_cast<std::size_t>(s - 1)] +
                           jidx[static_cast<std::size_t>(s - 1)];
                }
                const std::int64_t it = iidx[static_cast<std::size_t>(t - 1)];
                const std::int64_t jt = jidx[static_cast<std::size_t>(t - 1)];
                const std::int64_t rowext = rp * mt, colext = nt * rt;
                nv.assign(static_cast<std::size_t>(rp), 0.0);
                for (std::int64_t a = 0; a < rp; ++a) {
                    double acc = 0.0;
                    const double *gp = g.data() + (bidx * rowext +
                                                   (a * mt + it)) *
                                                      colext +
                                       jt * rt;
                    for (std::int64_t bb = 0; bb < rt; ++bb) {
                        acc += gp[bb] * v[static_cast<std::size_t>(bb)];
                    }
                    nv[static_cast<std::size_t>(a)] = acc;
                }
                v = nv;
            }
            w.at2(i, j) = v[0];
        }
    }
    return w;
}

} // namespace

DenseTensor materialize(const StructuredMatrix &m, std::int64_t element_cap) {
    const std::int64_t total = m.rows() * m.cols();
    if (total > element_cap) {
        throw ResourceError("materialize: " + std::to_string(m.rows()) + " x " +
                            std::to_string(m.cols()) + " = " +
                            std::to_string(total) +
                            " elements exceeds the cap of " +
                            std::to_string(element_cap));
    }
    switch (m.family()) {
    case Family::Dense:
        return m.as<DenseMatrix>().w;
    case Family::LowRank:
        return matmul(m.as<LowRankMatrix>().u, m.as<LowRankMatrix>().v);
    case Family::Convolution:
        return materialize_conv(m.as<ConvolutionMatrix>());
    case Family::Kronecker:
        return materialize_kron(m.as<KroneckerMatrix>());
    case Family::Monarch:
        return materialize_monarch(m.as<MonarchMatrix>());
    case Family::TensorTrain:
        return materialize_tt(m.as<TensorTrainMatrix>());
    case Family::BlockTensorTrain:
        return materialize_btt(m.as<BlockTensorTrainMatrix>());
    }
    throw DomainError("materialize: unknown family");
}

// --------------------------------------------------------------------------
// JSON serialization
// --------------------------------------------------------------------------

namespace {

json tensor_to_json(const DenseTensor &t, const char *name) {
    json j;
    j["name"] = name;
    j["shape"] = t.shape();
    j["data"] = t.storage();
    return j;
}

DenseTensor tensor_from_json(const json &j) {
    std::vector<std::int64_t> shape =
        j.at("shape").get<std::vector<std::int64_t>>();
    std::vector<double> data = j.at("data").get<std::vector<double>>();
    return DenseTensor(std::move(shape), std::move(data));
}

} // namespace

std::string to_json_string(const StructuredMatrix &m, int indent) {
    json j;
    j["format"] = "smx.structured.v1";
    j["family"] = family_name(m.family());
    j["d_out"] = m.rows();
    j["d_in"] = m.cols();
    switch (m.family()) {
    case Family::Dense:
        j["cores"] = {tensor_to_json(m.as<DenseMatrix>().w, "w")};
        break;
    case Family::LowRank:
        j["rank"] = m.as<LowRankMatrix>().u.extent(1);
        j["cores"] = {tensor_to_json(m.as<LowRankMatrix>().u, "u"),
                      tensor_to_json(m.as<LowRankMatrix>().v, "v")};
        break;
    case Family::Convolution:
        j["dim"] = m.as<ConvolutionMatrix>().dim;
        j["cores"] = {tensor_to_json(m.as<ConvolutionMatrix>().kernel,
                                     "kernel")};
        break;
    case Family::Kronecker:
        j["cores"] = {tensor_to_json(m.as<KroneckerMatrix>().l, "l"),
                      tensor_to_json(m.as<KroneckerMatrix>().r, "r")};
        break;
    case Family::Monarch:
        j["blocks"] = m.as<MonarchMatrix>().l.extent(0);
        j["cores"] = {tensor_to_json(m.as<MonarchMatrix>().l, "l"),
                      tensor_to_json(m.as<MonarchMatrix>().r, "r")};
        break;
    case Family::TensorTrain: {
        const auto &tt = m.as<TensorTrainMatrix>();
        j["out_factors"] = tt.out_factors;
        j["in_factors"] = tt.in_factors;
        j["ranks"] = tt.ranks;
        json cores = json::array();
        for (std::size_t t = 0; t < tt.cores.size(); ++t) {
            cores.push_back(tensor_to_json(
                tt.cores[t], ("core" + std::to_string(t + 1)).c_str()));
        }
        j["cores"] = std::move(cores);
        break;
    }
    case Family::BlockTensorTrain: {
        const auto &bt = m.as<BlockTensorTrainMatrix>();
        j["out_factors"] = bt.out_factors;
        j["in_factors"] = bt.in_factors;
        j["ranks"] = bt.ranks;
        json cores = json::array();
        for (std::size_t t = 0; t < bt.cores.size(); ++t) {
            cores.push_back(tensor_to_json(
                bt.cores[t], ("core" + std::to_string(t + 1)).c_str()));
        }
        j["cores"] = std::move(cores);
        break;
    }
    }
    return j.dump(indent);
}

StructuredMatrix structured_from_json(std::string_view text) {
    json j = json::parse(text);
    const std::string fam = j.at("family").get<std::string>();
    const auto f = family_from_name(fam);
    if (!f) {
        throw DomainError("unknown structured-matrix family \"" + fam + "\"");
    }
    const json &cores = j.at("cores");
    switch (*f) {
    case Family::Dense:
        return make_dense(tensor_from_json(cores.at(0)));
    case Family::LowRank:
        return make_low_rank(tensor_from_json(cores.at(0)),
                             tensor_from_json(cores.at(1)));
    case Family::Convolution:
        return make_convolution(tensor_from_json(cores.at(0)),
                                j.at("dim").get<std::int64_t>());
    case Family::Kronecker:
        return make_kronecker(tensor_from_json(cores.at(0)),
                              tensor_from_json(cores.at(1)));
    case Family::Monarch:
        return make_monarch(tensor_from_json(cores.at(0)),
                            tensor_from_json(cores.at(1)));
    case Family::TensorTrain: {
        std::vector<DenseTensor> cs;
        for (const auto &cj : cores) {
            cs.push_back(tensor_from_json(cj));
        }
        return make_tensor_train(
            std::move(cs), j.at("out_factors").get<std::vector<std::int64_t>>(),
            j.at("in_factors").get<std::vector<std::int64_t>>());
    }
    case Family::BlockTensorTrain: {
        std::vector<DenseTensor> cs;
        for (const auto &cj : cores) {
            cs.push_back(tensor_from_json(cj));
        }
        return make_block_tensor_train(
            std::move(cs), j.at("out_factors").get<std::vector<std::int64_t>>(),
            j.at("in_factors").get<std::vector<std::int64_t>>(),
            j.at("ranks").get<std::vector<std::int64_t>>());
    }
    }
    throw DomainError("structured_from_json: unknown family");
}

} // namespace smx
