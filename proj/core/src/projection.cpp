#include "smx/projection.hpp"

#include <algorithm>
#include <cmath>

#include "smx/tensor.hpp"

namespace smx {

namespace {

struct RawProjection {
    DenseTensor core1; // (M2, M1, N1*r)
    DenseTensor core2; // (N1, r*M2, N2)
};

// Optimal rank-r two-core split of C viewed as a (M1,M2) x (N1,N2) tensor:
// independent truncated SVDs of the (M1 x N2) slices at fixed (i2, j).
// Slices with fewer than r nonzero directions zero-pad the remaining rank
// channels.
RawProjection project2core_raw(const DenseTensor &c, std::int64_t m1,
                               std::int64_t m2, std::int64_t n1,
                               std::int64_t n2, std::int64_t r) {
    RawProjection out;
    out.core1 = DenseTensor({m2, m1, n1 * r});
    out.core2 = DenseTensor({n1, r * m2, n2});
    DenseTensor slice({m1, n2});
    for (std::int64_t i2 = 0; i2 < m2; ++i2) {
        for (std::int64_t j = 0; j < n1; ++j) {
            for (std::int64_t i = 0; i < m1; ++i) {
                for (std::int64_t j2 = 0; j2 < n2; ++j2) {
                    slice.at2(i, j2) = c.at2(i * m2 + i2, j * n2 + j2);
                }
            }
            if (max_abs(slice) == 0.0) {
                continue; // zero slice: keep zero factors
            }
            const SvdResult sv = svd(slice);
            const std::int64_t reff =
                std::min<std::int64_t>(r, static_cast<std::int64_t>(sv.s.size()));
            for (std::int64_t a = 0; a < reff; ++a) {
                const double w = std::sqrt(sv.s[static_cast<std::size_t>(a)]);
                for (std::int64_t i = 0; i < m1; ++i) {
                    out.core1[(i2 * m1 + i) * (n1 * r) + (j * r + a)] =
                        sv.u.at2(i, a) * w;
                }
                for (std::int64_t j2 = 0; j2 < n2; ++j2) {
                    out.core2[(j * (r * m2) + (a * m2 + i2)) * n2 + j2] =
                        sv.v.at2(j2, a) * w;
                }
            }
        }
    }
    return out;
}

void check_factorization(const AxisFactorization &f, std::int64_t total,
                         const char *which) {
    std::int64_t p = 1;
    for (auto e : f.factors) {
        p *= e;
    }
    if (p != total || f.total != total) {
        throw DimensionError(std::string(which) +
                             " factorization does not multiply to " +
                             std::to_string(total));
    }
}

double residual_against(const DenseTensor &a, const StructuredMatrix &m) {
    const DenseTensor w = materialize(m, a.size());
    return frobenius_norm(subtract(a, w));
}

} // namespace

ProjectionResult project_btt_2core(const DenseTensor &a,
                                   const AxisFactorization &out_fac,
                                   const AxisFactorization &in_fac,
                                   std::int64_t rank) {
    if (a.ndim() != 2) {
        throw DimensionError("project_btt_2core: input must be a matrix");
    }
    if (out_fac.factors.size() != 2 || in_fac.factors.size() != 2) {
        throw DimensionError("project_btt_2core: factorizations must have "
                             "two factors");
    }
    check_factorization(out_fac, a.extent(0), "row");
    check_factorization(in_fac, a.extent(1), "column");
    const std::int64_t m1 = out_fac.factors[0], m2 = out_fac.factors[1];
    const std::int64_t n1 = in_fac.factors[0], n2 = in_fac.factors[1];
    const std::int64_t bound = std::min(m1, n2);
    if (rank < 1 || rank > bound) {
        throw DomainError("project_btt_2core: rank " + std::to_string(rank) +
                          " outside [1, " + std::to_string(bound) +
                          "]; min(m_1, n_2) bounds the useful rank");
    }
    RawProjection raw = project2core_raw(a, m1, m2, n1, n2, rank);
    StructuredMatrix btt = make_block_tensor_train(
        {std::move(raw.core1), std::move(raw.core2)}, {m1, m2}, {n1, n2},
        {1, rank, 1});
    const double res = residual_against(a, btt);
    return {std::move(btt), res};
}

ProjectionResult project_btt_recursive(const DenseTensor &a, int cores,
                                       std::span<const std::int64_t> ranks) {
    if (a.ndim() != 2) {
        throw DimensionError("project_btt_recursive: input must be a matrix");
    }
    return project_btt_recursive(a, balanced_factorization(a.extent(0), cores),
                                 balanced_factorization(a.extent(1), cores),
                                 ranks);
}

ProjectionResult project_btt_recursive(const DenseTensor &a,
                                       const AxisFactorization &out_fac,
                                       const AxisFactorization &in_fac,
                                       std::span<const std::int64_t> ranks) {
    const int c = static_cast<int>(out_fac.factors.size());
    if (c < 2 || static_cast<int>(in_fac.factors.size()) != c) {
        throw DimensionError("project_btt_recursive: need matching "
                             "factorizations with at least two factors");
    }
    if (static_cast<int>(ranks.size()) != c - 1) {
        throw DimensionError("project_btt_recursive: expected " +
                             std::to_string(c - 1) + " ranks");
    }
    check_factorization(out_fac, a.extent(0), "row");
    check_factorization(in_fac, a.extent(1), "column");
    const auto &m = out_fac.factors;
    const auto &n = in_fac.factors;
    const auto bounds = btt_rank_bounds(m, n);
    for (int t = 1; t <= c - 1; ++t) {
        const std::int64_t r = ranks[static_cast<std::size_t>(t - 1)];
        if (r < 1 || r > bounds[static_cast<std::size_t>(t - 1)]) {
            throw DomainError(
                "project_btt_recursive: rank r_" + std::to_string(t) + " = " +
                std::to_string(r) + " outside [1, " +
                std::to_string(bounds[static_cast<std::size_t>(t - 1)]) + "]");
        }
    }

    std::vector<DenseTensor> btt_cores(static_cast<std::size_t>(c));
    DenseTensor work = a; // rows stay (d_out); columns evolve to (N1 * r)
    std::int64_t rank_attached = 1;
    static const int restore_rows[3] = {1, 0, 2};
    for (int t = c; t >= 2; --t) {
        std::int64_t m1 = 1, n1 = 1;
        for (int s = 1; s < t; ++s) {
            m1 *= m[static_cast<std::size_t>(s - 1)];
            n1 *= n[static_cast<std::size_t>(s - 1)];
        }
        const std::int64_t mt = m[static_cast<std::size_t>(t - 1)];
        const std::int64_t mrest = a.extent(0) / (m1 * mt);
        const std::int64_t m2 = mt * mrest;
        const std::int64_t n2 = n[static_cast<std::size_t>(t - 1)] * rank_attached;
        const std::int64_t r = ranks[static_cast<std::size_t>(t - 2)];
        RawProjection raw = project2core_raw(work, m1, m2, n1, n2, r);

        // raw.core2 rows carry (r, m_t, mrest); mrest belongs in the batch
        // axis of BTT core t, ahead of the j-blocks.
        DenseTensor g = raw.core2.reshaped({n1, r, mt, mrest, n2});
        static const int to_batch_first[5] = {3, 0, 1, 2, 4};
        g = permute(g, std::span<const int>(to_batch_first, 5));
        g.reshape({mrest * n1, r * mt,
                   n[static_cast<std::size_t>(t - 1)] * rank_attached});
        btt_cores[static_cast<std::size_t>(t - 1)] = std::move(g);

        // raw.core1 blocks carry the trailing row group; restore plain
        // row-major rows for the next round.
        DenseTensor next = permute(raw.core1.reshaped({m2, m1, n1 * r}),
                                   std::span<const int>(restore_rows, 3));
        next.reshape({m1 * m2, n1 * r});
        work = std::move(next);
        rank_attached = r;
    }

    // Remaining matrix is core 1 with rows (m_1, rest) to swap into
    // batch-first layout.
    const std::int64_t m1 = m[0];
    const std::int64_t mrest = a.extent(0) / m1;
    DenseTensor g1 = permute(work.reshaped({m1, mrest, n[0] * rank_attached}),
                             std::span<const int>(restore_rows, 3));
    g1.reshape({mrest, m1, n[0] * rank_attached});
    btt_cores[0] = std::move(g1);

    std::vector<std::int64_t> full_ranks;
    full_ranks.push_back(1);
    for (auto r : ranks) {
        full_ranks.push_back(r);
    }
    full_ranks.push_back(1);
    StructuredMatrix btt = make_block_tensor_train(
        std::move(btt_cores), m, n, std::move(full_ranks));
    const double res = residual_against(a, btt);
    return {std::move(btt), res};
}

} // namespace smx
