#pragma once

#include <cstdint>
#include <span>

#include "smx/structured.hpp"

namespace smx {

struct ProjectionResult {
    StructuredMatrix matrix;
    double residual = 0.0; // Frobenius norm of input - materialize(matrix)
};

// Closed-form optimal projection of a dense matrix onto a rank-r two-core
// BTT. The matrix is reshaped into a 4-index tensor over the given
// factorizations; every (i', j) slice gets an independent truncated SVD and
// the factors reassemble into the two cores. Singular values are absorbed
// symmetrically (each side scaled by sqrt(s)) so both cores carry comparable
// norms.
ProjectionResult project_btt_2core(const DenseTensor &a,
                                   const AxisFactorization &out_fac,
                                   const AxisFactorization &in_fac,
                                   std::int64_t rank);

// Greedy chain of two-core projections for c >= 2 cores: split off the last
// core, then recurse on the left factor with the rank axis grouped into its
// columns. Optimal for c = 2, greedy (not necessarily optimal) beyond.
// `ranks` holds r_1..r_{c-1}. Factorizations default to the balanced rule.
ProjectionResult project_btt_recursive(const DenseTensor &a, int cores,
                                       std::span<const std::int64_t> ranks);
ProjectionResult project_btt_recursive(const DenseTensor &a,
                                       const AxisFactorization &out_fac,
                                       const AxisFactorization &in_fac,
                                       std::span<const std::int64_t> ranks);

} // namespace smx
