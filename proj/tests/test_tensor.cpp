#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "smx/tensor.hpp"

using namespace smx;

TEST_CASE("matmul identity and column selection") {
    auto a = DenseTensor::from_rows({{1, 2}, {3, 4}});
    auto y = matmul(DenseTensor::identity(2), a);
    CHECK(max_abs_diff(y, a) == 0.0);

    auto col = DenseTensor::from_rows({{0}, {1}});
    auto picked = matmul(a, col);
    CHECK(picked.at2(0, 0) == 2.0);
    CHECK(picked.at2(1, 0) == 4.0);
}

TEST_CASE("matmul matches the triple-loop oracle") {
    auto a = gaussian({5, 3}, 0.0, 1.0, 1);
    auto b = gaussian({3, 4}, 0.0, 1.0, 2);
    auto fast = matmul(a, b);
    auto slow = test::matmul_oracle(a, b);
    CHECK(max_abs_diff(fast, slow) <= 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    auto a = gaussian({2, 3}, 0.0, 1.0, 3);
    auto b = gaussian({4, 2}, 0.0, 1.0, 4);
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         doctest::Contains("[2 x 3]"), DimensionError);
}

TEST_CASE("matmul associativity on random triples") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto a = gaussian({6, 5}, 0.0, 1.0, 100 + seed);
        auto b = gaussian({5, 7}, 0.0, 1.0, 200 + seed);
        auto c = gaussian({7, 4}, 0.0, 1.0, 300 + seed);
        auto left = matmul(matmul(a, b), c);
        auto right = matmul(a, matmul(b, c));
        CHECK(max_abs_diff(left, right) <=
              1e-9 * std::max(1.0, max_abs(left)));
    }
}

TEST_CASE("transposed matmul helpers agree with explicit transposes") {
    auto a = gaussian({5, 3}, 0.0, 1.0, 11);
    auto y = gaussian({5, 4}, 0.0, 1.0, 12);
    CHECK(max_abs_diff(matmul_tn(a, y), matmul(transpose2d(a), y)) <= 1e-13);
    auto x = gaussian({6, 4}, 0.0, 1.0, 13);
    CHECK(max_abs_diff(matmul_nt(y, x), matmul(y, transpose2d(x))) <= 1e-13);
}

TEST_CASE("batched matmuls agree with per-block matmul") {
    auto a = gaussian({3, 4, 5}, 0.0, 1.0, 21);
    auto x = gaussian({3, 5, 2}, 0.0, 1.0, 22);
    auto y = bmm(a, x);
    for (std::int64_t b = 0; b < 3; ++b) {
        for (std::int64_t i = 0; i < 4; ++i) {
            for (std::int64_t j = 0; j < 2; ++j) {
                double acc = 0.0;
                for (std::int64_t k = 0; k < 5; ++k) {
                    acc += a[(b * 4 + i) * 5 + k] * x[(b * 5 + k) * 2 + j];
                }
                CHECK(std::abs(y[(b * 4 + i) * 2 + j] - acc) <= 1e-13);
            }
        }
    }
    // reduce variant sums the per-block outer products in block order
    auto g = gaussian({3, 4, 2}, 0.0, 1.0, 23);
    auto red = bmm_nt_reduce(g, x);
    auto full = bmm_nt(g, x);
    for (std::int64_t i = 0; i < 4; ++i) {
        for (std::int64_t k = 0; k < 5; ++k) {
            double acc = 0.0;
            for (std::int64_t b = 0; b < 3; ++b) {
                acc += full[(b * 4 + i) * 5 + k];
            }
            CHECK(std::abs(red.at2(i, k) - acc) <= 1e-12);
        }
    }
}

TEST_CASE("permute composed with its inverse is the identity, exactly") {
    auto t = gaussian({3, 4, 2, 5}, 0.0, 1.0, 31);
    const int perm[4] = {2, 0, 3, 1};
    auto p = permute(t, perm);
    auto inv = inverse_permutation(perm);
    auto back = permute(p, inv);
    REQUIRE(back.shape() == t.shape());
    for (std::int64_t i = 0; i < t.size(); ++i) {
        CHECK(back[i] == t[i]);
    }
}

TEST_CASE("reshape never reorders data") {
    auto t = gaussian({4, 6}, 0.0, 1.0, 32);
    auto r = t.reshaped({2, 3, 4});
    for (std::int64_t i = 0; i < t.size(); ++i) {
        CHECK(r[i] == t[i]);
    }
    CHECK_THROWS_AS(t.reshaped({5, 5}), DimensionError);
}

TEST_CASE("rms closed forms") {
    CHECK(rms(DenseTensor::full({7}, 1.0)) == 1.0);
    CHECK(rms(DenseTensor({2}, {3.0, 4.0})) ==
          doctest::Approx(std::sqrt(25.0 / 2.0)).epsilon(1e-15));
    CHECK(rms(DenseTensor({3, 3})) == 0.0);
    CHECK_THROWS_AS(rms(DenseTensor{}), DomainError);
}

TEST_CASE("gaussian determinism and degenerate width") {
    auto a = gaussian({64}, 2.5, 0.0, 9);
    for (std::int64_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == 2.5);
    }
    auto b = gaussian({50, 3}, 0.0, 1.3, 42);
    auto c = gaussian({50, 3}, 0.0, 1.3, 42);
    for (std::int64_t i = 0; i < b.size(); ++i) {
        CHECK(b[i] == c[i]);
    }
    auto d = gaussian({50, 3}, 0.0, 1.3, 43);
    CHECK(max_abs_diff(b, d) > 0.0);
    CHECK_THROWS_AS(gaussian({3}, 0.0, -1.0, 1), DomainError);
}

TEST_CASE("gaussian sample statistics at 1e5 draws") {
    auto t = gaussian({100000}, 0.0, 1.0, 2024);
    double mean = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) {
        mean += t[i];
    }
    mean /= static_cast<double>(t.size());
    double var = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) {
        var += (t[i] - mean) * (t[i] - mean);
    }
    var /= static_cast<double>(t.size());
    const double sd = std::sqrt(var);
    CHECK(sd >= 0.99);
    CHECK(sd <= 1.01);
    CHECK(std::abs(mean) <= 0.02);
}

TEST_CASE("svd of a diagonal matrix") {
    auto a = DenseTensor::from_rows({{3, 0}, {0, 1}});
    auto r = svd(a);
    CHECK(r.s[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(r.s[1] == doctest::Approx(1.0).epsilon(1e-12));
    for (std::int64_t i = 0; i < 2; ++i) {
        for (std::int64_t j = 0; j < 2; ++j) {
            CHECK(std::abs(std::abs(r.u.at2(i, j)) - (i == j ? 1.0 : 0.0)) <=
                  1e-12);
            CHECK(std::abs(std::abs(r.v.at2(i, j)) - (i == j ? 1.0 : 0.0)) <=
                  1e-12);
        }
    }
}

namespace {

void check_orthonormal_columns(const DenseTensor &q, double tol) {
    const std::int64_t n = q.extent(0), k = q.extent(1);
    for (std::int64_t a = 0; a < k; ++a) {
        for (std::int64_t b = 0; b < k; ++b) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                acc += q.at2(i, a) * q.at2(i, b);
            }
            CHECK(std::abs(acc - (a == b ? 1.0 : 0.0)) <= tol);
        }
    }
}

} // namespace

TEST_CASE("svd of a rank-1 outer product") {
    auto u = gaussian({4}, 0.0, 1.0, 51);
    auto v = gaussian({3}, 0.0, 1.0, 52);
    DenseTensor a({4, 3});
    for (std::int64_t i = 0; i < 4; ++i) {
        for (std::int64_t j = 0; j < 3; ++j) {
            a.at2(i, j) = u[i] * v[j];
        }
    }
    auto r = svd(a);
    const double expected = frobenius_norm(u.reshaped({4, 1})) *
                            frobenius_norm(v.reshaped({3, 1}));
    CHECK(r.s[0] == doctest::Approx(expected).epsilon(1e-10));
    CHECK(std::abs(r.s[1]) <= 1e-10 * expected);
    CHECK(std::abs(r.s[2]) <= 1e-10 * expected);
    check_orthonormal_columns(r.u, 1e-9);
    check_orthonormal_columns(r.v, 1e-9);
}

TEST_CASE("svd singular values match the power-iteration eigen oracle") {
    auto a = gaussian({6, 4}, 0.0, 1.0, 61);
    auto r = svd(a);
    auto ata = matmul_tn(a, a);
    auto eigs = test::psd_eigenvalues_power_iteration(ata);
    REQUIRE(eigs.size() >= r.s.size());
    for (std::size_t i = 0; i < r.s.size(); ++i) {
        CHECK(r.s[i] ==
              doctest::Approx(std::sqrt(std::max(0.0, eigs[i]))).epsilon(1e-8));
    }
}

TEST_CASE("svd reconstruction and Eckart-Young self-consistency") {
    auto a = gaussian({8, 5}, 0.0, 1.0, 71);
    auto r = svd(a);
    const std::int64_t m = 8, n = 5, k = 5;
    // full reconstruction
    DenseTensor rec({m, n});
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t t = 0; t < k; ++t) {
                acc += r.u.at2(i, t) * r.s[static_cast<std::size_t>(t)] *
                       r.v.at2(j, t);
            }
            rec.at2(i, j) = acc;
        }
    }
    CHECK(frobenius_norm(subtract(rec, a)) <= 1e-8 * frobenius_norm(a));
    // truncations
    for (std::int64_t trunc = 0; trunc <= k; ++trunc) {
        DenseTensor tr({m, n});
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::int64_t t = 0; t < trunc; ++t) {
                    acc += r.u.at2(i, t) * r.s[static_cast<std::size_t>(t)] *
                           r.v.at2(j, t);
                }
                tr.at2(i, j) = acc;
            }
        }
        double disc = 0.0;
        for (std::int64_t t = trunc; t < k; ++t) {
            disc += r.s[static_cast<std::size_t>(t)] *
                    r.s[static_cast<std::size_t>(t)];
        }
        CHECK(frobenius_norm(subtract(a, tr)) ==
              doctest::Approx(std::sqrt(disc)).epsilon(1e-8));
    }
}

TEST_CASE("svd error paths") {
    DenseTensor bad({2, 2}, {1.0, std::nan(""), 0.0, 1.0});
    CHECK_THROWS_AS(svd(bad), DomainError);

    auto a = gaussian({5, 5}, 0.0, 1.0, 81);
    SvdOptions opts;
    opts.max_sweeps = 0;
    try {
        svd(a, opts);
        FAIL("expected NumericalError");
    } catch (const NumericalError &e) {
        CHECK(e.iterations() == 0);
    }
}

TEST_CASE("svd values are sorted non-increasing on random input") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto a = gaussian({7, 6}, 0.0, 1.0, 900 + seed);
        auto r = svd(a);
        for (std::size_t i = 1; i < r.s.size(); ++i) {
            CHECK(r.s[i - 1] >= r.s[i]);
            CHECK(r.s[i] >= 0.0);
        }
        check_orthonormal_columns(r.u, 1e-9);
        check_orthonormal_columns(r.v, 1e-9);
    }
}
