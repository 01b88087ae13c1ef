#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "smx/structured.hpp"

using namespace smx;

TEST_CASE("balanced factorization examples") {
    CHECK(balanced_factorization(20, 2).factors ==
          std::vector<std::int64_t>{4, 5});
    CHECK(balanced_factorization(30, 2).factors ==
          std::vector<std::int64_t>{5, 6});
    CHECK(balanced_factorization(64, 3).factors ==
          std::vector<std::int64_t>{4, 4, 4});
    CHECK(balanced_factorization(7, 2).factors ==
          std::vector<std::int64_t>{1, 7});
    CHECK(balanced_factorization(1, 3).factors ==
          std::vector<std::int64_t>{1, 1, 1});
    CHECK_THROWS_AS(balanced_factorization(0, 2), DomainError);
}

TEST_CASE("balanced factorization minimizes the max/min ratio") {
    for (std::int64_t d = 2; d <= 120; ++d) {
        const auto got = balanced_factorization(d, 2).factors;
        double best = 1e300;
        for (std::int64_t a = 1; a * a <= d; ++a) {
            if (d % a == 0) {
                best = std::min(best, static_cast<double>(d / a) /
                                          static_cast<double>(a));
            }
        }
        CHECK(static_cast<double>(got[1]) / static_cast<double>(got[0]) ==
              doctest::Approx(best));
        CHECK(got[0] <= got[1]);
        CHECK(got[0] * got[1] == d);
    }
}

TEST_CASE("kronecker identity mvm") {
    auto m = make_kronecker(DenseTensor::identity(2), DenseTensor::identity(2));
    std::vector<double> x = {1, 2, 3, 4};
    auto y = mvm(m, x);
    CHECK(y == x);
}

TEST_CASE("kronecker diagonal scaling under row-major reshape") {
    auto diag = DenseTensor::from_rows({{1, 0}, {0, 2}});
    auto m = make_kronecker(diag, DenseTensor::identity(2));
    std::vector<double> x = {5, 6, 7, 8};
    auto y = mvm(m, x);
    CHECK(y == std::vector<double>{5, 6, 14, 16});
}

TEST_CASE("mvm length mismatch raises a dimension error") {
    auto m = make_dense(gaussian({3, 4}, 0.0, 1.0, 1));
    std::vector<double> x(5, 1.0);
    CHECK_THROWS_AS(mvm(m, x), DimensionError);
}

TEST_CASE("random btt and tt mvm match the materialization oracle") {
    {
        auto m = test::random_structured(Family::BlockTensorTrain, 16, 16,
                                         StructureOptions{2, 2, 4, 5}, 7);
        auto x = gaussian({16}, 0.0, 1.0, 8);
        std::vector<double> xv(x.data(), x.data() + x.size());
        auto y = mvm(m, xv);
        auto w = materialize(m);
        auto yo = test::matvec_oracle(w, xv);
        for (std::size_t i = 0; i < y.size(); ++i) {
            CHECK(std::abs(y[i] - yo[i]) <= 1e-10);
        }
    }
    {
        auto m = test::random_structured(Family::TensorTrain, 27, 27,
                                         StructureOptions{3, 2, 4, 5}, 9);
        auto x = gaussian({27}, 0.0, 1.0, 10);
        std::vector<double> xv(x.data(), x.data() + x.size());
        auto y = mvm(m, xv);
        auto w = materialize(m);
        auto yo = test::matvec_oracle(w, xv);
        for (std::size_t i = 0; i < y.size(); ++i) {
            CHECK(std::abs(y[i] - yo[i]) <= 1e-10);
        }
    }
}

TEST_CASE("materialize closed forms") {
    // delta kernel is the identity
    auto conv = make_convolution(DenseTensor({1}, {1.0}), 4);
    CHECK(max_abs_diff(materialize(conv), DenseTensor::identity(4)) == 0.0);

    // low-rank materializes as u v, exactly
    auto u = gaussian({5, 2}, 0.0, 1.0, 21);
    auto v = gaussian({2, 6}, 0.0, 1.0, 22);
    auto lr = make_low_rank(u, v);
    CHECK(max_abs_diff(materialize(lr), matmul(u, v)) == 0.0);

    // monarch with identity blocks is a permutation-conjugated identity
    DenseTensor lb({2, 2, 2});
    DenseTensor rb({2, 2, 2});
    for (std::int64_t k = 0; k < 2; ++k) {
        for (std::int64_t i = 0; i < 2; ++i) {
            lb[(k * 2 + i) * 2 + i] = 1.0;
            rb[(k * 2 + i) * 2 + i] = 1.0;
        }
    }
    auto mon = make_monarch(lb, rb);
    CHECK(max_abs_diff(materialize(mon), DenseTensor::identity(4)) == 0.0);
}

TEST_CASE("materialize cap raises a resource error") {
    auto m = make_dense(DenseTensor({64, 64}));
    CHECK_THROWS_AS(materialize(m, 100), ResourceError);
}

TEST_CASE("components shapes and chain order") {
    {
        auto m = make_structured(Family::Kronecker, 64, 64);
        auto comps = components(m);
        REQUIRE(comps.size() == 2);
        for (const auto &c : comps) {
            CHECK(c.batch == 1);
            CHECK(c.d_out == 8);
            CHECK(c.d_in == 8);
        }
        CHECK(comps[0].name == "r");
        CHECK(comps[1].name == "l");
        CHECK(comps[0].position == 1);
        CHECK(comps[1].position == 2);
    }
    {
        auto m = make_structured(Family::BlockTensorTrain, 16, 16,
                                 StructureOptions{2, 1, 4, 5});
        auto comps = components(m);
        REQUIRE(comps.size() == 2);
        for (const auto &c : comps) {
            CHECK(c.batch == 4);
            CHECK(c.d_out == 4);
            CHECK(c.d_in == 4);
        }
    }
    {
        auto m = make_dense(DenseTensor({3, 5}));
        auto comps = components(m);
        REQUIRE(comps.size() == 1);
        CHECK(comps[0].batch == 1);
        CHECK(comps[0].d_out == 3);
        CHECK(comps[0].d_in == 5);
    }
    {
        // low-rank: v is applied first, u last
        auto m = make_structured(Family::LowRank, 8, 12,
                                 StructureOptions{2, 3, 4, 5});
        auto comps = components(m);
        REQUIRE(comps.size() == 2);
        CHECK(comps[0].name == "v");
        CHECK(comps[0].d_out == 3);
        CHECK(comps[0].d_in == 12);
        CHECK(comps[1].name == "u");
        CHECK(comps[1].d_out == 8);
        CHECK(comps[1].d_in == 3);
    }
}

TEST_CASE("core_tensors parallels components") {
    for (Family f :
         {Family::Dense, Family::LowRank, Family::Convolution,
          Family::Kronecker, Family::Monarch, Family::TensorTrain,
          Family::BlockTensorTrain}) {
        const std::int64_t d = f == Family::Convolution ? 12 : 16;
        auto m = test::random_structured(f, d, d, StructureOptions{2, 2, 4, 5},
                                         33);
        auto comps = components(m);
        auto cores = core_tensors(m);
        REQUIRE(comps.size() == cores.size());
        for (std::size_t i = 0; i < comps.size(); ++i) {
            CHECK(comps[i].batch * comps[i].d_out * comps[i].d_in ==
                  cores[i]->size());
            CHECK(comps[i].position == static_cast<int>(i) + 1);
        }
    }
}

TEST_CASE("mvm_batched equals the per-column loop") {
    auto m = test::random_structured(Family::Monarch, 16, 16,
                                     StructureOptions{2, 1, 4, 5}, 41);
    auto x = gaussian({16, 7}, 0.0, 1.0, 42);
    auto y = mvm_batched(m, x);
    for (std::int64_t j = 0; j < 7; ++j) {
        std::vector<double> col(16);
        for (std::int64_t i = 0; i < 16; ++i) {
            col[static_cast<std::size_t>(i)] = x.at2(i, j);
        }
        auto yc = mvm(m, col);
        for (std::int64_t i = 0; i < 16; ++i) {
            CHECK(y.at2(i, j) == yc[static_cast<std::size_t>(i)]);
        }
    }

    // n=1 reduces to mvm; dense variant coincides with matmul
    auto d = make_dense(gaussian({5, 6}, 0.0, 1.0, 43));
    auto xb = gaussian({6, 3}, 0.0, 1.0, 44);
    CHECK(max_abs_diff(mvm_batched(d, xb),
                       matmul(d.as<DenseMatrix>().w, xb)) == 0.0);
    auto x1 = gaussian({6, 1}, 0.0, 1.0, 45);
    std::vector<double> x1v(x1.data(), x1.data() + x1.size());
    auto y1 = mvm_batched(d, x1);
    auto y1v = mvm(d, x1v);
    for (std::int64_t i = 0; i < 5; ++i) {
        CHECK(y1[i] == y1v[static_cast<std::size_t>(i)]);
    }
}

namespace {

StructureOptions random_options(Rng &rng) {
    StructureOptions o;
    o.cores = 2 + static_cast<int>(rng.below(2));
    o.rank = 1 + rng.below(3);
    o.blocks = std::int64_t(1) << rng.below(3);
    o.kernel = 1 + rng.below(8);
    return o;
}

} // namespace

TEST_CASE("oracle equivalence across all families, 100 random instances") {
    const Family fams[] = {Family::Dense,       Family::LowRank,
                           Family::Convolution, Family::Kronecker,
                           Family::Monarch,     Family::TensorTrain,
                           Family::BlockTensorTrain};
    Rng rng(20240601);
    for (Family f : fams) {
        for (int trial = 0; trial < 100; ++trial) {
            std::int64_t d_out = 1 + rng.below(64);
            std::int64_t d_in = 1 + rng.below(64);
            if (f == Family::Convolution) {
                d_in = d_out;
            }
            const StructureOptions opts = random_options(rng);
            auto m = test::random_structured(f, d_out, d_in, opts,
                                             rng.next_u64());
            auto xt = gaussian({d_in}, 0.0, 1.0, rng.next_u64());
            std::vector<double> x(xt.data(), xt.data() + xt.size());
            auto y = mvm(m, x);
            auto w = materialize(m);
            auto yo = test::matvec_oracle(w, x);
            DenseTensor yot({d_out}, std::vector<double>(yo));
            const double scale =
                rms(yot) * static_cast<double>(std::max(d_out, d_in));
            double err = 0.0;
            for (std::size_t i = 0; i < yo.size(); ++i) {
                err = std::max(err, std::abs(y[i] - yo[i]));
            }
            CHECK(err <= 1e-9 * scale + 1e-14);
        }
    }
}

TEST_CASE("btt with block-constant cores materializes to the kronecker "
          "product of the shared slices") {
    auto l = gaussian({3, 4}, 0.0, 1.0, 51);
    auto r = gaussian({5, 2}, 0.0, 1.0, 52);
    auto kron = make_kronecker(l, r);

    const std::int64_t m1 = 3, n1 = 4, m2 = 5, n2 = 2;
    DenseTensor core1({m2, m1, n1});
    for (std::int64_t b = 0; b < m2; ++b) {
        std::memcpy(core1.data() + b * m1 * n1, l.data(),
                    sizeof(double) * static_cast<std::size_t>(m1 * n1));
    }
    DenseTensor core2({n1, m2, n2});
    for (std::int64_t b = 0; b < n1; ++b) {
        std::memcpy(core2.data() + b * m2 * n2, r.data(),
                    sizeof(double) * static_cast<std::size_t>(m2 * n2));
    }
    auto btt = make_block_tensor_train({core1, core2}, {m1, m2}, {n1, n2},
                                       {1, 1, 1});
    CHECK(max_abs_diff(materialize(btt), materialize(kron)) == 0.0);
}

TEST_CASE("rank-1 btt with sqrt(d) blocks is a monarch matrix") {
    auto mon = test::random_structured(Family::Monarch, 16, 16,
                                       StructureOptions{2, 1, 4, 5}, 61);
    const auto &mo = mon.as<MonarchMatrix>();
    REQUIRE(mo.l.shape() == std::vector<std::int64_t>{4, 4, 4});
    auto btt = make_block_tensor_train({mo.l, mo.r}, {4, 4}, {4, 4}, {1, 1, 1});
    CHECK(max_abs_diff(materialize(btt), materialize(mon)) == 0.0);

    // the efficient paths agree as well
    auto x = gaussian({16, 3}, 0.0, 1.0, 62);
    CHECK(max_abs_diff(mvm_batched(btt, x), mvm_batched(mon, x)) == 0.0);
}

TEST_CASE("tt equals the btt built by tiling its cores along block axes") {
    auto tt = test::random_structured(Family::TensorTrain, 27, 27,
                                      StructureOptions{3, 2, 4, 5}, 71);
    const auto &t = tt.as<TensorTrainMatrix>();
    const int c = 3;
    std::vector<DenseTensor> bcores;
    for (int step = 1; step <= c; ++step) {
        const auto &g = t.cores[static_cast<std::size_t>(step - 1)];
        const std::int64_t rows = g.extent(0) * g.extent(1);
        const std::int64_t cols = g.extent(2) * g.extent(3);
        std::int64_t bt = 1;
        for (int s = step + 1; s <= c; ++s) {
            bt *= t.out_factors[static_cast<std::size_t>(s - 1)];
        }
        for (int s = 1; s <= step - 1; ++s) {
            bt *= t.in_factors[static_cast<std::size_t>(s - 1)];
        }
        DenseTensor bc({bt, rows, cols});
        for (std::int64_t b = 0; b < bt; ++b) {
            std::memcpy(bc.data() + b * rows * cols, g.data(),
                        sizeof(double) *
                            static_cast<std::size_t>(rows * cols));
        }
        bcores.push_back(std::move(bc));
    }
    auto btt = make_block_tensor_train(std::move(bcores), t.out_factors,
                                       t.in_factors, t.ranks);
    CHECK(max_abs_diff(materialize(btt), materialize(tt)) == 0.0);

    auto x = gaussian({27, 2}, 0.0, 1.0, 72);
    CHECK(max_abs_diff(mvm_batched(btt, x), mvm_batched(tt, x)) == 0.0);
}

TEST_CASE("swapping kronecker factors permutes rows and columns") {
    auto l = gaussian({2, 3}, 0.0, 1.0, 81);
    auto r = gaussian({4, 5}, 0.0, 1.0, 82);
    auto w1 = materialize(make_kronecker(l, r));
    auto w2 = materialize(make_kronecker(r, l));
    const std::int64_t m1 = 2, n1 = 3, m2 = 4, n2 = 5;
    for (std::int64_t a = 0; a < m1; ++a) {
        for (std::int64_t b = 0; b < m2; ++b) {
            for (std::int64_t g = 0; g < n1; ++g) {
                for (std::int64_t dd = 0; dd < n2; ++dd) {
                    CHECK(w1.at2(a * m2 + b, g * n2 + dd) ==
                          w2.at2(b * m1 + a, dd * n1 + g));
                }
            }
        }
    }
}

TEST_CASE("btt construction rejects ranks above the bound") {
    StructureOptions opts{2, 4, 4, 5};
    auto ok = make_structured(Family::BlockTensorTrain, 16, 16, opts);
    CHECK(ok.as<BlockTensorTrainMatrix>().ranks[1] == 4); // clipped default

    DenseTensor c1({4, 4, 4 * 5});
    DenseTensor c2({4, 5 * 4, 4});
    CHECK_THROWS_WITH_AS(
        make_block_tensor_train({c1, c2}, {4, 4}, {4, 4}, {1, 5, 1}),
        doctest::Contains("redundant"), DomainError);
}

TEST_CASE("rank bound tables") {
    CHECK(btt_rank_bound(1, 2, 16) == 4);
    CHECK(btt_rank_bound(1, 3, 64) == 4);
    CHECK(btt_rank_bound(2, 3, 64) == 4);
    CHECK(btt_rank_bound(2, 4, 16) == 4);
    CHECK(tt_rank_bound(1, 2, 16) == 16);
    CHECK(tt_rank_bound(1, 3, 64) == 16);
    CHECK(tt_rank_bound(1, 2, 4) == 4);
}

TEST_CASE("json serialization round-trips the float payload bit-exactly") {
    Rng rng(91);
    for (Family f :
         {Family::Dense, Family::LowRank, Family::Convolution,
          Family::Kronecker, Family::Monarch, Family::TensorTrain,
          Family::BlockTensorTrain}) {
        const std::int64_t d = f == Family::Convolution ? 12 : 24;
        auto m = test::random_structured(f, d, d, StructureOptions{2, 2, 4, 7},
                                         rng.next_u64());
        auto text = to_json_string(m);
        auto back = structured_from_json(text);
        CHECK(back.family() == m.family());
        auto c1 = core_tensors(m);
        auto c2 = core_tensors(back);
        REQUIRE(c1.size() == c2.size());
        for (std::size_t i = 0; i < c1.size(); ++i) {
            REQUIRE(c1[i]->size() == c2[i]->size());
            for (std::int64_t j = 0; j < c1[i]->size(); ++j) {
                const double a = (*c1[i])[j];
                const double b = (*c2[i])[j];
                CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
            }
        }
    }
}
