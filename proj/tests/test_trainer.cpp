#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "smx/costs.hpp"
#include "smx/trainer.hpp"

using namespace smx;

namespace {

TrainConfig tiny_config(Family f, std::int64_t width, int depth) {
    TrainConfig cfg;
    cfg.family = f;
    cfg.width = width;
    cfg.depth = depth;
    cfg.input_dim = 16;
    cfg.num_classes = 4;
    cfg.structure = StructureOptions{2, 2, 2, 3};
    cfg.batch = 16;
    cfg.dataset_size = 64;
    cfg.probe_size = 32;
    cfg.seed = 99;
    if (f == Family::Convolution) {
        cfg.input_dim = width;
        cfg.expansion = 1;
    }
    return cfg;
}

// Every trainable scalar of the model, with its analytic gradient.
struct ParamRef {
    double *p;
    double g;
    std::string tag;
};

std::vector<ParamRef> collect_params(ResidualMLP &model, ModelGrads &grads) {
    std::vector<ParamRef> out;
    auto layer = [&](StructuredLayer &ly, LayerGrads &lg,
                     const std::string &tag) {
        auto cores = core_tensors(ly.matrix);
        for (std::size_t i = 0; i < cores.size(); ++i) {
            for (std::int64_t j = 0; j < cores[i]->size(); ++j) {
                out.push_back({&(*cores[i])[j], lg.cores[i][j],
                               tag + ".core" + std::to_string(i)});
            }
        }
        for (std::size_t i = 0; i < ly.wn.size(); ++i) {
            out.push_back({&ly.wn[i].gamma, lg.gammas[i],
                           tag + ".gamma" + std::to_string(i)});
        }
    };
    layer(model.embed, grads.embed, "embed");
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
        auto &blk = model.blocks[b];
        auto &bg = grads.blocks[b];
        const std::string base = "block" + std::to_string(b);
        layer(blk.w1, bg.w1, base + ".w1");
        layer(blk.w2, bg.w2, base + ".w2");
        for (std::int64_t j = 0; j < blk.ln.gamma.size(); ++j) {
            out.push_back({&blk.ln.gamma[j], bg.ln_gamma[j], base + ".ln_g"});
        }
        for (std::int64_t j = 0; j < blk.ln.beta.size(); ++j) {
            out.push_back({&blk.ln.beta[j], bg.ln_beta[j], base + ".ln_b"});
        }
    }
    layer(model.head, grads.head, "head");
    return out;
}

double loss_of(const ResidualMLP &model, const DenseTensor &x,
               std::span<const int> labels) {
    return cross_entropy(forward(model, x), labels);
}

// Re-randomizes every core (including zero-initialized ones) so each
// parameter carries signal through the finite-difference check.
void randomize_model(ResidualMLP &model, std::uint64_t seed, bool set_wn) {
    std::uint64_t tag = 0;
    auto visit = [&](StructuredLayer &ly, bool allow_wn) {
        auto cores = core_tensors(ly.matrix);
        for (auto *c : cores) {
            *c = gaussian(c->shape(), 0.0, 0.25, seed + 17 * (++tag));
        }
        ly.wn.clear();
        if (set_wn && allow_wn) {
            for (std::size_t i = 0; i < cores.size(); ++i) {
                const double rho = rms(*cores[i]);
                // alternate the clamp branch, away from the kink
                const double sigma = (i % 2 == 0) ? 0.7 * rho : 1.5 * rho;
                ly.wn.push_back(WeightNormState{1.3, std::max(sigma, 1e-3)});
            }
        }
    };
    visit(model.embed, true);
    for (auto &blk : model.blocks) {
        visit(blk.w1, true);
        visit(blk.w2, true);
        for (std::int64_t j = 0; j < blk.ln.gamma.size(); ++j) {
            blk.ln.gamma[j] = 1.0 + 0.1 * std::sin(static_cast<double>(j));
            blk.ln.beta[j] = 0.05 * std::cos(static_cast<double>(j));
        }
    }
    visit(model.head, false); // head stays unnormalized
}

void finite_difference_check_cfg(TrainConfig cfg, bool with_weight_norm) {
    cfg.weight_norm = false;
    ResidualMLP model = build_model(cfg);
    randomize_model(model, 4242, with_weight_norm);

    Dataset data =
        gaussian_mixture(cfg.input_dim, cfg.num_classes, 8, 2.0, 2026);
    ModelGrads grads;
    forward_backward(model, data.x, data.labels, grads);
    auto params = collect_params(model, grads);

    const double h = 1e-5;
    for (auto &pr : params) {
        const double saved = *pr.p;
        *pr.p = saved + h;
        const double up = loss_of(model, data.x, data.labels);
        *pr.p = saved - h;
        const double dn = loss_of(model, data.x, data.labels);
        *pr.p = saved;
        const double fd = (up - dn) / (2.0 * h);
        const double rel = std::abs(pr.g - fd) /
                           std::max({std::abs(pr.g), std::abs(fd), 1e-6});
        CAPTURE(pr.tag);
        CHECK(rel <= 1e-4);
    }
}

void finite_difference_check(Family f, bool with_weight_norm) {
    finite_difference_check_cfg(tiny_config(f, 8, 2), with_weight_norm);
}

} // namespace

TEST_CASE("zero-initialized blocks and head give uniform logits") {
    TrainConfig cfg = tiny_config(Family::Dense, 16, 2);
    ResidualMLP model = build_model(cfg);
    Dataset data = gaussian_mixture(cfg.input_dim, cfg.num_classes, 12, 2.0, 5);
    auto logits = forward(model, data.x);
    CHECK(max_abs(logits) == 0.0);
    CHECK(cross_entropy(logits, data.labels) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("depth zero reduces to head applied to the embedding") {
    TrainConfig cfg = tiny_config(Family::Kronecker, 16, 0);
    cfg.zero_init_head = false;
    ResidualMLP model = build_model(cfg);
    Dataset data = gaussian_mixture(cfg.input_dim, cfg.num_classes, 6, 2.0, 6);
    auto logits = forward(model, data.x);
    auto expected = matmul(materialize(model.head.matrix),
                           matmul(materialize(model.embed.matrix), data.x));
    CHECK(max_abs_diff(logits, expected) <= 1e-11);
}

TEST_CASE("forward matches an independent straight-line re-evaluation") {
    TrainConfig cfg = tiny_config(Family::BlockTensorTrain, 16, 2);
    cfg.zero_init_head = false;
    cfg.zero_init_residual = false;
    ResidualMLP model = build_model(cfg);
    Dataset data = gaussian_mixture(cfg.input_dim, cfg.num_classes, 5, 2.0, 7);

    auto logits = forward(model, data.x);

    // plain-loop re-evaluation on materialized weights
    const std::int64_t nb = data.x.extent(1);
    auto we = materialize(model.embed.matrix);
    auto apply_mat = [&](const DenseTensor &w, const DenseTensor &in) {
        DenseTensor out({w.extent(0), in.extent(1)});
        for (std::int64_t j = 0; j < in.extent(1); ++j) {
            for (std::int64_t i = 0; i < w.extent(0); ++i) {
                double acc = 0.0;
                for (std::int64_t k = 0; k < w.extent(1); ++k) {
                    acc += w.at2(i, k) * in.at2(k, j);
                }
                out.at2(i, j) = acc;
            }
        }
        return out;
    };
    DenseTensor h = apply_mat(we, data.x);
    for (const auto &blk : model.blocks) {
        auto w1 = materialize(blk.w1.matrix);
        auto w2 = materialize(blk.w2.matrix);
        DenseTensor u({h.extent(0), nb});
        for (std::int64_t s = 0; s < nb; ++s) {
            double mu = 0.0, var = 0.0;
            for (std::int64_t i = 0; i < h.extent(0); ++i) {
                mu += h.at2(i, s);
            }
            mu /= static_cast<double>(h.extent(0));
            for (std::int64_t i = 0; i < h.extent(0); ++i) {
                var += (h.at2(i, s) - mu) * (h.at2(i, s) - mu);
            }
            var /= static_cast<double>(h.extent(0));
            for (std::int64_t i = 0; i < h.extent(0); ++i) {
                const double xh = (h.at2(i, s) - mu) / std::sqrt(var + 1e-5);
                u.at2(i, s) = blk.ln.gamma[i] * xh + blk.ln.beta[i];
            }
        }
        DenseTensor p = apply_mat(w1, u);
        for (std::int64_t i = 0; i < p.size(); ++i) {
            const double x = p[i];
            p[i] = 0.5 * x *
                   (1.0 + std::tanh(std::sqrt(2.0 / M_PI) *
                                    (x + 0.044715 * x * x * x)));
        }
        DenseTensor o = apply_mat(w2, p);
        for (std::int64_t i = 0; i < h.size(); ++i) {
            h[i] += o[i];
        }
    }
    auto expected = apply_mat(materialize(model.head.matrix), h);
    CHECK(max_abs_diff(logits, expected) <= 1e-12);
}

TEST_CASE("gradients pass central finite differences for every family") {
    finite_difference_check(Family::Dense, false);
    finite_difference_check(Family::LowRank, false);
    finite_difference_check(Family::Convolution, false);
    finite_difference_check(Family::Kronecker, false);
    finite_difference_check(Family::Monarch, false);
    finite_difference_check(Family::TensorTrain, false);
    finite_difference_check(Family::BlockTensorTrain, false);
}

TEST_CASE("gradients pass finite differences through weight normalization") {
    finite_difference_check(Family::BlockTensorTrain, true);
    finite_difference_check(Family::Dense, true);
}

TEST_CASE("gradients pass finite differences for three-core chains") {
    for (Family f : {Family::TensorTrain, Family::BlockTensorTrain}) {
        TrainConfig cfg = tiny_config(f, 8, 2);
        cfg.structure = StructureOptions{3, 2, 2, 3};
        finite_difference_check_cfg(cfg, false);
    }
}

TEST_CASE("cosine decay changes the trajectory but stays deterministic") {
    TrainConfig cfg = tiny_config(Family::Monarch, 16, 2);
    cfg.steps = 30;
    cfg.cosine_decay = true;
    auto with1 = run_training(cfg);
    auto with2 = run_training(cfg);
    cfg.cosine_decay = false;
    auto without = run_training(cfg);
    REQUIRE(with1.records.size() == without.records.size());
    CHECK(with1.final_loss == with2.final_loss);
    bool differs = false;
    for (std::size_t i = 0; i < with1.records.size(); ++i) {
        differs = differs || with1.records[i].loss != without.records[i].loss;
    }
    CHECK(differs);
}

TEST_CASE("weight_normalize closed forms") {
    auto m = gaussian({8, 8}, 0.0, 1.0, 77);
    m = scale(m, 2.0 / rms(m)); // rms exactly ~2
    auto out = weight_normalize(m, WeightNormState{3.0, 1.0});
    CHECK(rms(out) == doctest::Approx(3.0).epsilon(1e-12));

    auto small = scale(m, 0.25); // rms 0.5 <= sigma
    auto kept = weight_normalize(small, WeightNormState{1.0, 1.0});
    CHECK(max_abs_diff(kept, small) == 0.0);

    CHECK_THROWS_AS(weight_normalize(m, WeightNormState{1.0, 0.0}),
                    DomainError);
    CHECK_THROWS_AS(weight_normalize(m, WeightNormState{1.0, -2.0}),
                    DomainError);
}

TEST_CASE("weight norm identity rms(out) = |gamma| min(rms, sigma)") {
    Rng rng(88);
    for (int trial = 0; trial < 20; ++trial) {
        auto m = gaussian({6, 7}, 0.0, 0.5 + 0.2 * trial, 600 + trial);
        const double gamma = rng.normal(0.0, 2.0);
        const double sigma = 0.2 + rng.uniform01();
        auto out = weight_normalize(m, WeightNormState{gamma, sigma});
        CHECK(rms(out) ==
              doctest::Approx(std::abs(gamma) * std::min(rms(m), sigma))
                  .epsilon(1e-12));
    }
}

TEST_CASE("clamped weight norm absorbs upward rescaling of the core") {
    auto m = gaussian({5, 5}, 0.0, 1.0, 91);
    WeightNormState st{1.7, 0.5 * rms(m)}; // clamp active
    auto base = weight_normalize(m, st);
    for (double c : {2.0, 4.0}) {
        auto scaled = weight_normalize(scale(m, c), st);
        CHECK(max_abs_diff(scaled, base) == 0.0); // power-of-two scaling
    }
    auto scaled = weight_normalize(scale(m, 1.7), st);
    CHECK(max_abs_diff(scaled, base) <= 1e-14 * max_abs(base));
}

TEST_CASE("gamma gradient reduces to a plain multiplier when unclamped") {
    TrainConfig cfg = tiny_config(Family::Dense, 8, 0);
    cfg.input_dim = 8;
    cfg.zero_init_head = false;
    ResidualMLP model = build_model(cfg);
    randomize_model(model, 1312, false);
    auto cores = core_tensors(model.embed.matrix);
    model.embed.wn = {WeightNormState{1.0, 10.0 * rms(*cores[0])}};

    Dataset data =
        gaussian_mixture(cfg.input_dim, cfg.num_classes, 8, 2.0, 1212);
    ModelGrads grads;
    forward_backward(model, data.x, data.labels, grads);

    const double h = 1e-6;
    model.embed.wn[0].gamma = 1.0 + h;
    const double up = loss_of(model, data.x, data.labels);
    model.embed.wn[0].gamma = 1.0 - h;
    const double dn = loss_of(model, data.x, data.labels);
    model.embed.wn[0].gamma = 1.0;
    const double fd = (up - dn) / (2.0 * h);
    CHECK(grads.embed.gammas[0] == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("zero input batch produces zero w1 gradients") {
    TrainConfig cfg = tiny_config(Family::Kronecker, 16, 2);
    ResidualMLP model = build_model(cfg);
    DenseTensor x({cfg.input_dim, 4});
    std::vector<int> labels = {0, 1, 2, 3};
    ModelGrads grads;
    forward_backward(model, x, labels, grads);
    for (const auto &bg : grads.blocks) {
        for (const auto &g : bg.w1.cores) {
            CHECK(max_abs(g) == 0.0);
        }
    }
    for (const auto &g : grads.embed.cores) {
        CHECK(max_abs(g) == 0.0);
    }
}

TEST_CASE("adam first-step identity and exact lr linearity") {
    DenseTensor p1({1}, {0.0});
    DenseTensor g({1}, {1.0});
    DenseTensor m, v;
    adam_update_tensor(p1, g, m, v, 1e-2, 1);
    CHECK(p1[0] == doctest::Approx(-1e-2).epsilon(1e-7));

    // a component with 4x the learning rate moves exactly 4x as far
    auto grad = gaussian({3, 3}, 0.0, 1.0, 313);
    DenseTensor a({3, 3}), b({3, 3});
    DenseTensor ma, va, mb, vb;
    adam_update_tensor(a, grad, ma, va, 1e-3, 1);
    adam_update_tensor(b, grad, mb, vb, 4e-3, 1);
    for (std::int64_t i = 0; i < a.size(); ++i) {
        CHECK(b[i] == 4.0 * a[i]);
    }
}

TEST_CASE("training runs are deterministic given the seed") {
    TrainConfig cfg = tiny_config(Family::BlockTensorTrain, 16, 2);
    cfg.steps = 100;
    ResidualMLP m1, m2;
    auto r1 = run_training(cfg, &m1);
    auto r2 = run_training(cfg, &m2);
    REQUIRE(r1.records.size() == r2.records.size());
    for (std::size_t i = 0; i < r1.records.size(); ++i) {
        CHECK(r1.records[i].loss == r2.records[i].loss);
        CHECK(r1.records[i].delta_h_rms == r2.records[i].delta_h_rms);
        CHECK(r1.records[i].activation_rms == r2.records[i].activation_rms);
    }
    auto c1 = core_tensors(m1.blocks[0].w1.matrix);
    auto c2 = core_tensors(m2.blocks[0].w1.matrix);
    for (std::size_t i = 0; i < c1.size(); ++i) {
        CHECK(max_abs_diff(*c1[i], *c2[i]) == 0.0);
    }
}

TEST_CASE("a full-rank btt layer with frozen transfer core trains "
          "identically to its dense control") {
    // The second core starts as a delta tensor mapping W's columns onto the
    // first core's entries; with its learning rate pinned to zero the
    // parameterization stays a bijection and plain GD agrees step for step.
    TrainConfig base = tiny_config(Family::Dense, 16, 0);
    base.input_dim = 16;
    base.optimizer = Optimizer::Sgd;
    base.zero_init_head = true;
    base.dataset_size = 32;
    base.batch = 32; // full batch

    TrainConfig bttc = base;
    bttc.family = Family::BlockTensorTrain;
    bttc.structure = StructureOptions{2, 4, 4, 5};

    ResidualMLP dense = build_model(base);
    ResidualMLP btt = build_model(bttc);

    const DenseTensor w0 = dense.embed.matrix.as<DenseMatrix>().w;
    auto &bt = btt.embed.matrix.as<BlockTensorTrainMatrix>();
    REQUIRE(bt.ranks[1] == 4);
    // core1[i2][(i1)][(j1, a)] = w0[(i1, i2), (j1, a)]
    for (std::int64_t i2 = 0; i2 < 4; ++i2) {
        for (std::int64_t i1 = 0; i1 < 4; ++i1) {
            for (std::int64_t j1 = 0; j1 < 4; ++j1) {
                for (std::int64_t a = 0; a < 4; ++a) {
                    bt.cores[0][(i2 * 4 + i1) * 16 + (j1 * 4 + a)] =
                        w0.at2(i1 * 4 + i2, j1 * 4 + a);
                }
            }
        }
    }
    // core2[j1][(a, i2)][(j2)] = delta(a, j2)
    for (std::int64_t j1 = 0; j1 < 4; ++j1) {
        for (std::int64_t a = 0; a < 4; ++a) {
            for (std::int64_t i2 = 0; i2 < 4; ++i2) {
                for (std::int64_t j2 = 0; j2 < 4; ++j2) {
                    bt.cores[1][(j1 * 16 + (a * 4 + i2)) * 4 + j2] =
                        a == j2 ? 1.0 : 0.0;
                }
            }
        }
    }
    CHECK(max_abs_diff(materialize(btt.embed.matrix), w0) == 0.0);

    // match the dense update: core1 trains at the dense lr, core2 frozen
    btt.embed.lrs[1] = dense.embed.lrs[0];
    btt.embed.lrs[0] = 0.0;

    Dataset data =
        gaussian_mixture(16, base.num_classes, base.dataset_size, 3.0, 515);
    for (int step = 1; step <= 5; ++step) {
        ModelGrads gd, gb;
        const double ld = forward_backward(dense, data.x, data.labels, gd);
        const double lb = forward_backward(btt, data.x, data.labels, gb);
        CHECK(std::abs(ld - lb) <= 1e-8);
        sgd_step(dense, gd);
        sgd_step(btt, gb);
    }
    CHECK(max_abs_diff(materialize(btt.embed.matrix),
                       dense.embed.matrix.as<DenseMatrix>().w) <= 1e-10);
}

TEST_CASE("loss decreases on separable data for every family") {
    const Family fams[] = {Family::Dense,       Family::LowRank,
                           Family::Convolution, Family::Kronecker,
                           Family::Monarch,     Family::TensorTrain,
                           Family::BlockTensorTrain};
    for (Family f : fams) {
        for (std::int64_t width : {16, 64}) {
            TrainConfig cfg = tiny_config(f, width, 2);
            cfg.steps = 200;
            cfg.batch = 64;
            cfg.dataset_size = 512;
            cfg.class_separation = 6.0;
            cfg.seed = 1000 + static_cast<std::uint64_t>(width);
            auto res = run_training(cfg);
            REQUIRE_FALSE(res.diverged);
            const double first = res.records.front().loss;
            const double last = res.records.back().loss;
            CAPTURE(family_name(f));
            CAPTURE(width);
            CHECK(last < 0.8 * first);
        }
    }
}

TEST_CASE("coordinate check: dense is mode-independent") {
    TrainConfig base = tiny_config(Family::Dense, 16, 2);
    base.steps = 20;
    const std::int64_t widths[2] = {16, 32};
    auto aware = coordinate_check(Family::Dense, widths, 20, true, base);
    auto naive = coordinate_check(Family::Dense, widths, 20, false, base);
    REQUIRE(aware.size() == naive.size());
    for (std::size_t i = 0; i < aware.size(); ++i) {
        CHECK(aware[i].mean_delta_h_rms == naive[i].mean_delta_h_rms);
    }
    std::int64_t one[1] = {16};
    CHECK_THROWS_AS(coordinate_check(Family::Dense, one, 5, true, base),
                    DomainError);
}

TEST_CASE("train records serialize to csv") {
    std::vector<TrainRecord> recs = {{1, 0.5, 0.25, 1.0},
                                     {2, 0.25, 0.125, 1.5}};
    const std::string csv = train_records_csv(recs);
    CHECK(csv.substr(0, 38) == "step,loss,delta_h_rms,activation_rms\n1");
    CHECK(csv.find("2,0.25,0.125,1.5\n") != std::string::npos);
}
