#include "smx/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace smx {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// tanh-form GELU, fixed so runs reproduce bit-for-bit across builds
constexpr double kGeluK = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

double gelu(double x) {
    const double t = std::tanh(kGeluK * (x + kGeluC * x * x * x));
    return 0.5 * x * (1.0 + t);
}

double gelu_grad(double x) {
    const double inner = kGeluK * (x + kGeluC * x * x * x);
    const double t = std::tanh(inner);
    const double dinner = kGeluK * (1.0 + 3.0 * kGeluC * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

} // namespace

DenseTensor weight_normalize(const DenseTensor &core,
                             const WeightNormState &state) {
    if (!(state.sigma > 0.0)) {
        throw DomainError("weight_normalize: sigma must be positive");
    }
    const double rho = rms(core);
    const double s = rho > state.sigma ? state.sigma / rho : 1.0;
    return scale(core, state.gamma * s);
}

// --------------------------------------------------------------------------
// Layer forward/backward
// --------------------------------------------------------------------------

namespace {

DenseTensor layer_apply(const StructuredLayer &layer, const DenseTensor &x,
                        LayerApply &la) {
    if (layer.wn.empty()) {
        return structured_apply(layer.matrix, x, nullptr, &la.cache);
    }
    StructuredMatrix eff = layer.matrix;
    auto cores = core_tensors(eff);
    la.wn_scale.resize(cores.size());
    la.wn_rms.resize(cores.size());
    for (std::size_t i = 0; i < cores.size(); ++i) {
        const WeightNormState &st = layer.wn[i];
        const double rho = rms(*cores[i]);
        const double s = rho > st.sigma ? st.sigma / rho : 1.0;
        la.wn_scale[i] = s;
        la.wn_rms[i] = rho;
        *cores[i] = scale(*cores[i], st.gamma * s);
    }
    la.effective.emplace(std::move(eff));
    return structured_apply(*la.effective, x, nullptr, &la.cache);
}

DenseTensor layer_backward(const StructuredLayer &layer, const LayerApply &la,
                           const DenseTensor &dy, LayerGrads &lg) {
    const StructuredMatrix &used =
        la.effective ? *la.effective : layer.matrix;
    auto used_cores = core_tensors(used);
    std::vector<DenseTensor> eff_grads;
    eff_grads.reserve(used_cores.size());
    for (const DenseTensor *c : used_cores) {
        eff_grads.emplace_back(c->shape());
    }
    DenseTensor dx = structured_backward(used, la.cache, dy, eff_grads);

    if (layer.wn.empty()) {
        for (std::size_t i = 0; i < eff_grads.size(); ++i) {
            add_inplace(lg.cores[i], eff_grads[i]);
        }
        return dx;
    }
    const auto raw = core_tensors(layer.matrix);
    for (std::size_t i = 0; i < eff_grads.size(); ++i) {
        const WeightNormState &st = layer.wn[i];
        const DenseTensor &m = *raw[i];
        const DenseTensor &dmt = eff_grads[i];
        const double s = la.wn_scale[i];
        const double rho = la.wn_rms[i];
        const double ip = dot(dmt, m);
        lg.gammas[i] += s * ip;
        DenseTensor &acc = lg.cores[i];
        if (rho > st.sigma) {
            const double coef =
                ip / (static_cast<double>(m.size()) * rho * rho);
            for (std::int64_t j = 0; j < m.size(); ++j) {
                acc[j] += st.gamma * s * (dmt[j] - m[j] * coef);
            }
        } else {
            for (std::int64_t j = 0; j < m.size(); ++j) {
                acc[j] += st.gamma * dmt[j];
            }
        }
    }
    return dx;
}

// Per-sample feature normalization with learnable scale and shift.
DenseTensor layernorm_forward(const LayerNormParams &ln, const DenseTensor &h,
                              BlockCache *bc) {
    const std::int64_t d = h.extent(0), nb = h.extent(1);
    DenseTensor xhat({d, nb});
    DenseTensor u({d, nb});
    std::vector<double> inv(static_cast<std::size_t>(nb));
    for (std::int64_t s = 0; s < nb; ++s) {
        double mu = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
            mu += h.at2(i, s);
        }
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
            const double c = h.at2(i, s) - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + kLnEps);
        inv[static_cast<std::size_t>(s)] = is;
        for (std::int64_t i = 0; i < d; ++i) {
            const double xh = (h.at2(i, s) - mu) * is;
            xhat.at2(i, s) = xh;
            u.at2(i, s) = ln.gamma[i] * xh + ln.beta[i];
        }
    }
    if (bc) {
        bc->xhat = xhat;
        bc->inv_std = std::move(inv);
    }
    return u;
}

DenseTensor layernorm_backward(const LayerNormParams &ln,
                               const BlockCache &bc, const DenseTensor &du,
                               DenseTensor &dgamma, DenseTensor &dbeta) {
    const std::int64_t d = du.extent(0), nb = du.extent(1);
    DenseTensor dh({d, nb});
    for (std::int64_t s = 0; s < nb; ++s) {
        double mean_dx = 0.0, mean_dxx = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
            const double dxh = du.at2(i, s) * ln.gamma[i];
            mean_dx += dxh;
            mean_dxx += dxh * bc.xhat.at2(i, s);
        }
        mean_dx /= static_cast<double>(d);
        mean_dxx /= static_cast<double>(d);
        const double is = bc.inv_std[static_cast<std::size_t>(s)];
        for (std::int64_t i = 0; i < d; ++i) {
            const double dxh = du.at2(i, s) * ln.gamma[i];
            dh.at2(i, s) =
                is * (dxh - mean_dx - bc.xhat.at2(i, s) * mean_dxx);
            dgamma[i] += du.at2(i, s) * bc.xhat.at2(i, s);
            dbeta[i] += du.at2(i, s);
        }
    }
    return dh;
}

} // namespace

// --------------------------------------------------------------------------
// Model construction
// --------------------------------------------------------------------------

namespace {

StructuredLayer make_layer(Family fam, std::int64_t d_out, std::int64_t d_in,
                           const TrainConfig &cfg, bool zero_last,
                           bool weight_norm, double lr_mult,
                           std::uint64_t seed) {
    StructuredLayer layer;
    layer.matrix = make_structured(fam, d_out, d_in, cfg.structure);
    layer.plan = plan(layer.matrix, d_in, d_out, cfg.optimizer, cfg.base_lr,
                      cfg.base_width, zero_last);
    auto cores = core_tensors(layer.matrix);
    const double transferred =
        cfg.base_lr *
        (static_cast<double>(cfg.base_width) / static_cast<double>(d_in));
    for (std::size_t i = 0; i < cores.size(); ++i) {
        const ComponentPlan &cp = layer.plan.components[i];
        if (!cp.zero_init) {
            *cores[i] = gaussian(cores[i]->shape(), 0.0, cp.init_std,
                                 mix_seed(seed, i));
        }
        layer.lrs.push_back(lr_mult * (cfg.structure_aware
                                           ? cp.effective_lr
                                           : transferred));
    }
    if (weight_norm) {
        for (const ComponentPlan &cp : layer.plan.components) {
            layer.wn.push_back(WeightNormState{1.0, cp.reference_std});
        }
        layer.wn_gamma_lr = lr_mult * transferred;
    }
    return layer;
}

LayerNormParams make_layernorm(std::int64_t d, double lr) {
    LayerNormParams ln;
    ln.gamma = DenseTensor::full({d}, 1.0);
    ln.beta = DenseTensor({d});
    ln.lr = lr;
    return ln;
}

} // namespace

ResidualMLP build_model(const TrainConfig &cfg) {
    if (cfg.family == Family::Convolution) {
        if (cfg.input_dim != cfg.width || cfg.expansion != 1) {
            throw DimensionError(
                "convolution layers are square: set input_dim = width and "
                "expansion = 1 for conv runs");
        }
    }
    ResidualMLP model;
    model.width = cfg.width;
    model.input_dim = cfg.input_dim;
    model.num_classes = cfg.num_classes;
    model.expansion = cfg.expansion;

    Family embed_family = cfg.family;
    if (cfg.family == Family::LowRank && cfg.dense_input_for_lowrank) {
        embed_family = Family::Dense;
    }
    model.embed =
        make_layer(embed_family, cfg.width, cfg.input_dim, cfg, false,
                   cfg.weight_norm, cfg.input_lr_mult, mix_seed(cfg.seed, 1));

    const std::int64_t hidden = cfg.width * cfg.expansion;
    for (int b = 0; b < cfg.depth; ++b) {
        ResidualBlock blk{
            make_layernorm(cfg.width,
                           cfg.base_lr * (static_cast<double>(cfg.base_width) /
                                          static_cast<double>(cfg.width))),
            make_layer(cfg.family, hidden, cfg.width, cfg, false,
                       cfg.weight_norm, 1.0, mix_seed(cfg.seed, 100 + 2 * b)),
            make_layer(cfg.family, cfg.width, hidden, cfg,
                       cfg.zero_init_residual, cfg.weight_norm, 1.0,
                       mix_seed(cfg.seed, 101 + 2 * b))};
        model.blocks.push_back(std::move(blk));
    }
    model.head = make_layer(Family::Dense, cfg.num_classes, cfg.width, cfg,
                            cfg.zero_init_head, false, 1.0,
                            mix_seed(cfg.seed, 2));
    return model;
}

// --------------------------------------------------------------------------
// Forward / backward
// --------------------------------------------------------------------------

DenseTensor forward(const ResidualMLP &model, const DenseTensor &x,
                    ForwardCache *cache) {
    ForwardCache local;
    ForwardCache &fc = cache ? *cache : local;
    fc.blocks.clear();
    if (cache) {
        fc.input = x;
    }
    DenseTensor h = layer_apply(model.embed, x, fc.embed);
    for (const ResidualBlock &blk : model.blocks) {
        BlockCache bc;
        if (cache) {
            bc.h_in = h;
        }
        DenseTensor u = layernorm_forward(blk.ln, h, cache ? &bc : nullptr);
        DenseTensor p = layer_apply(blk.w1, u, bc.a1);
        DenseTensor g = p;
        for (std::int64_t i = 0; i < g.size(); ++i) {
            g[i] = gelu(p[i]);
        }
        DenseTensor o = layer_apply(blk.w2, g, bc.a2);
        add_inplace(h, o);
        if (cache) {
            bc.u = std::move(u);
            bc.p = std::move(p);
            bc.g = std::move(g);
            fc.blocks.push_back(std::move(bc));
        }
    }
    if (cache) {
        fc.prehead = h;
    }
    DenseTensor logits = layer_apply(model.head, h, fc.head);
    if (cache) {
        fc.logits = logits;
    }
    return logits;
}

DenseTensor prehead_activation(const ResidualMLP &model, const DenseTensor &x) {
    ForwardCache fc;
    DenseTensor h = layer_apply(model.embed, x, fc.embed);
    for (const ResidualBlock &blk : model.blocks) {
        BlockCache bc;
        DenseTensor u = layernorm_forward(blk.ln, h, nullptr);
        DenseTensor p = layer_apply(blk.w1, u, bc.a1);
        for (std::int64_t i = 0; i < p.size(); ++i) {
            p[i] = gelu(p[i]);
        }
        DenseTensor o = layer_apply(blk.w2, p, bc.a2);
        add_inplace(h, o);
    }
    return h;
}

double cross_entropy(const DenseTensor &logits, std::span<const int> labels) {
    const std::int64_t k = logits.extent(0), nb = logits.extent(1);
    if (static_cast<std::int64_t>(labels.size()) != nb) {
        throw DimensionError("cross_entropy: label count does not match the "
                             "batch");
    }
    double total = 0.0;
    for (std::int64_t s = 0; s < nb; ++s) {
        double zmax = logits.at2(0, s);
        for (std::int64_t i = 1; i < k; ++i) {
            zmax = std::max(zmax, logits.at2(i, s));
        }
        double sum = 0.0;
        for (std::int64_t i = 0; i < k; ++i) {
            sum += std::exp(logits.at2(i, s) - zmax);
        }
        const double lse = std::log(sum) + zmax;
        total += lse - logits.at2(labels[static_cast<std::size_t>(s)], s);
    }
    return total / static_cast<double>(nb);
}

ModelGrads make_grads(const ResidualMLP &model) {
    auto layer_grads = [](const StructuredLayer &layer) {
        LayerGrads lg;
        for (const DenseTensor *c : core_tensors(layer.matrix)) {
            lg.cores.emplace_back(c->shape());
        }
        lg.gammas.assign(layer.wn.size(), 0.0);
        return lg;
    };
    ModelGrads g;
    g.embed = layer_grads(model.embed);
    for (const ResidualBlock &blk : model.blocks) {
        BlockGrads bg;
        bg.w1 = layer_grads(blk.w1);
        bg.w2 = layer_grads(blk.w2);
        bg.ln_gamma = DenseTensor(blk.ln.gamma.shape());
        bg.ln_beta = DenseTensor(blk.ln.beta.shape());
        g.blocks.push_back(std::move(bg));
    }
    g.head = layer_grads(model.head);
    return g;
}

ModelGrads backward(const ResidualMLP &model, const ForwardCache &cache,
                    std::span<const int> labels) {
    ModelGrads grads = make_grads(model);
    const DenseTensor &logits = cache.logits;
    const std::int64_t k = logits.extent(0), nb = logits.extent(1);

    DenseTensor dlogits({k, nb});
    for (std::int64_t s = 0; s < nb; ++s) {
        double zmax = logits.at2(0, s);
        for (std::int64_t i = 1; i < k; ++i) {
            zmax = std::max(zmax, logits.at2(i, s));
        }
        double sum = 0.0;
        for (std::int64_t i = 0; i < k; ++i) {
            sum += std::exp(logits.at2(i, s) - zmax);
        }
        for (std::int64_t i = 0; i < k; ++i) {
            const double p = std::exp(logits.at2(i, s) - zmax) / sum;
            const double onehot =
                i == labels[static_cast<std::size_t>(s)] ? 1.0 : 0.0;
            dlogits.at2(i, s) = (p - onehot) / static_cast<double>(nb);
        }
    }

    DenseTensor dh = layer_backward(model.head, cache.head, dlogits, grads.head);
    for (int b = static_cast<int>(model.blocks.size()) - 1; b >= 0; --b) {
        const ResidualBlock &blk = model.blocks[static_cast<std::size_t>(b)];
        const BlockCache &bc = cache.blocks[static_cast<std::size_t>(b)];
        BlockGrads &bg = grads.blocks[static_cast<std::size_t>(b)];
        DenseTensor dg = layer_backward(blk.w2, bc.a2, dh, bg.w2);
        DenseTensor dp = dg;
        for (std::int64_t i = 0; i < dp.size(); ++i) {
            dp[i] = dg[i] * gelu_grad(bc.p[i]);
        }
        DenseTensor du = layer_backward(blk.w1, bc.a1, dp, bg.w1);
        DenseTensor dh_ln =
            layernorm_backward(blk.ln, bc, du, bg.ln_gamma, bg.ln_beta);
        add_inplace(dh, dh_ln);
    }
    layer_backward(model.embed, cache.embed, dh, grads.embed);
    return grads;
}

double forward_backward(const ResidualMLP &model, const DenseTensor &x,
                        std::span<const int> labels, ModelGrads &grads) {
    ForwardCache cache;
    forward(model, x, &cache);
    const double loss = cross_entropy(cache.logits, labels);
    grads = backward(model, cache, labels);
    return loss;
}

// --------------------------------------------------------------------------
// Optimizers
// --------------------------------------------------------------------------

void adam_update_tensor(DenseTensor &param, const DenseTensor &grad,
                        DenseTensor &m, DenseTensor &v, double lr, int step) {
    if (m.size() != param.size()) {
        m = DenseTensor(param.shape());
        v = DenseTensor(param.shape());
    }
    const double bc1 = 1.0 - std::pow(kAdamBeta1, step);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, step);
    for (std::int64_t i = 0; i < param.size(); ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * grad[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

namespace {

void adam_update(DenseTensor &param, const DenseTensor &grad, DenseTensor &m,
                 DenseTensor &v, double lr, int step) {
    adam_update_tensor(param, grad, m, v, lr, step);
}

void adam_update_scalar(double &param, double grad, double &m, double &v,
                        double lr, int step) {
    const double bc1 = 1.0 - std::pow(kAdamBeta1, step);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, step);
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad * grad;
    param -= lr * (m / bc1) / (std::sqrt(v / bc2) + kAdamEps);
}

void adam_layer(StructuredLayer &layer, const LayerGrads &lg, int step,
                double lr_scale) {
    auto cores = core_tensors(layer.matrix);
    if (layer.adam_m.size() != cores.size()) {
        layer.adam_m.assign(cores.size(), DenseTensor{});
        layer.adam_v.assign(cores.size(), DenseTensor{});
    }
    for (std::size_t i = 0; i < cores.size(); ++i) {
        adam_update(*cores[i], lg.cores[i], layer.adam_m[i], layer.adam_v[i],
                    lr_scale * layer.lrs[i], step);
    }
    if (!layer.wn.empty()) {
        if (layer.gamma_m.size() != layer.wn.size()) {
            layer.gamma_m.assign(layer.wn.size(), 0.0);
            layer.gamma_v.assign(layer.wn.size(), 0.0);
        }
        for (std::size_t i = 0; i < layer.wn.size(); ++i) {
            adam_update_scalar(layer.wn[i].gamma, lg.gammas[i],
                               layer.gamma_m[i], layer.gamma_v[i],
                               lr_scale * layer.wn_gamma_lr, step);
        }
    }
}

void sgd_layer(StructuredLayer &layer, const LayerGrads &lg, double lr_scale) {
    auto cores = core_tensors(layer.matrix);
    for (std::size_t i = 0; i < cores.size(); ++i) {
        DenseTensor &p = *cores[i];
        const double lr = lr_scale * layer.lrs[i];
        for (std::int64_t j = 0; j < p.size(); ++j) {
            p[j] -= lr * lg.cores[i][j];
        }
    }
    for (std::size_t i = 0; i < layer.wn.size(); ++i) {
        layer.wn[i].gamma -= lr_scale * layer.wn_gamma_lr * lg.gammas[i];
    }
}

} // namespace

void adam_step(ResidualMLP &model, const ModelGrads &grads, int step,
               double lr_scale) {
    adam_layer(model.embed, grads.embed, step, lr_scale);
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
        ResidualBlock &blk = model.blocks[b];
        const BlockGrads &bg = grads.blocks[b];
        adam_layer(blk.w1, bg.w1, step, lr_scale);
        adam_layer(blk.w2, bg.w2, step, lr_scale);
        adam_update(blk.ln.gamma, bg.ln_gamma, blk.ln.adam_m_g, blk.ln.adam_v_g,
                    lr_scale * blk.ln.lr, step);
        adam_update(blk.ln.beta, bg.ln_beta, blk.ln.adam_m_b, blk.ln.adam_v_b,
                    lr_scale * blk.ln.lr, step);
    }
    adam_layer(model.head, grads.head, step, lr_scale);
}

void sgd_step(ResidualMLP &model, const ModelGrads &grads, double lr_scale) {
    sgd_layer(model.embed, grads.embed, lr_scale);
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
        ResidualBlock &blk = model.blocks[b];
        const BlockGrads &bg = grads.blocks[b];
        sgd_layer(blk.w1, bg.w1, lr_scale);
        sgd_layer(blk.w2, bg.w2, lr_scale);
        for (std::int64_t i = 0; i < blk.ln.gamma.size(); ++i) {
            blk.ln.gamma[i] -= lr_scale * blk.ln.lr * bg.ln_gamma[i];
            blk.ln.beta[i] -= lr_scale * blk.ln.lr * bg.ln_beta[i];
        }
    }
    sgd_layer(model.head, grads.head, lr_scale);
}

// --------------------------------------------------------------------------
// Data and the training loop
// --------------------------------------------------------------------------

Dataset gaussian_mixture(std::int64_t input_dim, std::int64_t classes,
                         std::int64_t n, double separation,
                         std::uint64_t seed) {
    if (input_dim < 1 || classes < 1 || n < 1) {
        throw DomainError("gaussian_mixture: sizes must be positive");
    }
    Rng rng(seed);
    DenseTensor means({classes, input_dim});
    const double mean_scale =
        separation / std::sqrt(static_cast<double>(input_dim));
    for (std::int64_t i = 0; i < means.size(); ++i) {
        means[i] = mean_scale * rng.normal();
    }
    Dataset ds;
    ds.x = DenseTensor({input_dim, n});
    ds.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t s = 0; s < n; ++s) {
        const std::int64_t c = s % classes;
        ds.labels[static_cast<std::size_t>(s)] = static_cast<int>(c);
        for (std::int64_t i = 0; i < input_dim; ++i) {
            ds.x.at2(i, s) = means.at2(c, i) + rng.normal();
        }
    }
    return ds;
}

TrainResult run_training(const TrainConfig &cfg, ResidualMLP *model_out) {
    Dataset train = gaussian_mixture(cfg.input_dim, cfg.num_classes,
                                     cfg.dataset_size, cfg.class_separation,
                                     mix_seed(cfg.seed, 11));
    Dataset probe = gaussian_mixture(cfg.input_dim, cfg.num_classes,
                                     cfg.probe_size, cfg.class_separation,
                                     mix_seed(cfg.seed, 12));
    ResidualMLP model = build_model(cfg);

    std::vector<std::int64_t> order(static_cast<std::size_t>(cfg.dataset_size));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, 13));
    for (std::int64_t i = cfg.dataset_size - 1; i > 0; --i) {
        const std::int64_t j = shuffle_rng.below(i + 1);
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(j)]);
    }

    TrainResult result;
    DenseTensor h_prev = prehead_activation(model, probe.x);
    std::int64_t cursor = 0;
    DenseTensor bx({cfg.input_dim, cfg.batch});
    std::vector<int> by(static_cast<std::size_t>(cfg.batch));
    for (int step = 1; step <= cfg.steps; ++step) {
        for (std::int64_t s = 0; s < cfg.batch; ++s) {
            const std::int64_t idx =
                order[static_cast<std::size_t>((cursor + s) %
                                               cfg.dataset_size)];
            for (std::int64_t i = 0; i < cfg.input_dim; ++i) {
                bx.at2(i, s) = train.x.at2(i, idx);
            }
            by[static_cast<std::size_t>(s)] =
                train.labels[static_cast<std::size_t>(idx)];
        }
        cursor = (cursor + cfg.batch) % cfg.dataset_size;

        ModelGrads grads;
        const double loss = forward_backward(model, bx, by, grads);
        if (!std::isfinite(loss)) {
            result.diverged = true;
            result.records.push_back({step, loss, 0.0, 0.0});
            break;
        }
        const double lr_scale =
            cfg.cosine_decay
                ? 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step - 1) /
                                        static_cast<double>(cfg.steps)))
                : 1.0;
        if (cfg.optimizer == Optimizer::Adam) {
            adam_step(model, grads, step, lr_scale);
        } else {
            sgd_step(model, grads, lr_scale);
        }

        DenseTensor h_now = prehead_activation(model, probe.x);
        const double dhr = rms(subtract(h_now, h_prev));
        const double act = rms(h_now);
        h_prev = std::move(h_now);
        result.records.push_back({step, loss, dhr, act});
        if (!std::isfinite(dhr) || !std::isfinite(act)) {
            result.diverged = true;
            break;
        }
    }
    if (!result.records.empty()) {
        result.final_loss = result.records.back().loss;
    }
    if (model_out) {
        *model_out = std::move(model);
    }
    return result;
}

std::string train_records_csv(const std::vector<TrainRecord> &records) {
    std::string out = "step,loss,delta_h_rms,activation_rms\n";
    char buf[160];
    for (const TrainRecord &r : records) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", r.step,
                      r.loss, r.delta_h_rms, r.activation_rms);
        out += buf;
    }
    return out;
}

std::vector<CoordinateCheckRow>
coordinate_check(Family family, std::span<const std::int64_t> widths,
                 int steps, bool structure_aware, const TrainConfig &base) {
    if (widths.size() < 2) {
        throw DomainError("coordinate_check: need at least two widths");
    }
    std::vector<CoordinateCheckRow> rows;
    for (std::int64_t w : widths) {
        TrainConfig cfg = base;
        cfg.family = family;
        cfg.width = w;
        cfg.steps = steps;
        cfg.structure_aware = structure_aware;
        if (family == Family::Convolution) {
            cfg.input_dim = w;
            cfg.expansion = 1;
        }
        TrainResult res = run_training(cfg);
        CoordinateCheckRow row;
        row.width = w;
        row.diverged = res.diverged;
        double acc = 0.0;
        std::int64_t count = 0;
        for (const TrainRecord &r : res.records) {
            if (std::isfinite(r.delta_h_rms)) {
                acc += r.delta_h_rms;
                count += 1;
            }
        }
        row.mean_delta_h_rms = count ? acc / static_cast<double>(count) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

} // namespace smx
