#include "smx/mup.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace smx {

double dense_mup_init_std(std::int64_t d_in, std::int64_t d_out) {
    if (d_in < 1 || d_out < 1) {
        throw DomainError("dense_mup_init_std: dimensions must be positive");
    }
    return std::sqrt(static_cast<double>(std::min(d_in, d_out))) /
           static_cast<double>(d_in);
}

double transfer_lr(double eta_star, std::int64_t d_in_from,
                   std::int64_t d_in_to) {
    if (d_in_from < 1 || d_in_to < 1) {
        throw DomainError("transfer_lr: widths must be positive");
    }
    return eta_star * static_cast<double>(d_in_from) /
           static_cast<double>(d_in_to);
}

namespace {

Rational kappa_for(Optimizer opt, std::int64_t layer_d_in,
                   std::int64_t layer_d_out, std::int64_t comp_d_in,
                   std::int64_t comp_d_out, int k) {
    if (opt == Optimizer::Adam) {
        return Rational(layer_d_in, comp_d_in * k);
    }
    // SGD: (d_out_i / d_in_i) / (d_out / d_in), shared delta = 1/k
    return Rational(comp_d_out * layer_d_in,
                    comp_d_in * layer_d_out * static_cast<std::int64_t>(k));
}

} // namespace

MuPPlan plan(const StructuredMatrix &m, std::int64_t d_in, std::int64_t d_out,
             Optimizer opt, double base_lr, std::int64_t base_width,
             bool last_in_residual) {
    if (m.cols() != d_in || m.rows() != d_out) {
        throw DimensionError("plan: declared layer shape " +
                             std::to_string(d_out) + " x " +
                             std::to_string(d_in) +
                             " does not match the matrix (" +
                             std::to_string(m.rows()) + " x " +
                             std::to_string(m.cols()) + ")");
    }
    const auto comps = components(m);
    MuPPlan p;
    p.optimizer = opt;
    p.base_lr = base_lr;
    p.base_width = base_width;
    p.d_in = d_in;
    p.d_out = d_out;
    p.k = static_cast<int>(comps.size());

    const double width_scale =
        static_cast<double>(base_width) / static_cast<double>(d_in);
    for (const auto &c : comps) {
        ComponentPlan cp;
        cp.name = c.name;
        cp.position = c.position;
        cp.batch = c.batch;
        cp.d_out = c.d_out;
        cp.d_in = c.d_in;
        cp.reference_std = dense_mup_init_std(c.d_in, c.d_out);
        cp.zero_init = last_in_residual && c.position == p.k;
        cp.init_std = cp.zero_init ? 0.0 : cp.reference_std;
        cp.delta = 1.0 / static_cast<double>(p.k);
        cp.kappa = kappa_for(opt, d_in, d_out, c.d_in, c.d_out, p.k);
        cp.effective_lr = base_lr * width_scale * cp.kappa.to_double();
        p.components.push_back(std::move(cp));
    }

    // Zero-initializing the last factor of a low-rank layer would starve the
    // first update if v kept its sqrt(r)/d_in scale; keep v at 1/sqrt(d_in).
    if (m.family() == Family::LowRank && last_in_residual) {
        ComponentPlan &v = p.components.front();
        v.init_std = 1.0 / std::sqrt(static_cast<double>(v.d_in));
        v.reference_std = v.init_std;
    }
    return p;
}

void MuPPlan::set_delta(int position, double new_delta) {
    for (auto &c : components) {
        if (c.position != position) {
            continue;
        }
        // kappa = (structure factor) * delta; rescale the float path while
        // keeping the exact rational tied to the default 1/k share.
        const double structure_factor =
            c.kappa.to_double() / c.delta * new_delta;
        c.delta = new_delta;
        c.effective_lr = base_lr *
                         (static_cast<double>(base_width) /
                          static_cast<double>(d_in)) *
                         structure_factor;
        return;
    }
    throw DomainError("set_delta: no component at position " +
                      std::to_string(position));
}

std::string MuPPlan::to_json_string(int indent) const {
    nlohmann::json j;
    j["optimizer"] = optimizer == Optimizer::Adam ? "adam" : "sgd";
    j["base_lr"] = base_lr;
    j["base_width"] = base_width;
    j["d_in"] = d_in;
    j["d_out"] = d_out;
    j["k"] = k;
    nlohmann::json comps = nlohmann::json::array();
    for (const auto &c : components) {
        nlohmann::json cj;
        cj["name"] = c.name;
        cj["position"] = c.position;
        cj["shape"] = {c.batch, c.d_out, c.d_in};
        cj["init_std"] = c.init_std;
        cj["lr_multiplier"] = c.kappa.to_double();
        cj["lr_multiplier_exact"] = c.kappa.to_string();
        cj["delta"] = c.delta;
        cj["effective_lr"] = c.effective_lr;
        cj["zero_init"] = c.zero_init;
        comps.push_back(std::move(cj));
    }
    j["components"] = std::move(comps);
    return j.dump(indent);
}

} // namespace smx
