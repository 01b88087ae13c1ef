#include "smx/costs.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>

namespace smx {

namespace {

long long chain_flops(std::span<const std::int64_t> m,
                      std::span<const std::int64_t> n,
                      std::span<const std::int64_t> r) {
    // Step t contracts a (r_{t-1} m_t) x (n_t r_t) matrix against each of
    // prod(n_s, s<t) * prod(m_s, s>t) state columns.
    const int c = static_cast<int>(m.size());
    long long total = 0;
    for (int t = 1; t <= c; ++t) {
        long long state = 1;
        for (int s = 1; s < t; ++s) {
            state *= n[static_cast<std::size_t>(s - 1)];
        }
        for (int s = t + 1; s <= c; ++s) {
            state *= m[static_cast<std::size_t>(s - 1)];
        }
        total += state * r[static_cast<std::size_t>(t - 1)] *
                 m[static_cast<std::size_t>(t - 1)] *
                 n[static_cast<std::size_t>(t - 1)] *
                 r[static_cast<std::size_t>(t)];
    }
    return total;
}

} // namespace

CostReport cost(const StructuredMatrix &m) {
    CostReport rep;
    rep.family = m.family();
    rep.width_out = m.rows();
    rep.width_in = m.cols();
    switch (m.family()) {
    case Family::Dense: {
        rep.flops = m.rows() * m.cols();
        rep.params = rep.flops;
        break;
    }
    case Family::LowRank: {
        const auto &lr = m.as<LowRankMatrix>();
        const std::int64_t r = lr.u.extent(1);
        rep.rank = r;
        rep.flops = r * m.cols() + m.rows() * r;
        rep.params = rep.flops;
        break;
    }
    case Family::Convolution: {
        const auto &cv = m.as<ConvolutionMatrix>();
        rep.flops = cv.kernel.extent(0) * cv.dim;
        rep.params = cv.kernel.extent(0);
        break;
    }
    case Family::Kronecker: {
        const auto &k = m.as<KroneckerMatrix>();
        rep.cores = 2;
        const std::int64_t mf[2] = {k.l.extent(0), k.r.extent(0)};
        const std::int64_t nf[2] = {k.l.extent(1), k.r.extent(1)};
        const std::int64_t rk[3] = {1, 1, 1};
        rep.flops = chain_flops(mf, nf, rk);
        rep.params = k.l.size() + k.r.size();
        break;
    }
    case Family::Monarch: {
        const auto &mo = m.as<MonarchMatrix>();
        rep.cores = 2;
        rep.blocks = mo.l.extent(0);
        rep.flops = mo.r.size() + mo.l.size(); // one MAC per block entry
        rep.params = rep.flops;
        break;
    }
    case Family::TensorTrain: {
        const auto &tt = m.as<TensorTrainMatrix>();
        rep.cores = static_cast<int>(tt.cores.size());
        rep.rank = *std::max_element(tt.ranks.begin(), tt.ranks.end());
        rep.flops = chain_flops(tt.out_factors, tt.in_factors, tt.ranks);
        rep.params = 0;
        for (const auto &g : tt.cores) {
            rep.params += g.size();
        }
        break;
    }
    case Family::BlockTensorTrain: {
        const auto &bt = m.as<BlockTensorTrainMatrix>();
        rep.cores = static_cast<int>(bt.cores.size());
        rep.rank = *std::max_element(bt.ranks.begin(), bt.ranks.end());
        rep.flops = chain_flops(bt.out_factors, bt.in_factors, bt.ranks);
        rep.params = 0;
        for (const auto &g : bt.cores) {
            rep.params += g.size();
        }
        break;
    }
    }
    rep.xi = Rational(rep.flops, std::max(rep.width_in, rep.width_out));
    return rep;
}

long long measured_flops(const StructuredMatrix &m,
                         std::span<const double> x) {
    MacCounter mac;
    mvm(m, x, &mac);
    return mac.macs;
}

std::string CostReport::csv_header() {
    return "family,d_out,d_in,c,rank,blocks,flops,params,xi";
}

std::string CostReport::csv_row(bool double_flops) const {
    const long long mult = double_flops ? 2 : 1;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%s,%" PRId64 ",%" PRId64 ",%d,%" PRId64 ",%" PRId64
                  ",%lld,%lld,%.17g",
                  family_name(family), width_out, width_in, cores, rank,
                  blocks, flops * mult, params,
                  xi.to_double() * static_cast<double>(mult));
    return buf;
}

} // namespace smx
