#include "flowmap/dse.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace flowmap {

DesignPoint allocate_dsp(const NetworkGraph& g, const PlatformSpec& ps, const DseConfig& cfg,
                         const DepthOverride* depth_override) {
    ps.check();
    DesignPoint dp;
    for (const auto& n : g.nodes) dp.p[n.id] = 1;

    std::int64_t used = dsp_usage(g, dp);
    if (used > ps.dsp_total)
        throw InfeasibleError("all-ones design needs " + std::to_string(used) +
                              " DSPs, budget is " + std::to_string(ps.dsp_total) +
                              " (deficit " + std::to_string(used - ps.dsp_total) + ")");

    for (std::int64_t iter = 0; iter < cfg.max_iterations && used < ps.dsp_total; ++iter) {
        double l_base = total_latency(g, dp, ps, depth_override);
        double best_delta = -1.0;
        const NodeSpec* best_node = nullptr;
        std::int64_t best_p = 0, best_cost = 0;

        for (const auto& n : g.nodes) {
            std::int64_t cur = dp.p.at(n.id);
            std::int64_t cand = next_parallelism(g, n, cur);
            if (cand == 0) continue;
            std::int64_t cost = dsp_usage(n, cand) - dsp_usage(n, cur);
            if (cost < 1) continue;  // only DSP-consuming increments
            if (used + cost > ps.dsp_total) continue;
            DesignPoint trial = dp;
            trial.p[n.id] = cand;
            double delta = l_base - total_latency(g, trial, ps, depth_override);
            if (delta > best_delta) {  // ties keep the earliest node
                best_delta = delta;
                best_node = &n;
                best_p = cand;
                best_cost = cost;
            }
        }
        if (!best_node) break;
        dp.p[best_node->id] = best_p;
        used += best_cost;
    }
    return dp;
}

DesignPoint exhaustive_dsp_search(const NetworkGraph& g, const PlatformSpec& ps,
                                  const DseConfig& cfg, const DepthOverride* depth_override) {
    ps.check();
    DesignPoint dp;
    for (const auto& n : g.nodes) dp.p[n.id] = 1;
    if (dsp_usage(g, dp) > ps.dsp_total)
        throw InfeasibleError("all-ones design exceeds the DSP budget");

    // Only DSP-consuming nodes enter the search space.
    std::vector<const NodeSpec*> vary;
    std::vector<std::vector<std::int64_t>> choices;
    std::int64_t space = 1;
    for (const auto& n : g.nodes) {
        if (dsp_usage(n, 1) == 0) continue;
        std::vector<std::int64_t> divs;
        std::int64_t dim = max_parallelism(g, n);
        for (std::int64_t p = 1; p <= dim; ++p)
            if (dim % p == 0) divs.push_back(p);
        vary.push_back(&n);
        space *= std::int64_t(divs.size());
        if (space > cfg.search_bound)
            throw DseError("exhaustive search space exceeds bound of " +
                           std::to_string(cfg.search_bound));
        choices.push_back(std::move(divs));
    }

    DesignPoint best = dp;
    double best_l = total_latency(g, dp, ps, depth_override);

    std::function<void(size_t)> recurse = [&](size_t i) {
        if (i == vary.size()) {
            if (dsp_usage(g, dp) > ps.dsp_total) return;
            double l = total_latency(g, dp, ps, depth_override);
            if (l < best_l) {
                best_l = l;
                best = dp;
            }
            return;
        }
        for (auto p : choices[i]) {
            dp.p[vary[i]->id] = p;
            recurse(i + 1);
        }
        dp.p[vary[i]->id] = 1;
    };
    recurse(0);
    return best;
}

std::int64_t skip_budget_bits(const NetworkGraph& g, const PlatformSpec& ps,
                              const QuantConfig& qc) {
    MemoryBreakdown mb;
    for (const auto& n : g.nodes) {
        if (n.kind == NodeKind::Convolution) {
            auto in = g.in_shape(n);
            mb.weights_bits +=
                std::int64_t(n.filters) * in.c * n.kernel_size * n.kernel_size * qc.w_w;
        }
        if (n.kind == NodeKind::Convolution || n.kind == NodeKind::MaxPool) {
            auto in = g.in_shape(n);
            mb.window_bits += std::int64_t(n.kernel_size - 1) * in.w * in.c * qc.w_a;
        }
        if (n.kind == NodeKind::Concat)
            for (const auto& e : g.input_edges(n.id))
                mb.concat_bits += std::int64_t(g.edge_shape(e).c) * qc.w_a;
    }
    return ps.onchip_bits - (mb.weights_bits + mb.window_bits + mb.concat_bits);
}

void allocate_buffers(const NetworkGraph& g, const DepthReport& depths,
                      const PlatformSpec& ps, const QuantConfig& qc, DesignPoint& dp) {
    std::int64_t avail = skip_budget_bits(g, ps, qc);
    if (avail < 0)
        throw InfeasibleError("weights and window storage alone exceed on-chip memory by " +
                              std::to_string(-avail) + " bits");

    struct Entry {
        std::string key;
        std::int64_t bits;
    };
    std::vector<Entry> entries;
    std::int64_t on_total = 0;
    for (const auto& e : g.skip_edges()) {
        std::int64_t bits = depths.at(e.key()) * qc.w_a;
        entries.push_back({e.key(), bits});
        on_total += bits;
        dp.buffer_on[e.key()] = true;
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.bits > b.bits; });

    for (const auto& ent : entries) {
        if (on_total <= avail) break;
        dp.buffer_on[ent.key] = false;
        on_total -= ent.bits;
    }
    if (on_total > avail)
        throw InfeasibleError("skip buffers do not fit on-chip even when all are off-chip");
}

void exhaustive_buffer_search(const NetworkGraph& g, const DepthReport& depths,
                              const PlatformSpec& ps, const QuantConfig& qc,
                              double total_latency_s, double lambda, DesignPoint& dp) {
    auto edges = g.skip_edges();
    if (edges.size() > 20)
        throw DseError("exhaustive placement search limited to 20 skip edges");
    std::int64_t avail = skip_budget_bits(g, ps, qc);
    if (avail < 0) throw InfeasibleError("no on-chip memory left for skip buffers");

    const size_t n = edges.size();
    double best_obj = std::numeric_limits<double>::infinity();
    int best_count = std::numeric_limits<int>::max();
    std::uint32_t best_mask = 0;
    bool found = false;

    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        // bit set => buffer off-chip
        std::int64_t on_bits = 0;
        double bw = 0.0;
        int off_count = 0;
        for (size_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                ++off_count;
                bw += buffer_bandwidth(g.edge_shape(edges[i]).words(), false,
                                       total_latency_s, qc.w_a);
            } else {
                on_bits += depths.at(edges[i].key()) * qc.w_a;
            }
        }
        if (on_bits > avail) continue;
        double obj = bw + lambda * off_count;
        if (!found || obj < best_obj ||
            (obj == best_obj && off_count < best_count)) {
            found = true;
            best_obj = obj;
            best_count = off_count;
            best_mask = mask;
        }
    }
    if (!found)
        throw InfeasibleError("skip buffers do not fit on-chip even when all are off-chip");
    for (size_t i = 0; i < n; ++i)
        dp.buffer_on[edges[i].key()] = !(best_mask & (1u << i));
}

DepthReport analytic_depths(const NetworkGraph& g, const DesignPoint& dp) {
    // Cycles until the first word appears on each node's output.
    std::map<std::string, double> fill;
    for (const auto& id : g.topo_order()) {
        const auto& n = g.node(id);
        double in_fill = 0.0;
        for (const auto& e : g.input_edges(id))
            in_fill = std::max(in_fill, fill.at(e.from));
        fill[id] = in_fill + pipeline_depth(g, n, dp.par(id));
    }

    DepthReport out;
    for (const auto& n : g.nodes) {
        if (n.kind != NodeKind::Concat && n.kind != NodeKind::Add) continue;
        auto ins = g.input_edges(n.id);
        double latest = 0.0;
        for (const auto& e : ins) latest = std::max(latest, fill.at(e.from));
        for (const auto& e : ins) {
            // Words queued while the slower branch fills, capped by the
            // feature map itself, plus the channel-run buffering a Concat
            // needs to avoid back-pressure.
            double imbalance = latest - fill.at(e.from);
            std::int64_t q = std::int64_t(std::ceil(imbalance));
            q = std::min(q, g.edge_shape(e).words());
            if (n.kind == NodeKind::Concat) q += g.edge_shape(e).c;
            out.q[e.key()] = std::max<std::int64_t>(q, 2);
        }
    }
    return out;
}

}  // namespace flowmap
