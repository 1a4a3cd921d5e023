#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "flowmap/golden.hpp"
#include "flowmap/graph.hpp"
#include "flowmap/perf.hpp"

namespace testutil {

// Deterministic RNG independent of the standard library's distributions.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        state += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // uniform in [0, n)
    std::int64_t below(std::int64_t n) { return std::int64_t(next() % std::uint64_t(n)); }
    // uniform double in [lo, hi)
    double real(double lo, double hi) {
        return lo + (hi - lo) * double(next() >> 11) / double(1ULL << 53);
    }
    template <typename T>
    T pick(const std::vector<T>& v) {
        return v[size_t(below(std::int64_t(v.size())))];
    }
};

inline std::string fixture(const std::string& name) {
    const char* dir = std::getenv("FLOWMAP_FIXTURES");
    return std::string(dir ? dir : "fixtures") + "/" + name;
}

inline flowmap::RealTensor random_tensor(flowmap::TensorShape s, Rng& rng,
                                         double lo = -1.0, double hi = 1.0) {
    flowmap::RealTensor t(s);
    for (auto& v : t.data) v = rng.real(lo, hi);
    return t;
}

// ---- graph construction shorthand -------------------------------------------

inline flowmap::NodeSpec input_node(const std::string& id = "in") {
    flowmap::NodeSpec n;
    n.id = id;
    n.kind = flowmap::NodeKind::Input;
    return n;
}

inline flowmap::NodeSpec output_node(const std::string& id, const std::string& src) {
    flowmap::NodeSpec n;
    n.id = id;
    n.kind = flowmap::NodeKind::Output;
    n.inputs = {src};
    return n;
}

inline flowmap::NodeSpec conv_node(const std::string& id, const std::string& src, int k,
                                   int filters, int stride = 1, int pad = 0) {
    flowmap::NodeSpec n;
    n.id = id;
    n.kind = flowmap::NodeKind::Convolution;
    n.inputs = {src};
    n.kernel_size = k;
    n.filters = filters;
    n.stride = stride;
    n.padding = {pad, pad, pad, pad};
    n.weights_ref = id + ".weight";
    return n;
}

inline flowmap::NodeSpec pool_node(const std::string& id, const std::string& src, int k,
                                   int stride, int pad = 0) {
    flowmap::NodeSpec n;
    n.id = id;
    n.kind = flowmap::NodeKind::MaxPool;
    n.inputs = {src};
    n.kernel_size = k;
    n.stride = stride;
    n.padding = {pad, pad, pad, pad};
    return n;
}

inline flowmap::NodeSpec resize_node(const std::string& id, const std::string& src, int r) {
    flowmap::NodeSpec n;
    n.id = id;
    n.kind = flowmap::NodeKind::Resize;
    n.inputs = {src};
    n.scale_factor = r;
    return n;
}

inline flowmap::NodeSpec unary_node(flowmap::NodeKind kind, const std::string& id,
                                    const std::string& src, double slope = 0.1) {
    flowmap::NodeSpec n;
    n.id = id;
    n.kind = kind;
    n.inputs = {src};
    n.slope = slope;
    return n;
}

inline flowmap::NodeSpec merge_node(flowmap::NodeKind kind, const std::string& id,
                                    const std::vector<std::string>& srcs) {
    flowmap::NodeSpec n;
    n.id = id;
    n.kind = kind;
    n.inputs = srcs;
    return n;
}

inline flowmap::NodeSpec split_node(const std::string& id, const std::string& src,
                                    std::vector<int> sizes = {}) {
    flowmap::NodeSpec n;
    n.id = id;
    n.kind = flowmap::NodeKind::Split;
    n.inputs = {src};
    n.split_sizes = std::move(sizes);
    return n;
}

inline flowmap::NetworkGraph make_graph(std::vector<flowmap::NodeSpec> nodes,
                                        flowmap::TensorShape in, std::uint64_t seed = 7) {
    flowmap::NetworkGraph g;
    g.nodes = std::move(nodes);
    g = flowmap::infer_shapes(g, in);
    flowmap::ensure_weights(g, seed);
    return g;
}

// Random small graph: a chain of shape-safe stages with optional fork/join
// blocks (broadcast into Add, or Split into Concat). Node count stays small.
inline flowmap::NetworkGraph random_graph(Rng& rng, int max_stages = 5,
                                          int max_dim = 16) {
    std::vector<flowmap::NodeSpec> nodes;
    nodes.push_back(input_node("in"));
    int h = int(rng.pick(std::vector<std::int64_t>{4, 6, 8}));
    int w = int(rng.pick(std::vector<std::int64_t>{4, 6, 8}));
    int c = int(rng.pick(std::vector<std::int64_t>{2, 4}));
    flowmap::TensorShape in_shape{h, w, c};
    std::string tail = "in";
    int stages = 1 + int(rng.below(max_stages));
    int uid = 0;
    auto name = [&](const char* base) { return std::string(base) + std::to_string(uid++); };

    for (int s = 0; s < stages && int(nodes.size()) < 5; ++s) {
        switch (rng.below(7)) {
            case 0: {  // same-size conv
                int k = rng.below(2) ? 3 : 1;
                int f = int(rng.pick(std::vector<std::int64_t>{2, 4, 8}));
                auto id = name("conv");
                nodes.push_back(conv_node(id, tail, k, f, 1, k / 2));
                c = f;
                tail = id;
                break;
            }
            case 1: {  // downsample if room
                if (h % 2 || w % 2 || h < 4 || w < 4) break;
                auto id = name("pool");
                nodes.push_back(pool_node(id, tail, 2, 2));
                h /= 2;
                w /= 2;
                tail = id;
                break;
            }
            case 2: {  // upsample if room
                if (h * 2 > max_dim || w * 2 > max_dim) break;
                auto id = name("up");
                nodes.push_back(resize_node(id, tail, 2));
                h *= 2;
                w *= 2;
                tail = id;
                break;
            }
            case 3: {
                auto id = name("hsw");
                nodes.push_back(unary_node(flowmap::NodeKind::HardSwish, id, tail));
                tail = id;
                break;
            }
            case 4: {
                auto id = name("lrelu");
                nodes.push_back(unary_node(flowmap::NodeKind::LeakyReLU, id, tail));
                tail = id;
                break;
            }
            case 5: {  // residual block: tail fans out into a conv branch + Add
                auto cv = name("rconv");
                nodes.push_back(conv_node(cv, tail, 1, c));
                auto ad = name("add");
                nodes.push_back(merge_node(flowmap::NodeKind::Add, ad, {tail, cv}));
                tail = ad;
                break;
            }
            case 6: {  // split channels and concatenate them back
                if (c % 2) break;
                auto sp = name("split");
                nodes.push_back(split_node(sp, tail));
                auto cc = name("cat");
                auto hs = name("hsw");
                nodes.push_back(unary_node(flowmap::NodeKind::HardSwish, hs, sp));
                nodes.push_back(merge_node(flowmap::NodeKind::Concat, cc, {hs, sp}));
                tail = cc;
                break;
            }
        }
    }
    nodes.push_back(output_node("out", tail));
    return make_graph(std::move(nodes), in_shape, rng.next());
}

// Random parallelism vector: a divisor of every node's workload dimension.
inline flowmap::DesignPoint random_design(const flowmap::NetworkGraph& g, Rng& rng) {
    flowmap::DesignPoint dp;
    for (const auto& n : g.nodes) {
        std::int64_t dim = flowmap::max_parallelism(g, n);
        std::vector<std::int64_t> divisors;
        for (std::int64_t p = 1; p <= dim; ++p)
            if (dim % p == 0) divisors.push_back(p);
        dp.p[n.id] = rng.pick(divisors);
    }
    return dp;
}

}  // namespace testutil
