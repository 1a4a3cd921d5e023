#include "flowmap/perf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace flowmap {

using nlohmann::json;

void PlatformSpec::check() const {
    if (dsp_total <= 0 || onchip_bits <= 0 || f_clk <= 0 || offchip_bw <= 0 || dma_burst <= 0)
        throw PerfError("platform fields must all be strictly positive");
}

PlatformSpec parse_platform_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PerfError("cannot open platform file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw PerfError(std::string("malformed platform file: ") + e.what());
    }
    PlatformSpec ps;
    try {
        ps.dsp_total = doc.at("dsp_total").get<std::int64_t>();
        ps.onchip_bits = doc.at("onchip_bits").get<std::int64_t>();
        ps.f_clk = doc.at("f_clk").get<double>();
        ps.offchip_bw = doc.at("offchip_bw").get<double>();
        ps.dma_burst = doc.value("dma_burst", std::int64_t(256));
    } catch (const json::exception& e) {
        throw PerfError(std::string("platform file missing field: ") + e.what());
    }
    ps.check();
    return ps;
}

std::int64_t DepthReport::at(const std::string& key) const {
    auto it = q.find(key);
    if (it == q.end()) throw PerfError("no buffer depth for skip edge " + key);
    return it->second;
}

std::int64_t DesignPoint::par(const std::string& id) const {
    auto it = p.find(id);
    return it == p.end() ? 1 : it->second;
}

bool DesignPoint::on_chip(const std::string& edge_key) const {
    auto it = buffer_on.find(edge_key);
    return it == buffer_on.end() ? true : it->second;
}

std::string design_to_json(const DesignPoint& dp) {
    json doc;
    doc["parallelism"] = json::object();
    for (const auto& [id, p] : dp.p) doc["parallelism"][id] = p;
    doc["buffers"] = json::object();
    for (const auto& [e, on] : dp.buffer_on) doc["buffers"][e] = on ? "on" : "off";
    if (!dp.channel_capacity.empty()) {
        doc["channel_capacities"] = json::object();
        for (const auto& [e, cap] : dp.channel_capacity) doc["channel_capacities"][e] = cap;
    }
    return doc.dump(2);
}

DesignPoint design_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw PerfError(std::string("malformed design point: ") + e.what());
    }
    DesignPoint dp;
    if (doc.contains("parallelism"))
        for (auto& [id, v] : doc["parallelism"].items()) dp.p[id] = v.get<std::int64_t>();
    if (doc.contains("buffers"))
        for (auto& [e, v] : doc["buffers"].items()) {
            auto s = v.get<std::string>();
            if (s != "on" && s != "off")
                throw PerfError("buffer placement must be \"on\" or \"off\"");
            dp.buffer_on[e] = s == "on";
        }
    if (doc.contains("channel_capacities"))
        for (auto& [e, v] : doc["channel_capacities"].items())
            dp.channel_capacity[e] = v.get<std::int64_t>();
    return dp;
}

std::int64_t node_workload(const NetworkGraph& g, const NodeSpec& n) {
    switch (n.kind) {
        case NodeKind::Convolution:
            return g.in_shape(n).words() * n.filters;
        case NodeKind::MaxPool:
        case NodeKind::Split:
            return g.in_shape(n).words();
        case NodeKind::Resize:
            return g.out_shape(n).words();
        case NodeKind::Concat:
            return g.out_shape(n).words();
        default:
            return g.out_shape(n).words();
    }
}

std::int64_t max_parallelism(const NetworkGraph& g, const NodeSpec& n) {
    switch (n.kind) {
        case NodeKind::Convolution:
            return std::int64_t(g.in_shape(n).c) * n.filters;
        case NodeKind::Concat:
            return g.out_shape(n).c;
        default:
            return g.in_shape(n).c;
    }
}

std::int64_t next_parallelism(const NetworkGraph& g, const NodeSpec& n, std::int64_t p) {
    std::int64_t dim = max_parallelism(g, n);
    for (std::int64_t cand = p + 1; cand <= dim; ++cand)
        if (dim % cand == 0) return cand;
    return 0;
}

double node_latency(const NetworkGraph& g, const NodeSpec& n, std::int64_t p, double f_clk) {
    if (p < 1) throw PerfError("node '" + n.id + "': parallelism must be >= 1");
    return double(node_workload(g, n)) / (double(p) * f_clk);
}

double pipeline_depth(const NetworkGraph& g, const NodeSpec& n, std::int64_t p) {
    constexpr double c_fix_arith = 4.0;
    constexpr double c_fix_route = 2.0;
    switch (n.kind) {
        case NodeKind::Convolution:
        case NodeKind::MaxPool: {
            auto in = g.in_shape(n);
            int k = n.kernel_size;
            return double((std::int64_t(k) - 1) * in.w + k) * in.c / double(p) + c_fix_arith;
        }
        case NodeKind::Resize: {
            auto in = g.in_shape(n);
            return double(in.w) * in.c / double(p) + c_fix_arith;
        }
        case NodeKind::Add:
        case NodeKind::HardSwish:
        case NodeKind::LeakyReLU:
            return c_fix_arith;
        default:
            return c_fix_route;
    }
}

double total_latency(const NetworkGraph& g, const DesignPoint& dp, const PlatformSpec& ps,
                     const DepthOverride* depth_override) {
    double max_l = 0.0;
    double depth_cycles = 0.0;
    for (const auto& n : g.nodes) {
        max_l = std::max(max_l, node_latency(g, n, dp.par(n.id), ps.f_clk));
        double d = pipeline_depth(g, n, dp.par(n.id));
        if (depth_override) {
            auto it = depth_override->d.find(n.id);
            if (it != depth_override->d.end()) d = it->second;
        }
        depth_cycles += d;
    }
    return max_l + depth_cycles / ps.f_clk;
}

std::int64_t dsp_usage(const NodeSpec& n, std::int64_t p) {
    switch (n.kind) {
        case NodeKind::Convolution:
            return std::int64_t(n.kernel_size) * n.kernel_size * p;
        case NodeKind::HardSwish:
            return 2 * p;
        case NodeKind::LeakyReLU:
            return p;
        default:
            return 0;
    }
}

std::int64_t dsp_usage(const NetworkGraph& g, const DesignPoint& dp) {
    std::int64_t total = 0;
    for (const auto& n : g.nodes) total += dsp_usage(n, dp.par(n.id));
    return total;
}

double buffer_bandwidth(std::int64_t edge_words, bool on_chip, double total_latency_s,
                        int w_a) {
    if (on_chip) return 0.0;
    if (total_latency_s <= 0) throw PerfError("total latency must be positive");
    return 2.0 * double(edge_words) * w_a / total_latency_s;
}

MemoryBreakdown memory_breakdown(const NetworkGraph& g, const DesignPoint& dp,
                                 const QuantConfig& qc, const DepthReport& depths,
                                 double total_latency_s, int w_a) {
    MemoryBreakdown mb;
    for (const auto& n : g.nodes) {
        if (n.kind == NodeKind::Convolution) {
            auto in = g.in_shape(n);
            mb.weights_bits += std::int64_t(n.filters) * in.c * n.kernel_size *
                               n.kernel_size * qc.w_w;
        }
        if (n.kind == NodeKind::Convolution || n.kind == NodeKind::MaxPool) {
            auto in = g.in_shape(n);
            mb.window_bits +=
                std::int64_t(n.kernel_size - 1) * in.w * in.c * w_a;
        }
        if (n.kind == NodeKind::Concat)
            for (const auto& e : g.input_edges(n.id))
                mb.concat_bits += std::int64_t(g.edge_shape(e).c) * w_a;
    }
    for (const auto& e : g.skip_edges()) {
        SkipBufferDetail d;
        d.edge = e.key();
        d.on_chip = dp.on_chip(e.key());
        d.feature_map_words = g.edge_shape(e).words();
        if (d.on_chip) {
            d.depth_words = depths.at(e.key());
            d.onchip_bits = d.depth_words * w_a;
            mb.skip_bits += d.onchip_bits;
        } else {
            auto it = depths.q.find(e.key());
            d.depth_words = it == depths.q.end() ? 0 : it->second;
            d.offchip_bandwidth =
                buffer_bandwidth(d.feature_map_words, false, total_latency_s, w_a);
        }
        mb.skip_detail.push_back(std::move(d));
    }
    return mb;
}

PerfReport make_report(const NetworkGraph& g, const DesignPoint& dp, const PlatformSpec& ps,
                       const QuantConfig& qc, const DepthReport& depths,
                       const DepthOverride* depth_override) {
    PerfReport r;
    r.total_latency_s = total_latency(g, dp, ps, depth_override);
    r.dsp_total = ps.dsp_total;
    for (const auto& n : g.nodes) {
        NodePerf np;
        np.id = n.id;
        np.kind = kind_name(n.kind);
        np.parallelism = dp.par(n.id);
        np.latency_s = node_latency(g, n, np.parallelism, ps.f_clk);
        np.depth_cycles = pipeline_depth(g, n, np.parallelism);
        if (depth_override) {
            auto it = depth_override->d.find(n.id);
            if (it != depth_override->d.end()) np.depth_cycles = it->second;
        }
        np.dsp = dsp_usage(n, np.parallelism);
        r.dsp_used += np.dsp;
        r.nodes.push_back(std::move(np));
    }
    r.memory = memory_breakdown(g, dp, qc, depths, r.total_latency_s, qc.w_a);

    std::int64_t io_words = g.input_shape.words();
    for (const auto& n : g.nodes)
        if (n.kind == NodeKind::Output) io_words += g.in_shape(n).words();
    r.io_stream_bw = double(io_words) * qc.w_a / r.total_latency_s;
    r.offchip_bw_used = r.io_stream_bw;
    for (const auto& d : r.memory.skip_detail) r.offchip_bw_used += d.offchip_bandwidth;
    r.bram36_equivalent = std::ceil(double(r.memory.total_bits()) / 36864.0);
    return r;
}

std::string report_to_json(const PerfReport& r) {
    json doc;
    doc["total_latency_s"] = r.total_latency_s;
    doc["dsp_used"] = r.dsp_used;
    doc["dsp_total"] = r.dsp_total;
    doc["offchip_bw_used"] = r.offchip_bw_used;
    doc["io_stream_bw"] = r.io_stream_bw;
    doc["bram36_equivalent"] = r.bram36_equivalent;
    doc["memory"] = {
        {"weights_bits", r.memory.weights_bits},
        {"window_bits", r.memory.window_bits},
        {"concat_bits", r.memory.concat_bits},
        {"skip_bits", r.memory.skip_bits},
        {"total_bits", r.memory.total_bits()},
    };
    doc["nodes"] = json::array();
    for (const auto& n : r.nodes)
        doc["nodes"].push_back({{"id", n.id},
                                {"kind", n.kind},
                                {"parallelism", n.parallelism},
                                {"latency_s", n.latency_s},
                                {"depth_cycles", n.depth_cycles},
                                {"dsp", n.dsp}});
    doc["skip_buffers"] = json::array();
    for (const auto& d : r.memory.skip_detail)
        doc["skip_buffers"].push_back({{"edge", d.edge},
                                       {"depth_words", d.depth_words},
                                       {"feature_map_words", d.feature_map_words},
                                       {"placement", d.on_chip ? "on" : "off"},
                                       {"onchip_bits", d.onchip_bits},
                                       {"offchip_bandwidth", d.offchip_bandwidth}});
    return doc.dump(2);
}

std::string report_to_csv(const PerfReport& r) {
    std::ostringstream os;
    os << "row,id,kind,parallelism,latency_s,depth_cycles,dsp,depth_words,"
          "feature_map_words,placement,onchip_bits,offchip_bandwidth\n";
    for (const auto& n : r.nodes)
        os << "node," << n.id << "," << n.kind << "," << n.parallelism << ","
           << n.latency_s << "," << n.depth_cycles << "," << n.dsp << ",,,,,\n";
    for (const auto& d : r.memory.skip_detail)
        os << "skip," << d.edge << ",,,,,," << d.depth_words << "," << d.feature_map_words
           << "," << (d.on_chip ? "on" : "off") << "," << d.onchip_bits << ","
           << d.offchip_bandwidth << "\n";
    return os.str();
}

}  // namespace flowmap
