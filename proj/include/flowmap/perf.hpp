#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowmap/graph.hpp"
#include "flowmap/quant.hpp"

namespace flowmap {

struct PerfError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PlatformSpec {
    std::int64_t dsp_total = 0;
    std::int64_t onchip_bits = 0;
    double f_clk = 0.0;        // Hz
    double offchip_bw = 0.0;   // bits/s
    std::int64_t dma_burst = 256;  // words

    void check() const;
};

PlatformSpec parse_platform_file(const std::string& path);

// Per-skip-edge required buffer depth, in words.
struct DepthReport {
    std::map<std::string, std::int64_t> q;

    std::int64_t at(const std::string& key) const;
};

struct DesignPoint {
    std::map<std::string, std::int64_t> p;      // node id -> parallelism
    std::map<std::string, bool> buffer_on;      // skip edge key -> on-chip?
    // Optional explicit channel capacity overrides (words), mainly for tests
    // and deadlock reproduction.
    std::map<std::string, std::int64_t> channel_capacity;

    std::int64_t par(const std::string& id) const;
    bool on_chip(const std::string& edge_key) const;  // default ON
};

std::string design_to_json(const DesignPoint& dp);
DesignPoint design_from_json(const std::string& text);

// Workload of a node in cycles at p=1 (the latency-model numerator).
std::int64_t node_workload(const NetworkGraph& g, const NodeSpec& n);

// Maximum parallelism of a node: C*F for Convolution, C otherwise.
std::int64_t max_parallelism(const NetworkGraph& g, const NodeSpec& n);
// Smallest divisor of the workload dimension strictly greater than p, or 0.
std::int64_t next_parallelism(const NetworkGraph& g, const NodeSpec& n, std::int64_t p);

double node_latency(const NetworkGraph& g, const NodeSpec& n, std::int64_t p, double f_clk);

// Analytic pipeline depth estimate in cycles; a simulator-measured value may
// override it via DepthOverride.
double pipeline_depth(const NetworkGraph& g, const NodeSpec& n, std::int64_t p);

struct DepthOverride {
    std::map<std::string, double> d;  // node id -> cycles
};

double total_latency(const NetworkGraph& g, const DesignPoint& dp, const PlatformSpec& ps,
                     const DepthOverride* depth_override = nullptr);

std::int64_t dsp_usage(const NodeSpec& n, std::int64_t p);
std::int64_t dsp_usage(const NetworkGraph& g, const DesignPoint& dp);

// Off-chip bandwidth of one skip buffer: 2 * S * w_a / L if OFF, else 0.
double buffer_bandwidth(std::int64_t edge_words, bool on_chip, double total_latency_s,
                        int w_a);

struct SkipBufferDetail {
    std::string edge;
    std::int64_t depth_words = 0;
    std::int64_t feature_map_words = 0;
    bool on_chip = true;
    std::int64_t onchip_bits = 0;
    double offchip_bandwidth = 0.0;  // bits/s
};

struct MemoryBreakdown {
    std::int64_t weights_bits = 0;
    std::int64_t window_bits = 0;
    std::int64_t concat_bits = 0;
    std::int64_t skip_bits = 0;
    std::vector<SkipBufferDetail> skip_detail;

    std::int64_t total_bits() const {
        return weights_bits + window_bits + concat_bits + skip_bits;
    }
};

MemoryBreakdown memory_breakdown(const NetworkGraph& g, const DesignPoint& dp,
                                 const QuantConfig& qc, const DepthReport& depths,
                                 double total_latency_s, int w_a);

struct NodePerf {
    std::string id;
    std::string kind;
    std::int64_t parallelism = 1;
    double latency_s = 0.0;
    double depth_cycles = 0.0;
    std::int64_t dsp = 0;
};

struct PerfReport {
    std::vector<NodePerf> nodes;
    double total_latency_s = 0.0;
    std::int64_t dsp_used = 0;
    std::int64_t dsp_total = 0;
    MemoryBreakdown memory;
    double offchip_bw_used = 0.0;   // bits/s, skip buffers + input/output streams
    double io_stream_bw = 0.0;      // bits/s, input + output tensors
    double bram36_equivalent = 0.0; // informational 36 Kbit bank count
};

PerfReport make_report(const NetworkGraph& g, const DesignPoint& dp, const PlatformSpec& ps,
                       const QuantConfig& qc, const DepthReport& depths,
                       const DepthOverride* depth_override = nullptr);

std::string report_to_json(const PerfReport& r);
// Flat CSV: one row per node, then one per skip edge.
std::string report_to_csv(const PerfReport& r);

}  // namespace flowmap
