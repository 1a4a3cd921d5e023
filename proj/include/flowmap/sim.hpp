#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "flowmap/graph.hpp"
#include "flowmap/perf.hpp"
#include "flowmap/quant.hpp"

// Cycle-approximate simulator of the streaming architecture. One process per
// graph node, bounded ready/valid channels between them, NHWC word order.
// Evaluation is synchronous: words pushed in cycle t become visible to the
// consumer in cycle t+1, so results do not depend on process iteration order.
namespace flowmap::sim {

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SoftFifoConfig {
    std::int64_t depth = 4;        // chunks
    std::int64_t chunk_size = 256; // words per chunk

    void check() const;
};

struct SimOptions {
    bool unbounded_channels = false;
    bool trace_occupancy = false;
    std::int64_t default_capacity = 64;
    std::int64_t dma_burst = 256;       // soft-FIFO words per cycle
    std::int64_t soft_fifo_chunk = 256; // soft-FIFO chunk size
    std::int64_t max_cycles = 200000000;
    // Per-edge capacity overrides (words); wins over everything else.
    std::map<std::string, std::int64_t> capacity_override;
    // Capacities for on-chip skip-edge channels (words), e.g. a measured
    // DepthReport. Missing skip edges fall back to unbounded.
    std::map<std::string, std::int64_t> skip_capacity;
};

struct SimResult {
    std::map<std::string, IntTensor> outputs;  // per Output node
    std::int64_t cycles_total = 0;
    std::int64_t cycles_steady = 0;  // busiest node's output interval
    DepthReport depths;              // high-water marks of skip-edge channels
    std::map<std::string, std::int64_t> high_water;     // all channels
    std::map<std::string, double> measured_depth;       // node -> fill cycles
    bool deadlocked = false;
    std::vector<std::string> blocked_channels;
    // (cycle, channel, occupancy), only when trace_occupancy is set.
    std::vector<std::tuple<std::int64_t, std::string, std::int64_t>> occupancy_trace;
};

class Pipeline;  // opaque; defined in the implementation

struct PipelineHandle {
    std::shared_ptr<Pipeline> impl;
};

// Instantiates one process per node plus soft-FIFO elements on skip edges
// placed off-chip. Throws SimError if some p_n does not divide its workload
// dimension or a node kind is unsupported.
PipelineHandle build_pipeline(const NetworkGraph& g, const DesignPoint& dp,
                              const QuantConfig& qc, const EdgeShifts& shifts,
                              const SimOptions& opts = {});

// Runs the pipeline to completion (single use). Deadlock sets the flag and
// diagnostics instead of throwing.
SimResult run_sim(PipelineHandle& pipeline, const IntTensor& input);

// Convenience: run with all channels unbounded and report skip-edge
// high-water occupancies.
DepthReport measure_fifo_depths(const NetworkGraph& g, const DesignPoint& dp,
                                const QuantConfig& qc, const EdgeShifts& shifts,
                                const IntTensor& input);

IntTensor quantize_input_tensor(const NetworkGraph& g, const EdgeShifts& shifts,
                                const RealTensor& input, int w_a);

struct SoftFifoRun {
    std::vector<std::int64_t> out;
    std::int64_t cycles = 0;
    double peak_words_per_cycle = 0.0;
};

// Standalone soft-FIFO model: chunked transfers, a chunk is readable only
// once fully written. `stall_until[i]` (optional) is the earliest cycle the
// consumer accepts word i.
SoftFifoRun simulate_soft_fifo(const SoftFifoConfig& cfg,
                               const std::vector<std::int64_t>& in_stream,
                               std::int64_t dma_burst = 256,
                               const std::vector<std::int64_t>* stall_until = nullptr);

}  // namespace flowmap::sim
