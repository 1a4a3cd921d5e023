#pragma once

#include <cstdint>
#include <string>

#include "flowmap/perf.hpp"

namespace flowmap {

struct DseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InfeasibleError : DseError {
    using DseError::DseError;
};

struct DseConfig {
    double lambda = 0.0;             // off-chip buffer count penalty
    std::int64_t max_iterations = 1 << 20;
    std::int64_t search_bound = 1000000;  // exhaustive search size cap
};

// Greedy DSP allocation: start from all-ones, repeatedly bump the node whose
// parallelism increase gives the largest total-latency reduction, until the
// budget is saturated or no feasible candidate remains. Candidate increments
// go to the next divisor of the node's workload dimension and must consume at
// least one DSP.
DesignPoint allocate_dsp(const NetworkGraph& g, const PlatformSpec& ps,
                         const DseConfig& cfg = {},
                         const DepthOverride* depth_override = nullptr);

// Brute-force verification oracle for the greedy allocator: enumerate all
// divisor-valid parallelism vectors over DSP-consuming nodes.
DesignPoint exhaustive_dsp_search(const NetworkGraph& g, const PlatformSpec& ps,
                                  const DseConfig& cfg = {},
                                  const DepthOverride* depth_override = nullptr);

// On-chip memory left for skip buffers once weights, sliding windows and
// concat channel buffers are allocated. Negative means infeasible.
std::int64_t skip_budget_bits(const NetworkGraph& g, const PlatformSpec& ps,
                              const QuantConfig& qc);

// Skip-buffer placement: all buffers start on-chip; walk them largest first,
// moving buffers off-chip while the on-chip total exceeds the budget.
// Fills DesignPoint::buffer_on only.
void allocate_buffers(const NetworkGraph& g, const DepthReport& depths,
                      const PlatformSpec& ps, const QuantConfig& qc, DesignPoint& dp);

// Exhaustive placement search (testing aid, <= 12 skip edges): minimizes
// sum of off-chip buffer bandwidth plus lambda * off-chip buffer count,
// subject to the on-chip budget; ties prefer fewer off-chip buffers.
void exhaustive_buffer_search(const NetworkGraph& g, const DepthReport& depths,
                              const PlatformSpec& ps, const QuantConfig& qc,
                              double total_latency_s, double lambda, DesignPoint& dp);

// Analytic fallback for skip-buffer depths when simulation is not practical:
// pipeline-fill imbalance between merge inputs plus channel-run buffering.
DepthReport analytic_depths(const NetworkGraph& g, const DesignPoint& dp);

}  // namespace flowmap
