#pragma once

#include <map>
#include <string>
#include <vector>

#include "flowmap/graph.hpp"
#include "flowmap/quant.hpp"
#include "flowmap/tensor.hpp"

// Straight-line functional reference for every building block and for
// whole-graph execution. Deliberately naive: dense loops, no streaming.
namespace flowmap::golden {

struct RefError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Real-arithmetic evaluation of one node. Split returns the range for the
// given output edge via eval_split.
RealTensor eval_kernel(const NetworkGraph& g, const NodeSpec& n,
                       const std::vector<RealTensor>& inputs);
RealTensor eval_split(const RealTensor& in, int first_channel, int count);

// Whole-graph real-mode evaluation; one tensor per Output node.
std::map<std::string, RealTensor> run_reference(const NetworkGraph& g,
                                                const RealTensor& input);

// Max |value| per edge, from a real-mode run. Drives activation calibration.
std::map<std::string, double> activation_ranges(const NetworkGraph& g,
                                                const RealTensor& input);

// Quantized-mode evaluation: integer fixed-point activations and quantized
// weights, bit-for-bit the arithmetic the simulator performs.
struct QuantRun {
    std::map<std::string, IntTensor> outputs;  // per Output node
    EdgeShifts shifts;
    std::map<std::string, QuantizedTensor> qweights;
    IntTensor quantized_input;
};

QuantRun run_reference_quantized(const NetworkGraph& g, const RealTensor& input,
                                 const QuantConfig& qc,
                                 const EdgeShifts* shifts = nullptr);

double silu_ref(double x);
double hardswish_real(double x);

}  // namespace flowmap::golden
