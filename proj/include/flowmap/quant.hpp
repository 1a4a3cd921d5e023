#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "flowmap/graph.hpp"

namespace flowmap {

struct QuantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QuantConfig {
    int w_w = 8;   // weight wordlength
    int w_a = 16;  // activation wordlength

    void check() const;
};

struct QuantParams {
    double scale = 1.0;
    std::int64_t zero_point = 0;
    int wordlength = 8;
};

struct QuantizedTensor {
    std::vector<std::int64_t> values;
    QuantParams params;
    std::vector<int> dims;
};

// Rounding rule used throughout: round-half-away-from-zero.
std::int64_t round_half_away(double x);

std::int64_t int_min(int bits);
std::int64_t int_max(int bits);
std::int64_t clamp_to_bits(std::int64_t v, int bits);

// Scale/zero-point from the layer min/max.
// S = (w_max - w_min) / (2^L - 1), Z = round(w_min / S) + 2^(L-1).
QuantParams quant_params(double w_min, double w_max, int L);

QuantizedTensor quantize_tensor(std::span<const double> w, std::vector<int> dims, int L);
std::vector<double> dequantize_tensor(const QuantizedTensor& q);

// ---- Fixed-point activation arithmetic -------------------------------------
// Activations are signed w_a-bit words with a per-edge power-of-two scale:
// word v represents v / 2^shift. These helpers define the arithmetic contract
// that the simulator and the quantized golden reference both follow, so their
// outputs agree bit-for-bit; the dataflow scheduling around them stays
// independent.

std::int64_t quantize_activation(double x, int shift, int w_a);
double dequantize_activation(std::int64_t v, int shift);

// Convolution requantization: integer accumulator -> output word.
// factor = S_weights * 2^(shift_out - shift_in).
double requant_factor(double weight_scale, int shift_in, int shift_out);
std::int64_t requantize_acc(std::int64_t acc, double factor, int w_a);

std::int64_t sat_add(std::int64_t a, std::int64_t b, int w_a);

// x * relu6(x+3) / 6 in fixed point: relu6 term in activation precision,
// product in 64-bit, division by 6 as multiply by round(2^16/6) plus
// arithmetic shift.
std::int64_t hardswish_fixed(std::int64_t x, int shift, int w_a);
std::int64_t leaky_relu_fixed(std::int64_t x, double slope, int w_a);

// ---- Per-edge activation shifts --------------------------------------------

struct EdgeShifts {
    std::map<std::string, int> shift;  // edge key -> power-of-two exponent

    int at(const std::string& key) const;
};

// Choose per-edge shifts from observed dynamic ranges (edge key -> max |v|).
// Only Convolution boundaries may change the shift; all other kinds carry
// their input scale through, so connected scale-preserving regions share one
// shift (the minimum over the region).
EdgeShifts shift_map(const NetworkGraph& g,
                     const std::map<std::string, double>& ranges, int w_a);

// Quantized weights for every Convolution node, keyed by weights_ref.
std::map<std::string, QuantizedTensor> quantize_graph_weights(const NetworkGraph& g,
                                                              const QuantConfig& qc);

// Quantized-weight container, magic "SATQ": i32 values plus per-tensor
// S (f64) and Z (i32).
void write_quantized_file(const std::string& path,
                          const std::map<std::string, QuantizedTensor>& tensors);
std::map<std::string, QuantizedTensor> read_quantized_file(const std::string& path);

}  // namespace flowmap
