#include "flowmap/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace flowmap {

void QuantConfig::check() const {
    if (w_w < 2 || w_w > 32) throw QuantError("weight wordlength must be in [2, 32]");
    if (w_a < 2 || w_a > 32) throw QuantError("activation wordlength must be in [2, 32]");
}

std::int64_t round_half_away(double x) {
    return std::int64_t(x < 0 ? std::ceil(x - 0.5) : std::floor(x + 0.5));
}

std::int64_t int_min(int bits) { return -(std::int64_t(1) << (bits - 1)); }
std::int64_t int_max(int bits) { return (std::int64_t(1) << (bits - 1)) - 1; }

std::int64_t clamp_to_bits(std::int64_t v, int bits) {
    return std::clamp(v, int_min(bits), int_max(bits));
}

QuantParams quant_params(double w_min, double w_max, int L) {
    if (!std::isfinite(w_min) || !std::isfinite(w_max))
        throw QuantError("non-finite range for quantization");
    if (w_min > w_max) throw QuantError("w_min > w_max");
    QuantParams qp;
    qp.wordlength = L;
    if (w_min == w_max) {
        // Degenerate range: pick S so the constant reconstructs exactly from
        // the all-zero tensor, Z = round(w_min / S).
        double mag = std::max(std::abs(w_min), std::numeric_limits<double>::epsilon());
        qp.scale = mag / double(int_max(L));
        qp.zero_point = round_half_away(w_min / qp.scale);
        return qp;
    }
    double levels = double((std::int64_t(1) << L) - 1);
    qp.scale = (w_max - w_min) / levels;
    // w_min / S computed as (w_min / range) * levels: same value, but exact for
    // symmetric ranges (-m, m), where two-step rounding can miss the .5 tie
    qp.zero_point = round_half_away(w_min / (w_max - w_min) * levels) +
                    (std::int64_t(1) << (L - 1));
    return qp;
}

QuantizedTensor quantize_tensor(std::span<const double> w, std::vector<int> dims, int L) {
    if (w.empty()) throw QuantError("cannot quantize an empty tensor");
    auto [mn, mx] = std::minmax_element(w.begin(), w.end());
    QuantizedTensor q;
    q.params = quant_params(*mn, *mx, L);
    q.dims = std::move(dims);
    q.values.reserve(w.size());
    for (double x : w)
        q.values.push_back(
            clamp_to_bits(round_half_away(x / q.params.scale - double(q.params.zero_point)), L));
    return q;
}

std::vector<double> dequantize_tensor(const QuantizedTensor& q) {
    std::vector<double> out;
    out.reserve(q.values.size());
    for (auto v : q.values)
        out.push_back(double(v + q.params.zero_point) * q.params.scale);
    return out;
}

std::int64_t quantize_activation(double x, int shift, int w_a) {
    return clamp_to_bits(round_half_away(std::ldexp(x, shift)), w_a);
}

double dequantize_activation(std::int64_t v, int shift) {
    return std::ldexp(double(v), -shift);
}

double requant_factor(double weight_scale, int shift_in, int shift_out) {
    return weight_scale * std::ldexp(1.0, shift_out - shift_in);
}

std::int64_t requantize_acc(std::int64_t acc, double factor, int w_a) {
    return clamp_to_bits(round_half_away(double(acc) * factor), w_a);
}

std::int64_t sat_add(std::int64_t a, std::int64_t b, int w_a) {
    return clamp_to_bits(a + b, w_a);
}

std::int64_t hardswish_fixed(std::int64_t x, int shift, int w_a) {
    const std::int64_t one = std::int64_t(1) << shift;
    const std::int64_t t = std::clamp(x + 3 * one, std::int64_t(0), 6 * one);
    const std::int64_t recip6 = 10923;  // round(2^16 / 6)
    __int128 prod = __int128(x) * t * recip6;
    return clamp_to_bits(std::int64_t(prod >> (16 + shift)), w_a);
}

std::int64_t leaky_relu_fixed(std::int64_t x, double slope, int w_a) {
    if (x >= 0) return x;
    return clamp_to_bits(round_half_away(slope * double(x)), w_a);
}

int EdgeShifts::at(const std::string& key) const {
    auto it = shift.find(key);
    if (it == shift.end()) throw QuantError("no activation shift for edge " + key);
    return it->second;
}

EdgeShifts shift_map(const NetworkGraph& g,
                     const std::map<std::string, double>& ranges, int w_a) {
    auto edges = g.edges();
    std::map<std::string, int> group;
    for (size_t i = 0; i < edges.size(); ++i) group[edges[i].key()] = int(i);

    // Union-find; all edges touching a non-Convolution node share one scale.
    std::vector<int> parent(edges.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[size_t(x)] != x) x = parent[size_t(x)] = parent[size_t(parent[size_t(x)])];
        return x;
    };
    auto unite = [&](int a, int b) { parent[size_t(find(a))] = find(b); };

    for (const auto& n : g.nodes) {
        std::vector<int> touching;
        // A node emits one stream, so all its fanout edges share a scale.
        for (const auto& e : g.output_edges(n.id)) touching.push_back(group.at(e.key()));
        if (n.kind != NodeKind::Convolution)
            for (const auto& e : g.input_edges(n.id)) touching.push_back(group.at(e.key()));
        for (size_t i = 1; i < touching.size(); ++i) unite(touching[0], touching[i]);
    }

    auto ideal_shift = [&](double max_abs) {
        if (max_abs <= 0.0) return w_a - 2;
        int s = int(std::floor(std::log2(double(int_max(w_a)) / max_abs)));
        return std::clamp(s, 0, w_a - 2);
    };

    std::map<int, int> group_shift;
    for (size_t i = 0; i < edges.size(); ++i) {
        auto it = ranges.find(edges[i].key());
        double r = it == ranges.end() ? 1.0 : it->second;
        int root = find(int(i));
        int s = ideal_shift(r);
        auto g_it = group_shift.find(root);
        if (g_it == group_shift.end())
            group_shift[root] = s;
        else
            g_it->second = std::min(g_it->second, s);
    }

    EdgeShifts out;
    for (size_t i = 0; i < edges.size(); ++i)
        out.shift[edges[i].key()] = group_shift.at(find(int(i)));
    return out;
}

std::map<std::string, QuantizedTensor> quantize_graph_weights(const NetworkGraph& g,
                                                              const QuantConfig& qc) {
    qc.check();
    std::map<std::string, QuantizedTensor> out;
    for (const auto& n : g.nodes) {
        if (n.kind != NodeKind::Convolution) continue;
        auto it = g.weights.find(n.weights_ref);
        if (it == g.weights.end())
            throw QuantError("node '" + n.id + "': no weight tensor '" + n.weights_ref + "'");
        const auto& w = it->second;
        out[n.weights_ref] =
            quantize_tensor(std::span<const double>(w.data), {w.f, w.c, w.kh, w.kw}, qc.w_w);
    }
    return out;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw QuantError("truncated quantized-weight container");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    write_u32(os, std::uint32_t(u & 0xffffffffULL));
    write_u32(os, std::uint32_t(u >> 32));
}

double read_f64(std::istream& is) {
    std::uint64_t lo = read_u32(is), hi = read_u32(is);
    std::uint64_t u = lo | (hi << 32);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace

void write_quantized_file(const std::string& path,
                          const std::map<std::string, QuantizedTensor>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw QuantError("cannot write quantized file '" + path + "'");
    os.write("SATQ", 4);
    write_u32(os, std::uint32_t(tensors.size()));
    for (const auto& [name, q] : tensors) {
        write_u32(os, std::uint32_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        std::uint32_t dims[4] = {0, 0, 0, 0};
        for (size_t i = 0; i < q.dims.size() && i < 4; ++i) dims[i] = std::uint32_t(q.dims[i]);
        for (auto d : dims) write_u32(os, d);
        write_f64(os, q.params.scale);
        write_u32(os, std::uint32_t(std::int32_t(q.params.zero_point)));
        write_u32(os, std::uint32_t(q.params.wordlength));
        for (auto v : q.values) write_u32(os, std::uint32_t(std::int32_t(v)));
    }
}

std::map<std::string, QuantizedTensor> read_quantized_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw QuantError("cannot open quantized file '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::strncmp(magic, "SATQ", 4) != 0)
        throw QuantError("bad magic in quantized file '" + path + "'");
    std::map<std::string, QuantizedTensor> out;
    std::uint32_t count = read_u32(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t len = read_u32(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        QuantizedTensor q;
        std::int64_t total = 1;
        for (int d = 0; d < 4; ++d) {
            int dim = int(read_u32(is));
            q.dims.push_back(dim);
            total *= std::max(dim, 1);
        }
        q.params.scale = read_f64(is);
        q.params.zero_point = std::int64_t(std::int32_t(read_u32(is)));
        q.params.wordlength = int(read_u32(is));
        q.values.resize(size_t(total));
        for (auto& v : q.values) v = std::int64_t(std::int32_t(read_u32(is)));
        out[name] = std::move(q);
    }
    return out;
}

}  // namespace flowmap
