#include "flowmap/golden.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flowmap::golden {

double silu_ref(double x) { return x / (1.0 + std::exp(-x)); }

double hardswish_real(double x) {
    return x * std::min(std::max(x + 3.0, 0.0), 6.0) / 6.0;
}

RealTensor eval_split(const RealTensor& in, int first_channel, int count) {
    RealTensor out({in.shape.h, in.shape.w, count});
    for (int h = 0; h < in.shape.h; ++h)
        for (int w = 0; w < in.shape.w; ++w)
            for (int c = 0; c < count; ++c)
                out.at(h, w, c) = in.at(h, w, first_channel + c);
    return out;
}

namespace {

void check_arity(const NodeSpec& n, const std::vector<RealTensor>& inputs, size_t want) {
    if (inputs.size() != want)
        throw RefError("node '" + n.id + "': expected " + std::to_string(want) +
                       " inputs, got " + std::to_string(inputs.size()));
}

TensorShape window_out_shape(const NodeSpec& n, TensorShape in, int c_out) {
    int k = n.kernel_size;
    return {(in.h + n.padding.top + n.padding.bottom - k) / n.stride + 1,
            (in.w + n.padding.left + n.padding.right - k) / n.stride + 1, c_out};
}

}  // namespace

RealTensor eval_kernel(const NetworkGraph& g, const NodeSpec& n,
                       const std::vector<RealTensor>& inputs) {
    switch (n.kind) {
        case NodeKind::Input:
        case NodeKind::Output: {
            check_arity(n, inputs, 1);
            return inputs[0];
        }
        case NodeKind::Convolution: {
            check_arity(n, inputs, 1);
            const auto& in = inputs[0];
            auto wit = g.weights.find(n.weights_ref);
            if (wit == g.weights.end())
                throw RefError("node '" + n.id + "': missing weights '" + n.weights_ref + "'");
            const auto& wt = wit->second;
            if (wt.c != in.shape.c || wt.f != n.filters || wt.kh != n.kernel_size)
                throw RefError("node '" + n.id + "': weight dims do not match");
            RealTensor out(window_out_shape(n, in.shape, n.filters));
            for (int oh = 0; oh < out.shape.h; ++oh)
                for (int ow = 0; ow < out.shape.w; ++ow)
                    for (int f = 0; f < n.filters; ++f) {
                        double acc = 0.0;
                        for (int kh = 0; kh < n.kernel_size; ++kh)
                            for (int kw = 0; kw < n.kernel_size; ++kw) {
                                int ih = oh * n.stride - n.padding.top + kh;
                                int iw = ow * n.stride - n.padding.left + kw;
                                if (ih < 0 || ih >= in.shape.h || iw < 0 || iw >= in.shape.w)
                                    continue;
                                for (int c = 0; c < in.shape.c; ++c)
                                    acc += in.at(ih, iw, c) * wt.at(f, c, kh, kw);
                            }
                        out.at(oh, ow, f) = acc;
                    }
            return out;
        }
        case NodeKind::MaxPool: {
            check_arity(n, inputs, 1);
            const auto& in = inputs[0];
            RealTensor out(window_out_shape(n, in.shape, in.shape.c));
            for (int oh = 0; oh < out.shape.h; ++oh)
                for (int ow = 0; ow < out.shape.w; ++ow)
                    for (int c = 0; c < in.shape.c; ++c) {
                        double best = -std::numeric_limits<double>::infinity();
                        for (int kh = 0; kh < n.kernel_size; ++kh)
                            for (int kw = 0; kw < n.kernel_size; ++kw) {
                                int ih = oh * n.stride - n.padding.top + kh;
                                int iw = ow * n.stride - n.padding.left + kw;
                                if (ih < 0 || ih >= in.shape.h || iw < 0 || iw >= in.shape.w)
                                    continue;
                                best = std::max(best, in.at(ih, iw, c));
                            }
                        out.at(oh, ow, c) = best;
                    }
            return out;
        }
        case NodeKind::Resize: {
            check_arity(n, inputs, 1);
            const auto& in = inputs[0];
            int r = n.scale_factor;
            RealTensor out({in.shape.h * r, in.shape.w * r, in.shape.c});
            for (int h = 0; h < out.shape.h; ++h)
                for (int w = 0; w < out.shape.w; ++w)
                    for (int c = 0; c < in.shape.c; ++c)
                        out.at(h, w, c) = in.at(h / r, w / r, c);
            return out;
        }
        case NodeKind::Concat: {
            if (inputs.size() < 2)
                throw RefError("node '" + n.id + "': Concat needs >= 2 inputs");
            int c_total = 0;
            for (const auto& t : inputs) {
                if (t.shape.h != inputs[0].shape.h || t.shape.w != inputs[0].shape.w)
                    throw RefError("node '" + n.id + "': Concat spatial mismatch");
                c_total += t.shape.c;
            }
            RealTensor out({inputs[0].shape.h, inputs[0].shape.w, c_total});
            for (int h = 0; h < out.shape.h; ++h)
                for (int w = 0; w < out.shape.w; ++w) {
                    int c0 = 0;
                    for (const auto& t : inputs) {
                        for (int c = 0; c < t.shape.c; ++c)
                            out.at(h, w, c0 + c) = t.at(h, w, c);
                        c0 += t.shape.c;
                    }
                }
            return out;
        }
        case NodeKind::Add: {
            if (inputs.size() < 2) throw RefError("node '" + n.id + "': Add needs >= 2 inputs");
            for (const auto& t : inputs)
                if (!(t.shape == inputs[0].shape))
                    throw RefError("node '" + n.id + "': Add shape mismatch");
            RealTensor out = inputs[0];
            for (size_t i = 1; i < inputs.size(); ++i)
                for (size_t j = 0; j < out.data.size(); ++j)
                    out.data[j] += inputs[i].data[j];
            return out;
        }
        case NodeKind::HardSwish: {
            check_arity(n, inputs, 1);
            RealTensor out = inputs[0];
            for (auto& x : out.data) x = hardswish_real(x);
            return out;
        }
        case NodeKind::LeakyReLU: {
            check_arity(n, inputs, 1);
            RealTensor out = inputs[0];
            for (auto& x : out.data) x = x >= 0 ? x : n.slope * x;
            return out;
        }
        case NodeKind::Split:
            throw RefError("node '" + n.id + "': use eval_split for Split outputs");
    }
    throw RefError("unreachable");
}

namespace {

// Evaluate the whole graph in real arithmetic; returns per-edge tensors.
std::map<std::string, RealTensor> run_edges(const NetworkGraph& g, const RealTensor& input) {
    if (!(input.shape == g.input_shape))
        throw RefError("input tensor shape " + input.shape.str() +
                       " does not match graph input " + g.input_shape.str());
    std::map<std::string, RealTensor> edge_vals;
    for (const auto& id : g.topo_order()) {
        const auto& n = g.node(id);
        std::vector<RealTensor> ins;
        for (const auto& e : g.input_edges(id)) ins.push_back(edge_vals.at(e.key()));
        if (n.kind == NodeKind::Input) ins.push_back(input);
        if (n.kind == NodeKind::Output) continue;

        auto outs = g.output_edges(id);
        if (n.kind == NodeKind::Split) {
            for (const auto& e : outs) {
                auto [first, count] = g.split_range(e);
                edge_vals.emplace(e.key(), eval_split(ins.at(0), first, count));
            }
        } else {
            RealTensor r = eval_kernel(g, n, ins);
            for (const auto& e : outs) edge_vals.emplace(e.key(), r);
        }
    }
    return edge_vals;
}

}  // namespace

std::map<std::string, RealTensor> run_reference(const NetworkGraph& g, const RealTensor& input) {
    auto edge_vals = run_edges(g, input);
    std::map<std::string, RealTensor> out;
    for (const auto& n : g.nodes)
        if (n.kind == NodeKind::Output)
            out[n.id] = edge_vals.at(g.input_edges(n.id).at(0).key());
    return out;
}

std::map<std::string, double> activation_ranges(const NetworkGraph& g, const RealTensor& input) {
    auto edge_vals = run_edges(g, input);
    std::map<std::string, double> ranges;
    for (const auto& [key, t] : edge_vals) {
        double m = 0.0;
        for (double x : t.data) m = std::max(m, std::abs(x));
        ranges[key] = m;
    }
    return ranges;
}

QuantRun run_reference_quantized(const NetworkGraph& g, const RealTensor& input,
                                 const QuantConfig& qc, const EdgeShifts* shifts_in) {
    qc.check();
    QuantRun run;
    if (shifts_in) {
        run.shifts = *shifts_in;
    } else {
        run.shifts = shift_map(g, activation_ranges(g, input), qc.w_a);
    }
    run.qweights = quantize_graph_weights(g, qc);

    std::map<std::string, IntTensor> edge_vals;
    auto out_shift = [&](const std::string& id) {
        auto outs = g.output_edges(id);
        if (outs.empty()) return 0;
        return run.shifts.at(outs[0].key());
    };

    for (const auto& id : g.topo_order()) {
        const auto& n = g.node(id);
        std::vector<IntTensor> ins;
        std::vector<int> in_shifts;
        for (const auto& e : g.input_edges(id)) {
            ins.push_back(edge_vals.at(e.key()));
            in_shifts.push_back(run.shifts.at(e.key()));
        }

        IntTensor result;
        switch (n.kind) {
            case NodeKind::Input: {
                int s = out_shift(id);
                result = IntTensor(input.shape);
                for (size_t i = 0; i < input.data.size(); ++i)
                    result.data[i] = quantize_activation(input.data[i], s, qc.w_a);
                run.quantized_input = result;
                break;
            }
            case NodeKind::Output:
                result = ins.at(0);
                break;
            case NodeKind::Convolution: {
                const auto& in = ins.at(0);
                const auto& qw = run.qweights.at(n.weights_ref);
                double factor =
                    requant_factor(qw.params.scale, in_shifts.at(0), out_shift(id));
                int k = n.kernel_size;
                result = IntTensor(window_out_shape(n, in.shape, n.filters));
                auto widx = [&](int f, int c, int kh, int kw) {
                    return size_t(((std::int64_t(f) * in.shape.c + c) * k + kh) * k + kw);
                };
                for (int oh = 0; oh < result.shape.h; ++oh)
                    for (int ow = 0; ow < result.shape.w; ++ow)
                        for (int f = 0; f < n.filters; ++f) {
                            std::int64_t acc = 0;
                            for (int kh = 0; kh < k; ++kh)
                                for (int kw = 0; kw < k; ++kw) {
                                    int ih = oh * n.stride - n.padding.top + kh;
                                    int iw = ow * n.stride - n.padding.left + kw;
                                    if (ih < 0 || ih >= in.shape.h || iw < 0 ||
                                        iw >= in.shape.w)
                                        continue;
                                    for (int c = 0; c < in.shape.c; ++c)
                                        acc += in.at(ih, iw, c) *
                                               (qw.values[widx(f, c, kh, kw)] +
                                                qw.params.zero_point);
                                }
                            result.at(oh, ow, f) = requantize_acc(acc, factor, qc.w_a);
                        }
                break;
            }
            case NodeKind::MaxPool: {
                const auto& in = ins.at(0);
                int k = n.kernel_size;
                result = IntTensor(window_out_shape(n, in.shape, in.shape.c));
                for (int oh = 0; oh < result.shape.h; ++oh)
                    for (int ow = 0; ow < result.shape.w; ++ow)
                        for (int c = 0; c < in.shape.c; ++c) {
                            std::int64_t best = std::numeric_limits<std::int64_t>::min();
                            for (int kh = 0; kh < k; ++kh)
                                for (int kw = 0; kw < k; ++kw) {
                                    int ih = oh * n.stride - n.padding.top + kh;
                                    int iw = ow * n.stride - n.padding.left + kw;
                                    if (ih < 0 || ih >= in.shape.h || iw < 0 ||
                                        iw >= in.shape.w)
                                        continue;
                                    best = std::max(best, in.at(ih, iw, c));
                                }
                            result.at(oh, ow, c) = best;
                        }
                break;
            }
            case NodeKind::Resize: {
                const auto& in = ins.at(0);
                int r = n.scale_factor;
                result = IntTensor({in.shape.h * r, in.shape.w * r, in.shape.c});
                for (int h = 0; h < result.shape.h; ++h)
                    for (int w = 0; w < result.shape.w; ++w)
                        for (int c = 0; c < in.shape.c; ++c)
                            result.at(h, w, c) = in.at(h / r, w / r, c);
                break;
            }
            case NodeKind::Concat: {
                int c_total = 0;
                for (const auto& t : ins) c_total += t.shape.c;
                result = IntTensor({ins[0].shape.h, ins[0].shape.w, c_total});
                for (int h = 0; h < result.shape.h; ++h)
                    for (int w = 0; w < result.shape.w; ++w) {
                        int c0 = 0;
                        for (const auto& t : ins) {
                            for (int c = 0; c < t.shape.c; ++c)
                                result.at(h, w, c0 + c) = t.at(h, w, c);
                            c0 += t.shape.c;
                        }
                    }
                break;
            }
            case NodeKind::Add: {
                result = ins.at(0);
                for (size_t i = 1; i < ins.size(); ++i)
                    for (size_t j = 0; j < result.data.size(); ++j)
                        result.data[j] = sat_add(result.data[j], ins[i].data[j], qc.w_a);
                break;
            }
            case NodeKind::HardSwish: {
                result = ins.at(0);
                int s = in_shifts.at(0);
                for (auto& x : result.data) x = hardswish_fixed(x, s, qc.w_a);
                break;
            }
            case NodeKind::LeakyReLU: {
                result = ins.at(0);
                for (auto& x : result.data) x = leaky_relu_fixed(x, n.slope, qc.w_a);
                break;
            }
            case NodeKind::Split:
                break;  // handled per edge below
        }

        auto outs = g.output_edges(id);
        if (n.kind == NodeKind::Split) {
            const auto& in = ins.at(0);
            for (const auto& e : outs) {
                auto [first, count] = g.split_range(e);
                IntTensor slice({in.shape.h, in.shape.w, count});
                for (int h = 0; h < in.shape.h; ++h)
                    for (int w = 0; w < in.shape.w; ++w)
                        for (int c = 0; c < count; ++c)
                            slice.at(h, w, c) = in.at(h, w, first + c);
                edge_vals.emplace(e.key(), std::move(slice));
            }
        } else {
            for (const auto& e : outs) edge_vals.emplace(e.key(), result);
            if (n.kind == NodeKind::Output) run.outputs[id] = std::move(result);
        }
    }
    return run;
}

}  // namespace flowmap::golden
