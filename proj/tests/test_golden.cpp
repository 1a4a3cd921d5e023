#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "flowmap/golden.hpp"
#include "helpers.hpp"

using namespace flowmap;
using namespace testutil;

namespace {

// Brute-force convolution written independently of the library kernels,
// accumulating in a different loop order on purpose.
RealTensor brute_conv(const RealTensor& in, const WeightTensor& w, int stride,
                      Padding pad) {
    int hout = (in.shape.h + pad.top + pad.bottom - w.kh) / stride + 1;
    int wout = (in.shape.w + pad.left + pad.right - w.kw) / stride + 1;
    RealTensor out(TensorShape{hout, wout, w.f});
    for (int f = 0; f < w.f; ++f)
        for (int c = 0; c < w.c; ++c)
            for (int kh = 0; kh < w.kh; ++kh)
                for (int kw = 0; kw < w.kw; ++kw)
                    for (int oh = 0; oh < hout; ++oh)
                        for (int ow = 0; ow < wout; ++ow) {
                            int ih = oh * stride - pad.top + kh;
                            int iw = ow * stride - pad.left + kw;
                            if (ih < 0 || ih >= in.shape.h || iw < 0 || iw >= in.shape.w)
                                continue;
                            out.at(oh, ow, f) += in.at(ih, iw, c) * w.at(f, c, kh, kw);
                        }
    return out;
}

}  // namespace

TEST_CASE("all-ones 3x3 convolution counts its window") {
    NodeSpec n = conv_node("c", "in", 3, 1);
    NetworkGraph g;
    g.nodes = {input_node(), n, output_node("out", "c")};
    g = infer_shapes(g, {3, 3, 1});
    WeightTensor w(1, 1, 3, 3);
    for (auto& v : w.data) v = 1.0;
    g.weights["c.weight"] = w;

    RealTensor in(TensorShape{3, 3, 1});
    for (auto& v : in.data) v = 1.0;
    auto out = golden::eval_kernel(g, g.node("c"), {in});
    REQUIRE(out.shape == TensorShape{1, 1, 1});
    CHECK(out.data[0] == doctest::Approx(9.0));
}

TEST_CASE("nearest-neighbor resize duplicates") {
    NetworkGraph g;
    g.nodes = {input_node(), resize_node("r", "in", 2), output_node("out", "r")};
    g = infer_shapes(g, {2, 2, 1});
    RealTensor in(TensorShape{2, 2, 1});
    in.at(0, 0, 0) = 1;
    in.at(0, 1, 0) = 2;
    in.at(1, 0, 0) = 3;
    in.at(1, 1, 0) = 4;
    auto out = golden::eval_kernel(g, g.node("r"), {in});
    REQUIRE(out.shape == TensorShape{4, 4, 1});
    std::vector<double> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(out.data == want);
}

TEST_CASE("maxpool 2x2 stride 2") {
    NetworkGraph g;
    g.nodes = {input_node(), pool_node("p", "in", 2, 2), output_node("out", "p")};
    g = infer_shapes(g, {2, 2, 1});
    RealTensor in(TensorShape{2, 2, 1});
    in.data = {1, 2, 3, 4};
    auto out = golden::eval_kernel(g, g.node("p"), {in});
    REQUIRE(out.shape == TensorShape{1, 1, 1});
    CHECK(out.data[0] == doctest::Approx(4.0));
}

TEST_CASE("hardswish endpoints and knots") {
    CHECK(golden::hardswish_real(-3.0) == doctest::Approx(0.0));
    CHECK(golden::hardswish_real(0.0) == doctest::Approx(0.0));
    CHECK(golden::hardswish_real(1.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
    CHECK(golden::hardswish_real(3.0) == doctest::Approx(3.0));
    for (double x = -6.0; x < -3.0; x += 0.1)
        CHECK(golden::hardswish_real(x) == doctest::Approx(0.0));
    for (double x = 3.0; x < 6.0; x += 0.1)
        CHECK(golden::hardswish_real(x) == doctest::Approx(x));
    // continuity at the knots
    CHECK(std::abs(golden::hardswish_real(-3.0 + 1e-9) - golden::hardswish_real(-3.0)) < 1e-6);
    CHECK(std::abs(golden::hardswish_real(3.0 - 1e-9) - golden::hardswish_real(3.0)) < 1e-6);
}

TEST_CASE("silu reference") {
    CHECK(golden::silu_ref(0.0) == doctest::Approx(0.0));
    CHECK(golden::silu_ref(10.0) == doctest::Approx(9.99955).epsilon(1e-5));
}

TEST_CASE("convolution matches an independent brute force") {
    Rng rng(31);
    for (int iter = 0; iter < 20; ++iter) {
        int k = rng.below(2) ? 3 : 1;
        int stride = rng.below(2) ? 2 : 1;
        int pad = int(rng.below(k == 3 ? 2 : 1));
        int c = 1 + int(rng.below(4));
        int f = 1 + int(rng.below(4));
        int h = 4 + int(rng.below(5)), w = 4 + int(rng.below(5));
        if ((h + 2 * pad - k) % stride || (w + 2 * pad - k) % stride) continue;

        NetworkGraph g;
        g.nodes = {input_node(), conv_node("c", "in", k, f, stride, pad),
                   output_node("out", "c")};
        g = infer_shapes(g, {h, w, c});
        ensure_weights(g, rng.next());
        auto in = random_tensor({h, w, c}, rng, -2.0, 2.0);
        auto got = golden::eval_kernel(g, g.node("c"), {in});
        auto want = brute_conv(in, g.weights.at("c.weight"), stride,
                               g.node("c").padding);
        REQUIRE(got.shape == want.shape);
        for (size_t i = 0; i < got.data.size(); ++i) {
            double denom = std::max(std::abs(want.data[i]), 1.0);
            CHECK(std::abs(got.data[i] - want.data[i]) / denom < 1e-9);
        }
    }
}

TEST_CASE("convolution is linear in its input") {
    Rng rng(13);
    NetworkGraph g;
    g.nodes = {input_node(), conv_node("c", "in", 3, 4, 1, 1), output_node("out", "c")};
    g = infer_shapes(g, {6, 6, 3});
    ensure_weights(g, 3);
    auto x = random_tensor({6, 6, 3}, rng);
    auto y1 = golden::eval_kernel(g, g.node("c"), {x});
    auto xs = x;
    for (auto& v : xs.data) v *= 2.5;
    auto y2 = golden::eval_kernel(g, g.node("c"), {xs});
    for (size_t i = 0; i < y1.data.size(); ++i)
        CHECK(y2.data[i] == doctest::Approx(2.5 * y1.data[i]).epsilon(1e-9));
}

TEST_CASE("identity chain returns the input") {
    auto g = make_graph({input_node(), unary_node(NodeKind::LeakyReLU, "l", "in", 1.0),
                         output_node("out", "l")},
                        {4, 4, 2});
    Rng rng(2);
    auto in = random_tensor({4, 4, 2}, rng, 0.1, 1.0);  // positive: slope irrelevant
    auto outs = golden::run_reference(g, in);
    REQUIRE(outs.count("out"));
    for (size_t i = 0; i < in.data.size(); ++i)
        CHECK(outs["out"].data[i] == doctest::Approx(in.data[i]));
}

TEST_CASE("split + concat reassembles the stream") {
    auto g = make_graph({input_node(), split_node("s", "in"),
                         unary_node(NodeKind::LeakyReLU, "a", "s", 1.0),
                         unary_node(NodeKind::LeakyReLU, "b", "s", 1.0),
                         merge_node(NodeKind::Concat, "m", {"a", "b"}),
                         output_node("out", "m")},
                        {4, 4, 4});
    Rng rng(17);
    auto in = random_tensor({4, 4, 4}, rng, 0.1, 1.0);
    auto outs = golden::run_reference(g, in);
    for (size_t i = 0; i < in.data.size(); ++i)
        CHECK(outs["out"].data[i] == doctest::Approx(in.data[i]));
}

TEST_CASE("quantized run stays close to the real run") {
    Rng rng(41);
    for (int iter = 0; iter < 5; ++iter) {
        auto g = random_graph(rng);
        auto in = random_tensor(g.input_shape, rng);
        auto real = golden::run_reference(g, in);
        auto q = golden::run_reference_quantized(g, in, QuantConfig{8, 16});
        for (const auto& [id, rt] : real) {
            const auto& qt = q.outputs.at(id);
            // Output nodes have no outgoing edge; their scale is the input edge's
            int shift = q.shifts.at(g.input_edges(id)[0].key());
            double maxabs = 0.0;
            for (double v : rt.data) maxabs = std::max(maxabs, std::abs(v));
            double tol = std::max(maxabs * 0.05, 0.05);
            for (size_t i = 0; i < rt.data.size(); ++i) {
                double deq = dequantize_activation(qt.data[i], shift);
                CHECK(std::abs(deq - rt.data[i]) <= tol);
            }
        }
    }
}
