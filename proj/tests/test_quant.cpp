#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "flowmap/quant.hpp"
#include "helpers.hpp"

using namespace flowmap;
using namespace testutil;

TEST_CASE("rounding is half-away-from-zero") {
    CHECK(round_half_away(0.5) == 1);
    CHECK(round_half_away(-0.5) == -1);
    CHECK(round_half_away(2.5) == 3);
    CHECK(round_half_away(-127.5) == -128);
    CHECK(round_half_away(0.49) == 0);
    CHECK(round_half_away(-3.75) == -4);
}

TEST_CASE("scale and zero point from the layer range") {
    auto p = quant_params(-1.0, 1.0, 8);
    CHECK(p.scale == doctest::Approx(2.0 / 255.0).epsilon(1e-12));
    CHECK(p.zero_point == 0);  // round(-127.5) + 128

    auto p2 = quant_params(0.0, 3.7, 8);
    CHECK(p2.zero_point == 128);

    auto p3 = quant_params(-2.0, 6.0, 4);
    CHECK(p3.scale == doctest::Approx(8.0 / 15.0).epsilon(1e-12));
    CHECK(p3.zero_point == 4);  // round(-3.75) + 8
}

TEST_CASE("tensor quantization hits the documented corner cases") {
    std::vector<double> w = {-1.0, 0.0, 1.0};
    auto q = quantize_tensor(w, {3}, 8);
    CHECK(q.values == std::vector<std::int64_t>{-128, 0, 127});  // +128 tie clamped

    std::vector<double> c = {5.0, 5.0, 5.0};
    for (int L : {4, 8, 16}) {
        auto qc = quantize_tensor(c, {3}, L);
        CHECK(qc.values == std::vector<std::int64_t>{0, 0, 0});
        auto back = dequantize_tensor(qc);
        for (double v : back) CHECK(v == doctest::Approx(5.0).epsilon(1e-9));
    }
}

TEST_CASE("dequantize inverts the mapping") {
    QuantizedTensor q;
    q.params = {2.0 / 255.0, 0, 8};
    q.dims = {1};
    q.values = {0};
    CHECK(dequantize_tensor(q)[0] == doctest::Approx(0.0));
    q.values = {127};
    CHECK(dequantize_tensor(q)[0] == doctest::Approx(0.99608).epsilon(1e-4));
}

TEST_CASE("round-trip error is bounded by half a step") {
    Rng rng(11);
    for (int L : {4, 8, 16}) {
        for (int iter = 0; iter < 50; ++iter) {
            std::vector<double> w(100);
            double lo = rng.real(-10.0, 0.0), hi = rng.real(0.01, 10.0);
            for (auto& v : w) v = rng.real(lo, hi);
            auto q = quantize_tensor(w, {100}, L);
            auto back = dequantize_tensor(q);
            for (size_t i = 0; i < w.size(); ++i) {
                CHECK(q.values[i] >= int_min(L));
                CHECK(q.values[i] <= int_max(L));
                CHECK(std::abs(back[i] - w[i]) <= q.params.scale / 2 + 1e-9);
            }
        }
    }
}

TEST_CASE("quantization is order-preserving") {
    Rng rng(5);
    std::vector<double> w(64);
    for (auto& v : w) v = rng.real(-4.0, 4.0);
    auto q = quantize_tensor(w, {64}, 8);
    for (size_t i = 0; i < w.size(); ++i)
        for (size_t j = 0; j < w.size(); ++j)
            if (w[i] <= w[j]) CHECK(q.values[i] <= q.values[j]);
}

TEST_CASE("mean round-trip error shrinks with wordlength") {
    Rng rng(21);
    std::vector<double> w(500);
    for (auto& v : w) v = rng.real(-3.0, 5.0);
    double prev = 1e9;
    for (int L = 4; L <= 16; ++L) {
        auto q = quantize_tensor(w, {500}, L);
        auto back = dequantize_tensor(q);
        double err = 0;
        for (size_t i = 0; i < w.size(); ++i) err += std::abs(back[i] - w[i]);
        err /= double(w.size());
        CHECK(err <= prev + 1e-12);
        prev = err;
    }
}

TEST_CASE("fixed-point activation helpers") {
    CHECK(quantize_activation(1.0, 8, 16) == 256);
    CHECK(dequantize_activation(256, 8) == doctest::Approx(1.0));
    // saturation at the word boundary
    CHECK(quantize_activation(1e9, 4, 16) == int_max(16));
    CHECK(quantize_activation(-1e9, 4, 16) == int_min(16));

    CHECK(sat_add(int_max(16), 100, 16) == int_max(16));
    CHECK(sat_add(int_min(16), -5, 16) == int_min(16));
    CHECK(sat_add(100, -30, 16) == 70);
}

TEST_CASE("fixed-point hardswish tracks the real function") {
    const int shift = 8, w_a = 16;
    for (double x = -8.0; x <= 8.0; x += 0.0137) {
        std::int64_t xi = quantize_activation(x, shift, w_a);
        double got = dequantize_activation(hardswish_fixed(xi, shift, w_a), shift);
        double want = x * std::min(std::max(x + 3.0, 0.0), 6.0) / 6.0;
        CHECK(got == doctest::Approx(want).epsilon(0.02).scale(1.0));
    }
    // exact zero below the left knee
    CHECK(hardswish_fixed(quantize_activation(-3.5, 8, 16), 8, 16) == 0);
}

TEST_CASE("fixed-point leaky relu") {
    CHECK(leaky_relu_fixed(100, 0.1, 16) == 100);
    CHECK(leaky_relu_fixed(-100, 0.1, 16) == -10);
    CHECK(leaky_relu_fixed(0, 0.1, 16) == 0);
}

TEST_CASE("shift map: only convolutions change the stream scale") {
    auto g = make_graph({input_node(), conv_node("c1", "in", 1, 4),
                         unary_node(NodeKind::HardSwish, "h", "c1"),
                         pool_node("p", "h", 2, 2), conv_node("c2", "p", 1, 4),
                         output_node("out", "c2")},
                        {4, 4, 4});
    std::map<std::string, double> ranges;
    for (const auto& e : g.edges()) ranges[e.key()] = 1.0;
    ranges["c1->h"] = 100.0;  // forces a smaller shift in the middle region
    auto s = shift_map(g, ranges, 16);
    // c1 output region: h and p carry the scale through
    CHECK(s.at("c1->h") == s.at("h->p"));
    CHECK(s.at("h->p") == s.at("p->c2"));
    // conv boundaries may change it
    CHECK(s.at("in->c1") != s.at("c1->h"));
    CHECK(s.at("c2->out") != s.at("p->c2"));
}

TEST_CASE("shift map unifies all fanout edges of a node") {
    auto g = make_graph({input_node(), conv_node("c", "in", 1, 4),
                         merge_node(NodeKind::Add, "a", {"in", "c"}),
                         output_node("out", "a")},
                        {4, 4, 4});
    std::map<std::string, double> ranges;
    for (const auto& e : g.edges()) ranges[e.key()] = 1.0;
    ranges["in->a"] = 50.0;
    auto s = shift_map(g, ranges, 16);
    CHECK(s.at("in->c") == s.at("in->a"));
}

TEST_CASE("quantized weight container round-trips") {
    namespace fs = std::filesystem;
    auto g = make_graph({input_node(), conv_node("c", "in", 3, 8, 1, 1),
                         output_node("out", "c")},
                        {4, 4, 2});
    auto qw = quantize_graph_weights(g, QuantConfig{8, 16});
    auto dir = fs::temp_directory_path() / "flowmap_quant_test";
    fs::create_directories(dir);
    auto path = (dir / "w.satq").string();
    write_quantized_file(path, qw);
    auto qw2 = read_quantized_file(path);
    REQUIRE(qw2.count("c.weight"));
    CHECK(qw2["c.weight"].values == qw["c.weight"].values);
    CHECK(qw2["c.weight"].params.scale == qw["c.weight"].params.scale);
    CHECK(qw2["c.weight"].params.zero_point == qw["c.weight"].params.zero_point);
    fs::remove_all(dir);
}
