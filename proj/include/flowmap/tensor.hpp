#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowmap {

// Feature map dimensions. Streams are always in NHWC word order
// (row-major over h, w with channels innermost).
struct TensorShape {
    int h = 0;
    int w = 0;
    int c = 0;

    std::int64_t words() const { return std::int64_t(h) * w * c; }

    bool operator==(const TensorShape&) const = default;

    std::string str() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }
};

template <typename T>
struct Tensor {
    TensorShape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(TensorShape s) : shape(s), data(size_t(s.words()), T{}) {}

    std::int64_t index(int h, int w, int c) const {
        return (std::int64_t(h) * shape.w + w) * shape.c + c;
    }
    T& at(int h, int w, int c) { return data[size_t(index(h, w, c))]; }
    const T& at(int h, int w, int c) const { return data[size_t(index(h, w, c))]; }
};

using RealTensor = Tensor<double>;
using IntTensor = Tensor<std::int64_t>;

// Convolution weights, (F, C, K, K) order.
struct WeightTensor {
    int f = 0;
    int c = 0;
    int kh = 0;
    int kw = 0;
    std::vector<double> data;

    WeightTensor() = default;
    WeightTensor(int f_, int c_, int kh_, int kw_)
        : f(f_), c(c_), kh(kh_), kw(kw_),
          data(size_t(std::int64_t(f_) * c_ * kh_ * kw_), 0.0) {}

    std::int64_t count() const { return std::int64_t(f) * c * kh * kw; }

    double& at(int fi, int ci, int khi, int kwi) {
        return data[size_t(((std::int64_t(fi) * c + ci) * kh + khi) * kw + kwi)];
    }
    double at(int fi, int ci, int khi, int kwi) const {
        return data[size_t(((std::int64_t(fi) * c + ci) * kh + khi) * kw + kwi)];
    }
};

}  // namespace flowmap
