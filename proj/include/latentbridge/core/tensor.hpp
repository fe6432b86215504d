// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "latentbridge/core/error.hpp"
#include "latentbridge/core/rng.hpp"

namespace lb {

// Dense row-major tensor. Rank ≤ 4 in practice; shape conventions used by the
// library: images/features are {C,H,W}, matrices {R,C}, vectors {N},
// scalars {1}.
template <class S>
struct Tensor {
    std::vector<int> shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> sh) : shape(std::move(sh)), data(count(shape), S(0)) {}
    Tensor(std::vector<int> sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
        check(data.size() == count(shape), ErrorKind::shape, "tensor data/shape mismatch");
    }

    static size_t count(const std::vector<int>& sh) {
        size_t n = 1;
        for (int d : sh) {
            check(d > 0, ErrorKind::shape, "tensor dims must be positive");
            n *= static_cast<size_t>(d);
        }
        return sh.empty() ? 0 : n;
    }

    static Tensor zeros(std::vector<int> sh) { return Tensor(std::move(sh)); }

    static Tensor full(std::vector<int> sh, S v) {
        Tensor t(std::move(sh));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor randn(std::vector<int> sh, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(sh));
        for (auto& x : t.data) x = static_cast<S>(rng.gauss() * stddev);
        return t;
    }

    size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    S& operator[](size_t i) { return data[i]; }
    const S& operator[](size_t i) const { return data[i]; }

    // {C,H,W} accessor
    S& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    const S& at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    // {R,C} accessor
    S& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    const S& at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

    Tensor reshaped(std::vector<int> sh) const {
        check(count(sh) == numel(), ErrorKind::shape, "reshape changes element count");
        Tensor t;
        t.shape = std::move(sh);
        t.data = data;
        return t;
    }

    template <class S2>
    Tensor<S2> cast() const {
        Tensor<S2> t;
        t.shape = shape;
        t.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<S2>(data[i]);
        return t;
    }

    S min() const { return *std::min_element(data.begin(), data.end()); }
    S max() const { return *std::max_element(data.begin(), data.end()); }

    double sum() const {
        double s = 0;
        for (S v : data) s += static_cast<double>(v);
        return s;
    }
    double mean() const { return sum() / static_cast<double>(numel()); }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "{";
        for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
        return s + "}";
    }
};

template <class S>
bool bit_equal(const Tensor<S>& a, const Tensor<S>& b) {
    return a.shape == b.shape && a.data == b.data;
}

template <class S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
    check(a.same_shape(b), ErrorKind::shape, "max_abs_diff shape mismatch");
    double m = 0;
    for (size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return m;
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Integer mask image, {H,W}, values in [0, n_classes).
struct MaskImage {
    int h = 0, w = 0;
    std::vector<uint8_t> labels;

    MaskImage() = default;
    MaskImage(int h_, int w_) : h(h_), w(w_), labels(static_cast<size_t>(h_) * w_, 0) {}

    uint8_t& at(int y, int x) { return labels[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return labels[static_cast<size_t>(y) * w + x]; }
    size_t numel() const { return labels.size(); }

    bool operator==(const MaskImage& o) const { return h == o.h && w == o.w && labels == o.labels; }
};

}  // namespace lb
