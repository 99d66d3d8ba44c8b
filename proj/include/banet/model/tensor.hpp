#pragma once

// Dense 5D tensor (batch, channels, depth, height, width) backing the
// network. Scalar type is a template parameter: float for training speed,
// double for finite-difference gradient verification.

#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "banet/core/types.hpp"

namespace banet {

template <typename T>
struct Tensor {
    std::array<std::int64_t, 5> dims{0, 0, 0, 0, 0};  // n, c, d, h, w
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::int64_t n, std::int64_t c, std::int64_t d, std::int64_t h,
           std::int64_t w)
        : dims{n, c, d, h, w},
          data(static_cast<std::size_t>(n * c * d * h * w), T(0)) {}

    static Tensor zeros_like(const Tensor& o) {
        return Tensor(o.dims[0], o.dims[1], o.dims[2], o.dims[3], o.dims[4]);
    }

    std::int64_t n() const { return dims[0]; }
    std::int64_t c() const { return dims[1]; }
    std::int64_t d() const { return dims[2]; }
    std::int64_t h() const { return dims[3]; }
    std::int64_t w() const { return dims[4]; }
    std::int64_t spatial() const { return dims[2] * dims[3] * dims[4]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    // Pointer to sample n, channel c.
    T* at(std::int64_t in, std::int64_t ic) {
        return data.data() + (in * dims[1] + ic) * spatial();
    }
    const T* at(std::int64_t in, std::int64_t ic) const {
        return data.data() + (in * dims[1] + ic) * spatial();
    }

    T& operator()(std::int64_t in, std::int64_t ic, std::int64_t z,
                  std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>(
            (((in * dims[1] + ic) * dims[2] + z) * dims[3] + y) * dims[4] + x)];
    }
    T operator()(std::int64_t in, std::int64_t ic, std::int64_t z,
                 std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>(
            (((in * dims[1] + ic) * dims[2] + z) * dims[3] + y) * dims[4] + x)];
    }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(double(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (int i = 0; i < 5; ++i)
            s += std::to_string(dims[i]) + (i < 4 ? "," : ")");
        return s;
    }
};

}  // namespace banet
