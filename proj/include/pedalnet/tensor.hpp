#pragma once

#include <cstddef>
#include <vector>

namespace pedalnet::nn {

// Dense NCHW tensor: batch x channels x freq x time, row-major.
template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

    std::size_t size() const { return v.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& at(int b, int ch, int y, int x) {
        return v[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x];
    }
    const T& at(int b, int ch, int y, int x) const {
        return v[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x];
    }

    // Pointer to the start of channel `ch` of item `b`.
    T* plane_ptr(int b, int ch) {
        return v.data() + (static_cast<std::size_t>(b) * c + ch) * plane();
    }
    const T* plane_ptr(int b, int ch) const {
        return v.data() + (static_cast<std::size_t>(b) * c + ch) * plane();
    }
};

}  // namespace pedalnet::nn
