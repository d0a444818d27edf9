#include "pedalnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pedalnet/blas.hpp"
#include "pedalnet/errors.hpp"

namespace pedalnet::nn {

namespace {

// col is [in_c*kh*kw x h*w]; row (ic,dy,dx) holds the input value each output
// pixel sees at that kernel tap, zero where the tap falls outside.
template <typename T>
void im2col(const T* x, int in_c, int h, int w, int kh, int kw, T* col) {
    const int pad_h = (kh - 1) / 2;
    const int pad_w = (kw - 1) / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ic = 0; ic < in_c; ++ic) {
        const T* xc = x + static_cast<std::size_t>(ic) * plane;
        for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
                T* row = col + ((static_cast<std::size_t>(ic) * kh + dy) * kw + dx) * plane;
                const int shift = dx - pad_w;
                const int x0 = std::max(0, -shift);
                const int x1 = std::min(w, w - shift);
                for (int y = 0; y < h; ++y) {
                    T* out = row + static_cast<std::size_t>(y) * w;
                    const int in_y = y + dy - pad_h;
                    if (in_y < 0 || in_y >= h || x0 >= x1) {
                        std::fill(out, out + w, T(0));
                        continue;
                    }
                    if (x0 > 0) std::fill(out, out + x0, T(0));
                    std::memcpy(out + x0, xc + static_cast<std::size_t>(in_y) * w + x0 + shift,
                                static_cast<std::size_t>(x1 - x0) * sizeof(T));
                    if (x1 < w) std::fill(out + x1, out + w, T(0));
                }
            }
        }
    }
}

// Scatter-add transpose of im2col.
template <typename T>
void col2im_add(const T* col, int in_c, int h, int w, int kh, int kw, T* x) {
    const int pad_h = (kh - 1) / 2;
    const int pad_w = (kw - 1) / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ic = 0; ic < in_c; ++ic) {
        T* xc = x + static_cast<std::size_t>(ic) * plane;
        for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
                const T* row = col + ((static_cast<std::size_t>(ic) * kh + dy) * kw + dx) * plane;
                const int shift = dx - pad_w;
                const int x0 = std::max(0, -shift);
                const int x1 = std::min(w, w - shift);
                for (int y = 0; y < h; ++y) {
                    const int in_y = y + dy - pad_h;
                    if (in_y < 0 || in_y >= h || x0 >= x1) continue;
                    const T* src = row + static_cast<std::size_t>(y) * w + x0;
                    T* dst = xc + static_cast<std::size_t>(in_y) * w + x0 + shift;
                    for (int i = 0; i < x1 - x0; ++i) dst[i] += src[i];
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void Conv2d<T>::init_shapes() {
    weight.assign(static_cast<std::size_t>(out_c) * in_c * kh * kw, T(0));
    bias.assign(static_cast<std::size_t>(out_c), T(0));
}

template <typename T>
void Conv2d<T>::forward_into(const Tensor4<T>& x, Tensor4<T>& out, int channel_offset) const {
    if (x.c != in_c)
        throw ShapeError("conv " + name + ": expected " + std::to_string(in_c) +
                         " input channels, got " + std::to_string(x.c));
    if (kh > x.h || kw > x.w)
        throw ShapeError("conv " + name + ": kernel " + std::to_string(kh) + "x" +
                         std::to_string(kw) + " larger than input " + std::to_string(x.h) + "x" +
                         std::to_string(x.w));
    const int p = x.h * x.w;
    const int k = in_c * kh * kw;
    std::vector<T> col(static_cast<std::size_t>(k) * p);
    for (int b = 0; b < x.n; ++b) {
        im2col(x.plane_ptr(b, 0), in_c, x.h, x.w, kh, kw, col.data());
        T* dst = out.plane_ptr(b, channel_offset);
        gemm(false, false, out_c, p, k, T(1), weight.data(), k, col.data(), p, T(0), dst, p);
        for (int oc = 0; oc < out_c; ++oc) {
            T* row = dst + static_cast<std::size_t>(oc) * p;
            const T bval = bias[static_cast<std::size_t>(oc)];
            for (int i = 0; i < p; ++i) row[i] += bval;
        }
    }
}

template <typename T>
void Conv2d<T>::backward(const Tensor4<T>& x, const Tensor4<T>& dout, int channel_offset,
                         std::vector<T>& dweight, std::vector<T>& dbias, Tensor4<T>* dx) const {
    const int p = x.h * x.w;
    const int k = in_c * kh * kw;
    std::vector<T> col(static_cast<std::size_t>(k) * p);
    std::vector<T> dcol(dx ? col.size() : 0);
    for (int b = 0; b < x.n; ++b) {
        im2col(x.plane_ptr(b, 0), in_c, x.h, x.w, kh, kw, col.data());
        const T* dslice = dout.plane_ptr(b, channel_offset);
        gemm(false, true, out_c, k, p, T(1), dslice, p, col.data(), p, T(1), dweight.data(), k);
        for (int oc = 0; oc < out_c; ++oc) {
            const T* row = dslice + static_cast<std::size_t>(oc) * p;
            T sum = 0;
            for (int i = 0; i < p; ++i) sum += row[i];
            dbias[static_cast<std::size_t>(oc)] += sum;
        }
        if (dx) {
            gemm(true, false, k, p, out_c, T(1), weight.data(), k, dslice, p, T(0), dcol.data(),
                 p);
            col2im_add(dcol.data(), in_c, x.h, x.w, kh, kw, dx->plane_ptr(b, 0));
        }
    }
}

template <typename T>
void BatchNorm<T>::init_shapes() {
    gamma.assign(static_cast<std::size_t>(c), T(1));
    beta.assign(static_cast<std::size_t>(c), T(0));
    running_mean.assign(static_cast<std::size_t>(c), T(0));
    running_var.assign(static_cast<std::size_t>(c), T(1));
}

template <typename T>
Tensor4<T> BatchNorm<T>::forward_train(const Tensor4<T>& x, std::vector<T>& batch_mean,
                                       std::vector<T>& batch_var, bool update_running) {
    if (x.c != c) throw ShapeError("batch_norm: channel mismatch");
    const std::size_t m = static_cast<std::size_t>(x.n) * x.plane();
    if (m < 2) throw DataError("batch_norm: train mode needs a per-channel population >= 2");
    batch_mean.assign(static_cast<std::size_t>(c), T(0));
    batch_var.assign(static_cast<std::size_t>(c), T(0));
    for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0, sq = 0.0;
        for (int b = 0; b < x.n; ++b) {
            const T* src = x.plane_ptr(b, ch);
            for (std::size_t i = 0; i < x.plane(); ++i) {
                sum += src[i];
                sq += static_cast<double>(src[i]) * src[i];
            }
        }
        const double mean = sum / static_cast<double>(m);
        const double var = std::max(0.0, sq / static_cast<double>(m) - mean * mean);
        batch_mean[static_cast<std::size_t>(ch)] = static_cast<T>(mean);
        batch_var[static_cast<std::size_t>(ch)] = static_cast<T>(var);
        if (update_running) {
            running_mean[static_cast<std::size_t>(ch)] =
                momentum * running_mean[static_cast<std::size_t>(ch)] +
                (T(1) - momentum) * static_cast<T>(mean);
            running_var[static_cast<std::size_t>(ch)] =
                momentum * running_var[static_cast<std::size_t>(ch)] +
                (T(1) - momentum) * static_cast<T>(var);
        }
    }
    Tensor4<T> out(x.n, x.c, x.h, x.w);
    for (int ch = 0; ch < c; ++ch) {
        const T inv = T(1) / std::sqrt(batch_var[static_cast<std::size_t>(ch)] + eps);
        const T g = gamma[static_cast<std::size_t>(ch)] * inv;
        const T b0 = beta[static_cast<std::size_t>(ch)] -
                     g * batch_mean[static_cast<std::size_t>(ch)];
        for (int b = 0; b < x.n; ++b) {
            const T* src = x.plane_ptr(b, ch);
            T* dst = out.plane_ptr(b, ch);
            for (std::size_t i = 0; i < x.plane(); ++i) dst[i] = g * src[i] + b0;
        }
    }
    return out;
}

template <typename T>
Tensor4<T> BatchNorm<T>::forward_infer(const Tensor4<T>& x) const {
    if (x.c != c) throw ShapeError("batch_norm: channel mismatch");
    Tensor4<T> out(x.n, x.c, x.h, x.w);
    for (int ch = 0; ch < c; ++ch) {
        const T inv = T(1) / std::sqrt(running_var[static_cast<std::size_t>(ch)] + eps);
        const T g = gamma[static_cast<std::size_t>(ch)] * inv;
        const T b0 = beta[static_cast<std::size_t>(ch)] -
                     g * running_mean[static_cast<std::size_t>(ch)];
        for (int b = 0; b < x.n; ++b) {
            const T* src = x.plane_ptr(b, ch);
            T* dst = out.plane_ptr(b, ch);
            for (std::size_t i = 0; i < x.plane(); ++i) dst[i] = g * src[i] + b0;
        }
    }
    return out;
}

template <typename T>
void BatchNorm<T>::backward(const Tensor4<T>& x, const std::vector<T>& batch_mean,
                            const std::vector<T>& batch_var, Tensor4<T>& d,
                            std::vector<T>& dgamma, std::vector<T>& dbeta,
                            bool relu_mask) const {
    const std::size_t m = static_cast<std::size_t>(x.n) * x.plane();
    for (int ch = 0; ch < c; ++ch) {
        const T mu = batch_mean[static_cast<std::size_t>(ch)];
        const T inv = T(1) / std::sqrt(batch_var[static_cast<std::size_t>(ch)] + eps);
        const T g = gamma[static_cast<std::size_t>(ch)];
        const T bt = beta[static_cast<std::size_t>(ch)];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int b = 0; b < x.n; ++b) {
            const T* src = x.plane_ptr(b, ch);
            T* grad = d.plane_ptr(b, ch);
            for (std::size_t i = 0; i < x.plane(); ++i) {
                const T xhat = (src[i] - mu) * inv;
                if (relu_mask && g * xhat + bt <= T(0)) grad[i] = T(0);
                sum_g += grad[i];
                sum_gx += static_cast<double>(grad[i]) * xhat;
            }
        }
        dbeta[static_cast<std::size_t>(ch)] += static_cast<T>(sum_g);
        dgamma[static_cast<std::size_t>(ch)] += static_cast<T>(sum_gx);
        const T mean_g = static_cast<T>(sum_g / static_cast<double>(m));
        const T mean_gx = static_cast<T>(sum_gx / static_cast<double>(m));
        for (int b = 0; b < x.n; ++b) {
            const T* src = x.plane_ptr(b, ch);
            T* grad = d.plane_ptr(b, ch);
            for (std::size_t i = 0; i < x.plane(); ++i) {
                const T xhat = (src[i] - mu) * inv;
                grad[i] = g * inv * (grad[i] - mean_g - xhat * mean_gx);
            }
        }
    }
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
    Tensor4<T> out(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.size(); ++i) out.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
    return out;
}

template <typename T>
Tensor4<T> max_pool(const Tensor4<T>& x, int pf, int pt, PoolIdx* idx) {
    if (pf < 1 || pt < 1) throw ConfigError("max_pool: pool dims must be >= 1");
    if (pf > x.h || pt > x.w)
        throw ShapeError("max_pool: pool " + std::to_string(pf) + "x" + std::to_string(pt) +
                         " larger than input " + std::to_string(x.h) + "x" +
                         std::to_string(x.w));
    if (pf * pt > 256) throw ConfigError("max_pool: window too large");
    const int oh = x.h / pf;
    const int ow = x.w / pt;
    Tensor4<T> out(x.n, x.c, oh, ow);
    if (idx) idx->arg.assign(out.size(), 0);
    std::size_t o = 0;
    for (int b = 0; b < x.n; ++b) {
        for (int ch = 0; ch < x.c; ++ch) {
            const T* src = x.plane_ptr(b, ch);
            for (int y = 0; y < oh; ++y) {
                for (int xo = 0; xo < ow; ++xo, ++o) {
                    const int y0 = y * pf, x0 = xo * pt;
                    T best = src[static_cast<std::size_t>(y0) * x.w + x0];
                    int best_i = 0;
                    for (int dy = 0; dy < pf; ++dy) {
                        for (int dx = 0; dx < pt; ++dx) {
                            const T val = src[static_cast<std::size_t>(y0 + dy) * x.w + x0 + dx];
                            if (val > best) {
                                best = val;
                                best_i = dy * pt + dx;
                            }
                        }
                    }
                    out.v[o] = best;
                    if (idx) idx->arg[o] = static_cast<std::uint8_t>(best_i);
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor4<T> max_pool_backward(const Tensor4<T>& dout, int in_h, int in_w, int pf, int pt,
                             const PoolIdx& idx) {
    Tensor4<T> dx(dout.n, dout.c, in_h, in_w);
    std::size_t o = 0;
    for (int b = 0; b < dout.n; ++b) {
        for (int ch = 0; ch < dout.c; ++ch) {
            T* dst = dx.plane_ptr(b, ch);
            for (int y = 0; y < dout.h; ++y) {
                for (int xo = 0; xo < dout.w; ++xo, ++o) {
                    const int a = idx.arg[o];
                    const int in_y = y * pf + a / pt;
                    const int in_x = xo * pt + a % pt;
                    dst[static_cast<std::size_t>(in_y) * in_w + in_x] += dout.v[o];
                }
            }
        }
    }
    return dx;
}

template <typename T>
std::vector<T> global_avg_pool(const Tensor4<T>& x) {
    std::vector<T> out(static_cast<std::size_t>(x.n) * x.c);
    const T scale = T(1) / static_cast<T>(x.plane());
    for (int b = 0; b < x.n; ++b) {
        for (int ch = 0; ch < x.c; ++ch) {
            const T* src = x.plane_ptr(b, ch);
            double sum = 0.0;
            for (std::size_t i = 0; i < x.plane(); ++i) sum += src[i];
            out[static_cast<std::size_t>(b) * x.c + ch] = static_cast<T>(sum) * scale;
        }
    }
    return out;
}

template <typename T>
Tensor4<T> global_avg_pool_backward(const std::vector<T>& d, int n, int c, int h, int w) {
    Tensor4<T> dx(n, c, h, w);
    const T scale = T(1) / static_cast<T>(static_cast<std::size_t>(h) * w);
    for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const T val = d[static_cast<std::size_t>(b) * c + ch] * scale;
            T* dst = dx.plane_ptr(b, ch);
            for (std::size_t i = 0; i < dx.plane(); ++i) dst[i] = val;
        }
    }
    return dx;
}

template <typename T>
void Dense<T>::init_shapes() {
    weight.assign(static_cast<std::size_t>(out_dim) * in_dim, T(0));
    bias.assign(static_cast<std::size_t>(out_dim), T(0));
}

template <typename T>
std::vector<T> Dense<T>::forward(const std::vector<T>& x, int n) const {
    if (x.size() != static_cast<std::size_t>(n) * in_dim)
        throw ShapeError("dense: input length mismatch");
    std::vector<T> out(static_cast<std::size_t>(n) * out_dim);
    for (int b = 0; b < n; ++b) {
        const T* xb = x.data() + static_cast<std::size_t>(b) * in_dim;
        for (int o = 0; o < out_dim; ++o) {
            const T* wrow = weight.data() + static_cast<std::size_t>(o) * in_dim;
            double sum = bias[static_cast<std::size_t>(o)];
            for (int i = 0; i < in_dim; ++i) sum += static_cast<double>(wrow[i]) * xb[i];
            out[static_cast<std::size_t>(b) * out_dim + o] = static_cast<T>(sum);
        }
    }
    return out;
}

template <typename T>
void Dense<T>::backward(const std::vector<T>& x, int n, const std::vector<T>& dlogits,
                        std::vector<T>& dweight, std::vector<T>& dbias,
                        std::vector<T>* dx) const {
    if (dx) dx->assign(static_cast<std::size_t>(n) * in_dim, T(0));
    for (int b = 0; b < n; ++b) {
        const T* xb = x.data() + static_cast<std::size_t>(b) * in_dim;
        const T* db = dlogits.data() + static_cast<std::size_t>(b) * out_dim;
        for (int o = 0; o < out_dim; ++o) {
            const T g = db[o];
            T* wrow = dweight.data() + static_cast<std::size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) wrow[i] += g * xb[i];
            dbias[static_cast<std::size_t>(o)] += g;
            if (dx) {
                const T* w = weight.data() + static_cast<std::size_t>(o) * in_dim;
                T* dxb = dx->data() + static_cast<std::size_t>(b) * in_dim;
                for (int i = 0; i < in_dim; ++i) dxb[i] += g * w[i];
            }
        }
    }
}

template <typename T>
void softmax_rows(std::vector<T>& logits, int n, int k) {
    for (int b = 0; b < n; ++b) {
        T* row = logits.data() + static_cast<std::size_t>(b) * k;
        T mx = row[0];
        for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
        double sum = 0.0;
        for (int i = 0; i < k; ++i) {
            row[i] = static_cast<T>(std::exp(static_cast<double>(row[i] - mx)));
            sum += row[i];
        }
        for (int i = 0; i < k; ++i) row[i] = static_cast<T>(row[i] / sum);
    }
}

template <typename T>
T bce_loss(const std::vector<T>& probs, const std::vector<int>& labels, int k) {
    if (probs.size() != labels.size() * static_cast<std::size_t>(k))
        throw ShapeError("bce_loss: size mismatch");
    double sum = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        double p = probs[b * static_cast<std::size_t>(k) + static_cast<std::size_t>(labels[b])];
        p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
        sum -= std::log(p);
    }
    return static_cast<T>(sum / static_cast<double>(labels.size()));
}

template <typename T>
std::vector<T> bce_softmax_grad(const std::vector<T>& probs, const std::vector<int>& labels,
                                int k) {
    std::vector<T> d(probs.size());
    const T scale = T(1) / static_cast<T>(labels.size());
    for (std::size_t b = 0; b < labels.size(); ++b) {
        for (int i = 0; i < k; ++i) {
            const std::size_t at = b * static_cast<std::size_t>(k) + static_cast<std::size_t>(i);
            d[at] = (probs[at] - (labels[b] == i ? T(1) : T(0))) * scale;
        }
    }
    return d;
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct BatchNorm<float>;
template struct BatchNorm<double>;
template struct Dense<float>;
template struct Dense<double>;
template Tensor4<float> relu(const Tensor4<float>&);
template Tensor4<double> relu(const Tensor4<double>&);
template Tensor4<float> max_pool(const Tensor4<float>&, int, int, PoolIdx*);
template Tensor4<double> max_pool(const Tensor4<double>&, int, int, PoolIdx*);
template Tensor4<float> max_pool_backward(const Tensor4<float>&, int, int, int, int,
                                          const PoolIdx&);
template Tensor4<double> max_pool_backward(const Tensor4<double>&, int, int, int, int,
                                           const PoolIdx&);
template std::vector<float> global_avg_pool(const Tensor4<float>&);
template std::vector<double> global_avg_pool(const Tensor4<double>&);
template Tensor4<float> global_avg_pool_backward(const std::vector<float>&, int, int, int, int);
template Tensor4<double> global_avg_pool_backward(const std::vector<double>&, int, int, int,
                                                  int);
template void softmax_rows(std::vector<float>&, int, int);
template void softmax_rows(std::vector<double>&, int, int);
template float bce_loss(const std::vector<float>&, const std::vector<int>&, int);
template double bce_loss(const std::vector<double>&, const std::vector<int>&, int);
template std::vector<float> bce_softmax_grad(const std::vector<float>&, const std::vector<int>&,
                                             int);
template std::vector<double> bce_softmax_grad(const std::vector<double>&,
                                              const std::vector<int>&, int);

}  // namespace pedalnet::nn
