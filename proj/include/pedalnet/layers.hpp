#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pedalnet/tensor.hpp"

namespace pedalnet::nn {

// Same-padded cross-correlation. Even kernel dims pad (k-1)/2 before and the
// remainder after, so output spatial dims always equal input dims.
template <typename T>
struct Conv2d {
    std::string name;
    int in_c = 1, out_c = 1, kh = 1, kw = 1;
    std::vector<T> weight;  // [out_c][in_c][kh][kw]
    std::vector<T> bias;    // [out_c]

    void init_shapes();

    // Writes this conv's out_c channels into `out` starting at channel_offset.
    void forward_into(const Tensor4<T>& x, Tensor4<T>& out, int channel_offset) const;

    // Reads the matching channel slice of `dout`; accumulates dweight/dbias and,
    // when dx is non-null, the input gradient.
    void backward(const Tensor4<T>& x, const Tensor4<T>& dout, int channel_offset,
                  std::vector<T>& dweight, std::vector<T>& dbias, Tensor4<T>* dx) const;
};

template <typename T>
struct BatchNorm {
    int c = 1;
    std::vector<T> gamma, beta, running_mean, running_var;
    T momentum = T(0.99);
    T eps = T(1e-5);

    void init_shapes();

    Tensor4<T> forward_train(const Tensor4<T>& x, std::vector<T>& batch_mean,
                             std::vector<T>& batch_var, bool update_running);
    Tensor4<T> forward_infer(const Tensor4<T>& x) const;

    // Overwrites `d` (gradient w.r.t. this layer's output) with the gradient
    // w.r.t. `x`, accumulating dgamma/dbeta. With relu_mask set, `d` is taken to
    // be the gradient past a following ReLU and is zeroed where the batch-norm
    // output was <= 0.
    void backward(const Tensor4<T>& x, const std::vector<T>& batch_mean,
                  const std::vector<T>& batch_var, Tensor4<T>& d, std::vector<T>& dgamma,
                  std::vector<T>& dbeta, bool relu_mask) const;
};

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x);

// Argmax position within each pooling window, row-major.
struct PoolIdx {
    std::vector<std::uint8_t> arg;
};

template <typename T>
Tensor4<T> max_pool(const Tensor4<T>& x, int pf, int pt, PoolIdx* idx);

template <typename T>
Tensor4<T> max_pool_backward(const Tensor4<T>& dout, int in_h, int in_w, int pf, int pt,
                             const PoolIdx& idx);

// Mean over spatial positions per channel -> [n*c], row-major by item.
template <typename T>
std::vector<T> global_avg_pool(const Tensor4<T>& x);

template <typename T>
Tensor4<T> global_avg_pool_backward(const std::vector<T>& d, int n, int c, int h, int w);

template <typename T>
struct Dense {
    int in_dim = 1, out_dim = 2;
    std::vector<T> weight;  // [out][in]
    std::vector<T> bias;

    void init_shapes();
    std::vector<T> forward(const std::vector<T>& x, int n) const;  // logits [n*out]
    void backward(const std::vector<T>& x, int n, const std::vector<T>& dlogits,
                  std::vector<T>& dweight, std::vector<T>& dbias, std::vector<T>* dx) const;
};

// In-place stabilized softmax over each row of k logits.
template <typename T>
void softmax_rows(std::vector<T>& logits, int n, int k);

// Mean over the batch of -log p(true class), probabilities clamped to
// [1e-7, 1 - 1e-7].
template <typename T>
T bce_loss(const std::vector<T>& probs, const std::vector<int>& labels, int k = 2);

// Gradient of bce_loss w.r.t. the logits feeding the softmax: (p - y) / n.
template <typename T>
std::vector<T> bce_softmax_grad(const std::vector<T>& probs, const std::vector<int>& labels,
                                int k = 2);

}  // namespace pedalnet::nn
