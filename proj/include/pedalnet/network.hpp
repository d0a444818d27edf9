#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pedalnet/dsp.hpp"
#include "pedalnet/layers.hpp"
#include "pedalnet/tensor.hpp"

namespace pedalnet::nn {

struct ConvSpec {
    int channels = 1;
    int kh = 1;
    int kw = 1;
};

// Architecture description. Every conv block is conv -> batch norm -> ReLU ->
// max pool; the first block may hold several parallel branches concatenated on
// channels, the remaining n_layers - 1 trunk blocks use one conv each with the
// trunk kernel and the full channel count.
struct NetworkConfig {
    std::vector<ConvSpec> first_layer;
    int n_layers = 4;
    int trunk_kh = 3, trunk_kw = 3;
    int pool_f = 2, pool_t = 2;
    int input_h = 128, input_w = 201;

    int channels() const;
    void validate() const;  // throws ConfigError
    std::string to_text() const;
    static NetworkConfig from_text(const std::string& text);

    // First layer (7,(45,3)) + (7,(3,10)) + (7,(3,3)), four blocks total.
    static NetworkConfig multi();
    // Single-branch variant: first layer (c,(kh,kw)), n_layers blocks.
    static NetworkConfig single(int c, int kh, int kw, int n_layers);
};

template <typename T>
struct ConvBlock {
    std::vector<Conv2d<T>> convs;
    BatchNorm<T> bn;
};

template <typename T>
struct Network {
    NetworkConfig config;
    std::vector<ConvBlock<T>> blocks;
    Dense<T> dense;
};

template <typename T>
Network<T> make_network(const NetworkConfig& cfg, std::uint64_t seed);

// Trainable parameter tensors in fixed order: per block each conv's weight and
// bias then gamma and beta, finally the dense weight and bias. Running stats
// are not trainable.
template <typename T>
std::vector<std::vector<T>*> trainable_params(Network<T>& net);

template <typename T>
std::vector<std::vector<T>*> head_params(Network<T>& net);

template <typename T>
struct BlockCache {
    Tensor4<T> conv_out;  // pre-batch-norm
    std::vector<T> mean, var;
    PoolIdx pool_idx;
    Tensor4<T> pool_out;
};

template <typename T>
struct ForwardCache {
    std::vector<BlockCache<T>> blocks;
    std::vector<T> gap;    // [n * channels]
    std::vector<T> probs;  // [n * 2]
};

// Train-mode forward with cached activations for backward.
template <typename T>
ForwardCache<T> forward_train(Network<T>& net, const Tensor4<T>& x, bool update_running = true);

// Gradients in trainable_params order.
template <typename T>
std::vector<std::vector<T>> backward(const Network<T>& net, const Tensor4<T>& x,
                                     const std::vector<int>& labels,
                                     const ForwardCache<T>& cache);

template <typename T>
struct InferResult {
    std::vector<T> probs;        // [n * 2]; index 1 is the pedal class
    std::vector<T> gap;          // [n * channels]
    std::vector<T> block_means;  // [n * channels * n_layers] when requested
};

template <typename T>
InferResult<T> infer(const Network<T>& net, const Tensor4<T>& x, bool want_block_means = false);

// Stacks equally shaped melspectrograms into a 1-channel batch.
template <typename T>
Tensor4<T> make_batch(const std::vector<const dsp::MelSpectrogram*>& mels);

std::vector<std::uint8_t> network_bytes(const Network<float>& net);
void save_network(const std::string& path, const Network<float>& net);
Network<float> load_network(const std::string& path);

}  // namespace pedalnet::nn
