#include "pedalnet/network.hpp"

#include <cmath>
#include <sstream>

#include "pedalnet/binfile.hpp"
#include "pedalnet/errors.hpp"
#include "pedalnet/rng.hpp"
#include "pedalnet/textio.hpp"

namespace pedalnet::nn {

int NetworkConfig::channels() const {
    int c = 0;
    for (const ConvSpec& s : first_layer) c += s.channels;
    return c;
}

void NetworkConfig::validate() const {
    if (first_layer.empty()) throw ConfigError("network: first layer needs at least one branch");
    for (const ConvSpec& s : first_layer)
        if (s.channels < 1 || s.kh < 1 || s.kw < 1)
            throw ConfigError("network: first-layer branch dims must be >= 1");
    if (n_layers < 1) throw ConfigError("network: need at least one conv layer");
    if (trunk_kh < 1 || trunk_kw < 1) throw ConfigError("network: trunk kernel dims must be >= 1");
    if (pool_f < 1 || pool_t < 1) throw ConfigError("network: pool dims must be >= 1");
    if (input_h < 1 || input_w < 1) throw ConfigError("network: input dims must be >= 1");

    int h = input_h, w = input_w;
    for (int layer = 0; layer < n_layers; ++layer) {
        if (layer == 0) {
            for (const ConvSpec& s : first_layer)
                if (s.kh > h || s.kw > w)
                    throw ConfigError("network: first-layer kernel exceeds input dims");
        } else if (trunk_kh > h || trunk_kw > w) {
            throw ConfigError("network: trunk kernel exceeds layer " + std::to_string(layer) +
                              " input dims");
        }
        if (pool_f > h || pool_t > w)
            throw ConfigError("network: pool exceeds layer " + std::to_string(layer) +
                              " input dims");
        h /= pool_f;
        w /= pool_t;
    }
}

std::string NetworkConfig::to_text() const {
    std::ostringstream out;
    out << "first_layer=";
    for (std::size_t i = 0; i < first_layer.size(); ++i) {
        if (i) out << ',';
        out << first_layer[i].channels << 'x' << first_layer[i].kh << 'x' << first_layer[i].kw;
    }
    out << "\nlayers=" << n_layers;
    out << "\ntrunk_kernel=" << trunk_kh << 'x' << trunk_kw;
    out << "\npool=" << pool_f << 'x' << pool_t;
    out << "\ninput=" << input_h << 'x' << input_w;
    out << '\n';
    return out.str();
}

namespace {

std::vector<int> parse_dims(const std::string& s, std::size_t count, const char* what) {
    const auto parts = textio::split(s, 'x');
    if (parts.size() != count)
        throw ModelError(std::string("network config: malformed ") + what + ": " + s);
    std::vector<int> dims;
    for (const std::string& p : parts) {
        long v = 0;
        try {
            v = textio::parse_long(p);
        } catch (const DataError&) {
            throw ModelError(std::string("network config: malformed ") + what + ": " + s);
        }
        dims.push_back(static_cast<int>(v));
    }
    return dims;
}

}  // namespace

NetworkConfig NetworkConfig::from_text(const std::string& text) {
    NetworkConfig cfg;
    cfg.first_layer.clear();
    bool seen_first = false, seen_layers = false, seen_trunk = false, seen_pool = false,
         seen_input = false;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ModelError("network config: expected key=value, got: " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "first_layer") {
            for (const std::string& branch : textio::split(value, ',')) {
                const auto d = parse_dims(branch, 3, "branch");
                cfg.first_layer.push_back({d[0], d[1], d[2]});
            }
            seen_first = true;
        } else if (key == "layers") {
            cfg.n_layers = static_cast<int>(textio::parse_long(value));
            seen_layers = true;
        } else if (key == "trunk_kernel") {
            const auto d = parse_dims(value, 2, "trunk_kernel");
            cfg.trunk_kh = d[0];
            cfg.trunk_kw = d[1];
            seen_trunk = true;
        } else if (key == "pool") {
            const auto d = parse_dims(value, 2, "pool");
            cfg.pool_f = d[0];
            cfg.pool_t = d[1];
            seen_pool = true;
        } else if (key == "input") {
            const auto d = parse_dims(value, 2, "input");
            cfg.input_h = d[0];
            cfg.input_w = d[1];
            seen_input = true;
        } else {
            throw ModelError("network config: unrecognized key: " + key);
        }
    }
    if (!(seen_first && seen_layers && seen_trunk && seen_pool && seen_input))
        throw ModelError("network config: missing keys");
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ModelError(std::string("network config: ") + e.what());
    }
    return cfg;
}

NetworkConfig NetworkConfig::multi() {
    NetworkConfig cfg;
    cfg.first_layer = {{7, 45, 3}, {7, 3, 10}, {7, 3, 3}};
    cfg.n_layers = 4;
    return cfg;
}

NetworkConfig NetworkConfig::single(int c, int kh, int kw, int n_layers) {
    NetworkConfig cfg;
    cfg.first_layer = {{c, kh, kw}};
    cfg.n_layers = n_layers;
    return cfg;
}

template <typename T>
Network<T> make_network(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Network<T> net;
    net.config = cfg;
    Rng rng(seed);
    const int c = cfg.channels();

    auto glorot = [&rng](std::vector<T>& w, int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (T& v : w) v = static_cast<T>(rng.uniform(-limit, limit));
    };

    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        ConvBlock<T> block;
        if (layer == 0) {
            for (std::size_t b = 0; b < cfg.first_layer.size(); ++b) {
                const ConvSpec& s = cfg.first_layer[b];
                Conv2d<T> conv;
                conv.name = "block0.branch" + std::to_string(b);
                conv.in_c = 1;
                conv.out_c = s.channels;
                conv.kh = s.kh;
                conv.kw = s.kw;
                conv.init_shapes();
                glorot(conv.weight, conv.in_c * s.kh * s.kw, s.channels * s.kh * s.kw);
                block.convs.push_back(std::move(conv));
            }
        } else {
            Conv2d<T> conv;
            conv.name = "block" + std::to_string(layer);
            conv.in_c = c;
            conv.out_c = c;
            conv.kh = cfg.trunk_kh;
            conv.kw = cfg.trunk_kw;
            conv.init_shapes();
            glorot(conv.weight, c * cfg.trunk_kh * cfg.trunk_kw, c * cfg.trunk_kh * cfg.trunk_kw);
            block.convs.push_back(std::move(conv));
        }
        block.bn.c = c;
        block.bn.init_shapes();
        net.blocks.push_back(std::move(block));
    }

    net.dense.in_dim = c;
    net.dense.out_dim = 2;
    net.dense.init_shapes();
    glorot(net.dense.weight, c, 2);
    return net;
}

template <typename T>
std::vector<std::vector<T>*> trainable_params(Network<T>& net) {
    std::vector<std::vector<T>*> out;
    for (ConvBlock<T>& block : net.blocks) {
        for (Conv2d<T>& conv : block.convs) {
            out.push_back(&conv.weight);
            out.push_back(&conv.bias);
        }
        out.push_back(&block.bn.gamma);
        out.push_back(&block.bn.beta);
    }
    out.push_back(&net.dense.weight);
    out.push_back(&net.dense.bias);
    return out;
}

template <typename T>
std::vector<std::vector<T>*> head_params(Network<T>& net) {
    return {&net.dense.weight, &net.dense.bias};
}

template <typename T>
ForwardCache<T> forward_train(Network<T>& net, const Tensor4<T>& x, bool update_running) {
    if (x.c != 1 || x.h != net.config.input_h || x.w != net.config.input_w)
        throw ShapeError("network input: expected 1x" + std::to_string(net.config.input_h) + "x" +
                         std::to_string(net.config.input_w) + ", got " + std::to_string(x.c) +
                         "x" + std::to_string(x.h) + "x" + std::to_string(x.w));
    ForwardCache<T> cache;
    cache.blocks.resize(net.blocks.size());
    const Tensor4<T>* cur = &x;
    const int c = net.config.channels();
    for (std::size_t layer = 0; layer < net.blocks.size(); ++layer) {
        ConvBlock<T>& block = net.blocks[layer];
        BlockCache<T>& bc = cache.blocks[layer];
        bc.conv_out = Tensor4<T>(cur->n, c, cur->h, cur->w);
        int off = 0;
        for (const Conv2d<T>& conv : block.convs) {
            conv.forward_into(*cur, bc.conv_out, off);
            off += conv.out_c;
        }
        Tensor4<T> bn_out =
            block.bn.forward_train(bc.conv_out, bc.mean, bc.var, update_running);
        for (T& v : bn_out.v)
            if (v < T(0)) v = T(0);
        bc.pool_out = max_pool(bn_out, net.config.pool_f, net.config.pool_t, &bc.pool_idx);
        cur = &bc.pool_out;
    }
    cache.gap = global_avg_pool(*cur);
    cache.probs = net.dense.forward(cache.gap, cur->n);
    softmax_rows(cache.probs, cur->n, 2);
    return cache;
}

template <typename T>
std::vector<std::vector<T>> backward(const Network<T>& net, const Tensor4<T>& x,
                                     const std::vector<int>& labels,
                                     const ForwardCache<T>& cache) {
    std::vector<std::vector<T>> grads;
    for (const ConvBlock<T>& block : net.blocks) {
        for (const Conv2d<T>& conv : block.convs)
            for (const std::vector<T>* p : {&conv.weight, &conv.bias})
                grads.emplace_back(p->size(), T(0));
        grads.emplace_back(block.bn.gamma.size(), T(0));
        grads.emplace_back(block.bn.beta.size(), T(0));
    }
    grads.emplace_back(net.dense.weight.size(), T(0));
    grads.emplace_back(net.dense.bias.size(), T(0));

    std::vector<std::size_t> block_base(net.blocks.size());
    std::size_t slot = 0;
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
        block_base[b] = slot;
        slot += 2 * net.blocks[b].convs.size() + 2;
    }

    const int n = x.n;
    const std::vector<T> dlogits = bce_softmax_grad(cache.probs, labels, 2);
    std::vector<T> dgap;
    net.dense.backward(cache.gap, n, dlogits, grads[slot], grads[slot + 1], &dgap);

    const Tensor4<T>& last_pool = cache.blocks.back().pool_out;
    Tensor4<T> d_pool =
        global_avg_pool_backward(dgap, n, last_pool.c, last_pool.h, last_pool.w);

    for (std::size_t layer = net.blocks.size(); layer-- > 0;) {
        const ConvBlock<T>& block = net.blocks[layer];
        const BlockCache<T>& bc = cache.blocks[layer];
        Tensor4<T> d = max_pool_backward(d_pool, bc.conv_out.h, bc.conv_out.w,
                                         net.config.pool_f, net.config.pool_t, bc.pool_idx);

        const std::size_t base = block_base[layer];
        const std::size_t gamma_slot = base + 2 * block.convs.size();
        block.bn.backward(bc.conv_out, bc.mean, bc.var, d, grads[gamma_slot],
                          grads[gamma_slot + 1], true);

        const Tensor4<T>& input = layer == 0 ? x : cache.blocks[layer - 1].pool_out;
        Tensor4<T> dx;
        if (layer > 0) dx = Tensor4<T>(input.n, input.c, input.h, input.w);
        int off = 0;
        for (std::size_t ci = 0; ci < block.convs.size(); ++ci) {
            block.convs[ci].backward(input, d, off, grads[base + 2 * ci],
                                     grads[base + 2 * ci + 1], layer > 0 ? &dx : nullptr);
            off += block.convs[ci].out_c;
        }
        d_pool = std::move(dx);
    }
    return grads;
}

template <typename T>
InferResult<T> infer(const Network<T>& net, const Tensor4<T>& x, bool want_block_means) {
    if (x.c != 1 || x.h != net.config.input_h || x.w != net.config.input_w)
        throw ShapeError("network input: expected 1x" + std::to_string(net.config.input_h) + "x" +
                         std::to_string(net.config.input_w) + ", got " + std::to_string(x.c) +
                         "x" + std::to_string(x.h) + "x" + std::to_string(x.w));
    InferResult<T> result;
    const int c = net.config.channels();
    const int l = net.config.n_layers;
    if (want_block_means)
        result.block_means.assign(static_cast<std::size_t>(x.n) * c * l, T(0));

    Tensor4<T> cur;
    const Tensor4<T>* in = &x;
    for (std::size_t layer = 0; layer < net.blocks.size(); ++layer) {
        const ConvBlock<T>& block = net.blocks[layer];
        Tensor4<T> conv_out(in->n, c, in->h, in->w);
        int off = 0;
        for (const Conv2d<T>& conv : block.convs) {
            conv.forward_into(*in, conv_out, off);
            off += conv.out_c;
        }
        Tensor4<T> bn_out = block.bn.forward_infer(conv_out);
        for (T& v : bn_out.v)
            if (v < T(0)) v = T(0);
        cur = max_pool(bn_out, net.config.pool_f, net.config.pool_t, nullptr);
        if (want_block_means) {
            const std::vector<T> means = global_avg_pool(cur);
            for (int b = 0; b < cur.n; ++b)
                for (int ch = 0; ch < c; ++ch)
                    result.block_means[(static_cast<std::size_t>(b) * l +
                                        layer) * c + ch] =
                        means[static_cast<std::size_t>(b) * c + ch];
        }
        in = &cur;
    }
    result.gap = global_avg_pool(cur);
    result.probs = net.dense.forward(result.gap, cur.n);
    softmax_rows(result.probs, cur.n, 2);
    return result;
}

template <typename T>
Tensor4<T> make_batch(const std::vector<const dsp::MelSpectrogram*>& mels) {
    if (mels.empty()) throw DataError("make_batch: empty batch");
    const int h = mels[0]->n_mels;
    const int w = mels[0]->n_frames;
    Tensor4<T> out(static_cast<int>(mels.size()), 1, h, w);
    for (std::size_t i = 0; i < mels.size(); ++i) {
        if (mels[i]->n_mels != h || mels[i]->n_frames != w)
            throw ShapeError("make_batch: inconsistent melspectrogram shapes");
        T* dst = out.plane_ptr(static_cast<int>(i), 0);
        for (std::size_t j = 0; j < mels[i]->values.size(); ++j)
            dst[j] = static_cast<T>(mels[i]->values[j]);
    }
    return out;
}

namespace {

// Checkpoint block order; must stay stable across versions.
std::vector<const std::vector<float>*> checkpoint_tensors(const Network<float>& net) {
    std::vector<const std::vector<float>*> out;
    for (const ConvBlock<float>& block : net.blocks) {
        for (const Conv2d<float>& conv : block.convs) {
            out.push_back(&conv.weight);
            out.push_back(&conv.bias);
        }
        out.push_back(&block.bn.gamma);
        out.push_back(&block.bn.beta);
        out.push_back(&block.bn.running_mean);
        out.push_back(&block.bn.running_var);
    }
    out.push_back(&net.dense.weight);
    out.push_back(&net.dense.bias);
    return out;
}

std::vector<std::vector<float>*> checkpoint_tensors_mut(Network<float>& net) {
    std::vector<std::vector<float>*> out;
    for (ConvBlock<float>& block : net.blocks) {
        for (Conv2d<float>& conv : block.convs) {
            out.push_back(&conv.weight);
            out.push_back(&conv.bias);
        }
        out.push_back(&block.bn.gamma);
        out.push_back(&block.bn.beta);
        out.push_back(&block.bn.running_mean);
        out.push_back(&block.bn.running_var);
    }
    out.push_back(&net.dense.weight);
    out.push_back(&net.dense.bias);
    return out;
}

}  // namespace

std::vector<std::uint8_t> network_bytes(const Network<float>& net) {
    binfile::Container box;
    box.kind = binfile::kKindNetwork;
    box.config_text = net.config.to_text();
    for (const std::vector<float>* t : checkpoint_tensors(net)) box.add_f32(*t);
    return binfile::serialize(box);
}

void save_network(const std::string& path, const Network<float>& net) {
    binfile::Container box;
    box.kind = binfile::kKindNetwork;
    box.config_text = net.config.to_text();
    for (const std::vector<float>* t : checkpoint_tensors(net)) box.add_f32(*t);
    binfile::write_file(path, box);
}

Network<float> load_network(const std::string& path) {
    const binfile::Container box = binfile::read_file(path);
    if (box.kind != binfile::kKindNetwork)
        throw ModelError("load_network: " + path + " is not a network checkpoint");
    const NetworkConfig cfg = NetworkConfig::from_text(box.config_text);
    Network<float> net = make_network<float>(cfg, 0);
    const auto tensors = checkpoint_tensors_mut(net);
    if (box.blocks.size() != tensors.size())
        throw ShapeError("load_network: checkpoint has " + std::to_string(box.blocks.size()) +
                         " parameter blocks, expected " + std::to_string(tensors.size()));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (box.blocks[i].dtype != binfile::Dtype::f32)
            throw ModelError("load_network: parameter block " + std::to_string(i) +
                             " is not f32");
        if (box.blocks[i].f32.size() != tensors[i]->size())
            throw ShapeError("load_network: parameter block " + std::to_string(i) + " has " +
                             std::to_string(box.blocks[i].f32.size()) + " values, expected " +
                             std::to_string(tensors[i]->size()));
        *tensors[i] = box.blocks[i].f32;
    }
    for (const ConvBlock<float>& block : net.blocks)
        for (float v : block.bn.running_var)
            if (!(v > 0.0f))
                throw ModelError("load_network: running variance must stay positive");
    return net;
}

template Network<float> make_network(const NetworkConfig&, std::uint64_t);
template Network<double> make_network(const NetworkConfig&, std::uint64_t);
template std::vector<std::vector<float>*> trainable_params(Network<float>&);
template std::vector<std::vector<double>*> trainable_params(Network<double>&);
template std::vector<std::vector<float>*> head_params(Network<float>&);
template std::vector<std::vector<double>*> head_params(Network<double>&);
template ForwardCache<float> forward_train(Network<float>&, const Tensor4<float>&, bool);
template ForwardCache<double> forward_train(Network<double>&, const Tensor4<double>&, bool);
template std::vector<std::vector<float>> backward(const Network<float>&, const Tensor4<float>&,
                                                  const std::vector<int>&,
                                                  const ForwardCache<float>&);
template std::vector<std::vector<double>> backward(const Network<double>&,
                                                   const Tensor4<double>&,
                                                   const std::vector<int>&,
                                                   const ForwardCache<double>&);
template InferResult<float> infer(const Network<float>&, const Tensor4<float>&, bool);
template InferResult<double> infer(const Network<double>&, const Tensor4<double>&, bool);
template Tensor4<float> make_batch(const std::vector<const dsp::MelSpectrogram*>&);
template Tensor4<double> make_batch(const std::vector<const dsp::MelSpectrogram*>&);

}  // namespace pedalnet::nn
