#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "pedalnet/binfile.hpp"
#include "pedalnet/errors.hpp"
#include "pedalnet/network.hpp"
#include "pedalnet/rng.hpp"

using namespace pedalnet;
using nn::Tensor4;

namespace {

Tensor4<float> random_input(int n, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor4<float> x(n, 1, h, w);
    for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return x;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("same padding keeps spatial dims for every first-layer kernel") {
    // all kernel shapes used across the architecture family
    const int kernels[7][2] = {{3, 3}, {9, 3}, {20, 3}, {45, 3}, {3, 10}, {3, 20}, {3, 30}};
    Tensor4<float> x = random_input(1, 128, 201, 1);
    for (const auto& k : kernels) {
        nn::Conv2d<float> conv;
        conv.in_c = 1;
        conv.out_c = 2;
        conv.kh = k[0];
        conv.kw = k[1];
        conv.init_shapes();
        Rng rng(7);
        for (auto& w : conv.weight) w = static_cast<float>(rng.uniform(-0.1, 0.1));
        Tensor4<float> out(1, 2, 128, 201);
        conv.forward_into(x, out, 0);
        CHECK(out.h == x.h);
        CHECK(out.w == x.w);
    }
}

TEST_CASE("multi-branch first layer concatenates to 21 channels") {
    nn::NetworkConfig cfg = nn::NetworkConfig::multi();
    CHECK(cfg.channels() == 21);
    CHECK(cfg.n_layers == 4);
    cfg.validate();

    nn::Network<float> net = nn::make_network<float>(cfg, 1);
    REQUIRE(net.blocks.size() == 4);
    CHECK(net.blocks[0].convs.size() == 3);
    CHECK(net.blocks[0].convs[0].kh == 45);
    CHECK(net.blocks[0].convs[1].kw == 10);
    CHECK(net.blocks[1].convs.size() == 1);
    CHECK(net.blocks[1].convs[0].in_c == 21);
    CHECK(net.blocks[1].convs[0].out_c == 21);
    CHECK(net.dense.in_dim == 21);
    CHECK(net.dense.out_dim == 2);

    // concatenated channel slices come from their own branches: zero one
    // branch's weights and only its 7 channels go flat
    for (auto& w : net.blocks[0].convs[1].weight) w = 0.0f;
    for (auto& b : net.blocks[0].convs[1].bias) b = 0.0f;
    Tensor4<float> x = random_input(1, 128, 201, 2);
    Tensor4<float> first(1, 21, 128, 201);
    int off = 0;
    for (const auto& conv : net.blocks[0].convs) {
        conv.forward_into(x, first, off);
        off += conv.out_c;
    }
    for (int ch = 7; ch < 14; ++ch)
        for (int i = 0; i < 16; ++i) CHECK(first.plane_ptr(0, ch)[i] == 0.0f);
    bool other_live = false;
    for (int i = 0; i < 128 * 201; ++i)
        if (first.plane_ptr(0, 0)[i] != 0.0f) other_live = true;
    CHECK(other_live);
}

TEST_CASE("config validation rejects impossible geometries") {
    nn::NetworkConfig cfg = nn::NetworkConfig::single(4, 3, 3, 4);
    cfg.input_h = 8;  // 4 pools of 2 need at least 16 rows
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    nn::NetworkConfig empty;
    empty.first_layer.clear();
    CHECK_THROWS_AS(empty.validate(), ConfigError);

    nn::NetworkConfig huge = nn::NetworkConfig::single(4, 300, 3, 1);
    CHECK_THROWS_AS(huge.validate(), ConfigError);
}

TEST_CASE("config text round trip") {
    nn::NetworkConfig cfg = nn::NetworkConfig::multi();
    const std::string text = cfg.to_text();
    nn::NetworkConfig back = nn::NetworkConfig::from_text(text);
    CHECK(back.first_layer.size() == 3);
    CHECK(back.first_layer[0].channels == 7);
    CHECK(back.first_layer[0].kh == 45);
    CHECK(back.first_layer[1].kw == 10);
    CHECK(back.n_layers == 4);
    CHECK(back.trunk_kh == 3);
    CHECK(back.pool_f == 2);
    CHECK(back.input_h == 128);
    CHECK(back.input_w == 201);
    CHECK(back.to_text() == text);

    CHECK_THROWS_AS(nn::NetworkConfig::from_text("layers=4\n"), ModelError);
    CHECK_THROWS_AS(nn::NetworkConfig::from_text("nonsense\n"), ModelError);
    CHECK_THROWS_AS(nn::NetworkConfig::from_text(text + "mystery=1\n"), ModelError);
    CHECK_THROWS_AS(
        nn::NetworkConfig::from_text("first_layer=axbxc\nlayers=1\ntrunk_kernel=3x3\n"
                                     "pool=2x2\ninput=16x16\n"),
        ModelError);
}

TEST_CASE("fresh network starts with identity batch norm and seeded weights") {
    nn::NetworkConfig cfg = nn::NetworkConfig::single(4, 3, 3, 2);
    cfg.input_h = 16;
    cfg.input_w = 20;
    nn::Network<float> net = nn::make_network<float>(cfg, 9);
    for (const auto& block : net.blocks) {
        for (float g : block.bn.gamma) CHECK(g == 1.0f);
        for (float b : block.bn.beta) CHECK(b == 0.0f);
        for (float m : block.bn.running_mean) CHECK(m == 0.0f);
        for (float v : block.bn.running_var) CHECK(v == 1.0f);
    }
    // conv weights drawn, not constant
    bool varied = false;
    for (std::size_t i = 1; i < net.blocks[0].convs[0].weight.size(); ++i)
        if (net.blocks[0].convs[0].weight[i] != net.blocks[0].convs[0].weight[0]) varied = true;
    CHECK(varied);

    nn::Network<float> again = nn::make_network<float>(cfg, 9);
    CHECK(again.blocks[0].convs[0].weight == net.blocks[0].convs[0].weight);
    nn::Network<float> other = nn::make_network<float>(cfg, 10);
    CHECK(other.blocks[0].convs[0].weight != net.blocks[0].convs[0].weight);
}

TEST_CASE("trainable and head parameter views") {
    nn::NetworkConfig cfg = nn::NetworkConfig::single(3, 3, 3, 2);
    cfg.input_h = 16;
    cfg.input_w = 20;
    nn::Network<float> net = nn::make_network<float>(cfg, 1);
    auto all = nn::trainable_params(net);
    // 2 blocks x (conv w, conv b, gamma, beta) + dense w, dense b
    CHECK(all.size() == 10);
    auto head = nn::head_params(net);
    REQUIRE(head.size() == 2);
    CHECK(head[0] == &net.dense.weight);
    CHECK(head[1] == &net.dense.bias);
}

TEST_CASE("infer emits probabilities and per-layer channel means") {
    nn::NetworkConfig cfg = nn::NetworkConfig::single(5, 3, 3, 3);
    cfg.input_h = 16;
    cfg.input_w = 24;
    nn::Network<float> net = nn::make_network<float>(cfg, 4);
    Tensor4<float> x = random_input(3, 16, 24, 8);

    nn::InferResult<float> r = nn::infer(net, x, true);
    REQUIRE(r.probs.size() == 6);
    for (int b = 0; b < 3; ++b) {
        CHECK(r.probs[2 * b] == doctest::Approx(1.0f - r.probs[2 * b + 1]));
        CHECK(r.probs[2 * b] >= 0.0f);
        CHECK(r.probs[2 * b] <= 1.0f);
    }
    CHECK(r.gap.size() == 3 * 5);
    CHECK(r.block_means.size() == 3 * 5 * 3);

    // infer twice, bitwise identical
    nn::InferResult<float> r2 = nn::infer(net, x, true);
    CHECK(r2.probs == r.probs);
    CHECK(r2.block_means == r.block_means);

    // block means of the last layer equal the GAP vector
    for (int b = 0; b < 3; ++b)
        for (int ch = 0; ch < 5; ++ch)
            CHECK(r.block_means[(static_cast<std::size_t>(b) * 3 + 2) * 5 + ch] ==
                  doctest::Approx(r.gap[static_cast<std::size_t>(b) * 5 + ch]));
}

TEST_CASE("checkpoint round trip is byte-identical and inference-stable") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "pedalnet_test_net.bin";
    const fs::path path2 = fs::temp_directory_path() / "pedalnet_test_net2.bin";

    nn::NetworkConfig cfg = nn::NetworkConfig::single(4, 5, 3, 2);
    cfg.input_h = 16;
    cfg.input_w = 20;
    nn::Network<float> net = nn::make_network<float>(cfg, 77);
    // make running stats non-trivial so the round trip covers them
    Rng rng(3);
    for (auto& block : net.blocks) {
        for (auto& m : block.bn.running_mean) m = static_cast<float>(rng.uniform(-1.0, 1.0));
        for (auto& v : block.bn.running_var) v = static_cast<float>(rng.uniform(0.5, 2.0));
    }

    nn::save_network(path.string(), net);
    nn::Network<float> back = nn::load_network(path.string());
    nn::save_network(path2.string(), back);
    CHECK(slurp(path) == slurp(path2));

    Tensor4<float> x = random_input(2, 16, 20, 5);
    nn::InferResult<float> a = nn::infer(net, x, false);
    nn::InferResult<float> b = nn::infer(back, x, false);
    CHECK(a.probs == b.probs);
    CHECK(a.gap == b.gap);

    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("checkpoint loader rejects damaged files") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "pedalnet_test_net_bad.bin";

    nn::NetworkConfig cfg = nn::NetworkConfig::single(3, 3, 3, 2);
    cfg.input_h = 16;
    cfg.input_w = 20;
    nn::Network<float> net = nn::make_network<float>(cfg, 1);
    nn::save_network(path.string(), net);
    auto bytes = slurp(path);

    auto write_bytes = [&](const std::vector<std::uint8_t>& b) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    };

    SUBCASE("truncation") {
        std::vector<std::uint8_t> part(bytes.begin(), bytes.end() - 5);
        write_bytes(part);
        CHECK_THROWS_AS(nn::load_network(path.string()), TruncatedFileError);
    }
    SUBCASE("future container version") {
        auto bad = bytes;
        bad[6] = '4';
        bad[7] = '2';
        write_bytes(bad);
        CHECK_THROWS_AS(nn::load_network(path.string()), VersionError);
    }
    SUBCASE("wrong payload kind") {
        binfile::Container c = binfile::read_file(path.string());
        c.kind = binfile::kKindSvm;
        binfile::write_file(path.string(), c);
        CHECK_THROWS_AS(nn::load_network(path.string()), ModelError);
    }
    SUBCASE("parameter block with the wrong length") {
        binfile::Container c = binfile::read_file(path.string());
        c.blocks[0].f32.push_back(0.0f);
        binfile::write_file(path.string(), c);
        CHECK_THROWS_AS(nn::load_network(path.string()), ShapeError);
    }
    SUBCASE("missing parameter blocks") {
        binfile::Container c = binfile::read_file(path.string());
        c.blocks.pop_back();
        binfile::write_file(path.string(), c);
        CHECK_THROWS_AS(nn::load_network(path.string()), ShapeError);
    }
    SUBCASE("non-positive running variance") {
        binfile::Container c = binfile::read_file(path.string());
        // block order per conv block: conv w, conv b, gamma, beta, mean, var
        c.blocks[5].f32[0] = 0.0f;
        binfile::write_file(path.string(), c);
        CHECK_THROWS_AS(nn::load_network(path.string()), ModelError);
    }
    fs::remove(path);
}
