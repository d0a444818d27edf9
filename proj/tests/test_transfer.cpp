#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "pedalnet/errors.hpp"
#include "pedalnet/rng.hpp"
#include "pedalnet/transfer.hpp"

using namespace pedalnet;

namespace {

dsp::MelSpectrogram random_mel(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    dsp::MelSpectrogram mel;
    mel.n_mels = h;
    mel.n_frames = w;
    mel.values.resize(static_cast<std::size_t>(h) * w);
    for (auto& v : mel.values) v = rng.uniform(-80.0, 0.0);
    return mel;
}

Signal random_signal(double seconds, std::uint64_t seed) {
    Rng rng(seed);
    Signal s;
    s.samples.resize(static_cast<std::size_t>(std::llround(seconds * s.sample_rate)));
    for (auto& v : s.samples) v = rng.uniform(-0.5, 0.5);
    return s;
}

// Re-derives extract_features with the public layer primitives:
// conv -> batch norm (inference stats) -> ReLU -> max pool, channel means of
// each block's pooled output, concatenated in block order.
std::vector<double> manual_features(const nn::Network<float>& net,
                                    const dsp::MelSpectrogram& mel) {
    nn::Tensor4<float> x(1, 1, mel.n_mels, mel.n_frames);
    for (std::size_t i = 0; i < mel.values.size(); ++i) x.v[i] = static_cast<float>(mel.values[i]);

    std::vector<double> out;
    const int c = net.config.channels();
    for (const auto& block : net.blocks) {
        nn::Tensor4<float> conv_out(x.n, c, x.h, x.w);
        int off = 0;
        for (const auto& conv : block.convs) {
            conv.forward_into(x, conv_out, off);
            off += conv.out_c;
        }
        nn::Tensor4<float> act = nn::relu(block.bn.forward_infer(conv_out));
        x = nn::max_pool(act, net.config.pool_f, net.config.pool_t, nullptr);
        for (float m : nn::global_avg_pool(x)) out.push_back(static_cast<double>(m));
    }
    return out;
}

}  // namespace

TEST_CASE("feature dimension is channels times layers") {
    nn::Network<float> multi = nn::make_network<float>(nn::NetworkConfig::multi(), 1);
    auto f = transfer::extract_features(multi, random_mel(128, 201, 2));
    CHECK(f.size() == 84);  // 21 channels x 4 blocks

    nn::NetworkConfig reduced = nn::NetworkConfig::single(12, 3, 3, 3);
    nn::Network<float> small = nn::make_network<float>(reduced, 1);
    auto g = transfer::extract_features(small, random_mel(128, 201, 3));
    CHECK(g.size() == 36);  // 12 channels x 3 blocks

    auto again = transfer::extract_features(small, random_mel(128, 201, 3));
    CHECK(again == g);
}

TEST_CASE("extract_features matches a manual layer-by-layer forward") {
    nn::NetworkConfig cfg = nn::NetworkConfig::single(6, 3, 3, 2);
    cfg.input_h = 32;
    cfg.input_w = 40;
    nn::Network<float> net = nn::make_network<float>(cfg, 7);
    // push running stats off their init values so forward_infer does real work
    Rng rng(8);
    for (auto& block : net.blocks) {
        for (auto& m : block.bn.running_mean) m = static_cast<float>(rng.uniform(-0.5, 0.5));
        for (auto& v : block.bn.running_var) v = static_cast<float>(rng.uniform(0.5, 2.0));
        for (auto& g : block.bn.gamma) g = static_cast<float>(rng.uniform(0.5, 1.5));
        for (auto& b : block.bn.beta) b = static_cast<float>(rng.uniform(-0.3, 0.3));
    }

    const dsp::MelSpectrogram mel = random_mel(32, 40, 9);
    CHECK(transfer::extract_features(net, mel) == manual_features(net, mel));

    SUBCASE("constant zero input still produces finite features") {
        dsp::MelSpectrogram zero;
        zero.n_mels = 32;
        zero.n_frames = 40;
        zero.values.assign(32 * 40, 0.0);
        auto f = transfer::extract_features(net, zero);
        CHECK(f == manual_features(net, zero));
        for (double v : f) CHECK(std::isfinite(v));
    }
}

TEST_CASE("features depend only on layers up to their block") {
    nn::NetworkConfig cfg = nn::NetworkConfig::single(5, 3, 3, 3);
    cfg.input_h = 32;
    cfg.input_w = 40;
    nn::Network<float> net = nn::make_network<float>(cfg, 11);
    const dsp::MelSpectrogram mel = random_mel(32, 40, 12);
    const auto base = transfer::extract_features(net, mel);
    REQUIRE(base.size() == 15);

    // the dense head plays no part in the features
    nn::Network<float> headless = net;
    for (auto& w : headless.dense.weight) w += 1.0f;
    CHECK(transfer::extract_features(headless, mel) == base);

    // perturbing the last block leaves the first two blocks' features alone;
    // a bias shift moves the whole channel, so even a mostly dead ReLU map
    // (possible at random init) registers the change
    nn::Network<float> bumped = net;
    bumped.blocks[2].convs[0].bias[0] += 50.0f;
    const auto shifted = transfer::extract_features(bumped, mel);
    for (std::size_t i = 0; i < 10; ++i) CHECK(shifted[i] == base[i]);
    bool tail_changed = false;
    for (std::size_t i = 10; i < 15; ++i)
        if (shifted[i] != base[i]) tail_changed = true;
    CHECK(tail_changed);
}

TEST_CASE("frame features walk the signal at the configured rate") {
    nn::NetworkConfig cfg = nn::NetworkConfig::single(4, 3, 3, 2);
    nn::Network<float> net = nn::make_network<float>(cfg, 2);
    const Signal s = random_signal(10.0, 5);
    transfer::FrameFeatures ff = transfer::extract_frame_features(net, s, "rec");

    CHECK(ff.recording_id == "rec");
    REQUIRE(ff.frame_times.size() == 98);
    CHECK(ff.features.size() == 98);
    CHECK(ff.gap.size() == 98);
    CHECK(ff.direct_p1.size() == 98);
    for (std::size_t k = 0; k < ff.frame_times.size(); ++k) {
        CHECK(ff.frame_times[k] ==
              doctest::Approx(0.1 * static_cast<double>(k) + 0.15).epsilon(1e-9));
        CHECK(ff.features[k].size() == 8);  // 4 channels x 2 layers
        CHECK(ff.gap[k].size() == 4);
        CHECK(ff.direct_p1[k] >= 0.0);
        CHECK(ff.direct_p1[k] <= 1.0);
        // last block's features are the head input
        for (int ch = 0; ch < 4; ++ch)
            CHECK(ff.features[k][4 + static_cast<std::size_t>(ch)] ==
                  static_cast<double>(ff.gap[k][static_cast<std::size_t>(ch)]));
    }
}

TEST_CASE("a window-long signal yields exactly one frame") {
    nn::NetworkConfig cfg = nn::NetworkConfig::single(4, 3, 3, 2);
    nn::Network<float> net = nn::make_network<float>(cfg, 2);
    Signal s = random_signal(0.3, 6);
    transfer::FrameFeatures ff = transfer::extract_frame_features(net, s, "one");
    CHECK(ff.frame_times.size() == 1);
    CHECK(ff.frame_times[0] == doctest::Approx(0.15));

    s.samples.pop_back();
    CHECK_THROWS_AS(transfer::extract_frame_features(net, s, "short"), DataError);
    CHECK_THROWS_AS(transfer::extract_frame_features(net, random_signal(1.0, 6), "bad", -0.3),
                    ConfigError);
    CHECK_THROWS_AS(
        transfer::extract_frame_features(net, random_signal(1.0, 6), "bad", 0.3, 0.0),
        ConfigError);
}

TEST_CASE("each frame equals the standalone window computation") {
    nn::NetworkConfig cfg = nn::NetworkConfig::single(4, 3, 3, 2);
    nn::Network<float> net = nn::make_network<float>(cfg, 3);
    const Signal s = random_signal(1.0, 7);
    transfer::FrameFeatures ff = transfer::extract_frame_features(net, s, "frames");
    REQUIRE(ff.frame_times.size() == 8);

    const std::size_t win = 13230, hop = 4410;
    for (std::size_t k = 0; k < ff.frame_times.size(); ++k) {
        Signal window;
        window.sample_rate = s.sample_rate;
        window.samples.assign(s.samples.begin() + static_cast<std::ptrdiff_t>(k * hop),
                              s.samples.begin() + static_cast<std::ptrdiff_t>(k * hop + win));
        const dsp::MelSpectrogram mel = dsp::melspectrogram(fit_to_duration(window, 2.0), {});
        CHECK(transfer::extract_features(net, mel) == ff.features[k]);
    }
}

TEST_CASE("features csv round trip") {
    transfer::FrameFeatures f;
    f.recording_id = "op28no4";
    f.frame_times = {0.15, 0.25, 0.35};
    f.features = {{1.5, -2.25, 0.125}, {0.0, 3.5, -1.0}, {0.75, 0.5, 0.25}};
    std::vector<int> labels = {1, 0, 1};

    SUBCASE("with labels") {
        const std::string csv = transfer::features_csv(f, &labels);
        CHECK(csv.rfind("recording_id,frame_time_s,f0,f1,f2,label\n", 0) == 0);
        transfer::ParsedFeatures p = transfer::parse_features_csv(csv);
        REQUIRE(p.features.size() == 3);
        CHECK(p.recording_ids[1] == "op28no4");
        CHECK(p.frame_times == f.frame_times);
        CHECK(p.features == f.features);
        CHECK(p.labels == labels);
    }
    SUBCASE("without labels") {
        transfer::ParsedFeatures p = transfer::parse_features_csv(transfer::features_csv(f));
        CHECK(p.labels.empty());
        CHECK(p.features == f.features);
    }
    SUBCASE("label count must match") {
        std::vector<int> two = {1, 0};
        CHECK_THROWS_AS(transfer::features_csv(f, &two), DataError);
    }
    SUBCASE("malformed input is rejected") {
        CHECK_THROWS_AS(transfer::parse_features_csv(""), DataError);
        CHECK_THROWS_AS(transfer::parse_features_csv("time,stuff\n"), DataError);
        CHECK_THROWS_AS(
            transfer::parse_features_csv("recording_id,frame_time_s,f9\nid,0.1,2\n"), DataError);
        CHECK_THROWS_AS(
            transfer::parse_features_csv("recording_id,frame_time_s,f0\nid,0.1\n"), DataError);
        CHECK_THROWS_AS(transfer::parse_features_csv(
                            "recording_id,frame_time_s,f0,label\nid,0.1,2,7\n"),
                        DataError);
    }
}
