#include <cmath>
#include <vector>

#include "doctest.h"
#include "pedalnet/errors.hpp"
#include "pedalnet/layers.hpp"

using namespace pedalnet;
using nn::Tensor4;

namespace {

Tensor4<double> filled(int n, int c, int h, int w, double start = 1.0, double step = 1.0) {
    Tensor4<double> t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i) t.v[i] = start + step * static_cast<double>(i);
    return t;
}

}  // namespace

TEST_CASE("1x1 conv with unit weight is the identity") {
    nn::Conv2d<double> conv;
    conv.in_c = conv.out_c = 1;
    conv.kh = conv.kw = 1;
    conv.init_shapes();
    conv.weight[0] = 1.0;

    Tensor4<double> x = filled(2, 1, 3, 4, -5.0, 0.7);
    Tensor4<double> y(2, 1, 3, 4);
    conv.forward_into(x, y, 0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.v[i] == doctest::Approx(x.v[i]));
}

TEST_CASE("conv on zero input yields the bias everywhere") {
    nn::Conv2d<double> conv;
    conv.in_c = 2;
    conv.out_c = 3;
    conv.kh = 3;
    conv.kw = 3;
    conv.init_shapes();
    for (auto& w : conv.weight) w = 0.37;
    conv.bias = {1.5, -2.0, 0.0};

    Tensor4<double> x(1, 2, 4, 5);
    Tensor4<double> y(1, 3, 4, 5);
    conv.forward_into(x, y, 0);
    for (int ch = 0; ch < 3; ++ch)
        for (int i = 0; i < 4 * 5; ++i)
            CHECK(y.plane_ptr(0, ch)[i] == doctest::Approx(conv.bias[ch]));
}

TEST_CASE("2x2 conv matches a hand-worked correlation with uneven padding") {
    // Even kernel dims pad (k-1)/2 = 0 before and 1 after, so tap (dy,dx)
    // reads in(y+dy, x+dx) with zeros past the edge.
    nn::Conv2d<double> conv;
    conv.in_c = conv.out_c = 1;
    conv.kh = conv.kw = 2;
    conv.init_shapes();
    conv.weight = {1.0, 0.0, 0.0, 1.0};  // taps (0,0) and (1,1)
    conv.bias = {0.5};

    Tensor4<double> x = filled(1, 1, 3, 3);  // 1..9 row-major
    Tensor4<double> y(1, 1, 3, 3);
    conv.forward_into(x, y, 0);

    const double want[3][3] = {{6.5, 8.5, 3.5}, {12.5, 14.5, 6.5}, {7.5, 8.5, 9.5}};
    for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col)
            CHECK(y.at(0, 0, r, col) == doctest::Approx(want[r][col]));
}

TEST_CASE("conv channel_offset writes into a slice of a wider tensor") {
    nn::Conv2d<double> conv;
    conv.in_c = 1;
    conv.out_c = 2;
    conv.kh = conv.kw = 1;
    conv.init_shapes();
    conv.weight = {2.0, -1.0};

    Tensor4<double> x = filled(1, 1, 2, 2);
    Tensor4<double> y(1, 4, 2, 2);
    conv.forward_into(x, y, 1);
    for (int i = 0; i < 4; ++i) {
        CHECK(y.plane_ptr(0, 0)[i] == 0.0);
        CHECK(y.plane_ptr(0, 1)[i] == doctest::Approx(2.0 * x.v[static_cast<std::size_t>(i)]));
        CHECK(y.plane_ptr(0, 2)[i] == doctest::Approx(-x.v[static_cast<std::size_t>(i)]));
        CHECK(y.plane_ptr(0, 3)[i] == 0.0);
    }
}

TEST_CASE("conv rejects mismatched channels and oversized kernels") {
    nn::Conv2d<double> conv;
    conv.in_c = 2;
    conv.out_c = 1;
    conv.kh = conv.kw = 3;
    conv.init_shapes();
    Tensor4<double> bad_c(1, 3, 4, 4);
    Tensor4<double> out(1, 1, 4, 4);
    CHECK_THROWS_AS(conv.forward_into(bad_c, out, 0), ShapeError);
    Tensor4<double> tiny(1, 2, 2, 2);
    Tensor4<double> out2(1, 1, 2, 2);
    CHECK_THROWS_AS(conv.forward_into(tiny, out2, 0), ShapeError);
}

TEST_CASE("batch norm standardizes a two-point batch") {
    nn::BatchNorm<double> bn;
    bn.c = 1;
    bn.init_shapes();

    Tensor4<double> x(2, 1, 1, 1);
    x.v = {1.0, 3.0};
    std::vector<double> mean, var;
    Tensor4<double> y = bn.forward_train(x, mean, var, true);

    CHECK(mean[0] == doctest::Approx(2.0));
    CHECK(var[0] == doctest::Approx(1.0));  // biased: ((1-2)^2 + (3-2)^2) / 2
    const double want = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y.v[0] == doctest::Approx(-want));
    CHECK(y.v[1] == doctest::Approx(want));

    // running stats move by 1 - momentum
    CHECK(bn.running_mean[0] == doctest::Approx(0.99 * 0.0 + 0.01 * 2.0));
    CHECK(bn.running_var[0] == doctest::Approx(0.99 * 1.0 + 0.01 * 1.0));
}

TEST_CASE("batch norm with zero gamma collapses to beta") {
    nn::BatchNorm<double> bn;
    bn.c = 2;
    bn.init_shapes();
    bn.gamma = {0.0, 0.0};
    bn.beta = {3.0, -1.5};

    Tensor4<double> x = filled(2, 2, 2, 2, -4.0, 0.9);
    std::vector<double> mean, var;
    Tensor4<double> y = bn.forward_train(x, mean, var, false);
    for (int b = 0; b < 2; ++b)
        for (int ch = 0; ch < 2; ++ch)
            for (int i = 0; i < 4; ++i)
                CHECK(y.plane_ptr(b, ch)[i] == doctest::Approx(bn.beta[ch]));
}

TEST_CASE("batch norm leaves standardized data nearly unchanged") {
    nn::BatchNorm<double> bn;
    bn.c = 1;
    bn.init_shapes();
    Tensor4<double> x(4, 1, 1, 1);
    x.v = {-1.5, -0.5, 0.5, 1.5};  // mean 0, biased var 1.25
    std::vector<double> mean, var;
    Tensor4<double> y = bn.forward_train(x, mean, var, false);
    const double inv = 1.0 / std::sqrt(1.25 + 1e-5);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.v[i] == doctest::Approx(x.v[i] * inv));
}

TEST_CASE("batch norm infer applies the running affine transform") {
    nn::BatchNorm<double> bn;
    bn.c = 1;
    bn.init_shapes();
    bn.running_mean = {2.0};
    bn.running_var = {4.0};
    bn.gamma = {3.0};
    bn.beta = {-1.0};
    Tensor4<double> x(1, 1, 1, 2);
    x.v = {2.0, 6.0};
    Tensor4<double> y = bn.forward_infer(x);
    CHECK(y.v[0] == doctest::Approx(-1.0));
    CHECK(y.v[1] == doctest::Approx(-1.0 + 3.0 * 4.0 / std::sqrt(4.0 + 1e-5)));
}

TEST_CASE("batch norm train mode needs at least two values per channel") {
    nn::BatchNorm<double> bn;
    bn.c = 1;
    bn.init_shapes();
    Tensor4<double> x(1, 1, 1, 1);
    std::vector<double> mean, var;
    CHECK_THROWS_AS(bn.forward_train(x, mean, var, false), DataError);
}

TEST_CASE("relu clamps negatives only") {
    Tensor4<double> x(1, 1, 1, 5);
    x.v = {-2.0, -0.0, 0.0, 0.5, 3.0};
    Tensor4<double> y = nn::relu(x);
    CHECK(y.v[0] == 0.0);
    CHECK(y.v[1] == 0.0);
    CHECK(y.v[2] == 0.0);
    CHECK(y.v[3] == 0.5);
    CHECK(y.v[4] == 3.0);
}

TEST_CASE("2x2 max pool on a 4x4 ramp") {
    Tensor4<double> x = filled(1, 1, 4, 4);  // 1..16
    Tensor4<double> y = nn::max_pool(x, 2, 2, nullptr);
    CHECK(y.h == 2);
    CHECK(y.w == 2);
    CHECK(y.at(0, 0, 0, 0) == 6.0);
    CHECK(y.at(0, 0, 0, 1) == 8.0);
    CHECK(y.at(0, 0, 1, 0) == 14.0);
    CHECK(y.at(0, 0, 1, 1) == 16.0);
}

TEST_CASE("max pool truncates ragged edges") {
    Tensor4<double> x = filled(1, 1, 5, 5);
    Tensor4<double> y = nn::max_pool(x, 2, 2, nullptr);
    CHECK(y.h == 2);
    CHECK(y.w == 2);
    CHECK(y.at(0, 0, 1, 1) == 19.0);  // window rows 2-3, cols 2-3 of the ramp
}

TEST_CASE("1x1 max pool is the identity") {
    Tensor4<double> x = filled(2, 3, 3, 2, -7.0, 1.3);
    Tensor4<double> y = nn::max_pool(x, 1, 1, nullptr);
    CHECK(y.v == x.v);
}

TEST_CASE("max pool on constant input keeps the constant") {
    Tensor4<double> x(1, 2, 4, 6);
    for (auto& v : x.v) v = 0.25;
    Tensor4<double> y = nn::max_pool(x, 2, 3, nullptr);
    CHECK(y.h == 2);
    CHECK(y.w == 2);
    for (double v : y.v) CHECK(v == 0.25);
}

TEST_CASE("max pool larger than the input is a shape error") {
    Tensor4<double> x(1, 1, 2, 2);
    CHECK_THROWS_AS(nn::max_pool(x, 3, 1, nullptr), ShapeError);
    CHECK_THROWS_AS(nn::max_pool(x, 1, 3, nullptr), ShapeError);
    CHECK_THROWS_AS(nn::max_pool(x, 0, 1, nullptr), ConfigError);
}

TEST_CASE("max pool backward routes gradient to the argmax") {
    Tensor4<double> x(1, 1, 2, 2);
    x.v = {1.0, 4.0, 2.0, 3.0};
    nn::PoolIdx idx;
    Tensor4<double> y = nn::max_pool(x, 2, 2, &idx);
    CHECK(y.v[0] == 4.0);
    Tensor4<double> dout(1, 1, 1, 1);
    dout.v = {5.0};
    Tensor4<double> dx = nn::max_pool_backward(dout, 2, 2, 2, 2, idx);
    CHECK(dx.v[0] == 0.0);
    CHECK(dx.v[1] == 5.0);
    CHECK(dx.v[2] == 0.0);
    CHECK(dx.v[3] == 0.0);
}

TEST_CASE("global average pool means each channel") {
    Tensor4<double> x(2, 2, 1, 2);
    x.v = {1.0, 3.0, 10.0, 20.0, -1.0, 1.0, 0.0, 0.5};
    std::vector<double> g = nn::global_avg_pool(x);
    REQUIRE(g.size() == 4);
    CHECK(g[0] == doctest::Approx(2.0));
    CHECK(g[1] == doctest::Approx(15.0));
    CHECK(g[2] == doctest::Approx(0.0));
    CHECK(g[3] == doctest::Approx(0.25));

    Tensor4<double> dx = nn::global_avg_pool_backward(g, 2, 2, 1, 2);
    CHECK(dx.at(0, 0, 0, 0) == doctest::Approx(1.0));  // g / (h*w)
    CHECK(dx.at(0, 1, 0, 1) == doctest::Approx(7.5));
}

TEST_CASE("dense layer computes W x + b") {
    nn::Dense<double> dense;
    dense.in_dim = 2;
    dense.out_dim = 2;
    dense.init_shapes();
    dense.weight = {1.0, 2.0, -1.0, 0.5};  // rows: [1 2], [-1 0.5]
    dense.bias = {0.0, 1.0};
    std::vector<double> x = {3.0, 4.0, 0.0, -2.0};
    std::vector<double> y = dense.forward(x, 2);
    REQUIRE(y.size() == 4);
    CHECK(y[0] == doctest::Approx(11.0));
    CHECK(y[1] == doctest::Approx(0.0));
    CHECK(y[2] == doctest::Approx(-4.0));
    CHECK(y[3] == doctest::Approx(0.0));

    std::vector<double> short_x = {1.0};
    CHECK_THROWS_AS(dense.forward(short_x, 1), ShapeError);
}

TEST_CASE("softmax of (0, ln 3) is (0.25, 0.75)") {
    std::vector<double> logits = {0.0, std::log(3.0)};
    nn::softmax_rows(logits, 1, 2);
    CHECK(logits[0] == doctest::Approx(0.25));
    CHECK(logits[1] == doctest::Approx(0.75));
}

TEST_CASE("softmax is shift invariant and rows sum to one") {
    std::vector<double> a = {1.2, -0.7, 3.1, 0.4, 0.4, 0.4};
    std::vector<double> b = a;
    for (std::size_t i = 0; i < 3; ++i) b[i] += 1000.0;
    for (std::size_t i = 3; i < 6; ++i) b[i] -= 500.0;
    nn::softmax_rows(a, 2, 3);
    nn::softmax_rows(b, 2, 3);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    CHECK(std::abs(a[0] + a[1] + a[2] - 1.0) < 1e-9);
    CHECK(std::abs(a[3] + a[4] + a[5] - 1.0) < 1e-9);
}

TEST_CASE("cross-entropy values") {
    SUBCASE("confident and correct is (almost) free") {
        std::vector<double> p = {0.0, 1.0};
        CHECK(nn::bce_loss(p, {1}) == doctest::Approx(-std::log(1.0 - 1e-7)));
    }
    SUBCASE("a coin flip costs ln 2") {
        std::vector<double> p = {0.5, 0.5};
        CHECK(nn::bce_loss(p, {0}) == doctest::Approx(std::log(2.0)));
    }
    SUBCASE("batch mean of -log p(true)") {
        std::vector<double> p = {0.1, 0.9, 0.8, 0.2};
        const double want = -(std::log(0.9) + std::log(0.8)) / 2.0;
        CHECK(nn::bce_loss(p, {1, 0}) == doctest::Approx(want));
        CHECK(want == doctest::Approx(0.16425).epsilon(1e-4));
    }
    SUBCASE("probability zero is clamped, not infinite") {
        std::vector<double> p = {1.0, 0.0};
        CHECK(nn::bce_loss(p, {1}) == doctest::Approx(-std::log(1e-7)));
    }
    SUBCASE("size mismatch throws") {
        std::vector<double> p = {0.5, 0.5};
        CHECK_THROWS_AS(nn::bce_loss(p, {0, 1}), ShapeError);
    }
}

TEST_CASE("softmax cross-entropy gradient is (p - y) / n") {
    std::vector<double> p = {0.25, 0.75, 0.9, 0.1};
    std::vector<double> g = nn::bce_softmax_grad(p, {1, 0});
    REQUIRE(g.size() == 4);
    CHECK(g[0] == doctest::Approx(0.25 / 2.0));
    CHECK(g[1] == doctest::Approx(-0.25 / 2.0));
    CHECK(g[2] == doctest::Approx(-0.1 / 2.0));
    CHECK(g[3] == doctest::Approx(0.1 / 2.0));
}
