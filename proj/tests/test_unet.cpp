#include <doctest.h>

#include <random>

#include "mbs/unet.hpp"

using namespace mbs;

namespace {

TensorD rnd(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<double> v(shape_numel(s));
    for (auto& x : v) x = uni(rng);
    return TensorD::from(std::move(s), std::move(v));
}

}  // namespace

TEST_SUITE("unet") {

TEST_CASE("attention gate with a zero psi halves the skip") {
    std::mt19937_64 rng(1);
    AttentionGate<double> gate;
    gate.init(4, 8, rng);
    for (auto& v : gate.psi.kernel.values_mut()) v = 0.0;
    TensorD skip = rnd({4, 6, 6}, rng);
    TensorD g = rnd({8, 3, 3}, rng);
    auto [out, coeff] = gate.forward(skip, g);
    for (double a : coeff.values()) CHECK(a == doctest::Approx(0.5));
    for (std::size_t i = 0; i < skip.size(); ++i)
        CHECK(out.values()[i] == doctest::Approx(skip.values()[i] * 0.5));
}

TEST_CASE("attention gate passes the skip unchanged in the a->1 limit") {
    std::mt19937_64 rng(2);
    AttentionGate<double> gate;
    gate.init(4, 8, rng);
    for (auto& v : gate.skip_proj.kernel.values_mut()) v = 0.0;
    for (auto& v : gate.gate_proj.kernel.values_mut()) v = 0.0;
    for (auto& v : gate.gate_proj.bias.values_mut()) v = 30.0;
    for (auto& v : gate.psi.kernel.values_mut()) v = 30.0;
    TensorD skip = rnd({4, 4, 4}, rng);
    TensorD g = rnd({8, 2, 2}, rng);
    auto [out, coeff] = gate.forward(skip, g);
    for (double a : coeff.values()) CHECK(a > 1.0 - 1e-9);
    for (std::size_t i = 0; i < skip.size(); ++i)
        CHECK(out.values()[i] == doctest::Approx(skip.values()[i]).epsilon(1e-9));
}

TEST_CASE("attention gate coefficients stay strictly inside (0,1)") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 10; ++t) {
        AttentionGate<double> gate;
        gate.init(6, 12, rng);
        TensorD skip = rnd({6, 8, 8}, rng, -3.0, 3.0);
        TensorD g = rnd({12, 4, 4}, rng, -3.0, 3.0);
        auto [out, coeff] = gate.forward(skip, g);
        (void)out;
        for (double a : coeff.values()) {
            CHECK(a > 0.0);
            CHECK(a < 1.0);
        }
    }
}

TEST_CASE("attention gate validates resolutions") {
    std::mt19937_64 rng(4);
    AttentionGate<double> gate;
    gate.init(4, 8, rng);
    TensorD skip = rnd({4, 6, 6}, rng);
    TensorD bad_gate = rnd({8, 6, 6}, rng);
    CHECK_THROWS_AS(gate.forward(skip, bad_gate), std::runtime_error);
}

TEST_CASE("paper preset emits 32 bases at 256x256") {
    std::mt19937_64 rng(5);
    AudioUNet<float> net(UNetPreset::paper(), rng);
    Tensor<float> in = Tensor<float>::zeros({1, 1, 256, 256});
    auto out = net.forward(in, /*train=*/false);
    CHECK(out.bases.shape() == Shape{1, 32, 256, 256});
    CHECK(out.bottleneck.shape() == Shape{1, 512});
}

TEST_CASE("desk preset emits 8 bases at 64x64") {
    std::mt19937_64 rng(6);
    AudioUNet<double> net(UNetPreset::desk(), rng);
    auto out = net.forward(TensorD::zeros({1, 1, 64, 64}), false);
    CHECK(out.bases.shape() == Shape{1, 8, 64, 64});
    CHECK(out.bottleneck.shape() == Shape{1, 128});
}

TEST_CASE("zero input is deterministic and bit-exact across calls") {
    std::mt19937_64 rng(7);
    AudioUNet<double> net(UNetPreset::tiny(), rng);
    auto a = net.forward(TensorD::zeros({1, 1, 8, 8}), false);
    auto b = net.forward(TensorD::zeros({1, 1, 8, 8}), false);
    REQUIRE(a.bases.size() == b.bases.size());
    for (std::size_t i = 0; i < a.bases.size(); ++i)
        CHECK(a.bases.values()[i] == b.bases.values()[i]);
    CHECK(a.bases.all_finite());
}

TEST_CASE("output spatial size equals input spatial size across presets") {
    std::mt19937_64 rng(8);
    struct Case {
        UNetPreset p;
        int rows, cols;
    };
    std::vector<Case> cases = {
        {UNetPreset::tiny(), 8, 8},
        {UNetPreset::tiny(3), 16, 8},
        {{3, 8, 64, 4, 24, 16}, 24, 16},
    };
    for (auto& c : cases) {
        c.p.input_rows = c.rows;
        c.p.input_cols = c.cols;
        AudioUNet<double> net(c.p, rng);
        auto out = net.forward(TensorD::zeros({1, 1, c.rows, c.cols}), false);
        CHECK(out.bases.dim(2) == c.rows);
        CHECK(out.bases.dim(3) == c.cols);
    }
}

TEST_CASE("indivisible spatial dims are rejected with the divisor named") {
    std::mt19937_64 rng(9);
    AudioUNet<double> net(UNetPreset::tiny(), rng);
    CHECK_THROWS_WITH_AS(net.forward(TensorD::zeros({1, 1, 10, 8}), false),
                         doctest::Contains("2^depth"), std::runtime_error);
}

TEST_CASE("forward counter tracks base computations") {
    std::mt19937_64 rng(10);
    AudioUNet<double> net(UNetPreset::tiny(), rng);
    CHECK(net.forward_count() == 0);
    net.forward(TensorD::zeros({1, 1, 8, 8}), false);
    net.forward(TensorD::zeros({1, 1, 8, 8}), false);
    CHECK(net.forward_count() == 2);
}

}  // TEST_SUITE
