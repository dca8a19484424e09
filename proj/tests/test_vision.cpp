#include <doctest.h>

#include <cmath>
#include <random>

#include "mbs/vision.hpp"

using namespace mbs;

namespace {

TensorD rnd_features(int c, int h, int w, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(c) * h * w);
    for (auto& x : v) x = uni(rng);
    return TensorD::from({c, h, w}, std::move(v));
}

double sigmoid_of(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_SUITE("vision") {

TEST_CASE("encoder maps a 64x64 desk frame to C_v x 8 x 8") {
    std::mt19937_64 rng(1);
    VisionPath<double> vp(VisionPreset::desk(4), rng);
    TensorD frame = TensorD::zeros({3, 64, 64});
    TensorD feat = vp.encode(frame, /*train=*/false);
    CHECK(feat.shape() == Shape{64, 8, 8});
}

TEST_CASE("zero frame encodes deterministically") {
    std::mt19937_64 rng(2);
    VisionPath<double> vp(VisionPreset::tiny(2), rng);
    TensorD frame = TensorD::zeros({3, 16, 16});
    TensorD f1 = vp.encode(frame, false);
    TensorD f2 = vp.encode(frame, false);
    CHECK(f1.all_finite());
    for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f1.values()[i] == f2.values()[i]);
}

TEST_CASE("encoder rejects wrong frame sizes") {
    std::mt19937_64 rng(3);
    VisionPath<double> vp(VisionPreset::desk(4), rng);
    CHECK_THROWS_WITH_AS(vp.encode(TensorD::zeros({3, 32, 32}), false), doctest::Contains("64"),
                         std::runtime_error);
}

TEST_CASE("expansive attention channels sum to one") {
    std::mt19937_64 rng(4);
    VisionPath<double> vp(VisionPreset::desk(4), rng);
    for (int trial = 0; trial < 100; ++trial) {
        TensorD vf = rnd_features(64, 8, 8, rng);
        TensorD ae = vp.expansive_attention(vf, /*train=*/false, rng);
        REQUIRE(ae.shape() == Shape{4, 8, 8});
        for (int c = 0; c < 4; ++c) {
            double s = 0.0;
            for (int i = 0; i < 64; ++i) s += ae.values()[static_cast<std::size_t>(c * 64 + i)];
            CHECK(std::abs(s - 1.0) < 1e-6);
            for (int i = 0; i < 64; ++i)
                CHECK(ae.values()[static_cast<std::size_t>(c * 64 + i)] >= 0.0);
        }
    }
}

TEST_CASE("spatial normalization of constant and one-hot maps") {
    // constant pre-normalization map becomes uniform 1/(H*W)
    TensorD constant = TensorD::full({2, 4, 4}, 0.7);
    TensorD uni = spatial_normalize(constant, 1e-8);
    for (double v : uni.values()) CHECK(v == doctest::Approx(1.0 / 16.0).epsilon(1e-7));

    // one-hot map is left unchanged
    std::vector<double> hot(16, 0.0);
    hot[5] = 1.0;
    TensorD onehot = TensorD::from({1, 4, 4}, std::move(hot));
    TensorD kept = spatial_normalize(onehot, 1e-8);
    CHECK(kept.values()[5] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(kept.values()[0] == 0.0);
}

TEST_CASE("discriminative attention is affine in the features") {
    std::mt19937_64 rng(5);
    VisionPath<double> vp(VisionPreset::tiny(3), rng);
    TensorD vf = rnd_features(8, 2, 2, rng);
    TensorD ad1 = vp.discriminative_attention(vf);
    CHECK(ad1.shape() == Shape{3, 2, 2});

    // zero features produce per-channel bias constants
    TensorD bias_map = vp.discriminative_attention(TensorD::zeros({8, 2, 2}));
    for (int c = 0; c < 3; ++c)
        for (int i = 1; i < 4; ++i)
            CHECK(bias_map.values()[static_cast<std::size_t>(c * 4 + i)] ==
                  doctest::Approx(bias_map.values()[static_cast<std::size_t>(c * 4)]));

    // A_D(a*V) = a*A_D(V) - (a-1)*bias
    const double a = 2.5;
    TensorD scaled = vp.discriminative_attention(scale(vf, a));
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        const double expect = a * ad1.values()[i] -
                              (a - 1.0) * bias_map.values()[i];
        CHECK(scaled.values()[i] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("combine_and_score trivial and oracle cases") {
    std::mt19937_64 rng(6);
    TensorD ae = spatial_normalize(rnd_features(3, 4, 4, rng, 0.0, 1.0), 1e-8);

    // A_D of all ones: S_c = 1/(H*W) by the normalization of A_E
    TensorD ones = TensorD::full({3, 4, 4}, 1.0);
    auto [xm1, s1] = combine_and_score(ae, ones);
    (void)xm1;
    for (int c = 0; c < 3; ++c)
        CHECK(s1.values()[static_cast<std::size_t>(c)] == doctest::Approx(1.0 / 16.0).epsilon(1e-7));

    // one-hot A_E at (i,j): S_c = A_D(c,i,j)/(H*W)
    std::vector<double> hot(3 * 16, 0.0);
    hot[0 * 16 + 6] = 1.0;
    hot[1 * 16 + 2] = 1.0;
    hot[2 * 16 + 15] = 1.0;
    TensorD ae_hot = TensorD::from({3, 4, 4}, std::move(hot));
    TensorD ad = rnd_features(3, 4, 4, rng);
    auto [xm2, s2] = combine_and_score(ae_hot, ad);
    (void)xm2;
    CHECK(s2.values()[0] == doctest::Approx(ad.values()[6] / 16.0));
    CHECK(s2.values()[1] == doctest::Approx(ad.values()[16 + 2] / 16.0));
    CHECK(s2.values()[2] == doctest::Approx(ad.values()[32 + 15] / 16.0));

    // random case equals an explicit loop
    TensorD ae_r = rnd_features(3, 4, 4, rng, 0.0, 1.0);
    TensorD ad_r = rnd_features(3, 4, 4, rng);
    auto [xm3, s3] = combine_and_score(ae_r, ad_r);
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = 0; i < 16; ++i) {
            const double prod = ae_r.values()[static_cast<std::size_t>(c * 16 + i)] *
                                ad_r.values()[static_cast<std::size_t>(c * 16 + i)];
            CHECK(xm3.values()[static_cast<std::size_t>(c * 16 + i)] == doctest::Approx(prod));
            acc += prod;
        }
        CHECK(s3.values()[static_cast<std::size_t>(c)] == doctest::Approx(acc / 16.0).epsilon(1e-12));
    }
}

TEST_CASE("c_loss of zero scores is |C| log 2") {
    TensorD s = TensorD::zeros({5});
    TensorD l = c_loss(s, {0, 2}, 5);
    CHECK(l.item() == doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-9));
    CHECK(l.item() >= 0.0);
}

TEST_CASE("c_loss per-class term vanishes for confident correct scores") {
    TensorD s = TensorD::from({2}, {50.0, -50.0});
    TensorD l = c_loss(s, {0}, 2);
    CHECK(l.item() < 1e-20);
}

TEST_CASE("c_loss matches the direct formula where it is finite") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(-4.0, 4.0);
    std::vector<double> sv(6);
    for (auto& v : sv) v = uni(rng);
    TensorD s = TensorD::from({6}, std::vector<double>(sv));
    const std::vector<int> labels = {1, 4};
    TensorD l = c_loss(s, labels, 6);
    double direct = 0.0;
    for (int c = 0; c < 6; ++c) {
        const double p = sigmoid_of(sv[static_cast<std::size_t>(c)]);
        const bool y = c == 1 || c == 4;
        direct -= y ? std::log(p) : std::log(1.0 - p);
    }
    CHECK(l.item() == doctest::Approx(direct).epsilon(1e-9));
}

TEST_CASE("c_loss is nonnegative on random inputs") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> uni(-10.0, 10.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> sv(4);
        for (auto& v : sv) v = uni(rng);
        TensorD l = c_loss(TensorD::from({4}, std::move(sv)), {t % 4}, 4);
        CHECK(l.item() >= 0.0);
    }
}

TEST_CASE("detect_objects thresholds sigmoid scores") {
    auto logit = [](double p) { return std::log(p / (1.0 - p)); };
    std::vector<double> scores = {logit(0.9), logit(0.1)};
    CHECK(detect_objects(scores, 0.3) == std::vector<int>{0});
    CHECK(detect_objects(scores, 0.95).empty());
    CHECK_THROWS_AS(detect_objects(scores, 0.0), std::runtime_error);
}

TEST_CASE("detection is invariant under monotone rescaling") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(-3.0, 3.0);
    std::uniform_real_distribution<double> tau_pick(0.1, 0.9);
    auto logit = [](double p) { return std::log(p / (1.0 - p)); };
    for (int t = 0; t < 30; ++t) {
        std::vector<double> scores(5);
        for (auto& v : scores) v = uni(rng);
        const double tau = tau_pick(rng);
        const auto base = detect_objects(scores, tau);

        // h(p) = p^3 is strictly monotone on (0,1)
        std::vector<double> rescored(5);
        for (int c = 0; c < 5; ++c) {
            const double p = sigmoid_of(scores[static_cast<std::size_t>(c)]);
            const double q = p * p * p;
            rescored[static_cast<std::size_t>(c)] = logit(q);
        }
        const double tau_q = tau * tau * tau;
        CHECK(detect_objects(rescored, tau_q) == base);
    }
}

TEST_CASE("pooled feature selects, averages, and falls back") {
    std::mt19937_64 rng(10);
    VisionPath<double> vp(VisionPreset::tiny(2), rng);
    TensorD vf = rnd_features(8, 2, 2, rng);

    // one-hot attention channel picks one spatial column of V_f
    std::vector<double> hot(2 * 4, 0.0);
    hot[0 * 4 + 3] = 2.0;
    TensorD xm = TensorD::from({2, 2, 2}, std::move(hot));
    TensorD picked = vp.pooled_feature(vf, xm, 0);
    for (int c = 0; c < 8; ++c)
        CHECK(picked.values()[static_cast<std::size_t>(c)] ==
              doctest::Approx(vf.values()[static_cast<std::size_t>(c * 4 + 3)]).epsilon(1e-7));

    // uniform attention averages
    TensorD uniform_attn = TensorD::full({2, 2, 2}, 0.25);
    TensorD mean = vp.pooled_feature(vf, uniform_attn, 1);
    for (int c = 0; c < 8; ++c) {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) acc += vf.values()[static_cast<std::size_t>(c * 4 + i)];
        CHECK(mean.values()[static_cast<std::size_t>(c)] == doctest::Approx(acc / 4.0).epsilon(1e-7));
    }

    // all-nonpositive attention falls back to the mean and is counted
    const int before = vp.pool_fallbacks();
    TensorD negative = TensorD::full({2, 2, 2}, -1.0);
    TensorD fb = vp.pooled_feature(vf, negative, 0);
    CHECK(vp.pool_fallbacks() == before + 1);
    for (int c = 0; c < 8; ++c) {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) acc += vf.values()[static_cast<std::size_t>(c * 4 + i)];
        CHECK(fb.values()[static_cast<std::size_t>(c)] == doctest::Approx(acc / 4.0));
    }
}

TEST_CASE("frame_to_tensor normalizes to [0,1] channels-first") {
    Image img(2, 2);
    img.pixel(0, 0)[0] = 255;
    img.pixel(1, 1)[2] = 128;
    TensorD t = frame_to_tensor<double>(img);
    CHECK(t.shape() == Shape{3, 2, 2});
    CHECK(t.values()[0] == doctest::Approx(1.0));
    CHECK(t.values()[2 * 4 + 3] == doctest::Approx(128.0 / 255.0));
}

}  // TEST_SUITE
