#include <cmath>

#include "mbs/harness.hpp"

namespace mbs {

namespace {

constexpr double kTol = 1e-5;
constexpr double kStep = 1e-4;
// Deep networks get a smaller step: it keeps the probe inside the smooth
// region around ReLU kinks while FD roundoff stays near 1e-10.
constexpr double kStepDeep = 1e-6;

Tensor<double> rnd(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<double> v(shape_numel(s));
    for (auto& x : v) x = uni(rng);
    return Tensor<double>::from(std::move(s), std::move(v), /*requires_grad=*/true);
}

// values bounded away from zero, for kinked ops (relu, max pooling)
Tensor<double> rnd_offzero(Shape s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<double> v(shape_numel(s));
    for (auto& x : v) {
        double u = uni(rng);
        x = u + (u >= 0 ? 0.25 : -0.25);
    }
    return Tensor<double>::from(std::move(s), std::move(v), /*requires_grad=*/true);
}

// smooth scalarizer: BCE against a constant target avoids kinks at zero
Tensor<double> scalarize(const Tensor<double>& t) {
    return bce_with_logits(t, Tensor<double>::full(t.shape(), 0.3), Reduction::mean);
}

MixedItem tiny_item(std::uint64_t seed) {
    const DspPreset dsp = DspPreset::tiny();
    std::mt19937_64 rng(seed);
    const auto classes = default_classes(2);

    auto clip = [&](int cid) {
        ClipData c;
        c.clip_id = msg("tiny", cid);
        c.frame = render_frame(classes, {cid}, 16, rng);
        Waveform stem = synth_stem(classes[static_cast<std::size_t>(cid)], dsp.clip_seconds(),
                                   dsp.sample_rate, rng);
        c.mixture = stem;
        c.stems = {std::move(stem)};
        c.classes = {cid};
        return c;
    };
    return make_mixed_item(clip(0), clip(1));
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.preset = "tiny";
    cfg.num_classes = 2;
    return cfg;
}

struct Suite {
    std::uint64_t seed;
    std::vector<GradCheckResult> results;

    void check(const std::string& name, int points,
               const std::function<double(std::mt19937_64&)>& one_point) {
        double worst = 0.0;
        for (int p = 0; p < points; ++p) {
            std::mt19937_64 rng(seed + 1000ull * static_cast<std::uint64_t>(p) + std::hash<std::string>{}(name));
            worst = std::max(worst, one_point(rng));
        }
        results.push_back({name, worst, kTol, worst < kTol});
    }
};

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
    Suite suite{seed, {}};

    suite.check("conv2d", 5, [](std::mt19937_64& rng) {
        auto x = rnd({2, 2, 5, 6}, rng);
        auto k = rnd({3, 2, 3, 3}, rng);
        auto b = rnd({3}, rng);
        auto loss = [&]() { return scalarize(conv2d(x, k, b, 2, 1)); };
        return grad_check_many(loss, {x, k, b}, kStep);
    });

    suite.check("conv_transpose2d", 5, [](std::mt19937_64& rng) {
        auto x = rnd({2, 3, 4, 4}, rng);
        auto k = rnd({3, 2, 2, 2}, rng);
        auto loss = [&]() { return scalarize(conv_transpose2d(x, k, 2)); };
        return grad_check_many(loss, {x, k}, kStep);
    });

    suite.check("activation_relu", 5, [](std::mt19937_64& rng) {
        auto x = rnd_offzero({3, 4, 4}, rng);
        auto loss = [&]() { return scalarize(activation(x, Act::relu)); };
        return grad_check(loss, x, kStep);
    });

    suite.check("activation_sigmoid", 5, [](std::mt19937_64& rng) {
        auto x = rnd({3, 4, 4}, rng);
        auto loss = [&]() { return scalarize(activation(x, Act::sigmoid)); };
        return grad_check(loss, x, kStep);
    });

    suite.check("batchnorm2d_train", 5, [](std::mt19937_64& rng) {
        auto x = rnd({2, 3, 4, 4}, rng);
        auto gamma = rnd({3}, rng, 0.5, 1.5);
        auto beta = rnd({3}, rng);
        auto rm = Tensor<double>::zeros({3});
        auto rv = Tensor<double>::full({3}, 1.0);
        auto loss = [&]() {
            auto rm2 = rm, rv2 = rv;
            return scalarize(batchnorm2d(x, gamma, beta, rm2, rv2, true, 0.1, 1e-5));
        };
        return grad_check_many(loss, {x, gamma, beta}, kStep);
    });

    suite.check("dropout_train", 5, [](std::mt19937_64& rng) {
        auto x = rnd({4, 5, 5}, rng);
        auto loss = [&]() {
            std::mt19937_64 mask_rng(42);  // frozen mask across probes
            return scalarize(dropout(x, 0.5, true, mask_rng));
        };
        return grad_check(loss, x, kStep);
    });

    suite.check("pool_spatial_average", 5, [](std::mt19937_64& rng) {
        auto x = rnd({3, 4, 5}, rng);
        auto loss = [&]() { return scalarize(pool(x, PoolKind::spatial_average)); };
        return grad_check(loss, x, kStep);
    });

    suite.check("pool_max2x2", 5, [](std::mt19937_64& rng) {
        auto x = rnd_offzero({3, 4, 4}, rng);
        auto loss = [&]() { return scalarize(pool(x, PoolKind::max2x2)); };
        return grad_check(loss, x, kStep);
    });

    suite.check("pool_weighted", 5, [](std::mt19937_64& rng) {
        auto x = rnd({3, 4, 4}, rng);
        auto w = rnd({4, 4}, rng, 0.1, 1.0);
        auto loss = [&]() { return scalarize(pool(x, PoolKind::weighted, &w)); };
        return grad_check_many(loss, {x, w}, kStep);
    });

    suite.check("spatial_normalize", 5, [](std::mt19937_64& rng) {
        auto x = rnd({3, 4, 4}, rng, 0.1, 1.0);
        auto loss = [&]() { return scalarize(spatial_normalize(x, 1e-8)); };
        return grad_check(loss, x, kStep);
    });

    suite.check("linear", 5, [](std::mt19937_64& rng) {
        auto x = rnd({3, 6}, rng);
        auto w = rnd({4, 6}, rng);
        auto b = rnd({4}, rng);
        auto loss = [&]() { return scalarize(linear(x, w, b)); };
        return grad_check_many(loss, {x, w, b}, kStep);
    });

    suite.check("bce_with_logits", 5, [](std::mt19937_64& rng) {
        auto z = rnd({4, 4}, rng, -2.0, 2.0);
        auto y = rnd({4, 4}, rng, 0.1, 0.9);
        auto loss = [&]() { return bce_with_logits(z, y, Reduction::mean); };
        return grad_check_many(loss, {z, y}, kStep);
    });

    suite.check("l1_loss", 5, [](std::mt19937_64& rng) {
        auto p = rnd({4, 4}, rng, 0.5, 1.0);
        auto t = Tensor<double>::full({4, 4}, 0.1);
        auto loss = [&]() { return l1_loss(p, t); };
        return grad_check(loss, p, kStep);
    });

    suite.check("basis_combine", 5, [](std::mt19937_64& rng) {
        auto bases = rnd({3, 4, 5}, rng);
        auto coeffs = rnd({3}, rng);
        auto loss = [&]() { return scalarize(basis_combine(bases, coeffs)); };
        return grad_check_many(loss, {bases, coeffs}, kStep);
    });

    suite.check("attention_gate", 5, [&suite](std::mt19937_64& rng) {
        AttentionGate<double> gate;
        gate.init(4, 8, rng);
        auto skip = rnd({4, 6, 6}, rng);
        auto g = rnd({8, 3, 3}, rng);
        ParamStore<double> ps;
        gate.register_params(ps, "ag");
        std::vector<Tensor<double>> thetas = {skip, g};
        for (auto& e : ps.entries) thetas.push_back(e.tensor);
        auto loss = [&]() { return scalarize(gate.forward(skip, g).first); };
        (void)suite;
        return grad_check_many(loss, thetas, kStep);
    });

    // The two deep vision checks run dropout-free (the dropout op has its own
    // check above) and push the expansive bias positive so every attention
    // channel keeps mass: an all-zero channel parks the eps-guarded spatial
    // normalization on a cliff no finite difference can measure.
    suite.check("vision_attention_branches", 3, [](std::mt19937_64& rng) {
        VisionPath<double> vp(VisionPreset::tiny(2, /*dropout=*/0.0f), rng);
        ParamStore<double> ps;
        vp.register_params(ps, "vision");
        if (auto* b = ps.find("vision.expansive.bias"))
            for (auto& v : b->values_mut()) v += 0.5;
        auto frames = rnd({2, 3, 16, 16}, rng, 0.0, 1.0);
        std::vector<Tensor<double>> thetas = {frames};
        for (auto& e : ps.entries)
            if (e.trainable) thetas.push_back(e.tensor);
        auto loss = [&]() {
            std::mt19937_64 drop_rng(7);
            auto feats = vp.encode(frames, true);
            auto ae = vp.expansive_attention(feats, true, drop_rng);
            auto ad = vp.discriminative_attention(feats);
            auto [xm, s] = combine_and_score(ae, ad);
            (void)xm;
            return scalarize(s);
        };
        return grad_check_many(loss, thetas, kStepDeep);
    });

    suite.check("coeff_head", 3, [](std::mt19937_64& rng) {
        CoeffHead<double> head(6, 5, 3, rng);
        ParamStore<double> ps;
        head.register_params(ps, "head");
        auto x = rnd({3, 6}, rng);
        std::vector<Tensor<double>> thetas = {x};
        for (auto& e : ps.entries)
            if (e.trainable) thetas.push_back(e.tensor);
        auto loss = [&]() { return scalarize(head.forward(x, true)); };
        return grad_check_many(loss, thetas, kStep);
    });

    suite.check("fuse_features", 5, [](std::mt19937_64& rng) {
        auto a = rnd({5}, rng);
        auto b = rnd({7}, rng);
        auto loss = [&]() { return scalarize(fuse_features(a, b)); };
        return grad_check_many(loss, {a, b}, kStep);
    });

    suite.check("unet_tiny_forward", 2, [](std::mt19937_64& rng) {
        AudioUNet<double> net(UNetPreset::tiny(), rng);
        ParamStore<double> ps;
        net.register_params(ps, "unet");
        auto spec = rnd({1, 1, 8, 8}, rng, 0.0, 2.0);
        std::vector<Tensor<double>> thetas = {spec};
        for (auto& e : ps.entries)
            if (e.trainable) thetas.push_back(e.tensor);
        auto loss = [&]() {
            auto out = net.forward(spec, true);
            return add(scalarize(out.bases), scalarize(out.bottleneck));
        };
        return grad_check_many(loss, thetas, kStep);
    });

    // end-to-end losses on the tiny preset, finite-differenced over every
    // trainable parameter of the full model
    const MixedItem item = tiny_item(seed ^ 0xABCDEF);
    auto e2e = [&](const char* name, MaskKind kind,
                   const std::function<Tensor<double>(const ItemLosses<double>&)>& pick,
                   bool vision_only) {
        suite.check(name, 1, [&](std::mt19937_64& rng) {
            (void)rng;
            TrainConfig cfg = tiny_config();
            cfg.mask_kind = kind == MaskKind::binary ? "binary" : "ratio";
            ModelSpec spec = make_model_spec(cfg);
            spec.vision.dropout_rate = 0.0f;
            Model<double> model(spec, suite.seed ^ 0x44);
            if (auto* b = model.params().find("vision.expansive.bias"))
                for (auto& v : b->values_mut()) v += 0.5;
            std::vector<Tensor<double>> thetas;
            for (auto& e : model.params().entries)
                if (e.trainable && (!vision_only || e.name.rfind("vision", 0) == 0))
                    thetas.push_back(e.tensor);
            auto loss = [&]() {
                model.reseed(321);
                return pick(forward_item(model, item, /*train=*/true, 0.5));
            };
            return grad_check_many(loss, thetas, kStepDeep);
        });
    };
    e2e("e2e_c_loss", MaskKind::binary,
        [](const ItemLosses<double>& l) { return add(l.c_a, l.c_b); }, /*vision_only=*/true);
    e2e("e2e_separation_bce", MaskKind::binary,
        [](const ItemLosses<double>& l) { return l.total; }, /*vision_only=*/false);
    e2e("e2e_separation_l1", MaskKind::ratio,
        [](const ItemLosses<double>& l) { return l.total; }, /*vision_only=*/false);

    return suite.results;
}

}  // namespace mbs
