#include "mbs/vision.hpp"

#include <cmath>

namespace mbs {

template <typename T>
VisionPath<T>::VisionPath(const VisionPreset& preset, std::mt19937_64& rng) : preset_(preset) {
    require(preset.frame_size % 8 == 0, msg("vision: frame size ", preset.frame_size,
                                            " must be divisible by the downsample factor 8"));
    const auto& ch = preset.encoder_channels;
    require(ch.size() == 3, "vision: encoder wants 3 strided stages");
    // three stride-2 stages plus one stride-1 stage, then the 3×3 feature conv
    enc_convs_.resize(4);
    enc_norms_.resize(4);
    int in_c = 3;
    for (int i = 0; i < 3; ++i) {
        enc_convs_[static_cast<std::size_t>(i)].init(ch[static_cast<std::size_t>(i)], in_c, 3, 3, 2, 1, false, rng);
        enc_norms_[static_cast<std::size_t>(i)].init(ch[static_cast<std::size_t>(i)]);
        in_c = ch[static_cast<std::size_t>(i)];
    }
    enc_convs_[3].init(in_c, in_c, 3, 3, 1, 1, false, rng);
    enc_norms_[3].init(in_c);
    feat_conv_.init(preset.feat_channels, in_c, 3, 3, 1, 1, true, rng);
    expansive_conv_.init(preset.num_classes, preset.feat_channels, 1, 1, 1, 0, true, rng);
    discr_conv_.init(preset.num_classes, preset.feat_channels, 1, 1, 1, 0, true, rng);
}

template <typename T>
void VisionPath<T>::register_params(ParamStore<T>& ps, const std::string& prefix) {
    for (std::size_t i = 0; i < enc_convs_.size(); ++i) {
        enc_convs_[i].register_params(ps, msg(prefix, ".enc", i, ".conv"));
        enc_norms_[i].register_params(ps, msg(prefix, ".enc", i, ".bn"));
    }
    feat_conv_.register_params(ps, prefix + ".feat");
    expansive_conv_.register_params(ps, prefix + ".expansive");
    discr_conv_.register_params(ps, prefix + ".discriminative");
}

template <typename T>
Tensor<T> VisionPath<T>::encode(const Tensor<T>& frames, bool train) {
    const bool batched = frames.rank() == 4;
    require(batched || frames.rank() == 3, "vision: frames must be (B×)3×S×S");
    const int c = batched ? frames.dim(1) : frames.dim(0);
    const int h = batched ? frames.dim(2) : frames.dim(1);
    const int w = batched ? frames.dim(3) : frames.dim(2);
    require(c == 3 && h == preset_.frame_size && w == preset_.frame_size,
            msg("vision: expected 3×", preset_.frame_size, "×", preset_.frame_size,
                " frames, got ", shape_str(frames.shape())));
    Tensor<T> x = frames;
    for (std::size_t i = 0; i < enc_convs_.size(); ++i) {
        x = enc_convs_[i].forward(x);
        x = enc_norms_[i].forward(x, train);
        x = relu(x);
    }
    return feat_conv_.forward(x);
}

template <typename T>
Tensor<T> VisionPath<T>::expansive_attention(const Tensor<T>& features, bool train,
                                             std::mt19937_64& rng) {
    Tensor<T> x = dropout(features, static_cast<T>(preset_.dropout_rate), train, rng);
    x = expansive_conv_.forward(x);
    x = dropout(x, static_cast<T>(preset_.dropout_rate), train, rng);
    x = relu(x);
    return spatial_normalize(x, T(1e-8));
}

template <typename T>
Tensor<T> VisionPath<T>::discriminative_attention(const Tensor<T>& features) const {
    return discr_conv_.forward(features);
}

template <typename T>
VisionOutputs<T> VisionPath<T>::forward(const Tensor<T>& frames, bool train,
                                        std::mt19937_64& rng) {
    VisionOutputs<T> out;
    out.features = encode(frames, train);
    out.expansive = expansive_attention(out.features, train, rng);
    out.discriminative = discriminative_attention(out.features);
    auto [xm, s] = combine_and_score(out.expansive, out.discriminative);
    out.attention = std::move(xm);
    out.scores = std::move(s);
    return out;
}

template <typename T>
Tensor<T> VisionPath<T>::pooled_feature(const Tensor<T>& features_chw,
                                        const Tensor<T>& attention_chw, int class_id) {
    require(features_chw.rank() == 3 && attention_chw.rank() == 3,
            "vision: pooled_feature wants per-sample C×H×W inputs");
    Tensor<T> weights = relu(select_channel(attention_chw, class_id));
    PoolDiag diag;
    Tensor<T> pooled = weighted_pool(features_chw, weights, T(1e-8), &diag);
    if (diag.fallback) ++pool_fallbacks_;
    return pooled;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> combine_and_score(const Tensor<T>& expansive,
                                                  const Tensor<T>& discriminative) {
    require(expansive.shape() == discriminative.shape(),
            msg("combine_and_score: shape mismatch ", shape_str(expansive.shape()), " vs ",
                shape_str(discriminative.shape())));
    Tensor<T> xm = mul(expansive, discriminative);
    Tensor<T> s = avg_pool_spatial(xm);
    return {xm, s};
}

template <typename T>
Tensor<T> c_loss(const Tensor<T>& scores, const std::vector<int>& labels, int num_classes) {
    require(scores.rank() == 1 && scores.dim(0) == num_classes,
            msg("c_loss: scores ", shape_str(scores.shape()), " vs |C|=", num_classes));
    std::vector<T> y(static_cast<std::size_t>(num_classes), T(0));
    for (int c : labels) {
        require(c >= 0 && c < num_classes, msg("c_loss: label ", c, " out of range"));
        y[static_cast<std::size_t>(c)] = T(1);
    }
    Tensor<T> target = Tensor<T>::from({num_classes}, std::move(y));
    return bce_with_logits(scores, target, Reduction::sum);
}

std::vector<int> detect_objects(const std::vector<double>& scores, double tau) {
    require(tau > 0.0 && tau < 1.0, msg("detect_objects: tau must be in (0,1), got ", tau));
    std::vector<int> out;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        const double p = scores[c] >= 0 ? 1.0 / (1.0 + std::exp(-scores[c]))
                                        : std::exp(scores[c]) / (1.0 + std::exp(scores[c]));
        if (p >= tau) out.push_back(static_cast<int>(c));
    }
    return out;
}

template <typename T>
Tensor<T> frame_to_tensor(const Image& frame) {
    std::vector<T> v(3 * static_cast<std::size_t>(frame.width) * frame.height);
    const std::size_t plane = static_cast<std::size_t>(frame.width) * frame.height;
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) {
            const std::uint8_t* p = frame.pixel(x, y);
            const std::size_t i = static_cast<std::size_t>(y) * frame.width + x;
            v[i] = static_cast<T>(p[0]) / T(255);
            v[plane + i] = static_cast<T>(p[1]) / T(255);
            v[2 * plane + i] = static_cast<T>(p[2]) / T(255);
        }
    return Tensor<T>::from({3, frame.height, frame.width}, std::move(v));
}

template class VisionPath<float>;
template class VisionPath<double>;
template std::pair<Tensor<float>, Tensor<float>> combine_and_score<float>(const Tensor<float>&,
                                                                          const Tensor<float>&);
template std::pair<Tensor<double>, Tensor<double>> combine_and_score<double>(const Tensor<double>&,
                                                                             const Tensor<double>&);
template Tensor<float> c_loss<float>(const Tensor<float>&, const std::vector<int>&, int);
template Tensor<double> c_loss<double>(const Tensor<double>&, const std::vector<int>&, int);
template Tensor<float> frame_to_tensor<float>(const Image&);
template Tensor<double> frame_to_tensor<double>(const Image&);

}  // namespace mbs
