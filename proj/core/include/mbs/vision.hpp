#pragma once

// Weakly-supervised detection and soft segmentation path: a small strided
// conv encoder, a two-branch attention head (expansive + discriminative),
// class scores, the multi-label classification loss, and attention-pooled
// per-object visual features.

#include <random>
#include <set>
#include <vector>

#include "mbs/image.hpp"
#include "mbs/nn.hpp"

namespace mbs {

struct VisionPreset {
    int frame_size = 64;   // square input, downsampled 8x by the encoder
    int feat_channels = 64;  // C_v
    int num_classes = 4;
    std::vector<int> encoder_channels = {16, 32, 64};
    float dropout_rate = 0.5f;

    int feat_size() const { return frame_size / 8; }

    static VisionPreset desk(int classes) { return {64, 64, classes, {16, 32, 64}, 0.5f}; }
    static VisionPreset tiny(int classes, float dropout = 0.5f) {
        return {16, 8, classes, {8, 8, 8}, dropout};
    }
};

template <typename T>
struct VisionOutputs {
    Tensor<T> features;         // B×C_v×h×w  (V_f)
    Tensor<T> expansive;        // B×|C|×h×w  (A_E, each channel sums to 1)
    Tensor<T> discriminative;   // B×|C|×h×w  (A_D)
    Tensor<T> attention;        // B×|C|×h×w  (X_m = A_E ⊙ A_D)
    Tensor<T> scores;           // B×|C|      (S)
};

template <typename T>
class VisionPath {
public:
    VisionPath() = default;
    VisionPath(const VisionPreset& preset, std::mt19937_64& rng);

    void register_params(ParamStore<T>& ps, const std::string& prefix);

    // frames: B×3×S×S (or 3×S×S), values in [0,1]
    VisionOutputs<T> forward(const Tensor<T>& frames, bool train, std::mt19937_64& rng);

    Tensor<T> encode(const Tensor<T>& frames, bool train);
    Tensor<T> expansive_attention(const Tensor<T>& features, bool train, std::mt19937_64& rng);
    Tensor<T> discriminative_attention(const Tensor<T>& features) const;

    // Weighted pool of one sample's features by relu of one attention channel;
    // all-nonpositive attention falls back to a plain mean (counted).
    Tensor<T> pooled_feature(const Tensor<T>& features_chw, const Tensor<T>& attention_chw,
                             int class_id);

    const VisionPreset& preset() const { return preset_; }
    int pool_fallbacks() const { return pool_fallbacks_; }

private:
    VisionPreset preset_;
    std::vector<Conv2dLayer<T>> enc_convs_;
    std::vector<BatchNorm2dLayer<T>> enc_norms_;
    Conv2dLayer<T> feat_conv_;      // final 3×3 producing V_f
    Conv2dLayer<T> expansive_conv_; // 1×1, C_v → |C|
    Conv2dLayer<T> discr_conv_;     // 1×1, C_v → |C|
    int pool_fallbacks_ = 0;
};

// X_m = A_E ⊙ A_D and S = spatial mean of X_m per channel.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> combine_and_score(const Tensor<T>& expansive,
                                                  const Tensor<T>& discriminative);

// Eq.-style multi-label classification loss on one score row (sum over classes).
template <typename T>
Tensor<T> c_loss(const Tensor<T>& scores, const std::vector<int>& labels, int num_classes);

// { c : sigmoid(S_c) >= tau }; may be empty.
std::vector<int> detect_objects(const std::vector<double>& scores, double tau);

// Frame pixels → 3×S×S tensor in [0,1].
template <typename T>
Tensor<T> frame_to_tensor(const Image& frame);

extern template class VisionPath<float>;
extern template class VisionPath<double>;

}  // namespace mbs
