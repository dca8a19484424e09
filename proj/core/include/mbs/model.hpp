#pragma once

// The full audio-visual model: vision path + attention U-Net + mask
// coefficient head, with one ordered parameter registry for optimization
// and checkpointing.

#include "mbs/config.hpp"
#include "mbs/unet.hpp"
#include "mbs/vision.hpp"

namespace mbs {

struct ModelSpec {
    DspPreset dsp;
    VisionPreset vision;
    UNetPreset unet;
    int coeff_hidden = 64;
    MaskKind mask_kind = MaskKind::binary;

    int fused_features() const { return vision.feat_channels + unet.bottleneck_channels(); }
};

ModelSpec make_model_spec(const TrainConfig& cfg);

template <typename T>
class Model {
public:
    Model(const ModelSpec& spec, std::uint64_t seed);

    const ModelSpec& spec() const { return spec_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    VisionPath<T>& vision() { return vision_; }
    AudioUNet<T>& unet() { return unet_; }
    CoeffHead<T>& head() { return head_; }

    std::mt19937_64& rng() { return rng_; }
    void reseed(std::uint64_t seed) { rng_.seed(seed); }

private:
    ModelSpec spec_;
    std::mt19937_64 rng_;
    VisionPath<T> vision_;
    AudioUNet<T> unet_;
    CoeffHead<T> head_;
    ParamStore<T> params_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace mbs
