#include "mbs/model.hpp"

namespace mbs {

ModelSpec make_model_spec(const TrainConfig& cfg) {
    cfg.validate();
    ModelSpec spec;
    if (cfg.preset == "paper") {
        spec.dsp = DspPreset::paper();
        spec.vision = VisionPreset::desk(cfg.num_classes);
        spec.unet = UNetPreset::paper();
        spec.coeff_hidden = 128;
    } else if (cfg.preset == "desk") {
        spec.dsp = DspPreset::desk();
        spec.vision = VisionPreset::desk(cfg.num_classes);
        spec.unet = UNetPreset::desk();
        spec.coeff_hidden = 64;
    } else {
        spec.dsp = DspPreset::tiny();
        spec.vision = VisionPreset::tiny(cfg.num_classes);
        spec.unet = UNetPreset::tiny();
        spec.coeff_hidden = 16;
    }
    if (cfg.k > 0) spec.unet.bases = cfg.k;
    if (cfg.depth > 0) spec.unet.depth = cfg.depth;
    spec.unet.input_rows = spec.dsp.warp_bins;
    spec.unet.input_cols = spec.dsp.frames();
    spec.mask_kind = cfg.mask();

    const int div = 1 << spec.unet.depth;
    require(spec.unet.input_rows % div == 0 && spec.unet.input_cols % div == 0,
            msg("model: warped spectrogram ", spec.unet.input_rows, "x", spec.unet.input_cols,
                " is not divisible by 2^depth = ", div));
    return spec;
}

template <typename T>
Model<T>::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {
    vision_ = VisionPath<T>(spec.vision, rng_);
    unet_ = AudioUNet<T>(spec.unet, rng_);
    head_ = CoeffHead<T>(spec.fused_features(), spec.coeff_hidden, spec.unet.bases, rng_);
    vision_.register_params(params_, "vision");
    unet_.register_params(params_, "unet");
    head_.register_params(params_, "coeff");
}

template class Model<float>;
template class Model<double>;

}  // namespace mbs
