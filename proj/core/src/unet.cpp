#include "mbs/unet.hpp"

namespace mbs {

template <typename T>
std::pair<Tensor<T>, Tensor<T>> AttentionGate<T>::forward(const Tensor<T>& skip,
                                                          const Tensor<T>& gate) const {
    const int sr = skip.rank(), gr = gate.rank();
    require(sr == gr && (sr == 3 || sr == 4), "attention_gate: skip/gate rank mismatch");
    const int sh = skip.dim(sr - 2), gh = gate.dim(gr - 2);
    require(sh == 2 * gh, msg("attention_gate: gate must be half the skip resolution, got skip ",
                              shape_str(skip.shape()), " gate ", shape_str(gate.shape())));
    Tensor<T> s = skip_proj.forward(skip);
    // 1×1 conv and nearest upsample commute; convolve first, it is 4x cheaper
    Tensor<T> g = upsample_nearest2x(gate_proj.forward(gate));
    Tensor<T> a = sigmoid(psi.forward(relu(add(s, g))));
    return {mul_broadcast_map(skip, a), a};
}

template <typename T>
AudioUNet<T>::AudioUNet(const UNetPreset& preset, std::mt19937_64& rng) : preset_(preset) {
    require(preset.depth >= 2, "unet: depth must be >= 2");
    enc_convs_.resize(static_cast<std::size_t>(preset.depth));
    enc_norms_.resize(static_cast<std::size_t>(preset.depth));
    int in_c = 1;
    for (int l = 0; l < preset.depth; ++l) {
        const int out_c = preset.channels_at(l);
        enc_convs_[static_cast<std::size_t>(l)].init(out_c, in_c, 3, 3, 2, 1, false, rng);
        enc_norms_[static_cast<std::size_t>(l)].init(out_c);
        in_c = out_c;
    }
    dec_ups_.resize(static_cast<std::size_t>(preset.depth - 1));
    dec_convs_.resize(static_cast<std::size_t>(preset.depth - 1));
    dec_norms_.resize(static_cast<std::size_t>(preset.depth - 1));
    gates_.resize(static_cast<std::size_t>(preset.depth - 1));
    for (int l = preset.depth - 1; l >= 1; --l) {
        const std::size_t i = static_cast<std::size_t>(preset.depth - 1 - l);
        const int cur = preset.channels_at(l);
        const int nxt = preset.channels_at(l - 1);
        dec_ups_[i].init(cur, nxt, 2, 2, 2, rng);
        gates_[i].init(nxt, cur, rng);
        dec_convs_[i].init(nxt, 2 * nxt, 3, 3, 1, 1, false, rng);
        dec_norms_[i].init(nxt);
    }
    const int c0 = preset.channels_at(0);
    final_up_.init(c0, c0, 2, 2, 2, rng);
    final_norm_.init(c0);
    out_conv_.init(preset.bases, c0, 1, 1, 1, 0, true, rng);
}

template <typename T>
void AudioUNet<T>::register_params(ParamStore<T>& ps, const std::string& prefix) {
    for (std::size_t l = 0; l < enc_convs_.size(); ++l) {
        enc_convs_[l].register_params(ps, msg(prefix, ".enc", l, ".conv"));
        enc_norms_[l].register_params(ps, msg(prefix, ".enc", l, ".bn"));
    }
    for (std::size_t i = 0; i < dec_ups_.size(); ++i) {
        dec_ups_[i].register_params(ps, msg(prefix, ".dec", i, ".up"));
        gates_[i].register_params(ps, msg(prefix, ".dec", i, ".ag"));
        dec_convs_[i].register_params(ps, msg(prefix, ".dec", i, ".conv"));
        dec_norms_[i].register_params(ps, msg(prefix, ".dec", i, ".bn"));
    }
    final_up_.register_params(ps, prefix + ".final.up");
    final_norm_.register_params(ps, prefix + ".final.bn");
    out_conv_.register_params(ps, prefix + ".out");
}

template <typename T>
UNetOutputs<T> AudioUNet<T>::forward(const Tensor<T>& spec, bool train) {
    const bool batched = spec.rank() == 4;
    require(batched || spec.rank() == 3, "unet: input must be (B×)1×F×N");
    const int c = spec.dim(batched ? 1 : 0);
    const int h = spec.dim(batched ? 2 : 1);
    const int w = spec.dim(batched ? 3 : 2);
    require(c == 1, msg("unet: expected a single input channel, got ", c));
    const int div = 1 << preset_.depth;
    require(h % div == 0 && w % div == 0,
            msg("unet: spatial dims ", h, "x", w, " must be divisible by 2^depth = ", div));
    ++forward_count_;

    std::vector<Tensor<T>> enc;
    enc.reserve(enc_convs_.size());
    Tensor<T> x = spec;
    for (std::size_t l = 0; l < enc_convs_.size(); ++l) {
        x = enc_convs_[l].forward(x);
        x = enc_norms_[l].forward(x, train);
        x = relu(x);
        enc.push_back(x);
    }

    UNetOutputs<T> out;
    out.bottleneck = avg_pool_spatial(enc.back());

    for (std::size_t i = 0; i < dec_ups_.size(); ++i) {
        const std::size_t skip_level = enc.size() - 2 - i;
        Tensor<T> up = dec_ups_[i].forward(x);
        auto [gated, coeff] = gates_[i].forward(enc[skip_level], x);
        (void)coeff;
        x = concat(up, gated, batched ? 1 : 0);
        x = dec_convs_[i].forward(x);
        x = dec_norms_[i].forward(x, train);
        x = relu(x);
    }
    x = final_up_.forward(x);
    x = final_norm_.forward(x, train);
    x = relu(x);
    out.bases = out_conv_.forward(x);
    return out;
}

template struct AttentionGate<float>;
template struct AttentionGate<double>;
template class AudioUNet<float>;
template class AudioUNet<double>;

}  // namespace mbs
