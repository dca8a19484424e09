#pragma once

// Attention U-Net over the log-magnitude warped spectrogram. The encoder is
// `depth` stride-2 conv blocks, the decoder mirrors them with transposed
// convs; every skip connection is modulated by an additive attention gate.
// The final 1×1 conv emits k pre-sigmoid mask bases (no output nonlinearity;
// the sigmoid is applied after coefficient mixing downstream).

#include <random>
#include <vector>

#include "mbs/nn.hpp"

namespace mbs {

struct UNetPreset {
    int depth = 4;
    int base_channels = 16;
    int channel_cap = 256;
    int bases = 8;  // k
    int input_rows = 64;
    int input_cols = 64;

    int channels_at(int level) const {
        long long c = static_cast<long long>(base_channels) << level;
        return static_cast<int>(std::min<long long>(c, channel_cap));
    }
    int bottleneck_channels() const { return channels_at(depth - 1); }

    static UNetPreset paper() { return {7, 32, 512, 32, 256, 256}; }
    static UNetPreset desk(int k = 8) { return {4, 16, 256, k, 64, 64}; }
    static UNetPreset tiny(int k = 2) { return {2, 8, 16, k, 8, 8}; }
};

// a = sigmoid(psi^T relu(Ws*skip + Wg*up(gate) + b)); output = skip ⊙ a.
template <typename T>
struct AttentionGate {
    Conv2dLayer<T> skip_proj;  // 1×1, no bias
    Conv2dLayer<T> gate_proj;  // 1×1, carries the shared bias b
    Conv2dLayer<T> psi;        // 1×1 → 1 channel, no bias

    void init(int skip_channels, int gate_channels, std::mt19937_64& rng) {
        const int inter = std::max(skip_channels / 2, 2);
        skip_proj.init(inter, skip_channels, 1, 1, 1, 0, false, rng);
        gate_proj.init(inter, gate_channels, 1, 1, 1, 0, true, rng);
        psi.init(1, inter, 1, 1, 1, 0, false, rng);
    }
    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        skip_proj.register_params(ps, prefix + ".skip");
        gate_proj.register_params(ps, prefix + ".gate");
        psi.register_params(ps, prefix + ".psi");
    }
    // Returns (gated skip, coefficient map in (0,1)).
    std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& skip, const Tensor<T>& gate) const;
};

template <typename T>
struct UNetOutputs {
    Tensor<T> bases;       // B×k×F'×N (pre-sigmoid)
    Tensor<T> bottleneck;  // B×C_b (A_f)
};

template <typename T>
class AudioUNet {
public:
    AudioUNet() = default;
    AudioUNet(const UNetPreset& preset, std::mt19937_64& rng);

    void register_params(ParamStore<T>& ps, const std::string& prefix);

    // spec: B×1×F'×N (or 1×F'×N) log-magnitude grid; F', N divisible by 2^depth.
    UNetOutputs<T> forward(const Tensor<T>& spec, bool train);

    const UNetPreset& preset() const { return preset_; }
    // How many times the bases were computed; lets tests assert one U-Net
    // pass per mixture regardless of the number of separated objects.
    long forward_count() const { return forward_count_; }

private:
    UNetPreset preset_;
    std::vector<Conv2dLayer<T>> enc_convs_;
    std::vector<BatchNorm2dLayer<T>> enc_norms_;
    std::vector<ConvTranspose2dLayer<T>> dec_ups_;
    std::vector<Conv2dLayer<T>> dec_convs_;
    std::vector<BatchNorm2dLayer<T>> dec_norms_;
    std::vector<AttentionGate<T>> gates_;
    ConvTranspose2dLayer<T> final_up_;
    BatchNorm2dLayer<T> final_norm_;
    Conv2dLayer<T> out_conv_;  // 1×1 → k
    long forward_count_ = 0;
};

extern template struct AttentionGate<float>;
extern template struct AttentionGate<double>;
extern template class AudioUNet<float>;
extern template class AudioUNet<double>;

}  // namespace mbs
