#pragma once

// Audio-visual fusion and mask machinery: feature concatenation, the mask
// coefficient generator, composition of the final mask from shared bases,
// ground-truth mask construction, and the two separation losses.

#include <random>
#include <vector>

#include "mbs/dsp.hpp"
#include "mbs/nn.hpp"

namespace mbs {

enum class MaskKind { binary, ratio };

inline const char* mask_kind_name(MaskKind k) { return k == MaskKind::binary ? "binary" : "ratio"; }

// Visual block first, then the audio bottleneck.
template <typename T>
Tensor<T> fuse_features(const Tensor<T>& visual, const Tensor<T>& bottleneck);

// Two fully-connected stages with batch norm + ReLU between; the final
// layer is linear of width k. Train mode needs a batch of >= 2 objects.
template <typename T>
class CoeffHead {
public:
    CoeffHead() = default;
    CoeffHead(int in_features, int hidden, int k, std::mt19937_64& rng);

    void register_params(ParamStore<T>& ps, const std::string& prefix);

    // x: B×in (or in); returns B×k (or k).
    Tensor<T> forward(const Tensor<T>& x, bool train);

    int bases() const { return k_; }

private:
    LinearLayer<T> fc1_;
    BatchNorm2dLayer<T> norm_;
    LinearLayer<T> fc2_;
    int k_ = 0;
};

// Pre-sigmoid mask logits Z = sum_j M_j P_j and the composed mask sigmoid(Z).
template <typename T>
Tensor<T> mask_logits(const Tensor<T>& bases_kfn, const Tensor<T>& coeffs_k);
template <typename T>
Tensor<T> compose_mask(const Tensor<T>& bases_kfn, const Tensor<T>& coeffs_k);

template <typename T>
struct PredictedMask {
    Tensor<T> logits;  // F'×N
    Tensor<T> mu;      // sigmoid(logits), strictly in (0,1)
};

template <typename T>
PredictedMask<T> predict_mask(const Tensor<T>& bases_kfn, const Tensor<T>& coeffs_k);

struct GtMask {
    Grid grid;  // entries in [0,1]; binary kind uses {0,1}
    MaskKind kind = MaskKind::binary;
};

// 1 where the target magnitude ties or beats every interferer, else 0.
// An empty interferer list yields an all-ones mask.
GtMask gt_binary_mask(const Grid& target_mag, const std::vector<const Grid*>& other_mags);

// Target share of the summed source magnitudes (target included in the sum).
GtMask gt_ratio_mask(const Grid& target_mag, const std::vector<const Grid*>& all_mags);

// binary → mean per-bin BCE computed from the pre-sigmoid logits;
// ratio → mean absolute difference on the composed mask.
template <typename T>
Tensor<T> separation_loss(const PredictedMask<T>& pred, const GtMask& gt, MaskKind kind);

template <typename T>
Tensor<T> grid_to_tensor(const Grid& g);
template <typename T>
Grid tensor_to_grid(const Tensor<T>& t);

extern template class CoeffHead<float>;
extern template class CoeffHead<double>;

}  // namespace mbs
