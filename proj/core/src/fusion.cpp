#include "mbs/fusion.hpp"

namespace mbs {

namespace {
constexpr double kRatioEps = 1e-8;
}

template <typename T>
Tensor<T> fuse_features(const Tensor<T>& visual, const Tensor<T>& bottleneck) {
    require(visual.rank() == bottleneck.rank() && (visual.rank() == 1 || visual.rank() == 2),
            msg("fuse_features: want two vectors or two row batches, got ",
                shape_str(visual.shape()), " and ", shape_str(bottleneck.shape())));
    return concat(visual, bottleneck, visual.rank() - 1);
}

template <typename T>
CoeffHead<T>::CoeffHead(int in_features, int hidden, int k, std::mt19937_64& rng) : k_(k) {
    fc1_.init(hidden, in_features, rng);
    norm_.init(hidden);
    fc2_.init(k, hidden, rng);
}

template <typename T>
void CoeffHead<T>::register_params(ParamStore<T>& ps, const std::string& prefix) {
    fc1_.register_params(ps, prefix + ".fc1");
    norm_.register_params(ps, prefix + ".bn");
    fc2_.register_params(ps, prefix + ".fc2");
}

template <typename T>
Tensor<T> CoeffHead<T>::forward(const Tensor<T>& x, bool train) {
    const bool batched = x.rank() == 2;
    Tensor<T> h = fc1_.forward(x);
    // batch norm over the object batch, treating features as channels
    const int b = batched ? h.dim(0) : 1;
    const int d = batched ? h.dim(1) : h.dim(0);
    h = reshape(h, {b, d, 1, 1});
    h = norm_.forward(h, train);
    h = batched ? reshape(h, {b, d}) : reshape(h, {d});
    h = relu(h);
    return fc2_.forward(h);
}

template <typename T>
Tensor<T> mask_logits(const Tensor<T>& bases_kfn, const Tensor<T>& coeffs_k) {
    return basis_combine(bases_kfn, coeffs_k);
}

template <typename T>
Tensor<T> compose_mask(const Tensor<T>& bases_kfn, const Tensor<T>& coeffs_k) {
    return sigmoid(mask_logits(bases_kfn, coeffs_k));
}

template <typename T>
PredictedMask<T> predict_mask(const Tensor<T>& bases_kfn, const Tensor<T>& coeffs_k) {
    PredictedMask<T> m;
    m.logits = mask_logits(bases_kfn, coeffs_k);
    m.mu = sigmoid(m.logits);
    return m;
}

GtMask gt_binary_mask(const Grid& target_mag, const std::vector<const Grid*>& other_mags) {
    for (const Grid* g : other_mags)
        require(g->rows == target_mag.rows && g->cols == target_mag.cols,
                "gt_binary_mask: grid shape mismatch");
    GtMask out;
    out.kind = MaskKind::binary;
    out.grid = Grid(target_mag.rows, target_mag.cols, 1.0);
    for (std::size_t i = 0; i < target_mag.v.size(); ++i) {
        double best_other = 0.0;
        bool any = false;
        for (const Grid* g : other_mags) {
            best_other = any ? std::max(best_other, g->v[i]) : g->v[i];
            any = true;
        }
        // ties go to the target
        if (any && target_mag.v[i] < best_other) out.grid.v[i] = 0.0;
    }
    return out;
}

GtMask gt_ratio_mask(const Grid& target_mag, const std::vector<const Grid*>& all_mags) {
    require(!all_mags.empty(), "gt_ratio_mask: need at least one source magnitude");
    for (const Grid* g : all_mags)
        require(g->rows == target_mag.rows && g->cols == target_mag.cols,
                "gt_ratio_mask: grid shape mismatch");
    GtMask out;
    out.kind = MaskKind::ratio;
    out.grid = Grid(target_mag.rows, target_mag.cols);
    for (std::size_t i = 0; i < target_mag.v.size(); ++i) {
        double total = 0.0;
        for (const Grid* g : all_mags) total += g->v[i];
        out.grid.v[i] = target_mag.v[i] / (total + kRatioEps);
    }
    return out;
}

template <typename T>
Tensor<T> separation_loss(const PredictedMask<T>& pred, const GtMask& gt, MaskKind kind) {
    require(gt.kind == kind, msg("separation_loss: requested ", mask_kind_name(kind),
                                 " loss against a ", mask_kind_name(gt.kind), " ground truth"));
    Tensor<T> target = grid_to_tensor<T>(gt.grid);
    if (kind == MaskKind::binary) return bce_with_logits(pred.logits, target, Reduction::mean);
    return l1_loss(pred.mu, target);
}

template <typename T>
Tensor<T> grid_to_tensor(const Grid& g) {
    std::vector<T> v(g.v.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(g.v[i]);
    return Tensor<T>::from({g.rows, g.cols}, std::move(v));
}

template <typename T>
Grid tensor_to_grid(const Tensor<T>& t) {
    require(t.rank() == 2, msg("tensor_to_grid: want rank 2, got ", shape_str(t.shape())));
    Grid g(t.dim(0), t.dim(1));
    auto v = t.values();
    for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] = static_cast<double>(v[i]);
    return g;
}

#define MBS_INSTANTIATE_FUSION(T)                                                              \
    template Tensor<T> fuse_features<T>(const Tensor<T>&, const Tensor<T>&);                   \
    template class CoeffHead<T>;                                                               \
    template Tensor<T> mask_logits<T>(const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> compose_mask<T>(const Tensor<T>&, const Tensor<T>&);                    \
    template PredictedMask<T> predict_mask<T>(const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> separation_loss<T>(const PredictedMask<T>&, const GtMask&, MaskKind);   \
    template Tensor<T> grid_to_tensor<T>(const Grid&);                                         \
    template Grid tensor_to_grid<T>(const Tensor<T>&);

MBS_INSTANTIATE_FUSION(float)
MBS_INSTANTIATE_FUSION(double)

#undef MBS_INSTANTIATE_FUSION

}  // namespace mbs
