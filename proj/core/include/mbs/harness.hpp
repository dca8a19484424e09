#pragma once

// Mix-and-separate training, inference, and the evaluation protocols
// (separation metrics in protocol/deployment/baseline modes, and the
// tau-sweep classification accuracy table).

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mbs/bss.hpp"
#include "mbs/corpus.hpp"
#include "mbs/model.hpp"

namespace mbs {

struct ClipData {
    std::string clip_id;
    Image frame;
    Waveform mixture;             // clip-level mixture (equals the stem for solos)
    std::vector<Waveform> stems;  // ordered like classes
    std::vector<int> classes;
};

ClipData load_clip(const Dataset& ds, const ManifestItem& item);

// Two clips mixed sample-exactly; one gain applied jointly to every stem so
// the mixture stays the exact sum of the (scaled) stems with peak <= 1.
struct MixedItem {
    ClipData a, b;
    Waveform mixture;
    double gain = 1.0;

    int object_count() const {
        return static_cast<int>(a.classes.size() + b.classes.size());
    }
};

MixedItem make_mixed_item(ClipData a, ClipData b);

// Draws two distinct clips with disjoint class sets (bounded retries).
MixedItem sample_mix_pair(const Dataset& ds, const std::vector<const ManifestItem*>& pool,
                          double duet_fraction, std::mt19937_64& rng);

// Shared audio front end: linear spectrogram, warped magnitude, log input.
struct AudioFront {
    ComplexSpectrogram spec;
    LogFreqSpectrogram warped;
    Grid logmag_warped;
};
AudioFront audio_front(const Waveform& mix, const DspPreset& dsp);

struct StepReport {
    double c_loss_a = 0.0;
    double c_loss_b = 0.0;
    double sep_loss = 0.0;
    double total = 0.0;
};

template <typename T>
struct ItemLosses {
    Tensor<T> total, c_a, c_b, sep;
};

// Forward both paths for one mixed item: one U-Net pass for the mixture,
// per-object coefficient rows batched through the head, teacher-forced
// ground-truth attention channels during training.
// total = sep_loss + lambda * (c_loss_a + c_loss_b)
template <typename T>
ItemLosses<T> forward_item(Model<T>& model, const MixedItem& item, bool train, double lambda);

// One optimizer step over a batch of mixed items; returns pre-step losses.
// Aborts with a diagnostic dump when any loss goes non-finite.
template <typename T>
StepReport train_step(Model<T>& model, const std::vector<MixedItem>& batch, const TrainConfig& cfg,
                      SgdOptimizer<T>& opt);

struct SeparatedSource {
    int class_id = -1;
    Waveform wave;
    Grid mask_warped;  // composed mask in the warped domain
    Grid mask_linear;  // unwarped, clipped to [0,1]
};

struct SeparationResult {
    std::vector<SeparatedSource> sources;
    std::vector<double> scores;  // raw S_c per class
    bool empty_detection = false;
};

// Detect classes at threshold tau (or condition on forced_classes), compose
// one mask per object over shared bases, unwarp, apply to the mixture
// spectrogram with its phase, and reconstruct waveforms.
template <typename T>
SeparationResult separate(Model<T>& model, const Image& frame, const Waveform& mixture, double tau,
                          const std::vector<int>* forced_classes = nullptr);

struct BssRow {
    std::string clip_id;
    int source_class = -1;
    BssMetrics metrics;
    std::string permutation;
};

struct SepSummary {
    double sdr = 0.0, sir = 0.0, sar = 0.0;
    int count = 0;
};

struct SepReport {
    std::vector<BssRow> protocol, deployment, baseline;
    SepSummary mean_protocol, mean_deployment, mean_baseline;
};

SepSummary summarize(const std::vector<BssRow>& rows);

template <typename T>
SepReport evaluate_separation(Model<T>& model, const Dataset& ds, const TrainConfig& cfg);

struct ClsReport {
    std::vector<double> taus;
    std::vector<double> accuracy;  // exact-match multi-label accuracy per tau

    double best_accuracy() const;
};

template <typename T>
ClsReport evaluate_classification(Model<T>& model, const Dataset& ds,
                                  const std::vector<double>& taus);

// Ideal-mask upper bounds through the same warp → unwarp → ISTFT path.
SepReport oracle_evaluate(const Dataset& ds, const TrainConfig& cfg, MaskKind kind);

void write_bss_csv(const std::string& path, const std::vector<BssRow>& rows);
void write_summary_csv(const std::string& path,
                       const std::vector<std::pair<std::string, SepSummary>>& rows);
void write_cls_csv(const std::string& path, const std::string& model_name, const ClsReport& rep);

template <typename T>
void save_model(const Model<T>& model, const std::string& path);
template <typename T>
void load_model(Model<T>& model, const std::string& path);

struct TrainResult {
    std::vector<StepReport> curve;
    std::string checkpoint_path;
    std::string log_path;
};

// Full training run: corpus in cfg.data_dir, checkpoint + loss log under
// cfg.out_dir. Deterministic given (config, seed).
TrainResult run_training(const TrainConfig& cfg,
                         const std::function<void(int, const StepReport&)>& on_step = {});

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// The 64-bit finite-difference suite over every layer op and the three
// end-to-end losses, on the tiny preset.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

extern template ItemLosses<float> forward_item<float>(Model<float>&, const MixedItem&, bool,
                                                      double);
extern template ItemLosses<double> forward_item<double>(Model<double>&, const MixedItem&, bool,
                                                        double);

}  // namespace mbs
