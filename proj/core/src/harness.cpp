#include "mbs/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace mbs {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kSampleSalt = 0x7EA17EA1ull;
constexpr std::uint64_t kEvalSalt = 0xE7A1BA5Eull;

struct ObjectRef {
    int clip_index = 0;  // 0 = a, 1 = b
    int class_id = -1;
    const Waveform* stem = nullptr;
    Grid warped_mag;
};

std::vector<ObjectRef> mixed_objects(const MixedItem& item, const DspPreset& dsp) {
    std::vector<ObjectRef> objs;
    auto add = [&](const ClipData& clip, int clip_index) {
        for (std::size_t i = 0; i < clip.classes.size(); ++i) {
            ObjectRef o;
            o.clip_index = clip_index;
            o.class_id = clip.classes[i];
            o.stem = &clip.stems[i];
            o.warped_mag =
                warp_log_freq(stft(clip.stems[i], dsp.window_len, dsp.hop).magnitude(),
                              dsp.warp_bins)
                    .data;
            objs.push_back(std::move(o));
        }
    };
    add(item.a, 0);
    add(item.b, 1);
    return objs;
}

std::string permutation_string(const std::vector<int>& perm) {
    std::string s;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (i) s += '-';
        s += std::to_string(perm[i]);
    }
    return s;
}

std::string format_double(double v) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(6) << v;
    return o.str();
}

GtMask ground_truth_mask(MaskKind kind, const std::vector<ObjectRef>& objs, std::size_t target) {
    if (kind == MaskKind::binary) {
        std::vector<const Grid*> others;
        for (std::size_t j = 0; j < objs.size(); ++j)
            if (j != target) others.push_back(&objs[j].warped_mag);
        return gt_binary_mask(objs[target].warped_mag, others);
    }
    std::vector<const Grid*> all;
    for (const auto& o : objs) all.push_back(&o.warped_mag);
    return gt_ratio_mask(objs[target].warped_mag, all);
}

}  // namespace

ClipData load_clip(const Dataset& ds, const ManifestItem& item) {
    ClipData c;
    c.clip_id = item.clip_id;
    c.frame = ds.load_frame(item);
    c.mixture = ds.load_mixture(item);
    c.stems = ds.load_stems(item);
    c.classes = item.classes;
    return c;
}

MixedItem make_mixed_item(ClipData a, ClipData b) {
    require(!a.stems.empty() && !b.stems.empty(), "mix: clips must carry stems");
    const int n = a.mixture.length();
    require(b.mixture.length() == n, "mix: clip lengths differ");

    MixedItem item;
    item.a = std::move(a);
    item.b = std::move(b);

    auto sum_stems = [&](std::vector<double>& out) {
        out.assign(static_cast<std::size_t>(n), 0.0);
        for (const auto& s : item.a.stems)
            for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] += s.samples[static_cast<std::size_t>(i)];
        for (const auto& s : item.b.stems)
            for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] += s.samples[static_cast<std::size_t>(i)];
    };

    std::vector<double> mix;
    sum_stems(mix);
    double peak = 0.0;
    for (double v : mix) peak = std::max(peak, std::abs(v));
    item.gain = peak > 1.0 ? 1.0 / peak : 1.0;
    if (item.gain != 1.0) {
        for (auto& s : item.a.stems)
            for (double& v : s.samples) v *= item.gain;
        for (auto& s : item.b.stems)
            for (double& v : s.samples) v *= item.gain;
        for (auto& s : item.a.mixture.samples) s *= item.gain;
        for (auto& s : item.b.mixture.samples) s *= item.gain;
        sum_stems(mix);  // keep the mixture the exact sum of the scaled stems
    }
    item.mixture.sample_rate = item.a.mixture.sample_rate;
    item.mixture.samples = std::move(mix);
    return item;
}

MixedItem sample_mix_pair(const Dataset& ds, const std::vector<const ManifestItem*>& pool,
                          double duet_fraction, std::mt19937_64& rng) {
    require(pool.size() >= 2, "sample_mix_pair: pool needs at least 2 clips");
    std::vector<const ManifestItem*> solos, duets;
    for (const auto* it : pool)
        (it->classes.size() > 1 ? duets : solos).push_back(it);

    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto draw = [&]() -> const ManifestItem* {
        const bool want_duet = !duets.empty() && uni(rng) < duet_fraction;
        const auto& src = want_duet ? duets : (solos.empty() ? duets : solos);
        std::uniform_int_distribution<std::size_t> pick(0, src.size() - 1);
        return src[pick(rng)];
    };

    for (int attempt = 0; attempt < 100; ++attempt) {
        const ManifestItem* ia = draw();
        const ManifestItem* ib = draw();
        if (ia == ib) continue;
        bool disjoint = true;
        for (int ca : ia->classes)
            for (int cb : ib->classes)
                if (ca == cb) disjoint = false;
        if (!disjoint) continue;
        return make_mixed_item(load_clip(ds, *ia), load_clip(ds, *ib));
    }
    fail("sample_mix_pair: no class-disjoint pair found after 100 attempts");
}

AudioFront audio_front(const Waveform& mix, const DspPreset& dsp) {
    AudioFront f;
    f.spec = stft(mix, dsp.window_len, dsp.hop);
    f.warped = warp_log_freq(f.spec.magnitude(), dsp.warp_bins);
    f.logmag_warped = log_compress(f.warped.data);
    return f;
}

template <typename T>
ItemLosses<T> forward_item(Model<T>& model, const MixedItem& item, bool train, double lambda) {
    const ModelSpec& spec = model.spec();
    const DspPreset& dsp = spec.dsp;
    require(item.mixture.length() == dsp.clip_samples,
            msg("forward_item: mixture has ", item.mixture.length(), " samples, preset wants ",
                dsp.clip_samples));

    const AudioFront front = audio_front(item.mixture, dsp);
    Tensor<T> input = reshape(grid_to_tensor<T>(front.logmag_warped),
                              {1, 1, dsp.warp_bins, dsp.frames()});
    auto unet_out = model.unet().forward(input, train);
    Tensor<T> bases = reshape(unet_out.bases,
                              {spec.unet.bases, dsp.warp_bins, dsp.frames()});
    Tensor<T> af = select_row(unet_out.bottleneck, 0);

    Tensor<T> frames = stack_rows<T>(
        {frame_to_tensor<T>(item.a.frame), frame_to_tensor<T>(item.b.frame)});
    auto vis = model.vision().forward(frames, train, model.rng());

    ItemLosses<T> out;
    out.c_a = c_loss(select_row(vis.scores, 0), item.a.classes, spec.vision.num_classes);
    out.c_b = c_loss(select_row(vis.scores, 1), item.b.classes, spec.vision.num_classes);

    // ground-truth label channels drive pooling during training (and here in
    // general: thresholded detection is an inference-time concern)
    const auto objs = mixed_objects(item, dsp);
    std::vector<Tensor<T>> fused_rows;
    for (const auto& o : objs) {
        Tensor<T> feats = select_row(vis.features, o.clip_index);
        Tensor<T> attn = select_row(vis.attention, o.clip_index);
        Tensor<T> pooled = model.vision().pooled_feature(feats, attn, o.class_id);
        fused_rows.push_back(fuse_features(pooled, af));
    }
    Tensor<T> coeff = model.head().forward(stack_rows(fused_rows), train);

    Tensor<T> sep_sum;
    for (std::size_t o = 0; o < objs.size(); ++o) {
        PredictedMask<T> pm = predict_mask(bases, select_row(coeff, static_cast<int>(o)));
        const GtMask gt = ground_truth_mask(spec.mask_kind, objs, o);
        Tensor<T> l = separation_loss(pm, gt, spec.mask_kind);
        sep_sum = sep_sum.defined() ? add(sep_sum, l) : l;
    }
    out.sep = scale(sep_sum, static_cast<T>(1.0 / static_cast<double>(objs.size())));
    out.total = add(out.sep, scale(add(out.c_a, out.c_b), static_cast<T>(lambda)));
    return out;
}

template <typename T>
StepReport train_step(Model<T>& model, const std::vector<MixedItem>& batch, const TrainConfig& cfg,
                      SgdOptimizer<T>& opt) {
    require(!batch.empty(), "train_step: empty batch");
    model.params().zero_grad();

    StepReport rep;
    Tensor<T> total;
    for (const auto& item : batch) {
        ItemLosses<T> l = forward_item(model, item, /*train=*/true, cfg.lambda);
        rep.c_loss_a += static_cast<double>(l.c_a.item());
        rep.c_loss_b += static_cast<double>(l.c_b.item());
        rep.sep_loss += static_cast<double>(l.sep.item());
        rep.total += static_cast<double>(l.total.item());
        total = total.defined() ? add(total, l.total) : l.total;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    rep.c_loss_a *= inv;
    rep.c_loss_b *= inv;
    rep.sep_loss *= inv;
    rep.total *= inv;
    total = scale(total, static_cast<T>(inv));

    if (!std::isfinite(rep.total)) {
        std::string dump = msg("train_step: non-finite loss (c_a=", rep.c_loss_a,
                               ", c_b=", rep.c_loss_b, ", sep=", rep.sep_loss, ")");
        for (const auto& e : model.params().entries)
            if (!e.tensor.all_finite()) dump += "\n  non-finite parameter: " + e.name;
        fail(dump);
    }
    total.backward();

    // the attention normalization can spike gradients by orders of magnitude
    // when a channel's spatial mass collapses; a global norm cap keeps SGD sane
    if (cfg.grad_clip > 0) {
        double norm2 = 0.0;
        for (const auto& e : model.params().entries) {
            if (!e.trainable) continue;
            for (T g : e.tensor.grad()) norm2 += static_cast<double>(g) * g;
        }
        const double norm = std::sqrt(norm2);
        if (norm > cfg.grad_clip) {
            const T s = static_cast<T>(cfg.grad_clip / norm);
            for (auto& e : model.params().entries) {
                if (!e.trainable) continue;
                for (auto& gv : e.tensor.grad_mut()) gv *= s;
            }
        }
    }
    opt.step(model.params());
    return rep;
}

template <typename T>
SeparationResult separate(Model<T>& model, const Image& frame, const Waveform& mixture, double tau,
                          const std::vector<int>* forced_classes) {
    const ModelSpec& spec = model.spec();
    const DspPreset& dsp = spec.dsp;
    require(mixture.length() == dsp.clip_samples,
            msg("separate: mixture has ", mixture.length(), " samples, preset wants ",
                dsp.clip_samples, " (resample/trim first)"));

    const AudioFront front = audio_front(mixture, dsp);
    Tensor<T> input = reshape(grid_to_tensor<T>(front.logmag_warped),
                              {1, 1, dsp.warp_bins, dsp.frames()});
    auto unet_out = model.unet().forward(input, /*train=*/false);
    Tensor<T> bases = reshape(unet_out.bases, {spec.unet.bases, dsp.warp_bins, dsp.frames()});
    Tensor<T> af = select_row(unet_out.bottleneck, 0);

    Tensor<T> frames = stack_rows<T>({frame_to_tensor<T>(frame)});
    auto vis = model.vision().forward(frames, /*train=*/false, model.rng());

    SeparationResult result;
    auto srow = select_row(vis.scores, 0).values();
    result.scores.assign(srow.begin(), srow.end());

    const std::vector<int> classes =
        forced_classes ? *forced_classes : detect_objects(result.scores, tau);
    if (classes.empty()) {
        result.empty_detection = true;
        return result;
    }

    Tensor<T> feats = select_row(vis.features, 0);
    Tensor<T> attn = select_row(vis.attention, 0);
    for (int c : classes) {
        require(c >= 0 && c < spec.vision.num_classes, msg("separate: class ", c, " out of range"));
        Tensor<T> pooled = model.vision().pooled_feature(feats, attn, c);
        Tensor<T> fused = fuse_features(pooled, af);
        Tensor<T> coeff = model.head().forward(fused, /*train=*/false);
        Tensor<T> mask_w = compose_mask(bases, coeff);

        SeparatedSource src;
        src.class_id = c;
        src.mask_warped = tensor_to_grid(mask_w);
        LogFreqSpectrogram warped{src.mask_warped, front.warped.map};
        src.mask_linear = unwarp_log_freq(warped, dsp.linear_bins());
        for (double& v : src.mask_linear.v) v = std::clamp(v, 0.0, 1.0);
        src.wave = istft(apply_mask(front.spec, src.mask_linear), mixture.length());
        result.sources.push_back(std::move(src));
    }
    return result;
}

SepSummary summarize(const std::vector<BssRow>& rows) {
    SepSummary s;
    for (const auto& r : rows) {
        s.sdr += r.metrics.sdr;
        s.sir += r.metrics.sir;
        s.sar += r.metrics.sar;
    }
    s.count = static_cast<int>(rows.size());
    if (s.count > 0) {
        s.sdr /= s.count;
        s.sir /= s.count;
        s.sar /= s.count;
    }
    return s;
}

namespace {

std::vector<BssRow> score_pair(const std::string& clip_id, const std::vector<Waveform>& estimates,
                               const std::vector<Waveform>& references,
                               const std::vector<int>& ref_classes, int filter_len) {
    PairEvaluation pe = evaluate_pair(estimates, references, filter_len);
    std::vector<BssRow> rows;
    const std::string perm = permutation_string(pe.permutation);
    for (std::size_t j = 0; j < references.size(); ++j)
        rows.push_back({clip_id, ref_classes[j], pe.per_source[j], perm});
    return rows;
}

}  // namespace

template <typename T>
SepReport evaluate_separation(Model<T>& model, const Dataset& ds, const TrainConfig& cfg) {
    const auto pool = ds.split("test");
    require(!pool.empty(), "evaluate_separation: empty test split");
    std::mt19937_64 rng(splitmix64(cfg.seed ^ kEvalSalt));

    SepReport rep;
    for (int p = 0; p < cfg.eval_pairs; ++p) {
        const MixedItem item = sample_mix_pair(ds, pool, cfg.duet_fraction, rng);
        const std::string clip_id = item.a.clip_id + "+" + item.b.clip_id;

        std::vector<Waveform> references;
        std::vector<int> ref_classes;
        std::vector<int> ref_clip;
        for (std::size_t i = 0; i < item.a.stems.size(); ++i) {
            references.push_back(item.a.stems[i]);
            ref_classes.push_back(item.a.classes[i]);
            ref_clip.push_back(0);
        }
        for (std::size_t i = 0; i < item.b.stems.size(); ++i) {
            references.push_back(item.b.stems[i]);
            ref_classes.push_back(item.b.classes[i]);
            ref_clip.push_back(1);
        }

        // protocol mode: condition each frame's separation on its GT labels
        SeparationResult pa = separate(model, item.a.frame, item.mixture, cfg.tau, &item.a.classes);
        SeparationResult pb = separate(model, item.b.frame, item.mixture, cfg.tau, &item.b.classes);
        // deployment mode: threshold detection; undetected references fall
        // back to the mixture as their estimate
        SeparationResult da = separate(model, item.a.frame, item.mixture, cfg.tau);
        SeparationResult db = separate(model, item.b.frame, item.mixture, cfg.tau);

        auto pick = [&](const SeparationResult& r, int class_id) -> const Waveform* {
            for (const auto& s : r.sources)
                if (s.class_id == class_id) return &s.wave;
            return nullptr;
        };
        std::vector<Waveform> est_protocol, est_deploy, est_baseline;
        for (std::size_t j = 0; j < references.size(); ++j) {
            const SeparationResult& pr = ref_clip[j] == 0 ? pa : pb;
            const SeparationResult& dr = ref_clip[j] == 0 ? da : db;
            const Waveform* pw = pick(pr, ref_classes[j]);
            require(pw != nullptr, "evaluate_separation: protocol separation missing a class");
            est_protocol.push_back(*pw);
            const Waveform* dw = pick(dr, ref_classes[j]);
            est_deploy.push_back(dw ? *dw : item.mixture);
            est_baseline.push_back(item.mixture);
        }

        auto append = [](std::vector<BssRow>& dst, std::vector<BssRow> rows) {
            for (auto& r : rows) dst.push_back(std::move(r));
        };
        append(rep.protocol,
               score_pair(clip_id, est_protocol, references, ref_classes, cfg.filter_len));
        append(rep.deployment,
               score_pair(clip_id, est_deploy, references, ref_classes, cfg.filter_len));
        append(rep.baseline,
               score_pair(clip_id, est_baseline, references, ref_classes, cfg.filter_len));
    }
    rep.mean_protocol = summarize(rep.protocol);
    rep.mean_deployment = summarize(rep.deployment);
    rep.mean_baseline = summarize(rep.baseline);
    return rep;
}

double ClsReport::best_accuracy() const {
    double best = 0.0;
    for (double a : accuracy) best = std::max(best, a);
    return best;
}

template <typename T>
ClsReport evaluate_classification(Model<T>& model, const Dataset& ds,
                                  const std::vector<double>& taus) {
    const auto pool = ds.split("test");
    require(!pool.empty(), "evaluate_classification: empty test split");

    std::vector<std::vector<double>> score_rows;
    std::vector<std::set<int>> truth;
    for (const auto* it : pool) {
        Image frame = ds.load_frame(*it);
        Tensor<T> frames = stack_rows<T>({frame_to_tensor<T>(frame)});
        auto vis = model.vision().forward(frames, /*train=*/false, model.rng());
        auto row = select_row(vis.scores, 0).values();
        score_rows.emplace_back(row.begin(), row.end());
        truth.emplace_back(it->classes.begin(), it->classes.end());
    }

    ClsReport rep;
    rep.taus = taus;
    for (double tau : taus) {
        int correct = 0;
        for (std::size_t i = 0; i < score_rows.size(); ++i) {
            const auto detected = detect_objects(score_rows[i], tau);
            if (std::set<int>(detected.begin(), detected.end()) == truth[i]) ++correct;
        }
        rep.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(score_rows.size()));
    }
    return rep;
}

SepReport oracle_evaluate(const Dataset& ds, const TrainConfig& cfg, MaskKind kind) {
    const auto pool = ds.split("test");
    require(!pool.empty(), "oracle: empty test split");
    std::mt19937_64 rng(splitmix64(cfg.seed ^ kEvalSalt));
    const DspPreset dsp = make_model_spec(cfg).dsp;

    SepReport rep;
    for (int p = 0; p < cfg.eval_pairs; ++p) {
        const MixedItem item = sample_mix_pair(ds, pool, cfg.duet_fraction, rng);
        const std::string clip_id = item.a.clip_id + "+" + item.b.clip_id;
        const AudioFront front = audio_front(item.mixture, dsp);
        const auto objs = mixed_objects(item, dsp);

        std::vector<Waveform> references, est_oracle, est_baseline;
        std::vector<int> ref_classes;
        for (std::size_t o = 0; o < objs.size(); ++o) {
            references.push_back(*objs[o].stem);
            ref_classes.push_back(objs[o].class_id);

            GtMask ideal = ground_truth_mask(kind, objs, o);
            LogFreqSpectrogram warped{ideal.grid, front.warped.map};
            Grid lin = unwarp_log_freq(warped, dsp.linear_bins());
            for (double& v : lin.v) v = std::clamp(v, 0.0, 1.0);
            est_oracle.push_back(istft(apply_mask(front.spec, lin), item.mixture.length()));
            est_baseline.push_back(item.mixture);
        }
        auto append = [](std::vector<BssRow>& dst, std::vector<BssRow> rows) {
            for (auto& r : rows) dst.push_back(std::move(r));
        };
        append(rep.protocol,
               score_pair(clip_id, est_oracle, references, ref_classes, cfg.filter_len));
        append(rep.baseline,
               score_pair(clip_id, est_baseline, references, ref_classes, cfg.filter_len));
    }
    rep.mean_protocol = summarize(rep.protocol);
    rep.mean_baseline = summarize(rep.baseline);
    return rep;
}

void write_bss_csv(const std::string& path, const std::vector<BssRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), msg("csv: cannot open '", path, "' for writing"));
    out << "clip_id,source_class,SDR,SIR,SAR,permutation\n";
    for (const auto& r : rows)
        out << r.clip_id << ',' << r.source_class << ',' << format_double(r.metrics.sdr) << ','
            << format_double(r.metrics.sir) << ',' << format_double(r.metrics.sar) << ','
            << r.permutation << '\n';
    require(out.good(), msg("csv: write failed for '", path, "'"));
}

void write_summary_csv(const std::string& path,
                       const std::vector<std::pair<std::string, SepSummary>>& rows) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), msg("csv: cannot open '", path, "' for writing"));
    out << "mode,mean_SDR,mean_SIR,mean_SAR,sources\n";
    for (const auto& [name, s] : rows)
        out << name << ',' << format_double(s.sdr) << ',' << format_double(s.sir) << ','
            << format_double(s.sar) << ',' << s.count << '\n';
}

void write_cls_csv(const std::string& path, const std::string& model_name, const ClsReport& rep) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), msg("csv: cannot open '", path, "' for writing"));
    out << "model";
    for (double t : rep.taus) out << ',' << format_double(t);
    out << "\n" << model_name;
    for (double a : rep.accuracy) out << ',' << format_double(a);
    out << "\n";
}

template <typename T>
void save_model(const Model<T>& model, const std::string& path) {
    save_checkpoint(model.params(), path);
}

template <typename T>
void load_model(Model<T>& model, const std::string& path) {
    load_checkpoint(model.params(), path);
}

TrainResult run_training(const TrainConfig& cfg,
                         const std::function<void(int, const StepReport&)>& on_step) {
    cfg.validate();
    require(!cfg.data_dir.empty(), "train: data_dir is required");
    require(!cfg.out_dir.empty(), "train: out_dir is required");
    const Dataset ds = load_dataset(cfg.data_dir);
    const auto pool = ds.split("train");
    require(pool.size() >= 2, "train: need at least 2 training clips");

    Model<float> model(make_model_spec(cfg), cfg.seed);
    SgdOptimizer<float> opt(static_cast<float>(cfg.learning_rate),
                            static_cast<float>(cfg.momentum));
    std::mt19937_64 sample_rng(splitmix64(cfg.seed ^ kSampleSalt));

    TrainResult result;
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<MixedItem> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i)
            batch.push_back(sample_mix_pair(ds, pool, cfg.duet_fraction, sample_rng));
        const StepReport rep = train_step(model, batch, cfg, opt);
        result.curve.push_back(rep);
        if (on_step) on_step(step, rep);
    }

    fs::create_directories(cfg.out_dir);
    result.checkpoint_path = (fs::path(cfg.out_dir) / "model.ckpt").string();
    save_model(model, result.checkpoint_path);
    result.log_path = (fs::path(cfg.out_dir) / "train_log.csv").string();
    std::ofstream log(result.log_path, std::ios::trunc);
    require(log.good(), "train: cannot write loss log");
    log << "step,c_loss_a,c_loss_b,sep_loss,total\n";
    for (std::size_t i = 0; i < result.curve.size(); ++i) {
        const auto& r = result.curve[i];
        log << i << ',' << format_double(r.c_loss_a) << ',' << format_double(r.c_loss_b) << ','
            << format_double(r.sep_loss) << ',' << format_double(r.total) << '\n';
    }
    return result;
}

template ItemLosses<float> forward_item<float>(Model<float>&, const MixedItem&, bool, double);
template ItemLosses<double> forward_item<double>(Model<double>&, const MixedItem&, bool, double);
template StepReport train_step<float>(Model<float>&, const std::vector<MixedItem>&,
                                      const TrainConfig&, SgdOptimizer<float>&);
template StepReport train_step<double>(Model<double>&, const std::vector<MixedItem>&,
                                       const TrainConfig&, SgdOptimizer<double>&);
template SeparationResult separate<float>(Model<float>&, const Image&, const Waveform&, double,
                                          const std::vector<int>*);
template SeparationResult separate<double>(Model<double>&, const Image&, const Waveform&, double,
                                           const std::vector<int>*);
template SepReport evaluate_separation<float>(Model<float>&, const Dataset&, const TrainConfig&);
template ClsReport evaluate_classification<float>(Model<float>&, const Dataset&,
                                                  const std::vector<double>&);
template ClsReport evaluate_classification<double>(Model<double>&, const Dataset&,
                                                   const std::vector<double>&);
template void save_model<float>(const Model<float>&, const std::string&);
template void save_model<double>(const Model<double>&, const std::string&);
template void load_model<float>(Model<float>&, const std::string&);
template void load_model<double>(Model<double>&, const std::string&);

}  // namespace mbs
