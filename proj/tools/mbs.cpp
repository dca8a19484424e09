// Command-line front end: corpus synthesis, training, separation, the two
// evaluation protocols, ideal-mask oracle bounds, and the gradient-check
// suite.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "mbs/harness.hpp"
#include "mbs/spec_io.hpp"
#include "mbs/wav.hpp"

namespace fs = std::filesystem;
using namespace mbs;

namespace {

struct ConfigCli {
    std::string config_path;
    TrainConfig cfg;
    CLI::Option* seed_opt = nullptr;
};

// precedence: CLI flag > MBS_SEED > config file > defaults
void add_config_options(CLI::App* app, ConfigCli& c) {
    app->add_option("--config", c.config_path, "JSON config file (keys mirror the flags)");
    app->add_option("--preset", c.cfg.preset, "Model/DSP preset: desk, paper, tiny");
    app->add_option("--k", c.cfg.k, "Mask basis count (0 = preset default)");
    app->add_option("--depth", c.cfg.depth, "U-Net depth (0 = preset default)");
    app->add_option("--classes", c.cfg.num_classes, "Number of object classes");
    app->add_option("--lr", c.cfg.learning_rate, "SGD learning rate");
    app->add_option("--momentum", c.cfg.momentum, "SGD momentum");
    app->add_option("--batch", c.cfg.batch_size, "Mixed pairs per optimizer step");
    app->add_option("--steps", c.cfg.steps, "Optimizer steps");
    app->add_option("--tau", c.cfg.tau, "Detection threshold on sigmoid scores");
    app->add_option("--mask", c.cfg.mask_kind, "Mask kind: binary or ratio");
    app->add_option("--lambda", c.cfg.lambda, "Weight of the classification losses");
    app->add_option("--duet-fraction", c.cfg.duet_fraction, "Probability of duet clips when mixing");
    c.seed_opt = app->add_option("--seed", c.cfg.seed, "RNG seed (MBS_SEED overrides config)");
    app->add_option("--eval-pairs", c.cfg.eval_pairs, "Test mixtures per evaluation");
    app->add_option("--filter-len", c.cfg.filter_len, "BSS-eval distortion filter taps");
}

TrainConfig resolve_config(const CLI::App* app, const ConfigCli& c) {
    TrainConfig cfg = c.cfg;
    if (!c.config_path.empty()) {
        // file values win over defaults; explicit flags win over the file
        TrainConfig merged = load_config_file(c.config_path);
        auto given = [&](const char* flag) { return app->count(flag) > 0; };
        if (given("--preset")) merged.preset = cfg.preset;
        if (given("--k")) merged.k = cfg.k;
        if (given("--depth")) merged.depth = cfg.depth;
        if (given("--classes")) merged.num_classes = cfg.num_classes;
        if (given("--lr")) merged.learning_rate = cfg.learning_rate;
        if (given("--momentum")) merged.momentum = cfg.momentum;
        if (given("--batch")) merged.batch_size = cfg.batch_size;
        if (given("--steps")) merged.steps = cfg.steps;
        if (given("--tau")) merged.tau = cfg.tau;
        if (given("--mask")) merged.mask_kind = cfg.mask_kind;
        if (given("--lambda")) merged.lambda = cfg.lambda;
        if (given("--duet-fraction")) merged.duet_fraction = cfg.duet_fraction;
        if (given("--seed")) merged.seed = cfg.seed;
        if (given("--eval-pairs")) merged.eval_pairs = cfg.eval_pairs;
        if (given("--filter-len")) merged.filter_len = cfg.filter_len;
        cfg = merged;
    }
    if (auto env = env_seed(); env && c.seed_opt->count() == 0) cfg.seed = *env;
    return cfg;
}

Waveform prepare_mixture(Waveform w, const DspPreset& dsp) {
    if (w.sample_rate != dsp.sample_rate) w = resample(w, dsp.sample_rate);
    if (w.length() > dsp.clip_samples) w.samples.resize(static_cast<std::size_t>(dsp.clip_samples));
    if (w.length() < dsp.clip_samples) w.samples.resize(static_cast<std::size_t>(dsp.clip_samples), 0.0);
    return w;
}

int cmd_synth(const TrainConfig& cfg, const std::string& out, int train_solos, int val_solos,
              int test_solos, int duets, int frame_size, bool overwrite) {
    CorpusConfig cc;
    cc.num_classes = cfg.num_classes;
    cc.train_solos_per_class = train_solos;
    cc.val_solos_per_class = val_solos;
    cc.test_solos_per_class = test_solos;
    cc.train_duets = duets;
    cc.frame_size = frame_size;
    cc.dsp = make_model_spec(cfg).dsp;
    cc.seed = cfg.seed;
    cc.overwrite = overwrite;
    generate_corpus(cc, out);
    const Dataset ds = load_dataset(out);
    std::cout << "wrote " << ds.items.size() << " clips to " << out << "\n";
    return 0;
}

int cmd_train(TrainConfig cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res = run_training(cfg, [&](int step, const StepReport& r) {
        if (step % 50 == 0 || step + 1 == cfg.steps) {
            std::cout << "step " << step << "  total " << r.total << "  sep " << r.sep_loss
                      << "  c " << r.c_loss_a + r.c_loss_b << "\n";
        }
    });
    const auto secs =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - t0);
    std::cout << "checkpoint: " << res.checkpoint_path << "\nloss log:   " << res.log_path
              << "\ntrained " << cfg.steps << " steps in " << secs.count() << "s\n";
    return 0;
}

int cmd_separate(const TrainConfig& cfg, const std::string& ckpt, const std::string& frame_path,
                 const std::string& audio_path, const std::string& out_dir,
                 const std::vector<int>& forced, bool dump_attention) {
    Model<float> model(make_model_spec(cfg), cfg.seed);
    load_model(model, ckpt);
    const Image frame = read_image(frame_path);
    const Waveform mix = prepare_mixture(read_wav(audio_path), model.spec().dsp);
    fs::create_directories(out_dir);

    SeparationResult res =
        separate(model, frame, mix, cfg.tau, forced.empty() ? nullptr : &forced);
    if (res.empty_detection) {
        std::cout << "warning: no class above tau=" << cfg.tau << "; nothing separated\n";
        return 0;
    }
    for (const auto& src : res.sources) {
        const std::string stem = (fs::path(out_dir) / ("sep_class" + std::to_string(src.class_id))).string();
        write_wav(stem + ".wav", src.wave);
        write_spec1(stem + "_mask.spec1", src.mask_linear);
        std::cout << "class " << src.class_id << " -> " << stem << ".wav\n";
    }
    if (dump_attention) {
        Tensor<float> frames = stack_rows<float>({frame_to_tensor<float>(frame)});
        auto vis = model.vision().forward(frames, false, model.rng());
        Tensor<float> attn = select_row(vis.attention, 0);
        for (int c = 0; c < model.spec().vision.num_classes; ++c) {
            Grid g = tensor_to_grid(select_channel(attn, c));
            write_spec1((fs::path(out_dir) / ("attention_class" + std::to_string(c) + ".spec1")).string(), g);
        }
    }
    return 0;
}

int cmd_eval_sep(TrainConfig cfg, const std::string& ckpt_binary, const std::string& ckpt_ratio,
                 const std::string& out_dir) {
    const Dataset ds = load_dataset(cfg.data_dir);
    fs::create_directories(out_dir);
    std::vector<std::pair<std::string, SepSummary>> summary;

    auto run_one = [&](const std::string& name, const std::string& ckpt, MaskKind kind) {
        cfg.mask_kind = kind == MaskKind::binary ? "binary" : "ratio";
        Model<float> model(make_model_spec(cfg), cfg.seed);
        load_model(model, ckpt);
        SepReport rep = evaluate_separation(model, ds, cfg);
        write_bss_csv((fs::path(out_dir) / ("sep_" + name + "_protocol.csv")).string(), rep.protocol);
        write_bss_csv((fs::path(out_dir) / ("sep_" + name + "_deployment.csv")).string(),
                      rep.deployment);
        write_bss_csv((fs::path(out_dir) / ("sep_" + name + "_baseline.csv")).string(), rep.baseline);
        summary.emplace_back(name + "_protocol", rep.mean_protocol);
        summary.emplace_back(name + "_deployment", rep.mean_deployment);
        summary.emplace_back(name + "_baseline", rep.mean_baseline);
        std::cout << name << ": protocol SDR " << rep.mean_protocol.sdr << " dB, deployment SDR "
                  << rep.mean_deployment.sdr << " dB, baseline SDR " << rep.mean_baseline.sdr
                  << " dB\n";
    };
    if (!ckpt_binary.empty()) run_one("binary", ckpt_binary, MaskKind::binary);
    if (!ckpt_ratio.empty()) run_one("ratio", ckpt_ratio, MaskKind::ratio);
    write_summary_csv((fs::path(out_dir) / "summary.csv").string(), summary);
    std::cout << "reports in " << out_dir << "\n";
    return 0;
}

int cmd_eval_cls(TrainConfig cfg, const std::string& ckpt, const std::string& out_csv,
                 std::vector<double> taus) {
    if (taus.empty()) taus = {0.1, 0.2, 0.3, 0.4, 0.5};
    const Dataset ds = load_dataset(cfg.data_dir);
    Model<float> model(make_model_spec(cfg), cfg.seed);
    load_model(model, ckpt);
    ClsReport rep = evaluate_classification(model, ds, taus);
    write_cls_csv(out_csv, cfg.mask_kind, rep);
    for (std::size_t i = 0; i < taus.size(); ++i)
        std::cout << "tau " << taus[i] << ": " << rep.accuracy[i] * 100.0 << "%\n";
    std::cout << "table: " << out_csv << "\n";
    return 0;
}

int cmd_oracle(TrainConfig cfg, const std::string& out_dir, const std::string& kinds) {
    const Dataset ds = load_dataset(cfg.data_dir);
    fs::create_directories(out_dir);
    std::vector<std::pair<std::string, SepSummary>> summary;
    auto run_one = [&](const std::string& name, MaskKind kind) {
        SepReport rep = oracle_evaluate(ds, cfg, kind);
        write_bss_csv((fs::path(out_dir) / ("oracle_" + name + ".csv")).string(), rep.protocol);
        write_bss_csv((fs::path(out_dir) / ("oracle_" + name + "_baseline.csv")).string(),
                      rep.baseline);
        summary.emplace_back("oracle_" + name, rep.mean_protocol);
        summary.emplace_back("baseline", rep.mean_baseline);
        std::cout << "ideal " << name << " mask: SDR " << rep.mean_protocol.sdr
                  << " dB (baseline " << rep.mean_baseline.sdr << " dB, margin "
                  << rep.mean_protocol.sdr - rep.mean_baseline.sdr << " dB)\n";
    };
    if (kinds == "binary" || kinds == "both") run_one("binary", MaskKind::binary);
    if (kinds == "ratio" || kinds == "both") run_one("ratio", MaskKind::ratio);
    write_summary_csv((fs::path(out_dir) / "summary.csv").string(), summary);
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto results = run_gradcheck_suite(seed);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-28s max rel err %.3e (tol %.0e)  %s\n", r.name.c_str(), r.max_rel_err,
                    r.tolerance, r.pass ? "ok" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mask-basis audio-visual source separation"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate the synthetic audiovisual corpus");
    ConfigCli synth_cfg;
    add_config_options(synth, synth_cfg);
    std::string synth_out;
    int train_solos = 200, val_solos = 20, test_solos = 20, duets = 100, frame_size = 64;
    bool overwrite = false;
    synth->add_option("--out", synth_out, "Output dataset directory")->required();
    synth->add_option("--train-solos", train_solos, "Training solo clips per class");
    synth->add_option("--val-solos", val_solos, "Validation solo clips per class");
    synth->add_option("--test-solos", test_solos, "Test solo clips per class");
    synth->add_option("--duets", duets, "Training duet clips");
    synth->add_option("--frame-size", frame_size, "Square frame size in pixels");
    synth->add_flag("--overwrite", overwrite, "Replace a non-empty output directory");

    // train
    auto* train = app.add_subcommand("train", "Train on mixed pairs from a corpus");
    ConfigCli train_cfg;
    add_config_options(train, train_cfg);
    train->add_option("--data", train_cfg.cfg.data_dir, "Dataset directory")->required();
    train->add_option("--out", train_cfg.cfg.out_dir, "Output directory")->required();

    // separate
    auto* sep = app.add_subcommand("separate", "Separate one clip into per-class stems");
    ConfigCli sep_cfg;
    add_config_options(sep, sep_cfg);
    std::string sep_ckpt, sep_frame, sep_audio, sep_out;
    std::vector<int> sep_classes;
    bool dump_attention = false;
    sep->add_option("--checkpoint", sep_ckpt, "Model checkpoint")->required();
    sep->add_option("--frame", sep_frame, "Frame image (.ppm or .png)")->required();
    sep->add_option("--audio", sep_audio, "Mixture WAV")->required();
    sep->add_option("--out", sep_out, "Output directory")->required();
    sep->add_option("--force-classes", sep_classes, "Bypass detection with these class ids");
    sep->add_flag("--dump-attention", dump_attention, "Dump per-class attention maps (SPEC1)");

    // eval-sep
    auto* esep = app.add_subcommand("eval-sep", "Separation metrics on the test split");
    ConfigCli esep_cfg;
    add_config_options(esep, esep_cfg);
    std::string ckpt_binary, ckpt_ratio, esep_out;
    esep->add_option("--data", esep_cfg.cfg.data_dir, "Dataset directory")->required();
    esep->add_option("--out", esep_out, "Report directory")->required();
    esep->add_option("--checkpoint-binary", ckpt_binary, "Binary-mask model checkpoint");
    esep->add_option("--checkpoint-ratio", ckpt_ratio, "Ratio-mask model checkpoint");

    // eval-cls
    auto* ecls = app.add_subcommand("eval-cls", "Multi-label classification accuracy vs tau");
    ConfigCli ecls_cfg;
    add_config_options(ecls, ecls_cfg);
    std::string ecls_ckpt, ecls_out;
    std::vector<double> ecls_taus;
    ecls->add_option("--checkpoint", ecls_ckpt, "Model checkpoint")->required();
    ecls->add_option("--data", ecls_cfg.cfg.data_dir, "Dataset directory")->required();
    ecls->add_option("--out", ecls_out, "Output CSV path")->required();
    ecls->add_option("--taus", ecls_taus, "Thresholds to sweep");

    // oracle
    auto* oracle = app.add_subcommand("oracle", "Ideal-mask upper bounds on the test split");
    ConfigCli oracle_cfg;
    add_config_options(oracle, oracle_cfg);
    std::string oracle_out, oracle_kinds = "both";
    oracle->add_option("--data", oracle_cfg.cfg.data_dir, "Dataset directory")->required();
    oracle->add_option("--out", oracle_out, "Report directory")->required();
    oracle->add_option("--mask-kinds", oracle_kinds, "binary, ratio, or both");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Run the 64-bit finite-difference suite");
    std::uint64_t gc_seed = 1;
    gc->add_option("--seed", gc_seed, "Suite seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return cmd_synth(resolve_config(synth, synth_cfg), synth_out, train_solos, val_solos,
                             test_solos, duets, frame_size, overwrite);
        if (train->parsed()) {
            TrainConfig cfg = resolve_config(train, train_cfg);
            cfg.data_dir = train_cfg.cfg.data_dir;
            cfg.out_dir = train_cfg.cfg.out_dir;
            return cmd_train(cfg);
        }
        if (sep->parsed())
            return cmd_separate(resolve_config(sep, sep_cfg), sep_ckpt, sep_frame, sep_audio,
                                sep_out, sep_classes, dump_attention);
        if (esep->parsed()) {
            require(!ckpt_binary.empty() || !ckpt_ratio.empty(),
                    "eval-sep: supply --checkpoint-binary and/or --checkpoint-ratio");
            TrainConfig cfg = resolve_config(esep, esep_cfg);
            cfg.data_dir = esep_cfg.cfg.data_dir;
            return cmd_eval_sep(cfg, ckpt_binary, ckpt_ratio, esep_out);
        }
        if (ecls->parsed()) {
            TrainConfig cfg = resolve_config(ecls, ecls_cfg);
            cfg.data_dir = ecls_cfg.cfg.data_dir;
            return cmd_eval_cls(cfg, ecls_ckpt, ecls_out, ecls_taus);
        }
        if (oracle->parsed()) {
            TrainConfig cfg = resolve_config(oracle, oracle_cfg);
            cfg.data_dir = oracle_cfg.cfg.data_dir;
            return cmd_oracle(cfg, oracle_out, oracle_kinds);
        }
        if (gc->parsed()) return cmd_gradcheck(gc_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
