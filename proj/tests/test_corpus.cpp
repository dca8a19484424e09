#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mbs/corpus.hpp"
#include "mbs/wav.hpp"

using namespace mbs;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / "mbs_corpus_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CorpusConfig small_config(std::uint64_t seed) {
    CorpusConfig cfg;
    cfg.num_classes = 2;
    cfg.train_solos_per_class = 3;
    cfg.val_solos_per_class = 1;
    cfg.test_solos_per_class = 2;
    cfg.train_duets = 2;
    cfg.frame_size = 16;
    cfg.dsp = DspPreset::tiny();
    cfg.seed = seed;
    cfg.overwrite = true;
    return cfg;
}

int count_color(const Image& img, Rgb c) {
    int n = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const auto* p = img.pixel(x, y);
            if (p[0] == c.r && p[1] == c.g && p[2] == c.b) ++n;
        }
    return n;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("sustained stems put spectral peaks at the harmonics") {
    ClassSpec spec;
    spec.class_id = 0;
    spec.f0_lo = 200.0;
    spec.f0_hi = 200.0001;  // effectively pinned fundamental
    spec.harmonics = {1.0, 0.5, 0.4, 0.3};
    spec.envelope = EnvelopeKind::sustained;
    std::mt19937_64 rng(1);
    Waveform stem = synth_stem(spec, 0.535750, 8000.0, rng);
    REQUIRE(stem.length() == 4286);

    const int win = 4096;
    ComplexSpectrogram s = stft(stem, win, win);
    const double bin_hz = 8000.0 / win;
    for (int h = 1; h <= 4; ++h) {
        const double target = 200.0 * h;
        const int lo = static_cast<int>(target * 0.9 / bin_hz);
        const int hi = static_cast<int>(target * 1.1 / bin_hz);
        int argmax = lo;
        double best = -1.0;
        for (int f = lo; f <= hi; ++f)
            if (std::abs(s.at(f, 0)) > best) {
                best = std::abs(s.at(f, 0));
                argmax = f;
            }
        CHECK(std::abs(argmax * bin_hz - target) <= bin_hz);
    }
}

TEST_CASE("stems are deterministic per seed and differ across seeds") {
    const auto classes = default_classes(4);
    std::mt19937_64 a(5), b(5), c(6);
    Waveform wa = synth_stem(classes[1], 0.05, 8000.0, a);
    Waveform wb = synth_stem(classes[1], 0.05, 8000.0, b);
    Waveform wc = synth_stem(classes[1], 0.05, 8000.0, c);
    CHECK(wa.samples == wb.samples);
    CHECK(wa.samples != wc.samples);
    double peak = 0.0;
    for (double v : wa.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("plucked envelope decays monotonically after onset") {
    std::mt19937_64 rng(2);
    const auto env = make_envelope(EnvelopeKind::plucked, 4000, 8000.0, rng);
    const int onset = static_cast<int>(0.003 * 8000.0) + 1;
    for (int i = onset + 1; i < 4000; ++i)
        CHECK(env[static_cast<std::size_t>(i)] <= env[static_cast<std::size_t>(i - 1)] + 1e-12);
}

TEST_CASE("default class table keeps shape/color pairs distinct") {
    const auto classes = default_classes(8);
    for (std::size_t i = 0; i < classes.size(); ++i)
        for (std::size_t j = i + 1; j < classes.size(); ++j) {
            const bool same_shape = classes[i].shape == classes[j].shape;
            const bool same_color = classes[i].color.r == classes[j].color.r &&
                                    classes[i].color.g == classes[j].color.g &&
                                    classes[i].color.b == classes[j].color.b;
            CHECK(!(same_shape && same_color));
        }
    CHECK_THROWS_AS(default_classes(9), std::runtime_error);
    // unit-energy harmonic weights
    for (const auto& c : classes) {
        double e = 0.0;
        for (double w : c.harmonics) e += w * w;
        CHECK(e == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("render_frame places identifiable glyphs") {
    const auto classes = default_classes(4);
    std::mt19937_64 rng(3);
    Image solo = render_frame(classes, {2}, 64, rng);
    CHECK(count_color(solo, classes[2].color) > 20);
    CHECK(count_color(solo, classes[0].color) == 0);
    CHECK(count_color(solo, classes[1].color) == 0);

    Image duet = render_frame(classes, {0, 3}, 64, rng);
    CHECK(count_color(duet, classes[0].color) > 20);
    CHECK(count_color(duet, classes[3].color) > 20);

    std::mt19937_64 r1(9), r2(9);
    Image a = render_frame(classes, {1}, 32, r1);
    Image b = render_frame(classes, {1}, 32, r2);
    CHECK(a.rgb == b.rgb);
}

TEST_CASE("generate_corpus writes a loadable deterministic dataset") {
    const auto dir1 = fresh_dir("gen1");
    const auto dir2 = fresh_dir("gen2");
    const CorpusConfig cfg = small_config(42);
    generate_corpus(cfg, dir1.string());
    generate_corpus(cfg, dir2.string());

    // byte-identical regeneration: manifest plus a sampled clip
    CHECK(slurp(dir1 / "manifest.tsv") == slurp(dir2 / "manifest.tsv"));
    Dataset ds = load_dataset(dir1.string());
    const int expected = 2 * (3 + 1 + 2) + 2;  // solos per class per split + duets
    CHECK(static_cast<int>(ds.items.size()) == expected);
    CHECK(slurp(dir1 / ds.items[0].mixture_path) == slurp(dir2 / ds.items[0].mixture_path));
    CHECK(slurp(dir1 / ds.items[0].frame_path) == slurp(dir2 / ds.items[0].frame_path));

    CHECK(ds.split("train").size() == 2 * 3 + 2);
    CHECK(ds.split("val").size() == 2);
    CHECK(ds.split("test").size() == 4);

    // labels match stems; duets carry two classes
    int duets = 0;
    for (const auto& item : ds.items) {
        CHECK(item.classes.size() == item.stem_paths.size());
        if (item.classes.size() == 2) ++duets;
    }
    CHECK(duets == 2);
}

TEST_CASE("stored mixtures equal the exact sum of stored stems") {
    const auto dir = fresh_dir("sum");
    generate_corpus(small_config(7), dir.string());
    Dataset ds = load_dataset(dir.string());
    for (const auto& item : ds.items) {
        Waveform mix = ds.load_mixture(item);
        auto stems = ds.load_stems(item);
        for (int i = 0; i < mix.length(); ++i) {
            double acc = 0.0;
            for (const auto& s : stems) acc += s.samples[static_cast<std::size_t>(i)];
            CHECK(mix.samples[static_cast<std::size_t>(i)] == acc);
        }
        double peak = 0.0;
        for (double v : mix.samples) peak = std::max(peak, std::abs(v));
        CHECK(peak <= 1.0);
    }
}

TEST_CASE("generate_corpus refuses to clobber without the overwrite flag") {
    const auto dir = fresh_dir("noclobber");
    CorpusConfig cfg = small_config(1);
    generate_corpus(cfg, dir.string());
    cfg.overwrite = false;
    CHECK_THROWS_WITH_AS(generate_corpus(cfg, dir.string()), doctest::Contains("overwrite"),
                         std::runtime_error);
}

TEST_CASE("classes separate under a nearest-centroid probe") {
    // average warped spectra of solo stems must identify the class
    const auto dir = fresh_dir("sep");
    CorpusConfig cfg = small_config(11);
    cfg.num_classes = 4;
    cfg.train_solos_per_class = 12;
    cfg.val_solos_per_class = 0;
    cfg.test_solos_per_class = 6;
    cfg.train_duets = 0;
    cfg.dsp = DspPreset::desk();
    generate_corpus(cfg, dir.string());
    Dataset ds = load_dataset(dir.string());

    auto profile = [&](const ManifestItem& item) {
        Waveform w = ds.load_mixture(item);
        LogFreqSpectrogram warped =
            warp_log_freq(stft(w, cfg.dsp.window_len, cfg.dsp.hop).magnitude(), cfg.dsp.warp_bins);
        std::vector<double> p(static_cast<std::size_t>(cfg.dsp.warp_bins), 0.0);
        for (int f = 0; f < warped.data.rows; ++f) {
            for (int t = 0; t < warped.data.cols; ++t)
                p[static_cast<std::size_t>(f)] += warped.data.at(f, t);
        }
        double norm = 0.0;
        for (double v : p) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : p) v /= norm;
        return p;
    };

    std::vector<std::vector<double>> centroids(4, std::vector<double>(static_cast<std::size_t>(cfg.dsp.warp_bins), 0.0));
    std::vector<int> counts(4, 0);
    for (const auto* item : ds.split("train")) {
        auto p = profile(*item);
        const int c = item->classes[0];
        for (std::size_t i = 0; i < p.size(); ++i) centroids[static_cast<std::size_t>(c)][i] += p[i];
        ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < 4; ++c)
        for (auto& v : centroids[static_cast<std::size_t>(c)]) v /= counts[static_cast<std::size_t>(c)];

    int correct = 0, total = 0;
    for (const auto* item : ds.split("test")) {
        auto p = profile(*item);
        int best = -1;
        double best_d = 1e300;
        for (int c = 0; c < 4; ++c) {
            double d = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double diff = p[i] - centroids[static_cast<std::size_t>(c)][i];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best == item->classes[0]) ++correct;
        ++total;
    }
    CHECK(static_cast<double>(correct) / total >= 0.95);
}

}  // TEST_SUITE
