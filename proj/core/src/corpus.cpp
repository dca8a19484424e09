#include "mbs/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mbs/wav.hpp"

namespace fs = std::filesystem;

namespace mbs {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Paul Kellet's economy pink-noise filter over white noise, peak-normalized.
std::vector<double> pink_noise(int n, std::mt19937_64& rng) {
    std::vector<double> out(static_cast<std::size_t>(n));
    double b0 = 0, b1 = 0, b2 = 0;
    double peak = 0;
    for (int i = 0; i < n; ++i) {
        const double white = uniform(rng, -1.0, 1.0);
        b0 = 0.99765 * b0 + white * 0.0990460;
        b1 = 0.96300 * b1 + white * 0.2965164;
        b2 = 0.57000 * b2 + white * 1.0526913;
        out[static_cast<std::size_t>(i)] = b0 + b1 + b2 + white * 0.1848;
        peak = std::max(peak, std::abs(out[static_cast<std::size_t>(i)]));
    }
    if (peak > 0)
        for (double& v : out) v /= peak;
    return out;
}

struct Placed {
    double cx, cy, r;
};

bool inside_glyph(GlyphShape shape, double dx, double dy, double r) {
    switch (shape) {
        case GlyphShape::circle:
            return dx * dx + dy * dy <= r * r;
        case GlyphShape::triangle: {
            // upward triangle inscribed in the radius
            const double x0 = 0.0, y0 = -r;
            const double x1 = -0.866 * r, y1 = 0.5 * r;
            const double x2 = 0.866 * r, y2 = 0.5 * r;
            auto side = [&](double ax, double ay, double bx, double by) {
                return (bx - ax) * (dy - ay) - (by - ay) * (dx - ax);
            };
            const double s0 = side(x0, y0, x1, y1);
            const double s1 = side(x1, y1, x2, y2);
            const double s2 = side(x2, y2, x0, y0);
            return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
        }
        case GlyphShape::square:
            return std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r;
        case GlyphShape::cross:
            return (std::abs(dx) <= 0.35 * r && std::abs(dy) <= r) ||
                   (std::abs(dy) <= 0.35 * r && std::abs(dx) <= r);
        case GlyphShape::diamond:
            return std::abs(dx) + std::abs(dy) <= r;
        case GlyphShape::ring: {
            const double d2 = dx * dx + dy * dy;
            return d2 <= r * r && d2 >= 0.36 * r * r;
        }
    }
    return false;
}

}  // namespace

std::vector<ClassSpec> default_classes(int n) {
    require(n >= 1 && n <= 8, msg("corpus: supported class counts are 1..8, got ", n));
    const std::vector<ClassSpec> table = {
        {0, 110, 160, {1.0, 0.7, 0.5, 0.35, 0.25, 0.18}, EnvelopeKind::sustained,
         GlyphShape::circle, {220, 40, 40}},
        {1, 220, 320, {1.0, 0.0, 0.6, 0.0, 0.36, 0.0}, EnvelopeKind::tremolo,
         GlyphShape::triangle, {40, 200, 60}},
        {2, 430, 640, {1.0, 0.15, 0.05}, EnvelopeKind::sustained, GlyphShape::square,
         {60, 90, 230}},
        {3, 300, 450, {1.0, 0.5, 0.25, 0.12}, EnvelopeKind::plucked, GlyphShape::cross,
         {235, 205, 40}},
        {4, 700, 1000, {1.0, 0.3}, EnvelopeKind::tremolo, GlyphShape::diamond, {200, 60, 200}},
        {5, 160, 230, {1.0, 0.9, 0.8, 0.6, 0.45, 0.3, 0.2}, EnvelopeKind::plucked,
         GlyphShape::ring, {50, 200, 200}},
        {6, 520, 760, {1.0, 0.0, 0.5, 0.0, 0.3}, EnvelopeKind::sustained, GlyphShape::circle,
         {240, 140, 40}},
        {7, 90, 120, {1.0, 0.25, 0.6, 0.2, 0.35}, EnvelopeKind::tremolo, GlyphShape::square,
         {240, 240, 240}},
    };
    std::vector<ClassSpec> out(table.begin(), table.begin() + n);
    for (auto& c : out) {
        double e = 0.0;
        for (double w : c.harmonics) {
            require(w >= 0.0, "corpus: harmonic weights must be nonnegative");
            e += w * w;
        }
        const double norm = std::sqrt(e);
        for (double& w : c.harmonics) w /= norm;
    }
    return out;
}

std::vector<double> make_envelope(EnvelopeKind kind, int samples, double sample_rate,
                                  std::mt19937_64& rng) {
    std::vector<double> env(static_cast<std::size_t>(samples), 1.0);
    const double dur = samples / sample_rate;
    switch (kind) {
        case EnvelopeKind::sustained:
        case EnvelopeKind::tremolo: {
            const int ramp = std::max(1, static_cast<int>(0.05 * samples));
            for (int i = 0; i < ramp; ++i) {
                const double t = static_cast<double>(i) / ramp;
                const double v = 0.5 - 0.5 * std::cos(std::numbers::pi * t);
                env[static_cast<std::size_t>(i)] *= v;
                env[static_cast<std::size_t>(samples - 1 - i)] *= v;
            }
            if (kind == EnvelopeKind::tremolo) {
                const double f = uniform(rng, 4.0, 7.0);
                const double depth = 0.5;
                for (int i = 0; i < samples; ++i) {
                    const double t = i / sample_rate;
                    env[static_cast<std::size_t>(i)] *=
                        (1.0 + depth * std::sin(2.0 * std::numbers::pi * f * t)) / (1.0 + depth);
                }
            }
            break;
        }
        case EnvelopeKind::plucked: {
            const int attack = std::max(1, static_cast<int>(0.003 * sample_rate));
            const double tau = uniform(rng, 0.15, 0.4) * dur;
            for (int i = 0; i < samples; ++i) {
                const double t = i / sample_rate;
                double v = std::exp(-std::max(0.0, t - attack / sample_rate) / tau);
                if (i < attack) v *= static_cast<double>(i + 1) / attack;
                env[static_cast<std::size_t>(i)] = v;
            }
            break;
        }
    }
    return env;
}

Waveform synth_stem(const ClassSpec& spec, double duration_seconds, double sample_rate,
                    std::mt19937_64& rng) {
    const int n = static_cast<int>(std::llround(duration_seconds * sample_rate));
    require(n > 0, "synth_stem: empty duration");
    const double f0 = uniform(rng, spec.f0_lo, spec.f0_hi);
    std::vector<double> phases(spec.harmonics.size());
    for (auto& p : phases) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const auto env = make_envelope(spec.envelope, n, sample_rate, rng);

    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.assign(static_cast<std::size_t>(n), 0.0);
    for (std::size_t h = 0; h < spec.harmonics.size(); ++h) {
        const double f = f0 * static_cast<double>(h + 1);
        if (f >= 0.48 * sample_rate) break;  // keep harmonics below Nyquist
        const double amp = spec.harmonics[h];
        if (amp == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            const double t = i / sample_rate;
            w.samples[static_cast<std::size_t>(i)] +=
                amp * std::sin(2.0 * std::numbers::pi * f * t + phases[h]);
        }
    }
    for (int i = 0; i < n; ++i) w.samples[static_cast<std::size_t>(i)] *= env[static_cast<std::size_t>(i)];

    double peak = 0.0;
    for (double v : w.samples) peak = std::max(peak, std::abs(v));
    const auto noise = pink_noise(n, rng);
    const double noise_amp = peak * 0.01;  // -40 dB relative to the harmonic peak
    for (int i = 0; i < n; ++i) w.samples[static_cast<std::size_t>(i)] += noise_amp * noise[static_cast<std::size_t>(i)];

    peak = 0.0;
    for (double v : w.samples) peak = std::max(peak, std::abs(v));
    if (peak > 0)
        for (double& v : w.samples) v *= 0.5 / peak;
    return w;
}

Image render_frame(const std::vector<ClassSpec>& classes, const std::vector<int>& class_ids,
                   int size, std::mt19937_64& rng) {
    require(!class_ids.empty() && class_ids.size() <= 2,
            msg("render_frame: 1..2 glyphs supported, got ", class_ids.size()));
    Image img(size, size);

    // coarse value-noise background, bilinearly upsampled
    const int gsz = 9;
    std::vector<double> coarse(static_cast<std::size_t>(gsz) * gsz);
    for (auto& v : coarse) v = uniform(rng, 0.0, 0.15);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double gx = static_cast<double>(x) / (size - 1) * (gsz - 1);
            const double gy = static_cast<double>(y) / (size - 1) * (gsz - 1);
            const int x0 = std::min(static_cast<int>(gx), gsz - 2);
            const int y0 = std::min(static_cast<int>(gy), gsz - 2);
            const double fx = gx - x0, fy = gy - y0;
            const double v00 = coarse[static_cast<std::size_t>(y0) * gsz + x0];
            const double v01 = coarse[static_cast<std::size_t>(y0) * gsz + x0 + 1];
            const double v10 = coarse[static_cast<std::size_t>(y0 + 1) * gsz + x0];
            const double v11 = coarse[static_cast<std::size_t>(y0 + 1) * gsz + x0 + 1];
            const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            const std::uint8_t g = static_cast<std::uint8_t>(std::lround(v * 255.0));
            std::uint8_t* p = img.pixel(x, y);
            p[0] = p[1] = p[2] = g;
        }

    std::vector<Placed> placed;
    for (int cid : class_ids) {
        require(cid >= 0 && cid < static_cast<int>(classes.size()),
                msg("render_frame: class id ", cid, " out of range"));
        const ClassSpec& spec = classes[static_cast<std::size_t>(cid)];
        Placed pl{};
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            // later attempts shrink toward the minimum radius so tight frames
            // still converge within the attempt budget
            const double r_lo = size / 8.0;
            const double r_hi = std::max(r_lo + 0.5, size / 5.0 - attempt * (size / 5.0 - r_lo) / 60.0);
            pl.r = uniform(rng, r_lo, r_hi);
            pl.cx = uniform(rng, pl.r + 1.0, size - pl.r - 1.0);
            pl.cy = uniform(rng, pl.r + 1.0, size - pl.r - 1.0);
            ok = true;
            for (const auto& other : placed) {
                const double dx = pl.cx - other.cx, dy = pl.cy - other.cy;
                if (std::sqrt(dx * dx + dy * dy) < pl.r + other.r + 1.0) ok = false;
            }
        }
        require(ok, "render_frame: could not place glyphs without overlap after 100 attempts");
        placed.push_back(pl);

        const int x0 = std::max(0, static_cast<int>(pl.cx - pl.r - 1));
        const int x1 = std::min(size - 1, static_cast<int>(pl.cx + pl.r + 1));
        const int y0 = std::max(0, static_cast<int>(pl.cy - pl.r - 1));
        const int y1 = std::min(size - 1, static_cast<int>(pl.cy + pl.r + 1));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (inside_glyph(spec.shape, x - pl.cx, y - pl.cy, pl.r)) {
                    std::uint8_t* p = img.pixel(x, y);
                    p[0] = spec.color.r;
                    p[1] = spec.color.g;
                    p[2] = spec.color.b;
                }
    }
    return img;
}

namespace {

struct ClipPlan {
    std::string split;
    std::vector<int> classes;
};

void write_clip(const CorpusConfig& cfg, const std::vector<ClassSpec>& classes, const fs::path& root,
                const ClipPlan& plan, int index, std::ofstream& manifest) {
    std::mt19937_64 rng(splitmix64(cfg.seed ^ (0x5851F42D4C957F2Dull * (index + 1))));
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "c%06d", index);
    const std::string clip_id = idbuf;

    const double dur = cfg.dsp.clip_seconds();
    std::vector<std::vector<std::int16_t>> stems_q;
    for (int cid : plan.classes) {
        Waveform stem = synth_stem(classes[static_cast<std::size_t>(cid)], dur,
                                   cfg.dsp.sample_rate, rng);
        stems_q.push_back(quantize_pcm16(stem.samples));
    }
    // integer-level sum keeps the stored mixture the exact sum of the stems
    std::vector<std::int16_t> mix(stems_q[0].size(), 0);
    for (std::size_t i = 0; i < mix.size(); ++i) {
        int acc = 0;
        for (const auto& s : stems_q) acc += s[i];
        require(acc >= -32768 && acc <= 32767, "corpus: stem sum overflows 16-bit range");
        mix[i] = static_cast<std::int16_t>(acc);
    }

    Image frame = render_frame(classes, plan.classes, cfg.frame_size, rng);

    const std::string frame_rel = "frames/" + clip_id + ".ppm";
    const std::string mix_rel = "audio/" + clip_id + "_mix.wav";
    write_ppm((root / frame_rel).string(), frame);
    write_wav_pcm16((root / mix_rel).string(), mix, cfg.dsp.sample_rate);
    std::vector<std::string> stem_rels;
    for (std::size_t s = 0; s < stems_q.size(); ++s) {
        std::string rel = "audio/" + clip_id + "_s" + std::to_string(s) + ".wav";
        write_wav_pcm16((root / rel).string(), stems_q[s], cfg.dsp.sample_rate);
        stem_rels.push_back(std::move(rel));
    }

    manifest << clip_id << '\t' << plan.split << '\t';
    for (std::size_t i = 0; i < plan.classes.size(); ++i)
        manifest << (i ? "," : "") << plan.classes[i];
    manifest << '\t' << frame_rel << '\t' << mix_rel << '\t';
    for (std::size_t i = 0; i < stem_rels.size(); ++i) manifest << (i ? ";" : "") << stem_rels[i];
    manifest << '\n';
}

}  // namespace

void generate_corpus(const CorpusConfig& cfg, const std::string& out_dir) {
    const fs::path root(out_dir);
    if (fs::exists(root) && !fs::is_empty(root))
        require(cfg.overwrite, msg("corpus: output dir '", out_dir,
                                   "' is not empty (pass overwrite to replace)"));
    fs::create_directories(root / "frames");
    fs::create_directories(root / "audio");

    const auto classes = default_classes(cfg.num_classes);

    std::vector<ClipPlan> plans;
    std::mt19937_64 plan_rng(splitmix64(cfg.seed ^ 0xC0FFEEull));
    auto add_split = [&](const std::string& split, int solos_per_class, int duets) {
        for (int c = 0; c < cfg.num_classes; ++c)
            for (int i = 0; i < solos_per_class; ++i) plans.push_back({split, {c}});
        for (int i = 0; i < duets; ++i) {
            require(cfg.num_classes >= 2, "corpus: duets need at least 2 classes");
            std::uniform_int_distribution<int> any(0, cfg.num_classes - 1);
            int a = any(plan_rng), b = any(plan_rng);
            while (b == a) b = any(plan_rng);
            plans.push_back({split, {std::min(a, b), std::max(a, b)}});
        }
    };
    add_split("train", cfg.train_solos_per_class, cfg.train_duets);
    add_split("val", cfg.val_solos_per_class, cfg.val_duets);
    add_split("test", cfg.test_solos_per_class, cfg.test_duets);

    std::ofstream manifest(root / "manifest.tsv", std::ios::trunc);
    require(manifest.good(), msg("corpus: cannot write manifest under '", out_dir, "'"));
    for (std::size_t i = 0; i < plans.size(); ++i)
        write_clip(cfg, classes, root, plans[i], static_cast<int>(i), manifest);
    require(manifest.good(), "corpus: manifest write failed");
}

std::vector<const ManifestItem*> Dataset::split(const std::string& name) const {
    std::vector<const ManifestItem*> out;
    for (const auto& it : items)
        if (it.split == name) out.push_back(&it);
    return out;
}

Image Dataset::load_frame(const ManifestItem& item) const {
    return read_image((fs::path(root) / item.frame_path).string());
}

Waveform Dataset::load_mixture(const ManifestItem& item) const {
    return read_wav((fs::path(root) / item.mixture_path).string());
}

std::vector<Waveform> Dataset::load_stems(const ManifestItem& item) const {
    std::vector<Waveform> out;
    for (const auto& p : item.stem_paths) out.push_back(read_wav((fs::path(root) / p).string()));
    return out;
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.root = dir;
    std::ifstream in(fs::path(dir) / "manifest.tsv");
    require(in.good(), msg("corpus: cannot open manifest in '", dir, "'"));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestItem item;
        std::string classes_field, stems_field;
        require(static_cast<bool>(std::getline(ls, item.clip_id, '\t')) &&
                    static_cast<bool>(std::getline(ls, item.split, '\t')) &&
                    static_cast<bool>(std::getline(ls, classes_field, '\t')) &&
                    static_cast<bool>(std::getline(ls, item.frame_path, '\t')) &&
                    static_cast<bool>(std::getline(ls, item.mixture_path, '\t')) &&
                    static_cast<bool>(std::getline(ls, stems_field)),
                msg("corpus: malformed manifest line: ", line));
        std::istringstream cs(classes_field);
        std::string tok;
        while (std::getline(cs, tok, ',')) item.classes.push_back(std::stoi(tok));
        std::istringstream ss(stems_field);
        while (std::getline(ss, tok, ';')) item.stem_paths.push_back(tok);
        require(item.classes.size() == item.stem_paths.size(),
                msg("corpus: class/stem count mismatch for clip ", item.clip_id));
        ds.items.push_back(std::move(item));
    }
    require(!ds.items.empty(), msg("corpus: empty manifest in '", dir, "'"));
    return ds;
}

}  // namespace mbs
