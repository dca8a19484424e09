#pragma once

// Synthetic audiovisual dataset: per-class harmonic timbres paired with
// class-identifying glyphs, with full per-source ground truth. Mixtures are
// summed at the PCM16 level so a stored mixture is the exact sample sum of
// its stored stems.

#include <random>
#include <string>
#include <vector>

#include "mbs/dsp.hpp"
#include "mbs/image.hpp"

namespace mbs {

enum class EnvelopeKind { sustained, plucked, tremolo };
enum class GlyphShape { circle, triangle, square, cross, diamond, ring };

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

struct ClassSpec {
    int class_id = 0;
    double f0_lo = 110.0;
    double f0_hi = 160.0;
    std::vector<double> harmonics;  // relative weights, normalized to unit energy
    EnvelopeKind envelope = EnvelopeKind::sustained;
    GlyphShape shape = GlyphShape::circle;
    Rgb color;
};

// Built-in table; classes keep distinct (shape, color) pairs. 1 <= n <= 8.
std::vector<ClassSpec> default_classes(int n);

// Amplitude envelope in [0,1]; plucked decays monotonically after onset.
std::vector<double> make_envelope(EnvelopeKind kind, int samples, double sample_rate,
                                  std::mt19937_64& rng);

Waveform synth_stem(const ClassSpec& spec, double duration_seconds, double sample_rate,
                    std::mt19937_64& rng);

// One glyph per class over a low-intensity textured background; glyphs are
// placed without overlap (error after 100 attempts).
Image render_frame(const std::vector<ClassSpec>& classes, const std::vector<int>& class_ids,
                   int size, std::mt19937_64& rng);

struct CorpusConfig {
    int num_classes = 4;
    int train_solos_per_class = 200;
    int val_solos_per_class = 20;
    int test_solos_per_class = 20;
    int train_duets = 100;
    int val_duets = 0;
    int test_duets = 0;
    int frame_size = 64;
    DspPreset dsp = DspPreset::desk();
    std::uint64_t seed = 1;
    bool overwrite = false;
};

struct ManifestItem {
    std::string clip_id;
    std::string split;  // train | val | test
    std::vector<int> classes;
    std::string frame_path;    // relative to the dataset root
    std::string mixture_path;  // relative
    std::vector<std::string> stem_paths;  // relative, ordered like classes
};

struct Dataset {
    std::string root;
    std::vector<ManifestItem> items;

    std::vector<const ManifestItem*> split(const std::string& name) const;
    Image load_frame(const ManifestItem& item) const;
    Waveform load_mixture(const ManifestItem& item) const;
    std::vector<Waveform> load_stems(const ManifestItem& item) const;
};

// Writes WAV stems + mixture, a PPM frame, and one manifest line per clip;
// byte-identical for a fixed config and seed.
void generate_corpus(const CorpusConfig& config, const std::string& out_dir);

Dataset load_dataset(const std::string& dir);

}  // namespace mbs
