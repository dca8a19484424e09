#pragma once

// Waveform and spectrogram transformations: band-limited resampling,
// STFT/ISTFT with window-square-normalized overlap-add, log-frequency
// warping, log compression, and magnitude masking with phase reuse.

#include <complex>
#include <vector>

#include "mbs/util.hpp"

namespace mbs {

struct Waveform {
    std::vector<double> samples;
    double sample_rate = 0.0;

    int length() const { return static_cast<int>(samples.size()); }
    double duration() const { return samples.empty() ? 0.0 : length() / sample_rate; }
    double energy() const {
        double e = 0.0;
        for (double s : samples) e += s * s;
        return e;
    }
};

// Dense row-major real grid; rows index frequency, columns index time.
struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}
    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return v.size(); }
};

struct ComplexSpectrogram {
    int rows = 0;  // F = window_len/2 + 1
    int cols = 0;  // N frames
    std::vector<std::complex<double>> data;
    int window_len = 0;
    int hop = 0;
    double sample_rate = 0.0;
    int original_len = 0;

    std::complex<double>& at(int f, int n) { return data[static_cast<std::size_t>(f) * cols + n]; }
    std::complex<double> at(int f, int n) const {
        return data[static_cast<std::size_t>(f) * cols + n];
    }
    Grid magnitude() const;
    Grid phase() const;
};

// Per-output-bin fractional source positions of the log-frequency warp.
struct WarpMap {
    int linear_bins = 0;
    int out_bins = 0;
    std::vector<double> pos;  // position of each warped bin on the linear axis
};

struct LogFreqSpectrogram {
    Grid data;
    WarpMap map;
};

// Band-limited (windowed-sinc) resampling; output length round(len*target/source).
Waveform resample(const Waveform& w, double target_rate);

// Frame t covers [t*hop, t*hop + window_len), periodic Hann window, DFT of
// length window_len keeping bins 0..window_len/2.
ComplexSpectrogram stft(const Waveform& w, int window_len, int hop);

// Overlap-add with window-square normalization, truncated to target_len.
Waveform istft(const ComplexSpectrogram& s, int target_len);

// Geometric bin centers from two linear-bin widths up to Nyquist.
LogFreqSpectrogram warp_log_freq(const Grid& mag, int out_bins);
Grid unwarp_log_freq(const LogFreqSpectrogram& warped, int out_bins);

// Elementwise log(1 + mag/delta), delta = 1e-4.
Grid log_compress(const Grid& mag);

// Output magnitude = mix magnitude * mask; phase is the mixture's.
ComplexSpectrogram apply_mask(const ComplexSpectrogram& mix, const Grid& mask);

inline constexpr double kLogCompressDelta = 1e-4;

// Fixed analysis configurations shared across the pipeline.
struct DspPreset {
    double sample_rate;
    int window_len;
    int hop;
    int clip_samples;
    int warp_bins;

    int linear_bins() const { return window_len / 2 + 1; }
    int frames() const { return 1 + (clip_samples - window_len) / hop; }
    double clip_seconds() const { return clip_samples / sample_rate; }

    static DspPreset paper() { return {11025.0, 1022, 256, 66302, 256}; }
    static DspPreset desk() { return {8000.0, 254, 64, 4286, 64}; }
    static DspPreset tiny() { return {8000.0, 30, 10, 100, 8}; }
};

}  // namespace mbs
