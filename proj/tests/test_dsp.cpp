#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mbs/dsp.hpp"

using namespace mbs;

namespace {

Waveform sine(double freq, double rate, int n, double amp = 0.5, double phase = 0.0) {
    Waveform w;
    w.sample_rate = rate;
    w.samples.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        w.samples[static_cast<std::size_t>(i)] =
            amp * std::sin(2.0 * std::numbers::pi * freq * i / rate + phase);
    return w;
}

Waveform noise(double rate, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    Waveform w;
    w.sample_rate = rate;
    w.samples.resize(static_cast<std::size_t>(n));
    for (auto& s : w.samples) s = uni(rng);
    return w;
}

double interior_rel_l2(const Waveform& a, const Waveform& b, int margin) {
    double num = 0, den = 0;
    for (int i = margin; i < a.length() - margin; ++i) {
        double d = a.samples[static_cast<std::size_t>(i)] - b.samples[static_cast<std::size_t>(i)];
        num += d * d;
        den += a.samples[static_cast<std::size_t>(i)] * a.samples[static_cast<std::size_t>(i)];
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_SUITE("dsp") {

TEST_CASE("stft paper preset yields a 512x256 grid") {
    Waveform w = noise(11025, 66302, 1);
    ComplexSpectrogram s = stft(w, 1022, 256);
    CHECK(s.rows == 512);
    CHECK(s.cols == 256);
}

TEST_CASE("stft of silence is all zeros") {
    Waveform w;
    w.sample_rate = 8000;
    w.samples.assign(1000, 0.0);
    ComplexSpectrogram s = stft(w, 254, 64);
    for (const auto& z : s.data) CHECK(std::abs(z) == 0.0);
}

TEST_CASE("stft concentrates a bin-aligned tone into one dominant bin") {
    const int win = 256, hop = 64;
    const double rate = 8000;
    const int k = 37;
    Waveform w = sine(k * rate / win, rate, 4096);
    ComplexSpectrogram s = stft(w, win, hop);
    for (int t = 1; t + 1 < s.cols; ++t) {
        int argmax = 0;
        double best = -1;
        for (int f = 0; f < s.rows; ++f)
            if (std::abs(s.at(f, t)) > best) {
                best = std::abs(s.at(f, t));
                argmax = f;
            }
        CHECK(argmax == k);
    }
}

TEST_CASE("stft matches a direct DFT of the windowed frame") {
    Waveform w = noise(8000, 600, 2);
    const int win = 64, hop = 32;
    ComplexSpectrogram s = stft(w, win, hop);
    const int t = 3;
    for (int f = 0; f < s.rows; f += 7) {
        std::complex<double> acc = 0.0;
        for (int n = 0; n < win; ++n) {
            const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win);
            const double x = w.samples[static_cast<std::size_t>(t * hop + n)] * hann;
            acc += x * std::exp(std::complex<double>(0, -2.0 * std::numbers::pi * f * n / win));
        }
        CHECK(std::abs(acc - s.at(f, t)) < 1e-9);
    }
}

TEST_CASE("stft rejects too-short input naming the minimum") {
    Waveform w = noise(8000, 100, 3);
    CHECK_THROWS_WITH_AS(stft(w, 254, 64), doctest::Contains("254"), std::runtime_error);
}

TEST_CASE("istft round trip at desk and paper presets") {
    struct Case {
        DspPreset p;
        double tol;
    };
    for (const auto& preset : {DspPreset::desk(), DspPreset::paper()}) {
        // noise, a sine, and a speech-like AM signal
        std::vector<Waveform> signals;
        signals.push_back(noise(preset.sample_rate, preset.clip_samples, 4));
        signals.push_back(sine(440.0, preset.sample_rate, preset.clip_samples));
        Waveform am = sine(300.0, preset.sample_rate, preset.clip_samples);
        for (int i = 0; i < am.length(); ++i)
            am.samples[static_cast<std::size_t>(i)] *=
                0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * 3.0 * i / preset.sample_rate);
        signals.push_back(am);

        for (const auto& x : signals) {
            ComplexSpectrogram s = stft(x, preset.window_len, preset.hop);
            Waveform y = istft(s, x.length());
            CHECK(interior_rel_l2(x, y, preset.window_len) < 1e-6);
        }
    }
}

TEST_CASE("istft of an all-zero grid is silence") {
    Waveform w = noise(8000, 4286, 5);
    ComplexSpectrogram s = stft(w, 254, 64);
    for (auto& z : s.data) z = 0.0;
    Waveform y = istft(s, w.length());
    for (double v : y.samples) CHECK(v == 0.0);
}

TEST_CASE("istft is linear") {
    Waveform w1 = noise(8000, 2000, 6);
    Waveform w2 = noise(8000, 2000, 7);
    ComplexSpectrogram s1 = stft(w1, 254, 64);
    ComplexSpectrogram s2 = stft(w2, 254, 64);
    ComplexSpectrogram mixed = s1;
    for (std::size_t i = 0; i < mixed.data.size(); ++i)
        mixed.data[i] = 2.0 * s1.data[i] - 0.5 * s2.data[i];
    const int target = 1900;  // within the span covered by full frames
    Waveform lhs = istft(mixed, target);
    Waveform a = istft(s1, target), b = istft(s2, target);
    for (int i = 0; i < target; ++i)
        CHECK(std::abs(lhs.samples[static_cast<std::size_t>(i)] -
                       (2.0 * a.samples[static_cast<std::size_t>(i)] -
                        0.5 * b.samples[static_cast<std::size_t>(i)])) < 1e-10);
}

TEST_CASE("istft rejects an empty spectrogram and over-long targets") {
    ComplexSpectrogram empty;
    CHECK_THROWS_AS(istft(empty, 100), std::runtime_error);
    Waveform w = noise(8000, 2000, 8);
    ComplexSpectrogram s = stft(w, 254, 64);
    CHECK_THROWS_AS(istft(s, 1000000), std::runtime_error);
}

TEST_CASE("Parseval energy agreement within one percent") {
    const DspPreset p = DspPreset::desk();
    // interior-supported: silence near both edges
    Waveform w = noise(p.sample_rate, p.clip_samples, 9);
    for (int i = 0; i < p.window_len; ++i) {
        w.samples[static_cast<std::size_t>(i)] = 0.0;
        w.samples[static_cast<std::size_t>(p.clip_samples - 1 - i)] = 0.0;
    }
    ComplexSpectrogram s = stft(w, p.window_len, p.hop);
    // per-frame Parseval over the half spectrum
    const int L = p.window_len;
    double e_spec = 0.0;
    for (int t = 0; t < s.cols; ++t) {
        double frame = std::norm(s.at(0, t)) + std::norm(s.at(s.rows - 1, t));
        for (int f = 1; f < s.rows - 1; ++f) frame += 2.0 * std::norm(s.at(f, t));
        e_spec += frame / L;
    }
    // window compensation: mean of the squared-window overlap profile
    std::vector<double> wsq(static_cast<std::size_t>(p.clip_samples), 0.0);
    for (int t = 0; t < s.cols; ++t)
        for (int n = 0; n < L; ++n) {
            const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / L);
            wsq[static_cast<std::size_t>(t * p.hop + n)] += hann * hann;
        }
    double wbar = 0.0;
    int count = 0;
    for (int i = L; i < p.clip_samples - L; ++i) {
        wbar += wsq[static_cast<std::size_t>(i)];
        ++count;
    }
    wbar /= count;
    CHECK(e_spec / (wbar * w.energy()) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("resample at an identical rate is the identity") {
    Waveform w = noise(8000, 777, 10);
    Waveform y = resample(w, 8000);
    CHECK(y.samples == w.samples);
}

TEST_CASE("resample keeps a 1 kHz tone at 1 kHz") {
    Waveform w = sine(1000.0, 44100.0, 44100);
    Waveform y = resample(w, 11025.0);
    CHECK(y.length() == 11025);
    // locate the spectral peak of one long frame
    const int win = 2048;
    ComplexSpectrogram s = stft(y, win, win);
    int argmax = 0;
    double best = -1;
    for (int f = 0; f < s.rows; ++f)
        if (std::abs(s.at(f, 2)) > best) {
            best = std::abs(s.at(f, 2));
            argmax = f;
        }
    const double bin_hz = 11025.0 / win;
    CHECK(std::abs(argmax * bin_hz - 1000.0) <= bin_hz);
}

TEST_CASE("resample preserves DC") {
    Waveform w;
    w.sample_rate = 44100;
    w.samples.assign(4410, 0.37);
    Waveform y = resample(w, 11025.0);
    for (int i = 20; i < y.length() - 20; ++i)
        CHECK(y.samples[static_cast<std::size_t>(i)] == doctest::Approx(0.37).epsilon(1e-3));
}

TEST_CASE("resample rejects empty input") {
    Waveform w;
    w.sample_rate = 8000;
    CHECK_THROWS_AS(resample(w, 4000), std::runtime_error);
}

TEST_CASE("warp keeps constant grids constant, exactly") {
    Grid g(128, 10, 3.25);
    LogFreqSpectrogram w = warp_log_freq(g, 64);
    for (double v : w.data.v) CHECK(v == 3.25);
    Grid back = unwarp_log_freq(w, 128);
    for (double v : back.v) CHECK(v == 3.25);
}

TEST_CASE("warp preserves monotonicity along frequency") {
    Grid g(64, 3);
    for (int f = 0; f < 64; ++f)
        for (int n = 0; n < 3; ++n) g.at(f, n) = f * 0.5 + n;
    LogFreqSpectrogram w = warp_log_freq(g, 32);
    for (int n = 0; n < 3; ++n)
        for (int i = 1; i < 32; ++i) CHECK(w.data.at(i, n) >= w.data.at(i - 1, n));
}

TEST_CASE("warp then unwarp is accurate on smooth spectra at the paper preset") {
    Grid g(512, 16);
    for (int f = 0; f < 512; ++f)
        for (int n = 0; n < 16; ++n)
            g.at(f, n) = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * f / 512.0) +
                         0.2 * std::cos(2.0 * std::numbers::pi * (f / 256.0 + n / 16.0));
    LogFreqSpectrogram w = warp_log_freq(g, 256);
    Grid back = unwarp_log_freq(w, 512);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < g.v.size(); ++i) {
        num += (g.v[i] - back.v[i]) * (g.v[i] - back.v[i]);
        den += g.v[i] * g.v[i];
    }
    CHECK(std::sqrt(num / den) < 0.05);
}

TEST_CASE("warp of unwarp is exact where bin centers align") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Grid y(64, 4);
    for (auto& v : y.v) v = uni(rng);
    LogFreqSpectrogram w{y, {}};
    w.map.linear_bins = 128;
    w.map.out_bins = 64;
    // rebuild the map exactly as warp_log_freq would
    LogFreqSpectrogram ref = warp_log_freq(Grid(128, 4, 1.0), 64);
    w.map = ref.map;

    Grid lin = unwarp_log_freq(w, 128);
    LogFreqSpectrogram again = warp_log_freq(lin, 64);
    for (int i = 0; i < 64; ++i) {
        const double pos = w.map.pos[static_cast<std::size_t>(i)];
        if (std::abs(pos - std::round(pos)) > 1e-9) continue;  // only aligned bins
        for (int n = 0; n < 4; ++n)
            CHECK(std::abs(again.data.at(i, n) - y.at(i, n)) < 1e-9);
    }
}

TEST_CASE("warp and unwarp argument validation") {
    Grid g(16, 2, 1.0);
    CHECK_THROWS_AS(warp_log_freq(g, 1), std::runtime_error);
    CHECK_THROWS_AS(warp_log_freq(Grid(1, 2, 1.0), 8), std::runtime_error);
    LogFreqSpectrogram w = warp_log_freq(g, 8);
    CHECK_THROWS_AS(unwarp_log_freq(w, 32), std::runtime_error);
}

TEST_CASE("log compression basics") {
    Grid g(2, 2);
    g.v = {0.0, 1e-4, 0.5, 2.0};
    Grid y = log_compress(g);
    CHECK(y.v[0] == 0.0);
    CHECK(y.v[1] == doctest::Approx(std::log(2.0)));
    for (std::size_t i = 1; i < 4; ++i) CHECK(y.v[i] > y.v[i - 1]);
    // algebraic inverse
    for (std::size_t i = 0; i < 4; ++i) {
        double rec = 1e-4 * std::expm1(y.v[i]);
        CHECK(rec == doctest::Approx(g.v[i]).epsilon(1e-6));
    }
    Grid bad(1, 1);
    bad.v = {-0.5};
    CHECK_THROWS_AS(log_compress(bad), std::runtime_error);
}

TEST_CASE("apply_mask scales magnitude and reuses the phase") {
    Waveform w = noise(8000, 2000, 12);
    ComplexSpectrogram s = stft(w, 254, 64);
    Grid ones(s.rows, s.cols, 1.0);
    Grid zeros(s.rows, s.cols, 0.0);
    ComplexSpectrogram id = apply_mask(s, ones);
    ComplexSpectrogram nil = apply_mask(s, zeros);
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        CHECK(id.data[i] == s.data[i]);
        CHECK(std::abs(nil.data[i]) == 0.0);
    }

    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> uni(0.05, 0.95);
    Grid m(s.rows, s.cols);
    for (auto& v : m.v) v = uni(rng);
    ComplexSpectrogram masked = apply_mask(s, m);
    for (int f = 0; f < s.rows; f += 17)
        for (int t = 0; t < s.cols; t += 11)
            if (std::abs(s.at(f, t)) > 0)
                CHECK(std::abs(std::arg(masked.at(f, t)) - std::arg(s.at(f, t))) < 1e-12);

    // complementary masks partition the magnitude exactly
    Grid inv(s.rows, s.cols);
    for (std::size_t i = 0; i < inv.v.size(); ++i) inv.v[i] = 1.0 - m.v[i];
    ComplexSpectrogram other = apply_mask(s, inv);
    for (std::size_t i = 0; i < s.data.size(); ++i)
        CHECK(std::abs(masked.data[i]) + std::abs(other.data[i]) ==
              doctest::Approx(std::abs(s.data[i])).epsilon(1e-12));

    Grid bad(s.rows, s.cols, 1.5);
    CHECK_THROWS_AS(apply_mask(s, bad), std::runtime_error);
    Grid wrong(3, 3, 0.5);
    CHECK_THROWS_AS(apply_mask(s, wrong), std::runtime_error);
}

}  // TEST_SUITE
