#include "mbs/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fft_plan.hpp"

namespace mbs {

namespace {

using detail::FftPlan;

constexpr double kIstftEps = 1e-12;

std::vector<double> periodic_hann(int n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        w[static_cast<std::size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(n));
    return w;
}

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

// lerp written so equal endpoints reproduce exactly
inline double lerp_exact(double a, double b, double f) { return a + f * (b - a); }

double warp_ratio(int linear_bins) { return (linear_bins - 1) / 2.0; }

}  // namespace

Grid ComplexSpectrogram::magnitude() const {
    Grid g(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) g.v[i] = std::abs(data[i]);
    return g;
}

Grid ComplexSpectrogram::phase() const {
    Grid g(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) g.v[i] = std::arg(data[i]);
    return g;
}

Waveform resample(const Waveform& w, double target_rate) {
    require(target_rate > 0, "resample: target rate must be positive");
    require(w.sample_rate > 0, "resample: source rate must be positive");
    require(!w.samples.empty(), "resample: empty input");
    if (target_rate == w.sample_rate) return w;

    const double ratio = target_rate / w.sample_rate;
    const int out_len = static_cast<int>(std::llround(w.length() * ratio));
    // cutoff slightly below the narrower Nyquist, in cycles per source sample
    const double fc = 0.45 * std::min(1.0, ratio);
    const int zero_crossings = 16;
    const double half_width = zero_crossings / (2.0 * fc);

    Waveform out;
    out.sample_rate = target_rate;
    out.samples.resize(static_cast<std::size_t>(out_len));
    const int n_in = w.length();
    for (int n = 0; n < out_len; ++n) {
        const double center = n / ratio;
        const int j0 = std::max(0, static_cast<int>(std::ceil(center - half_width)));
        const int j1 = std::min(n_in - 1, static_cast<int>(std::floor(center + half_width)));
        double acc = 0.0, norm = 0.0;
        for (int j = j0; j <= j1; ++j) {
            const double tau = j - center;
            const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * tau / half_width);
            const double k = 2.0 * fc * sinc(2.0 * fc * tau) * win;
            acc += k * w.samples[static_cast<std::size_t>(j)];
            norm += k;
        }
        // normalizing by the kernel sum keeps DC gain at exactly 1
        out.samples[static_cast<std::size_t>(n)] = norm != 0.0 ? acc / norm : 0.0;
    }
    return out;
}

ComplexSpectrogram stft(const Waveform& w, int window_len, int hop) {
    require(hop >= 1, "stft: hop must be >= 1");
    require(window_len >= 2, "stft: window length must be >= 2");
    require(w.length() >= window_len,
            msg("stft: input of ", w.length(), " samples is shorter than the required minimum of ",
                window_len, " (one window)"));

    const int frames = 1 + (w.length() - window_len) / hop;
    const int bins = window_len / 2 + 1;
    ComplexSpectrogram s;
    s.rows = bins;
    s.cols = frames;
    s.window_len = window_len;
    s.hop = hop;
    s.sample_rate = w.sample_rate;
    s.original_len = w.length();
    s.data.resize(static_cast<std::size_t>(bins) * frames);

    const auto win = periodic_hann(window_len);
    FftPlan plan(window_len);
    for (int t = 0; t < frames; ++t) {
        std::complex<double>* in = plan.in();
        const double* x = w.samples.data() + static_cast<std::size_t>(t) * hop;
        for (int i = 0; i < window_len; ++i)
            in[i] = {x[i] * win[static_cast<std::size_t>(i)], 0.0};
        plan.forward();
        const std::complex<double>* out = plan.out();
        for (int f = 0; f < bins; ++f) s.at(f, t) = out[f];
    }
    return s;
}

Waveform istft(const ComplexSpectrogram& s, int target_len) {
    require(s.rows > 0 && s.cols > 0 && !s.data.empty(), "istft: empty spectrogram");
    require(s.window_len / 2 + 1 == s.rows, "istft: inconsistent bin count");
    const int span = (s.cols - 1) * s.hop + s.window_len;
    require(target_len <= span,
            msg("istft: target length ", target_len, " exceeds the ", span,
                " samples spanned by the frames"));

    const int L = s.window_len;
    const auto win = periodic_hann(L);
    std::vector<double> num(static_cast<std::size_t>(span), 0.0);
    std::vector<double> den(static_cast<std::size_t>(span), 0.0);

    FftPlan plan(L);
    for (int t = 0; t < s.cols; ++t) {
        std::complex<double>* in = plan.in();
        in[0] = s.at(0, t);
        for (int f = 1; f < s.rows - 1; ++f) {
            in[f] = s.at(f, t);
            in[L - f] = std::conj(s.at(f, t));
        }
        if (L % 2 == 0)
            in[L / 2] = s.at(s.rows - 1, t);
        else {
            in[s.rows - 1] = s.at(s.rows - 1, t);
            in[L - (s.rows - 1)] = std::conj(s.at(s.rows - 1, t));
        }
        plan.backward();
        const std::complex<double>* frame = plan.out();
        const std::size_t base = static_cast<std::size_t>(t) * s.hop;
        for (int i = 0; i < L; ++i) {
            const double v = frame[i].real() / L;
            num[base + static_cast<std::size_t>(i)] += win[static_cast<std::size_t>(i)] * v;
            den[base + static_cast<std::size_t>(i)] +=
                win[static_cast<std::size_t>(i)] * win[static_cast<std::size_t>(i)];
        }
    }

    Waveform out;
    out.sample_rate = s.sample_rate;
    out.samples.resize(static_cast<std::size_t>(target_len), 0.0);
    const int n = std::min(target_len, span);
    for (int i = 0; i < n; ++i)
        out.samples[static_cast<std::size_t>(i)] =
            num[static_cast<std::size_t>(i)] / (den[static_cast<std::size_t>(i)] + kIstftEps);
    return out;
}

LogFreqSpectrogram warp_log_freq(const Grid& mag, int out_bins) {
    require(mag.rows >= 2, msg("warp_log_freq: need at least 2 linear bins, got ", mag.rows));
    require(out_bins >= 2, msg("warp_log_freq: out_bins must be >= 2, got ", out_bins));

    LogFreqSpectrogram out;
    out.map.linear_bins = mag.rows;
    out.map.out_bins = out_bins;
    out.map.pos.resize(static_cast<std::size_t>(out_bins));
    out.data = Grid(out_bins, mag.cols);

    // geometric spacing from two linear-bin widths up to Nyquist
    const double r = warp_ratio(mag.rows);
    for (int i = 0; i < out_bins; ++i) {
        const double p = 2.0 * std::pow(r, static_cast<double>(i) / (out_bins - 1));
        out.map.pos[static_cast<std::size_t>(i)] = std::min(p, static_cast<double>(mag.rows - 1));
    }
    for (int i = 0; i < out_bins; ++i) {
        const double p = out.map.pos[static_cast<std::size_t>(i)];
        const int lo = std::min(static_cast<int>(p), mag.rows - 2);
        const double frac = p - lo;
        for (int n = 0; n < mag.cols; ++n)
            out.data.at(i, n) = lerp_exact(mag.at(lo, n), mag.at(lo + 1, n), frac);
    }
    return out;
}

Grid unwarp_log_freq(const LogFreqSpectrogram& warped, int out_bins) {
    require(!warped.map.pos.empty(), "unwarp_log_freq: missing bin map");
    require(out_bins == warped.map.linear_bins,
            msg("unwarp_log_freq: requested ", out_bins, " bins but the bin map was built for ",
                warped.map.linear_bins));
    const int wb = warped.map.out_bins;
    require(warped.data.rows == wb, "unwarp_log_freq: grid height does not match bin map");

    Grid out(out_bins, warped.data.cols);
    const double r = warp_ratio(out_bins);
    const double lr = std::log(r);
    for (int b = 0; b < out_bins; ++b) {
        if (b < 2) {
            // below the warp's lower edge: copy the lowest warped bin
            for (int n = 0; n < out.cols; ++n) out.at(b, n) = warped.data.at(0, n);
            continue;
        }
        double q = (wb - 1) * std::log(b / 2.0) / lr;
        q = std::clamp(q, 0.0, static_cast<double>(wb - 1));
        const int lo = std::min(static_cast<int>(q), wb - 2);
        const double frac = q - lo;
        for (int n = 0; n < out.cols; ++n)
            out.at(b, n) = lerp_exact(warped.data.at(lo, n), warped.data.at(lo + 1, n), frac);
    }
    return out;
}

Grid log_compress(const Grid& mag) {
    Grid out(mag.rows, mag.cols);
    for (std::size_t i = 0; i < mag.v.size(); ++i) {
        require(mag.v[i] >= 0.0, "log_compress: negative magnitude entry");
        out.v[i] = std::log1p(mag.v[i] / kLogCompressDelta);
    }
    return out;
}

ComplexSpectrogram apply_mask(const ComplexSpectrogram& mix, const Grid& mask) {
    require(mask.rows == mix.rows && mask.cols == mix.cols,
            msg("apply_mask: mask ", mask.rows, "x", mask.cols, " vs spectrogram ", mix.rows, "x",
                mix.cols));
    for (double m : mask.v)
        require(m >= 0.0 && m <= 1.0, msg("apply_mask: mask entry ", m, " outside [0,1]"));
    ComplexSpectrogram out = mix;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.v[i];
    return out;
}

}  // namespace mbs
