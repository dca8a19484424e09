#include "mbs/bss.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "fft_plan.hpp"

namespace mbs {

namespace {

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Dense SPD solve; a nonpositive pivot means the shifted references are
// (numerically) linearly dependent.
class Cholesky {
public:
    Cholesky(std::vector<double> a, int n) : n_(n), l_(std::move(a)) {
        double max_diag = 0.0;
        for (int i = 0; i < n; ++i)
            max_diag = std::max(max_diag, l_[static_cast<std::size_t>(i) * n + i]);
        for (int j = 0; j < n; ++j) {
            double d = l_[static_cast<std::size_t>(j) * n + j];
            for (int k = 0; k < j; ++k) {
                double v = l_[static_cast<std::size_t>(j) * n + k];
                d -= v * v;
            }
            if (!(d > max_diag * 1e-13))
                fail("bss: singular Gram matrix of shifted references; try a smaller filter_len");
            d = std::sqrt(d);
            l_[static_cast<std::size_t>(j) * n + j] = d;
            for (int i = j + 1; i < n; ++i) {
                double s = l_[static_cast<std::size_t>(i) * n + j];
                for (int k = 0; k < j; ++k)
                    s -= l_[static_cast<std::size_t>(i) * n + k] *
                         l_[static_cast<std::size_t>(j) * n + k];
                l_[static_cast<std::size_t>(i) * n + j] = s / d;
            }
        }
    }

    std::vector<double> solve(std::vector<double> b) const {
        for (int i = 0; i < n_; ++i) {
            double s = b[static_cast<std::size_t>(i)];
            for (int k = 0; k < i; ++k)
                s -= l_[static_cast<std::size_t>(i) * n_ + k] * b[static_cast<std::size_t>(k)];
            b[static_cast<std::size_t>(i)] = s / l_[static_cast<std::size_t>(i) * n_ + i];
        }
        for (int i = n_ - 1; i >= 0; --i) {
            double s = b[static_cast<std::size_t>(i)];
            for (int k = i + 1; k < n_; ++k)
                s -= l_[static_cast<std::size_t>(k) * n_ + i] * b[static_cast<std::size_t>(k)];
            b[static_cast<std::size_t>(i)] = s / l_[static_cast<std::size_t>(i) * n_ + i];
        }
        return b;
    }

private:
    int n_;
    std::vector<double> l_;
};

double energy(const std::vector<double>& v) {
    double e = 0.0;
    for (double x : v) e += x * x;
    return e;
}

double db_ratio(double num, double den) {
    if (den <= num * 1e-30) return kMetricCapDb;
    return std::min(10.0 * std::log10(num / den), kMetricCapDb);
}

// Shared per-(references, filter_len) state: correlation blocks and factors.
class Decomposer {
public:
    Decomposer(const std::vector<Waveform>& references, int estimate_len, int filter_len)
        : L_(filter_len), Tn_(estimate_len), nsrc_(static_cast<int>(references.size())) {
        require(L_ >= 1, "bss: filter_len must be >= 1");
        require(nsrc_ >= 1, "bss: need at least one reference");
        for (const auto& r : references)
            require(r.length() == Tn_, msg("bss: length mismatch, reference has ", r.length(),
                                           " samples but estimate has ", Tn_));
        Tp_ = Tn_ + L_ - 1;
        nfft_ = next_pow2(Tn_ + L_);
        plan_ = std::make_unique<detail::FftPlan>(nfft_);

        refs_.resize(static_cast<std::size_t>(nsrc_));
        ref_spectra_.resize(static_cast<std::size_t>(nsrc_));
        for (int i = 0; i < nsrc_; ++i) {
            refs_[static_cast<std::size_t>(i)] = references[static_cast<std::size_t>(i)].samples;
            ref_spectra_[static_cast<std::size_t>(i)] = fft_of(refs_[static_cast<std::size_t>(i)]);
        }

        // block-Toeplitz Gram of shifted references from cross-correlations
        const int n = nsrc_ * L_;
        std::vector<double> g(static_cast<std::size_t>(n) * n);
        for (int i = 0; i < nsrc_; ++i)
            for (int j = 0; j < nsrc_; ++j) {
                const auto c = correlate(ref_spectra_[static_cast<std::size_t>(i)],
                                         ref_spectra_[static_cast<std::size_t>(j)]);
                for (int d = 0; d < L_; ++d)
                    for (int dp = 0; dp < L_; ++dp)
                        g[static_cast<std::size_t>(i * L_ + d) * n + (j * L_ + dp)] =
                            c[static_cast<std::size_t>(d - dp + L_ - 1)];
            }
        chol_all_ = std::make_unique<Cholesky>(g, n);
        chol_tgt_.resize(static_cast<std::size_t>(nsrc_));
        for (int t = 0; t < nsrc_; ++t) {
            std::vector<double> gt(static_cast<std::size_t>(L_) * L_);
            for (int d = 0; d < L_; ++d)
                for (int dp = 0; dp < L_; ++dp)
                    gt[static_cast<std::size_t>(d) * L_ + dp] =
                        g[static_cast<std::size_t>(t * L_ + d) * n + (t * L_ + dp)];
            chol_tgt_[static_cast<std::size_t>(t)] = std::make_unique<Cholesky>(gt, L_);
        }
    }

    BssDecomposition decompose(const std::vector<double>& estimate, int target_idx) {
        require(target_idx >= 0 && target_idx < nsrc_,
                msg("bss: target index ", target_idx, " out of range [0,", nsrc_, ")"));
        require(static_cast<int>(estimate.size()) == Tn_,
                msg("bss: length mismatch, estimate has ", estimate.size(), " samples, expected ",
                    Tn_));
        const auto est_spec = fft_of(estimate);
        std::vector<double> rhs(static_cast<std::size_t>(nsrc_) * L_);
        for (int i = 0; i < nsrc_; ++i) {
            const auto c = correlate(ref_spectra_[static_cast<std::size_t>(i)], est_spec);
            for (int d = 0; d < L_; ++d)
                rhs[static_cast<std::size_t>(i * L_ + d)] = c[static_cast<std::size_t>(d + L_ - 1)];
        }

        const auto coef_all = chol_all_->solve(rhs);
        std::vector<double> p_all(static_cast<std::size_t>(Tp_), 0.0);
        for (int i = 0; i < nsrc_; ++i)
            accumulate_filtered(p_all, refs_[static_cast<std::size_t>(i)],
                                coef_all.data() + static_cast<std::size_t>(i) * L_);

        std::vector<double> rhs_t(rhs.begin() + static_cast<std::size_t>(target_idx) * L_,
                                  rhs.begin() + static_cast<std::size_t>(target_idx + 1) * L_);
        const auto coef_t = chol_tgt_[static_cast<std::size_t>(target_idx)]->solve(rhs_t);

        BssDecomposition d;
        d.filter_len = L_;
        d.s_target.assign(static_cast<std::size_t>(Tp_), 0.0);
        accumulate_filtered(d.s_target, refs_[static_cast<std::size_t>(target_idx)], coef_t.data());
        d.e_interf.resize(static_cast<std::size_t>(Tp_));
        d.e_artif.resize(static_cast<std::size_t>(Tp_));
        for (int n = 0; n < Tp_; ++n) {
            const double e = n < Tn_ ? estimate[static_cast<std::size_t>(n)] : 0.0;
            d.e_interf[static_cast<std::size_t>(n)] =
                p_all[static_cast<std::size_t>(n)] - d.s_target[static_cast<std::size_t>(n)];
            d.e_artif[static_cast<std::size_t>(n)] =
                (e - d.s_target[static_cast<std::size_t>(n)]) - d.e_interf[static_cast<std::size_t>(n)];
        }
        return d;
    }

private:
    std::vector<std::complex<double>> fft_of(const std::vector<double>& x) {
        auto* in = plan_->in();
        for (int i = 0; i < nfft_; ++i)
            in[i] = {i < static_cast<int>(x.size()) ? x[static_cast<std::size_t>(i)] : 0.0, 0.0};
        plan_->forward();
        return {plan_->out(), plan_->out() + nfft_};
    }

    // c(delta) = sum_m a[m] * b[m + delta] for delta in (−L, L), index delta+L−1
    std::vector<double> correlate(const std::vector<std::complex<double>>& fa,
                                  const std::vector<std::complex<double>>& fb) {
        auto* in = plan_->in();
        for (int i = 0; i < nfft_; ++i) in[i] = std::conj(fa[static_cast<std::size_t>(i)]) * fb[static_cast<std::size_t>(i)];
        plan_->backward();
        const auto* out = plan_->out();
        std::vector<double> c(static_cast<std::size_t>(2 * L_ - 1));
        for (int delta = -(L_ - 1); delta <= L_ - 1; ++delta) {
            const int idx = delta >= 0 ? delta : nfft_ + delta;
            c[static_cast<std::size_t>(delta + L_ - 1)] = out[idx].real() / nfft_;
        }
        return c;
    }

    // acc[n] += sum_d coef[d] * ref[n - d]
    void accumulate_filtered(std::vector<double>& acc, const std::vector<double>& ref,
                             const double* coef) const {
        for (int d = 0; d < L_; ++d) {
            const double c = coef[d];
            if (c == 0.0) continue;
            for (int m = 0; m < Tn_; ++m) acc[static_cast<std::size_t>(m + d)] += c * ref[static_cast<std::size_t>(m)];
        }
    }

    int L_;
    int Tn_;
    int Tp_ = 0;
    int nsrc_;
    int nfft_ = 0;
    std::unique_ptr<detail::FftPlan> plan_;
    std::vector<std::vector<double>> refs_;
    std::vector<std::vector<std::complex<double>>> ref_spectra_;
    std::unique_ptr<Cholesky> chol_all_;
    std::vector<std::unique_ptr<Cholesky>> chol_tgt_;
};

}  // namespace

BssDecomposition bss_decompose(const Waveform& estimate, const std::vector<Waveform>& references,
                               int target_idx, int filter_len) {
    Decomposer dec(references, estimate.length(), filter_len);
    return dec.decompose(estimate.samples, target_idx);
}

BssMetrics bss_metrics(const BssDecomposition& d) {
    const double nt = energy(d.s_target);
    require(nt > 0.0, "bss: zero target projection (estimate unrelated to target)");
    std::vector<double> dist(d.s_target.size());
    for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = d.e_interf[i] + d.e_artif[i];
    std::vector<double> tgt_full(d.s_target.size());
    for (std::size_t i = 0; i < tgt_full.size(); ++i) tgt_full[i] = d.s_target[i] + d.e_interf[i];

    BssMetrics m;
    m.sdr = db_ratio(nt, energy(dist));
    m.sir = db_ratio(nt, energy(d.e_interf));
    m.sar = db_ratio(energy(tgt_full), energy(d.e_artif));
    return m;
}

PairEvaluation evaluate_pair(const std::vector<Waveform>& estimates,
                             const std::vector<Waveform>& references, int filter_len) {
    require(!estimates.empty(), "evaluate_pair: no estimates");
    require(estimates.size() == references.size(),
            msg("evaluate_pair: ", estimates.size(), " estimates vs ", references.size(),
                " references"));
    const int n = static_cast<int>(estimates.size());
    Decomposer dec(references, estimates[0].length(), filter_len);

    std::vector<std::vector<BssMetrics>> met(static_cast<std::size_t>(n),
                                             std::vector<BssMetrics>(static_cast<std::size_t>(n)));
    for (int e = 0; e < n; ++e) {
        require(estimates[static_cast<std::size_t>(e)].length() == estimates[0].length(),
                "evaluate_pair: estimates must share one length");
        for (int t = 0; t < n; ++t)
            met[static_cast<std::size_t>(e)][static_cast<std::size_t>(t)] =
                bss_metrics(dec.decompose(estimates[static_cast<std::size_t>(e)].samples, t));
    }

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_sir = -1e300;
    do {
        double mean_sir = 0.0;
        for (int j = 0; j < n; ++j)
            mean_sir += met[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])]
                           [static_cast<std::size_t>(j)].sir;
        mean_sir /= n;
        if (mean_sir > best_sir) {
            best_sir = mean_sir;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    PairEvaluation out;
    out.permutation = best;
    out.per_source.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        out.per_source[static_cast<std::size_t>(j)] =
            met[static_cast<std::size_t>(best[static_cast<std::size_t>(j)])][static_cast<std::size_t>(j)];
    return out;
}

}  // namespace mbs
