#pragma once

// Internal RAII wrapper around a pair of complex FFTW plans of one length.

#include <fftw3.h>

#include <complex>
#include <cstddef>

namespace mbs::detail {

class FftPlan {
public:
    explicit FftPlan(int n) : n_(n) {
        in_ = fftw_alloc_complex(static_cast<std::size_t>(n));
        out_ = fftw_alloc_complex(static_cast<std::size_t>(n));
        fwd_ = fftw_plan_dft_1d(n, in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(n, in_, out_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~FftPlan() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(in_);
        fftw_free(out_);
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    int size() const { return n_; }
    std::complex<double>* in() { return reinterpret_cast<std::complex<double>*>(in_); }
    const std::complex<double>* out() const {
        return reinterpret_cast<const std::complex<double>*>(out_);
    }
    void forward() { fftw_execute(fwd_); }
    void backward() { fftw_execute(bwd_); }  // unnormalized

private:
    int n_;
    fftw_complex* in_;
    fftw_complex* out_;
    fftw_plan fwd_;
    fftw_plan bwd_;
};

}  // namespace mbs::detail
