#pragma once

// Separation quality metrics (SDR / SIR / SAR) from a least-squares
// decomposition of an estimate into target, interference, and artifact
// components. Shifted-reference Gram matrices are assembled from
// FFT-accelerated cross-correlations (block Toeplitz) and solved by a
// Cholesky factorization.

#include <vector>

#include "mbs/dsp.hpp"

namespace mbs {

inline constexpr double kMetricCapDb = 300.0;
inline constexpr int kDefaultFilterLen = 512;

// Components live on the zero-padded axis of length len(estimate)+filter_len-1
// and sum back to the (zero-padded) estimate.
struct BssDecomposition {
    std::vector<double> s_target;
    std::vector<double> e_interf;
    std::vector<double> e_artif;
    int filter_len = 0;
};

struct BssMetrics {
    double sdr = 0.0;
    double sir = 0.0;
    double sar = 0.0;
};

// s_target: least-squares projection of the estimate onto the span of
// shifted copies (lags 0..filter_len-1) of references[target_idx];
// s_target + e_interf: projection onto shifted copies of all references;
// e_artif: the remainder.
BssDecomposition bss_decompose(const Waveform& estimate, const std::vector<Waveform>& references,
                               int target_idx, int filter_len);

// Denominators are floored relative to the target energy so perfect
// estimates cap at +300 dB instead of producing infinities.
BssMetrics bss_metrics(const BssDecomposition& d);

struct PairEvaluation {
    std::vector<int> permutation;       // permutation[j] = estimate index for reference j
    std::vector<BssMetrics> per_source; // indexed by reference
};

// Exhaustive assignment search maximizing mean SIR.
PairEvaluation evaluate_pair(const std::vector<Waveform>& estimates,
                             const std::vector<Waveform>& references, int filter_len);

}  // namespace mbs
