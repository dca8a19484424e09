#pragma once

// Thin parameterized layer wrappers over the tensor ops. Kernels initialize
// from uniform(-b, b) with b = sqrt(6 / fan_in); biases start at zero.

#include <cmath>
#include <random>
#include <string>

#include "mbs/params.hpp"
#include "mbs/tensor.hpp"

namespace mbs {

template <typename T>
struct Conv2dLayer {
    Tensor<T> kernel;  // Cout×Cin×kh×kw
    Tensor<T> bias;    // Cout, undefined when bias-free
    int stride = 1;
    int padding = 0;

    void init(int c_out, int c_in, int kh, int kw, int stride_, int padding_, bool with_bias,
              std::mt19937_64& rng) {
        stride = stride_;
        padding = padding_;
        kernel = Tensor<T>::zeros({c_out, c_in, kh, kw}, true);
        const T bound = static_cast<T>(std::sqrt(6.0 / (static_cast<double>(c_in) * kh * kw)));
        uniform_init(kernel, rng, bound);
        if (with_bias) bias = Tensor<T>::zeros({c_out}, true);
    }
    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".kernel", kernel);
        if (bias.defined()) ps.add(prefix + ".bias", bias);
    }
    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, kernel, bias, stride, padding); }
};

template <typename T>
struct ConvTranspose2dLayer {
    Tensor<T> kernel;  // Cin×Cout×kh×kw
    int stride = 1;

    void init(int c_in, int c_out, int kh, int kw, int stride_, std::mt19937_64& rng) {
        stride = stride_;
        kernel = Tensor<T>::zeros({c_in, c_out, kh, kw}, true);
        const T bound = static_cast<T>(std::sqrt(6.0 / (static_cast<double>(c_in) * kh * kw)));
        uniform_init(kernel, rng, bound);
    }
    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".kernel", kernel);
    }
    Tensor<T> forward(const Tensor<T>& x) const { return conv_transpose2d(x, kernel, stride); }
};

template <typename T>
struct BatchNorm2dLayer {
    Tensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    void init(int channels) {
        gamma = Tensor<T>::full({channels}, T(1), true);
        beta = Tensor<T>::zeros({channels}, true);
        running_mean = Tensor<T>::zeros({channels}, false);
        running_var = Tensor<T>::full({channels}, T(1), false);
    }
    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".gamma", gamma);
        ps.add(prefix + ".beta", beta);
        ps.add(prefix + ".running_mean", running_mean, /*trainable=*/false);
        ps.add(prefix + ".running_var", running_var, /*trainable=*/false);
    }
    Tensor<T> forward(const Tensor<T>& x, bool train) {
        return batchnorm2d(x, gamma, beta, running_mean, running_var, train, momentum, eps);
    }
};

template <typename T>
struct LinearLayer {
    Tensor<T> weight;  // Out×In
    Tensor<T> bias;    // Out

    void init(int out, int in, std::mt19937_64& rng) {
        weight = Tensor<T>::zeros({out, in}, true);
        uniform_init(weight, rng, static_cast<T>(std::sqrt(6.0 / in)));
        bias = Tensor<T>::zeros({out}, true);
    }
    void register_params(ParamStore<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".weight", weight);
        ps.add(prefix + ".bias", bias);
    }
    Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

}  // namespace mbs
