#pragma once

// Named parameter registry plus the MBSCKPT1 checkpoint format:
// magic "MBSCKPT1", u32 entry count, then per entry a length-prefixed UTF-8
// name, u32 rank, u32 dims, and row-major little-endian IEEE float32 values.

#include <string>
#include <vector>

#include "mbs/tensor.hpp"

namespace mbs {

template <typename T>
struct ParamStore {
    struct Entry {
        std::string name;
        Tensor<T> tensor;
        bool trainable = true;
    };
    std::vector<Entry> entries;  // insertion-ordered, names unique

    void add(const std::string& name, Tensor<T> tensor, bool trainable = true) {
        for (const auto& e : entries)
            require(e.name != name, msg("params: duplicate name '", name, "'"));
        entries.push_back({name, std::move(tensor), trainable});
    }
    Tensor<T>* find(const std::string& name) {
        for (auto& e : entries)
            if (e.name == name) return &e.tensor;
        return nullptr;
    }
    void zero_grad() {
        for (auto& e : entries)
            if (e.trainable) e.tensor.zero_grad();
    }
    std::size_t count_values() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.tensor.size();
        return n;
    }
};

// SGD with momentum; velocity buffers keyed per trainable entry.
template <typename T>
class SgdOptimizer {
public:
    SgdOptimizer(T learning_rate, T momentum) : lr_(learning_rate), momentum_(momentum) {}

    // Throws on non-finite gradients, naming the offending parameter.
    void step(ParamStore<T>& params);

    T learning_rate() const { return lr_; }
    void set_learning_rate(T lr) { lr_ = lr; }

private:
    T lr_;
    T momentum_;
    std::vector<std::vector<T>> velocity_;
};

template <typename T>
void save_checkpoint(const ParamStore<T>& params, const std::string& path);

// Validates every stored name and shape against the store; the error message
// lists all mismatches at once.
template <typename T>
void load_checkpoint(ParamStore<T>& params, const std::string& path);

using ParamStoreF = ParamStore<float>;
using ParamStoreD = ParamStore<double>;

}  // namespace mbs
