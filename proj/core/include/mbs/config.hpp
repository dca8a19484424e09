#pragma once

// Run configuration. JSON config files use exactly these keys; every value
// can also be set from the command line, and MBS_SEED overrides the seed
// from file/defaults (an explicit --seed flag wins over the environment).

#include <cstdint>
#include <optional>
#include <string>

#include "mbs/fusion.hpp"

namespace mbs {

struct TrainConfig {
    std::string preset = "desk";  // desk | paper | tiny
    int k = 0;                    // mask basis count; 0 = preset default
    int depth = 0;                // U-Net depth; 0 = preset default
    int num_classes = 4;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 1;
    int steps = 2000;
    double tau = 0.3;
    std::string mask_kind = "binary";  // binary | ratio
    double lambda = 0.5;               // weight of the classification losses
    double grad_clip = 5.0;            // global gradient-norm cap; 0 disables
    double duet_fraction = 0.0;        // probability of drawing duet clips when mixing
    std::uint64_t seed = 1;
    std::string data_dir;
    std::string out_dir;
    std::string checkpoint;
    int eval_pairs = 20;
    int filter_len = 512;

    MaskKind mask() const;
    void validate() const;
};

TrainConfig load_config_file(const std::string& path);

// Seed from the MBS_SEED environment variable, when set.
std::optional<std::uint64_t> env_seed();

}  // namespace mbs
