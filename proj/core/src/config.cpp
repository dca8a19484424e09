#include "mbs/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace mbs {

MaskKind TrainConfig::mask() const {
    if (mask_kind == "binary") return MaskKind::binary;
    if (mask_kind == "ratio") return MaskKind::ratio;
    fail(msg("config: mask_kind must be 'binary' or 'ratio', got '", mask_kind, "'"));
}

void TrainConfig::validate() const {
    require(preset == "desk" || preset == "paper" || preset == "tiny",
            msg("config: unknown preset '", preset, "'"));
    require(k >= 0, "config: k must be positive (or 0 for the preset default)");
    require(depth >= 0, "config: depth must be positive (or 0 for the preset default)");
    require(num_classes >= 1, "config: num_classes must be >= 1");
    require(learning_rate > 0, "config: learning_rate must be positive");
    require(momentum >= 0 && momentum < 1, "config: momentum must be in [0,1)");
    require(batch_size >= 1, "config: batch_size must be >= 1");
    require(steps >= 0, "config: steps must be >= 0");
    require(tau > 0 && tau < 1, "config: tau must be in (0,1)");
    require(lambda >= 0, "config: lambda must be >= 0");
    require(grad_clip >= 0, "config: grad_clip must be >= 0");
    require(duet_fraction >= 0 && duet_fraction <= 1, "config: duet_fraction must be in [0,1]");
    require(eval_pairs >= 1, "config: eval_pairs must be >= 1");
    require(filter_len >= 1, "config: filter_len must be >= 1");
    (void)mask();
}

TrainConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), msg("config: cannot open '", path, "'"));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(msg("config: '", path, "' is not valid JSON: ", e.what()));
    }
    TrainConfig c;
    auto get = [&](const char* key, auto& out) {
        if (j.contains(key)) out = j.at(key).get<std::remove_reference_t<decltype(out)>>();
    };
    get("preset", c.preset);
    get("k", c.k);
    get("depth", c.depth);
    get("num_classes", c.num_classes);
    get("learning_rate", c.learning_rate);
    get("momentum", c.momentum);
    get("batch_size", c.batch_size);
    get("steps", c.steps);
    get("tau", c.tau);
    get("mask_kind", c.mask_kind);
    get("lambda", c.lambda);
    get("grad_clip", c.grad_clip);
    get("duet_fraction", c.duet_fraction);
    get("seed", c.seed);
    get("data_dir", c.data_dir);
    get("out_dir", c.out_dir);
    get("checkpoint", c.checkpoint);
    get("eval_pairs", c.eval_pairs);
    get("filter_len", c.filter_len);
    for (auto& [key, value] : j.items()) {
        (void)value;
        static const char* known[] = {"preset",     "k",          "depth",       "num_classes",
                                      "learning_rate", "momentum", "batch_size", "steps",
                                      "tau",        "mask_kind",  "lambda",      "grad_clip",
                                      "duet_fraction", "seed",    "data_dir",    "out_dir",
                                      "checkpoint", "eval_pairs", "filter_len"};
        bool ok = false;
        for (const char* k2 : known) ok = ok || key == k2;
        require(ok, msg("config: unknown key '", key, "' in '", path, "'"));
    }
    return c;
}

std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("MBS_SEED");
    if (!v || !*v) return std::nullopt;
    return static_cast<std::uint64_t>(std::strtoull(v, nullptr, 10));
}

}  // namespace mbs
