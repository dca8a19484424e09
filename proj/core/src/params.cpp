#include "mbs/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace mbs {

namespace {

constexpr char kMagic[8] = {'M', 'B', 'S', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::string& buf, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    buf.append(b, 4);
}

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const std::string& data;
    std::size_t pos = 0;
    explicit Reader(const std::string& d) : data(d) {}
    void need(std::size_t n, const char* what) {
        require(pos + n <= data.size(), msg("checkpoint: truncated file while reading ", what));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<std::uint8_t>(data[pos + static_cast<std::size_t>(i)]);
        pos += 4;
        return v;
    }
    float f32(const char* what) {
        std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

template <typename T>
void SgdOptimizer<T>::step(ParamStore<T>& params) {
    if (velocity_.size() != params.entries.size()) {
        velocity_.assign(params.entries.size(), {});
        for (std::size_t i = 0; i < params.entries.size(); ++i)
            velocity_[i].assign(params.entries[i].tensor.size(), T(0));
    }
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        auto& e = params.entries[i];
        if (!e.trainable) continue;
        auto g = e.tensor.grad();
        if (g.empty()) continue;  // parameter unused by this graph
        auto v = e.tensor.values_mut();
        auto& vel = velocity_[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
            require(std::isfinite(static_cast<double>(g[j])),
                    msg("sgd: non-finite gradient in '", e.name, "'"));
            vel[j] = momentum_ * vel[j] + g[j];
            v[j] -= lr_ * vel[j];
        }
    }
}

template <typename T>
void save_checkpoint(const ParamStore<T>& params, const std::string& path) {
    std::string buf;
    buf.append(kMagic, 8);
    put_u32(buf, static_cast<std::uint32_t>(params.entries.size()));
    for (const auto& e : params.entries) {
        put_u32(buf, static_cast<std::uint32_t>(e.name.size()));
        buf.append(e.name);
        const auto& shape = e.tensor.shape();
        put_u32(buf, static_cast<std::uint32_t>(shape.size()));
        for (int d : shape) put_u32(buf, static_cast<std::uint32_t>(d));
        for (T v : e.tensor.values()) put_f32(buf, static_cast<float>(v));
    }
    // atomic: write temp then rename
    std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), msg("checkpoint: cannot open '", tmp.string(), "' for writing"));
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        require(out.good(), msg("checkpoint: write failed for '", tmp.string(), "'"));
    }
    std::filesystem::rename(tmp, target);
}

template <typename T>
void load_checkpoint(ParamStore<T>& params, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), msg("checkpoint: cannot open '", path, "'"));
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(data);
    require(data.size() >= 8 && std::memcmp(data.data(), kMagic, 8) == 0,
            msg("checkpoint: bad magic in '", path, "'"));
    r.pos = 8;
    const std::uint32_t count = r.u32("entry count");

    std::vector<std::string> problems;
    std::vector<std::pair<Tensor<T>*, std::vector<float>>> pending;
    std::vector<bool> seen(params.entries.size(), false);

    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32("name length");
        const std::string name = r.bytes(name_len, "name");
        const std::uint32_t rank = r.u32("rank");
        Shape shape;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint32_t dim = r.u32("dim");
            shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        std::vector<float> vals(numel);
        for (std::size_t j = 0; j < numel; ++j) vals[j] = r.f32("values");

        Tensor<T>* dst = nullptr;
        for (std::size_t k = 0; k < params.entries.size(); ++k)
            if (params.entries[k].name == name) {
                dst = &params.entries[k].tensor;
                seen[k] = true;
                break;
            }
        if (!dst) {
            problems.push_back(msg("unexpected entry '", name, "'"));
            continue;
        }
        if (dst->shape() != shape) {
            problems.push_back(msg("shape mismatch for '", name, "': file ", shape_str(shape),
                                   " vs model ", shape_str(dst->shape())));
            continue;
        }
        pending.emplace_back(dst, std::move(vals));
    }
    for (std::size_t k = 0; k < params.entries.size(); ++k)
        if (!seen[k]) problems.push_back(msg("missing entry '", params.entries[k].name, "'"));

    if (!problems.empty()) {
        std::string all = msg("checkpoint: '", path, "' does not match model (", problems.size(),
                              " problem(s)):");
        for (const auto& p : problems) all += "\n  - " + p;
        fail(all);
    }
    for (auto& [dst, vals] : pending) {
        auto v = dst->values_mut();
        for (std::size_t j = 0; j < vals.size(); ++j) v[j] = static_cast<T>(vals[j]);
    }
}

template class SgdOptimizer<float>;
template class SgdOptimizer<double>;
template void save_checkpoint<float>(const ParamStore<float>&, const std::string&);
template void save_checkpoint<double>(const ParamStore<double>&, const std::string&);
template void load_checkpoint<float>(ParamStore<float>&, const std::string&);
template void load_checkpoint<double>(ParamStore<double>&, const std::string&);

}  // namespace mbs
