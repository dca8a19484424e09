#include "mbs/spec_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace mbs {

namespace {

constexpr char kMagic[6] = {'S', 'P', 'E', 'C', '1', '\n'};

void put_u32(std::string& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& b, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(b, bits);
}
std::uint32_t get_u32(const std::string& d, std::size_t p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
        v = (v << 8) | static_cast<std::uint8_t>(d[p + static_cast<std::size_t>(i)]);
    return v;
}
float get_f32(const std::string& d, std::size_t p) {
    std::uint32_t bits = get_u32(d, p);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void write_spec1(const std::string& path, const Grid& magnitude, const Grid* phase) {
    if (phase)
        require(phase->rows == magnitude.rows && phase->cols == magnitude.cols,
                "spec1: phase grid dims differ from magnitude");
    std::string b;
    b.append(kMagic, 6);
    b.push_back(phase ? 1 : 0);
    put_u32(b, static_cast<std::uint32_t>(magnitude.rows));
    put_u32(b, static_cast<std::uint32_t>(magnitude.cols));
    for (double v : magnitude.v) put_f32(b, static_cast<float>(v));
    if (phase)
        for (double v : phase->v) put_f32(b, static_cast<float>(v));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), msg("spec1: cannot open '", path, "' for writing"));
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
    require(out.good(), msg("spec1: write failed for '", path, "'"));
}

Spec1File read_spec1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), msg("spec1: cannot open '", path, "'"));
    std::string d((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(d.size() >= 15 && std::memcmp(d.data(), kMagic, 6) == 0,
            msg("spec1: bad magic in '", path, "'"));
    const std::uint8_t flags = static_cast<std::uint8_t>(d[6]);
    const std::uint32_t rows = get_u32(d, 7);
    const std::uint32_t cols = get_u32(d, 11);
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    const bool has_phase = (flags & 1) != 0;
    const std::size_t want = 15 + 4 * n * (has_phase ? 2 : 1);
    require(d.size() >= want, msg("spec1: truncated data in '", path, "'"));

    Spec1File f;
    f.magnitude = Grid(static_cast<int>(rows), static_cast<int>(cols));
    for (std::size_t i = 0; i < n; ++i) f.magnitude.v[i] = get_f32(d, 15 + 4 * i);
    if (has_phase) {
        Grid p(static_cast<int>(rows), static_cast<int>(cols));
        for (std::size_t i = 0; i < n; ++i) p.v[i] = get_f32(d, 15 + 4 * (n + i));
        f.phase = std::move(p);
    }
    return f;
}

}  // namespace mbs
