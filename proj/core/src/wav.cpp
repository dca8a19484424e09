#include "mbs/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mbs {

namespace {

void put_u32(std::string& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& b, std::uint16_t v) {
    b.push_back(static_cast<char>(v & 0xff));
    b.push_back(static_cast<char>((v >> 8) & 0xff));
}
std::uint32_t get_u32(const std::string& d, std::size_t p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
        v = (v << 8) | static_cast<std::uint8_t>(d[p + static_cast<std::size_t>(i)]);
    return v;
}
std::uint16_t get_u16(const std::string& d, std::size_t p) {
    return static_cast<std::uint16_t>(static_cast<std::uint8_t>(d[p]) |
                                      (static_cast<std::uint8_t>(d[p + 1]) << 8));
}

}  // namespace

std::vector<std::int16_t> quantize_pcm16(const std::vector<double>& samples) {
    std::vector<std::int16_t> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double v = std::clamp(samples[i], -1.0, 1.0) * 32767.0;
        long q = std::lround(v);
        out[i] = static_cast<std::int16_t>(std::clamp(q, -32767l, 32767l));
    }
    return out;
}

void write_wav_pcm16(const std::string& path, const std::vector<std::int16_t>& samples,
                     double sample_rate) {
    require(sample_rate > 0, "wav: sample rate must be positive");
    const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(sample_rate));
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::string b;
    b.reserve(44 + data_bytes);
    b += "RIFF";
    put_u32(b, 36 + data_bytes);
    b += "WAVEfmt ";
    put_u32(b, 16);
    put_u16(b, 1);  // PCM
    put_u16(b, 1);  // mono
    put_u32(b, rate);
    put_u32(b, rate * 2);  // byte rate
    put_u16(b, 2);         // block align
    put_u16(b, 16);        // bits per sample
    b += "data";
    put_u32(b, data_bytes);
    for (std::int16_t s : samples) {
        b.push_back(static_cast<char>(s & 0xff));
        b.push_back(static_cast<char>((s >> 8) & 0xff));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), msg("wav: cannot open '", path, "' for writing"));
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
    require(out.good(), msg("wav: write failed for '", path, "'"));
}

void write_wav(const std::string& path, const Waveform& w) {
    write_wav_pcm16(path, quantize_pcm16(w.samples), w.sample_rate);
}

Waveform read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), msg("wav: cannot open '", path, "'"));
    std::string d((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(d.size() >= 12 && d.compare(0, 4, "RIFF") == 0 && d.compare(8, 4, "WAVE") == 0,
            msg("wav: '", path, "' is not a RIFF/WAVE file"));

    std::size_t pos = 12;
    bool have_fmt = false;
    std::uint16_t channels = 0, bits = 0, format = 0;
    std::uint32_t rate = 0;
    std::size_t data_pos = 0, data_len = 0;
    while (pos + 8 <= d.size()) {
        const std::string id = d.substr(pos, 4);
        const std::uint32_t len = get_u32(d, pos + 4);
        pos += 8;
        if (pos + len > d.size()) break;
        if (id == "fmt ") {
            require(len >= 16, msg("wav: malformed fmt chunk in '", path, "'"));
            format = get_u16(d, pos);
            channels = get_u16(d, pos + 2);
            rate = get_u32(d, pos + 4);
            bits = get_u16(d, pos + 14);
            have_fmt = true;
        } else if (id == "data") {
            data_pos = pos;
            data_len = len;
        }
        pos += len + (len % 2);  // chunks are word-aligned
    }
    require(have_fmt && data_pos != 0, msg("wav: missing fmt/data chunk in '", path, "'"));
    require(format == 1, msg("wav: '", path, "' is not PCM (format ", format, ")"));
    require(channels == 1, msg("wav: '", path, "' has ", channels, " channels, expected mono"));
    require(bits == 16, msg("wav: '", path, "' has ", bits, " bits per sample, expected 16"));

    Waveform w;
    w.sample_rate = static_cast<double>(rate);
    const std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t s = static_cast<std::int16_t>(
            static_cast<std::uint16_t>(static_cast<std::uint8_t>(d[data_pos + 2 * i]) |
                                       (static_cast<std::uint8_t>(d[data_pos + 2 * i + 1]) << 8)));
        w.samples[i] = s / 32768.0;  // dyadic scale: sums of samples stay exact
    }
    return w;
}

}  // namespace mbs
