#pragma once

// RIFF/WAVE, PCM 16-bit signed little-endian, mono.

#include <cstdint>
#include <string>
#include <vector>

#include "mbs/dsp.hpp"

namespace mbs {

Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

// Integer-sample entry points; double samples map via round(x * 32767)
// clamped to the int16 range. The corpus mixes at the integer level so a
// mixture stays the exact sum of its stems after quantization.
std::vector<std::int16_t> quantize_pcm16(const std::vector<double>& samples);
void write_wav_pcm16(const std::string& path, const std::vector<std::int16_t>& samples,
                     double sample_rate);

}  // namespace mbs
