#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <vector>

#include "qkl/errors.hpp"
#include "qkl/features.hpp"

namespace qkl {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
void put16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xFF));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

Waveform load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) { return DataError(path + ": " + why); };

  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE") {
    throw fail("not a RIFF/WAVE file");
  }

  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4));
    const std::uint32_t len = le32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (len > bytes.size() - body) throw fail("chunk '" + id + "' runs past end of file (truncated?)");
    if (id == "fmt ") {
      if (len < 16) throw fail("fmt chunk too short");
      format = le16(&bytes[body]);
      channels = le16(&bytes[body + 2]);
      rate = le32(&bytes[body + 4]);
      bits = le16(&bytes[body + 14]);
      if (format == kFormatExtensible && len >= 26) format = le16(&bytes[body + 24]);
    } else if (id == "data") {
      data = &bytes[body];
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  if (channels == 0) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");
  if (format != kFormatPcm || bits != 16) throw fail("unsupported encoding (need 16-bit PCM)");
  if (channels > 2) throw fail("unsupported channel count " + std::to_string(channels));
  if (rate == 0) throw fail("sample rate is zero");

  const std::size_t frame_bytes = 2u * channels;
  const std::size_t frames = data_len / frame_bytes;
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<Eigen::Index>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      acc += static_cast<std::int16_t>(le16(data + f * frame_bytes + 2 * c)) / 32768.0;
    }
    w.samples(static_cast<Eigen::Index>(f)) = acc / channels;
  }
  if (w.sample_rate != kCanonicalRate) w = resample_linear(w, kCanonicalRate);
  return w;
}

void save_wav(const Waveform& w, const std::string& path) {
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::vector<unsigned char> b;
  b.reserve(44 + 2 * static_cast<std::size_t>(n));
  for (char c : std::string("RIFF")) b.push_back(static_cast<unsigned char>(c));
  put32(b, 36 + 2 * n);
  for (char c : std::string("WAVEfmt ")) b.push_back(static_cast<unsigned char>(c));
  put32(b, 16);
  put16(b, kFormatPcm);
  put16(b, 1);
  put32(b, rate);
  put32(b, rate * 2);
  put16(b, 2);
  put16(b, 16);
  for (char c : std::string("data")) b.push_back(static_cast<unsigned char>(c));
  put32(b, 2 * n);
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) {
    const double s = std::clamp(w.samples(i), -1.0, 32767.0 / 32768.0);
    put16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(s * 32768.0))));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw DataError(path + ": write failed");
}

Waveform resample_linear(const Waveform& w, double target_rate) {
  if (!(target_rate > 0) || !(w.sample_rate > 0)) throw DataError("sample rates must be positive");
  if (w.samples.size() == 0 || w.sample_rate == target_rate) return {w.samples, target_rate};
  const double ratio = target_rate / w.sample_rate;
  const Eigen::Index n = w.samples.size();
  const auto out_len = static_cast<Eigen::Index>(std::floor(static_cast<double>(n - 1) * ratio)) + 1;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  for (Eigen::Index k = 0; k < out_len; ++k) {
    const double t = static_cast<double>(k) / ratio;
    const auto i0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(t), n - 1);
    const Eigen::Index i1 = std::min<Eigen::Index>(i0 + 1, n - 1);
    const double frac = t - static_cast<double>(i0);
    out.samples(k) = (1.0 - frac) * w.samples(i0) + frac * w.samples(i1);
  }
  return out;
}

}  // namespace qkl
