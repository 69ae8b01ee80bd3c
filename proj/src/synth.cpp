#include "qkl/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "qkl/errors.hpp"
#include "qkl/random.hpp"

namespace qkl {

namespace {

constexpr std::array<const char*, 10> kWords = {"yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go"};

std::string padded(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d", width, v);
  return buf;
}

}  // namespace

void ToneCorpusSpec::validate() const {
  if (classes < 2) throw ConfigError("tone corpus needs at least 2 classes");
  if (per_class < 2) throw ConfigError("tone corpus needs at least 2 utterances per class");
  if (!(jitter >= 0.0 && jitter < 0.2)) throw ConfigError("tone jitter must lie in [0, 0.2)");
}

std::string command_word(int cls) {
  if (cls >= 0 && cls < static_cast<int>(kWords.size())) return kWords[static_cast<std::size_t>(cls)];
  return "cmd" + padded(cls, 2);
}

// Fundamentals evenly spaced on the mel axis between 200 Hz and 6 kHz.
double class_frequency(int cls, int classes) {
  const double lo = hz_to_mel(200.0), hi = hz_to_mel(6000.0);
  return mel_to_hz(lo + (cls + 0.5) * (hi - lo) / classes);
}

Waveform tone_utterance(const ToneCorpusSpec& spec, int cls, int index) {
  Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(index)}));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double rate = kCanonicalRate;
  const auto n = static_cast<Eigen::Index>(rate);

  const double f0 = class_frequency(cls, spec.classes) * (1.0 + spec.jitter * (2.0 * u(rng) - 1.0));
  const double amp = 0.2 + 0.4 * u(rng);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  const double dur = 0.5 + 0.4 * u(rng);
  const double start = (1.0 - dur) * u(rng);
  const auto i0 = static_cast<Eigen::Index>(start * rate);
  const auto len = static_cast<Eigen::Index>(dur * rate);
  const auto fade = static_cast<Eigen::Index>(0.02 * rate);

  Waveform w{Eigen::VectorXd::Zero(n), rate};
  for (Eigen::Index t = 0; t < len && i0 + t < n; ++t) {
    const double env = std::min({1.0, static_cast<double>(t) / fade, static_cast<double>(len - 1 - t) / fade});
    const double s = 2.0 * std::numbers::pi * f0 * static_cast<double>(t) / rate + phase;
    w.samples(i0 + t) = amp * env * (std::sin(s) + 0.4 * std::sin(2.0 * s));
  }
  return add_white_noise(w, spec.snr_db, derive_seed(spec.seed, {0xA015E, static_cast<std::uint64_t>(cls),
                                                                 static_cast<std::uint64_t>(index)}));
}

Manifest write_tone_corpus(const ToneCorpusSpec& spec, const std::string& out_dir) {
  spec.validate();
  const std::filesystem::path root(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(root / "wav", ec);
  if (ec) throw DataError(out_dir + ": cannot create corpus directory: " + ec.message());

  Manifest m;
  m.base_dir = out_dir;
  m.source = "synthetic tones";
  for (int c = 0; c < spec.classes; ++c) {
    for (int i = 0; i < spec.per_class; ++i) {
      const std::string id = command_word(c) + "_" + padded(i, 3);
      const std::string rel = "wav/" + id + ".wav";
      save_wav(tone_utterance(spec, c, i), (root / rel).string());
      m.entries.push_back({id, rel, command_word(c), ""});
    }
  }
  save_manifest(m, (root / "manifest.csv").string());
  return m;
}

void RadialCorpusSpec::validate() const {
  if (classes < 2) throw ConfigError("radial corpus needs at least 2 classes");
  if (per_class < 2) throw ConfigError("radial corpus needs at least 2 points per class");
  if (dims < 2) throw ConfigError("radial corpus needs at least 2 dimensions");
  if (!(noise >= 0.0)) throw ConfigError("radial noise must be non-negative");
}

RadialCorpus radial_corpus(const RadialCorpusSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  RadialCorpus out;
  out.manifest.source = "synthetic shells";
  out.features.tag = "raw";
  out.features.rows.resize(static_cast<Eigen::Index>(spec.classes) * spec.per_class, spec.dims);
  Eigen::Index r = 0;
  // Interleave classes so that no contiguous block is single-class.
  for (int i = 0; i < spec.per_class; ++i) {
    for (int c = 0; c < spec.classes; ++c, ++r) {
      Eigen::RowVectorXd dir(spec.dims);
      for (int d = 0; d < spec.dims; ++d) dir(d) = g(rng);
      dir.normalize();
      const double radius = 0.2 + 0.7 * c / (spec.classes - 1);
      Eigen::RowVectorXd x = radius * dir;
      for (int d = 0; d < spec.dims; ++d) x(d) += spec.noise * g(rng);
      out.features.rows.row(r) = x;
      const std::string label = "shell" + std::to_string(c);
      out.manifest.entries.push_back({label + "_" + padded(i, 3), "-", label, ""});
    }
  }
  return out;
}

RadialCorpus write_radial_corpus(const RadialCorpusSpec& spec, const std::string& out_dir) {
  RadialCorpus c = radial_corpus(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError(out_dir + ": cannot create corpus directory: " + ec.message());
  c.manifest.base_dir = out_dir;
  save_manifest(c.manifest, (std::filesystem::path(out_dir) / "manifest.csv").string());
  save_feature_cache(c.features, (std::filesystem::path(out_dir) / "features.qfeat").string());
  return c;
}

}  // namespace qkl
