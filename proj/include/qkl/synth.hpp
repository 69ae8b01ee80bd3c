#pragma once

#include <cstdint>
#include <string>

#include "qkl/features.hpp"
#include "qkl/manifest.hpp"

namespace qkl {

// Tone corpus: per class a fundamental plus its second harmonic at
// class-specific frequencies, switched on for a random sub-interval of a
// one-second clip, then white noise at snr_db.
struct ToneCorpusSpec {
  int classes = 4;
  int per_class = 60;
  double snr_db = 10.0;
  double jitter = 0.03;  // relative frequency jitter
  std::uint64_t seed = 0;

  void validate() const;
};

std::string command_word(int cls);
double class_frequency(int cls, int classes);
Waveform tone_utterance(const ToneCorpusSpec& spec, int cls, int index);

// Writes <out_dir>/wav/*.wav and <out_dir>/manifest.csv.
Manifest write_tone_corpus(const ToneCorpusSpec& spec, const std::string& out_dir);

// Concentric shells: class c sits at radius 0.2 + 0.7 c / (classes - 1) in
// `dims` dimensions with Gaussian jitter. Separable by radius only.
struct RadialCorpusSpec {
  int classes = 3;
  int per_class = 60;
  int dims = 2;
  double noise = 0.03;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RadialCorpus {
  Manifest manifest;
  FeatureCache features;  // tag "raw"
};

RadialCorpus radial_corpus(const RadialCorpusSpec& spec);

// Writes <out_dir>/manifest.csv and <out_dir>/features.qfeat.
RadialCorpus write_radial_corpus(const RadialCorpusSpec& spec, const std::string& out_dir);

}  // namespace qkl
