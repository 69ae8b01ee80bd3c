#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>

namespace qkl {

inline constexpr double kCanonicalRate = 16000.0;

struct Waveform {
  Eigen::VectorXd samples;
  double sample_rate = kCanonicalRate;
};

// PCM 16-bit RIFF/WAVE, mono or stereo (channels averaged). Output is scaled
// to [-1, 1] and resampled to 16 kHz when the file uses another rate.
Waveform load_wav(const std::string& path);
void save_wav(const Waveform& w, const std::string& path);  // mono 16-bit, clipped

Waveform resample_linear(const Waveform& w, double target_rate);

// Exactly one second: longer input is center-trimmed, shorter input is
// zero-padded on both sides (odd remainder goes to the tail).
Waveform pad_trim_1s(const Waveform& w);

// Adds seeded Gaussian noise scaled to hit snr_db exactly against the
// signal's mean power. An infinite snr_db returns the input unchanged.
Waveform add_white_noise(const Waveform& w, double snr_db, std::uint64_t seed);

struct MelConfig {
  int n_fft = 1024;
  int hop = 512;
  int n_mels = 60;
  double fmin = 0.0;
  double fmax = 8000.0;
  double sample_rate = kCanonicalRate;
  double log_floor = 1e-10;

  bool operator==(const MelConfig&) const = default;
};

struct MelSpectrogram {
  Eigen::MatrixXd values;  // frames x n_mels, log power
  MelConfig config;
};

double hz_to_mel(double hz);  // HTK
double mel_to_hz(double mel);

Eigen::VectorXd hann_window(int n);  // periodic

// |DFT|^2 of one frame (already windowed), bins 0..n/2.
Eigen::VectorXd power_spectrum(const Eigen::Ref<const Eigen::VectorXd>& frame);

// Triangular filters, n_mels x (n_fft/2 + 1), peak weight 1.
Eigen::MatrixXd mel_filterbank(const MelConfig& cfg);
Eigen::VectorXd mel_center_frequencies(const MelConfig& cfg);

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg = {});

Eigen::VectorXd frame_mean(const MelSpectrogram& m);

// Adjacent-dimension mean pooling into q groups whose sizes differ by at most one;
// pool_band_rows applies it to every row.
Eigen::VectorXd pool_bands(const Eigen::Ref<const Eigen::VectorXd>& v, int q);
Eigen::MatrixXd pool_band_rows(const Eigen::MatrixXd& rows, int q);

// Frame average followed by pooling; no normalization.
Eigen::VectorXd reduce_to_q(const MelSpectrogram& m, int q);

enum class ReducerKind { Pool, Pca };
std::string to_string(ReducerKind k);
ReducerKind parse_reducer(const std::string& s);

class PcaReducer {
 public:
  static PcaReducer fit(const Eigen::MatrixXd& train, int q);
  static PcaReducer from_parts(Eigen::RowVectorXd mean, Eigen::MatrixXd components);

  Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;      // N x q coordinates
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& Z) const;    // back to input space
  const Eigen::MatrixXd& components() const { return components_; }  // d x q, orthonormal columns
  const Eigen::RowVectorXd& mean() const { return mean_; }

 private:
  Eigen::RowVectorXd mean_;
  Eigen::MatrixXd components_;
};

// Per-dimension affine map of the training range onto [-1, 1]; values outside
// the training range are clamped.
class MinMaxNormalizer {
 public:
  static MinMaxNormalizer fit(const Eigen::MatrixXd& train);
  static MinMaxNormalizer from_bounds(Eigen::RowVectorXd lo, Eigen::RowVectorXd hi);

  Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;
  const Eigen::RowVectorXd& lower() const { return lo_; }
  const Eigen::RowVectorXd& upper() const { return hi_; }

 private:
  Eigen::RowVectorXd lo_, hi_;
};

// Reduction to q dimensions plus normalization, fit on training rows only.
struct FeatureReducer {
  ReducerKind kind = ReducerKind::Pool;
  int q = 8;
  std::optional<PcaReducer> pca;
  MinMaxNormalizer normalizer;

  static FeatureReducer fit(ReducerKind kind, int q, const Eigen::MatrixXd& train);
  Eigen::MatrixXd reduce(const Eigen::MatrixXd& X) const;  // before normalization
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
};

// "QFEAT1", u64 count, u64 dims, text tag, count*dims f64 row-major (little endian).
struct FeatureCache {
  Eigen::MatrixXd rows;
  std::string tag;
};
void save_feature_cache(const FeatureCache& cache, const std::string& path);
FeatureCache load_feature_cache(const std::string& path);

}  // namespace qkl
