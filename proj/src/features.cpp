#include "qkl/features.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <utility>
#include <vector>

#include "qkl/binary_io.hpp"
#include "qkl/errors.hpp"
#include "qkl/random.hpp"

namespace qkl {

Waveform pad_trim_1s(const Waveform& w) {
  if (w.samples.size() == 0) throw DataError("empty waveform");
  if (!(w.sample_rate > 0)) throw DataError("sample rate must be positive");
  const auto target = static_cast<Eigen::Index>(std::lround(w.sample_rate));
  const Eigen::Index n = w.samples.size();
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (n >= target) {
    out.samples = w.samples.segment((n - target) / 2, target);
  } else {
    const Eigen::Index lead = (target - n) / 2;
    out.samples = Eigen::VectorXd::Zero(target);
    out.samples.segment(lead, n) = w.samples;
  }
  return out;
}

Waveform add_white_noise(const Waveform& w, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return w;
  if (!std::isfinite(snr_db)) throw UsageError("snr_db must be finite or +inf");
  const double signal_power = w.samples.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(w.samples.size(), 1));
  if (!(signal_power > 0.0)) throw DataError("cannot set an SNR against a silent waveform");

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd noise(w.samples.size());
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = gauss(rng);
  const double noise_power = noise.squaredNorm() / static_cast<double>(noise.size());
  const double target_power = signal_power / std::pow(10.0, snr_db / 10.0);
  Waveform out = w;
  out.samples += noise * std::sqrt(target_power / noise_power);
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::VectorXd hann_window(int n) {
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

Eigen::VectorXd power_spectrum(const Eigen::Ref<const Eigen::VectorXd>& frame) {
  const Eigen::Index n = frame.size();
  std::vector<double> in(frame.data(), frame.data() + n);
  std::vector<std::complex<double>> out;
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  Eigen::VectorXd p(n / 2 + 1);
  for (Eigen::Index k = 0; k <= n / 2; ++k) p(k) = std::norm(out[static_cast<std::size_t>(k)]);
  return p;
}

Eigen::VectorXd mel_center_frequencies(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  Eigen::VectorXd edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) edges(i) = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  return edges.segment(1, cfg.n_mels);
}

Eigen::MatrixXd mel_filterbank(const MelConfig& cfg) {
  if (cfg.n_mels < 1 || cfg.n_fft < 2 || !(cfg.fmax > cfg.fmin) || cfg.fmax > cfg.sample_rate / 2) {
    throw ConfigError("invalid mel filterbank configuration");
  }
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));

  const int bins = cfg.n_fft / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)], center = edges[static_cast<std::size_t>(m) + 1],
                 right = edges[static_cast<std::size_t>(m) + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = b * cfg.sample_rate / cfg.n_fft;
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      fb(m, b) = std::max(0.0, std::min(rise, fall));
    }
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  if (cfg.hop < 1) throw ConfigError("mel hop must be >= 1");
  if (w.samples.size() < cfg.n_fft) {
    throw DataError("waveform has " + std::to_string(w.samples.size()) + " samples; need at least " +
                    std::to_string(cfg.n_fft));
  }
  if (!w.samples.allFinite()) throw DataError("waveform contains non-finite samples");
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  const Eigen::VectorXd window = hann_window(cfg.n_fft);
  const Eigen::Index frames = 1 + (w.samples.size() - cfg.n_fft) / cfg.hop;

  MelSpectrogram m;
  m.config = cfg;
  m.values.resize(frames, cfg.n_mels);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::VectorXd frame = w.samples.segment(f * cfg.hop, cfg.n_fft).cwiseProduct(window);
    const Eigen::VectorXd mel = fb * power_spectrum(frame);
    m.values.row(f) = (mel.array() + cfg.log_floor).log().transpose();
  }
  return m;
}

Eigen::VectorXd frame_mean(const MelSpectrogram& m) { return m.values.colwise().mean().transpose(); }

Eigen::VectorXd pool_bands(const Eigen::Ref<const Eigen::VectorXd>& v, int q) {
  const auto d = v.size();
  if (q < 1) throw ConfigError("reduced dimension must be >= 1");
  if (q > d) {
    throw ConfigError("cannot pool " + std::to_string(d) + " bands into " + std::to_string(q) + " groups");
  }
  Eigen::VectorXd out(q);
  for (int g = 0; g < q; ++g) {
    const Eigen::Index begin = g * d / q, end = (g + 1) * d / q;
    out(g) = v.segment(begin, end - begin).mean();
  }
  return out;
}

Eigen::MatrixXd pool_band_rows(const Eigen::MatrixXd& rows, int q) {
  Eigen::MatrixXd out(rows.rows(), q);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.row(i) = pool_bands(rows.row(i).transpose(), q).transpose();
  return out;
}

Eigen::VectorXd reduce_to_q(const MelSpectrogram& m, int q) { return pool_bands(frame_mean(m), q); }

std::string to_string(ReducerKind k) { return k == ReducerKind::Pool ? "pool" : "pca"; }

ReducerKind parse_reducer(const std::string& s) {
  if (s == "pool") return ReducerKind::Pool;
  if (s == "pca") return ReducerKind::Pca;
  throw ConfigError("unknown reducer '" + s + "' (expected pool or pca)");
}

PcaReducer PcaReducer::fit(const Eigen::MatrixXd& train, int q) {
  if (q < 1 || q > train.cols()) throw ConfigError("PCA dimension out of range");
  if (train.rows() < 2) throw DataError("PCA needs at least two training rows");
  PcaReducer p;
  p.mean_ = train.colwise().mean();
  const Eigen::MatrixXd centered = train.rowwise() - p.mean_;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(train.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
  // Eigenvalues ascend; keep the top q, largest first, with a sign convention
  // (largest-magnitude loading positive) so components are reproducible.
  p.components_.resize(train.cols(), q);
  for (int k = 0; k < q; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(train.cols() - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    p.components_.col(k) = v;
  }
  return p;
}

PcaReducer PcaReducer::from_parts(Eigen::RowVectorXd mean, Eigen::MatrixXd components) {
  if (mean.size() != components.rows()) throw DataError("PCA mean and components disagree in dimension");
  PcaReducer p;
  p.mean_ = std::move(mean);
  p.components_ = std::move(components);
  return p;
}

Eigen::MatrixXd PcaReducer::transform(const Eigen::MatrixXd& X) const {
  if (X.cols() != mean_.size()) throw UsageError("PCA input dimension mismatch");
  return (X.rowwise() - mean_) * components_;
}

Eigen::MatrixXd PcaReducer::reconstruct(const Eigen::MatrixXd& Z) const {
  return (Z * components_.transpose()).rowwise() + mean_;
}

MinMaxNormalizer MinMaxNormalizer::fit(const Eigen::MatrixXd& train) {
  if (train.rows() == 0) throw DataError("normalizer needs at least one training row");
  return from_bounds(train.colwise().minCoeff(), train.colwise().maxCoeff());
}

MinMaxNormalizer MinMaxNormalizer::from_bounds(Eigen::RowVectorXd lo, Eigen::RowVectorXd hi) {
  if (lo.size() != hi.size()) throw UsageError("normalizer bounds differ in length");
  MinMaxNormalizer n;
  n.lo_ = std::move(lo);
  n.hi_ = std::move(hi);
  return n;
}

Eigen::MatrixXd MinMaxNormalizer::transform(const Eigen::MatrixXd& X) const {
  if (X.cols() != lo_.size()) throw UsageError("normalizer dimension mismatch");
  Eigen::MatrixXd out(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double span = hi_(j) - lo_(j);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      // A constant training column carries no information; map it to 0.
      out(i, j) = span > 0 ? std::clamp(2.0 * (X(i, j) - lo_(j)) / span - 1.0, -1.0, 1.0) : 0.0;
    }
  }
  return out;
}

FeatureReducer FeatureReducer::fit(ReducerKind kind, int q, const Eigen::MatrixXd& train) {
  FeatureReducer r;
  r.kind = kind;
  r.q = q;
  if (kind == ReducerKind::Pca) r.pca = PcaReducer::fit(train, q);
  r.normalizer = MinMaxNormalizer::fit(r.reduce(train));
  return r;
}

Eigen::MatrixXd FeatureReducer::reduce(const Eigen::MatrixXd& X) const {
  if (kind == ReducerKind::Pca) {
    if (!pca) throw UsageError("PCA reducer used before fit");
    return pca->transform(X);
  }
  return pool_band_rows(X, q);
}

Eigen::MatrixXd FeatureReducer::apply(const Eigen::MatrixXd& X) const { return normalizer.transform(reduce(X)); }

void save_feature_cache(const FeatureCache& cache, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  binio::write_magic(out, "QFEAT1");
  binio::write_u64(out, static_cast<std::uint64_t>(cache.rows.rows()));
  binio::write_u64(out, static_cast<std::uint64_t>(cache.rows.cols()));
  binio::write_text(out, cache.tag);
  for (Eigen::Index i = 0; i < cache.rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < cache.rows.cols(); ++j) binio::write_f64(out, cache.rows(i, j));
  }
  if (!out) throw DataError(path + ": write failed");
}

FeatureCache load_feature_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  binio::expect_magic(in, "QFEAT1", path);
  const std::uint64_t count = binio::read_u64(in, path);
  const std::uint64_t dims = binio::read_u64(in, path);
  if (dims == 0 || dims > 4096 || count > (1u << 24)) throw DataError(path + ": implausible cache shape");
  FeatureCache c;
  c.tag = binio::read_text(in, path);
  c.rows.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dims));
  for (Eigen::Index i = 0; i < c.rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.rows.cols(); ++j) c.rows(i, j) = binio::read_f64(in, path);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes after feature data");
  return c;
}

}  // namespace qkl
