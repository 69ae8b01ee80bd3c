#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "qkl/errors.hpp"
#include "qkl/features.hpp"

using namespace qkl;
namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "qkl_test_features";
  fs::create_directories(dir);
  return dir / name;
}

Waveform sine(double hz, double rate, Eigen::Index n, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) w.samples(i) = amp * std::sin(2 * pi * hz * static_cast<double>(i) / rate);
  return w;
}

Eigen::MatrixXd random_rows(int n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0, 1);
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = g(rng) * (1.0 + j);
  return X;
}

}  // namespace

TEST_CASE("wav round trip and errors") {
  Waveform z;
  z.samples = Eigen::VectorXd::Zero(16000);
  const auto p = scratch("zero.wav").string();
  save_wav(z, p);
  const Waveform r = load_wav(p);
  CHECK(r.sample_rate == kCanonicalRate);
  CHECK(r.samples.size() == 16000);
  CHECK(r.samples.cwiseAbs().maxCoeff() == 0.0);

  const Waveform s = sine(440, kCanonicalRate, 4000);
  save_wav(s, p);
  CHECK((load_wav(p).samples - s.samples).cwiseAbs().maxCoeff() < 1.0 / 32767.0);

  // Truncate the data chunk.
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 100);
  CHECK_THROWS_AS(load_wav(p), DataError);
  {
    std::ofstream junk(p, std::ios::binary | std::ios::trunc);
    junk << "definitely not audio";
  }
  CHECK_THROWS_AS(load_wav(p), DataError);
  CHECK_THROWS_AS(load_wav(scratch("missing.wav").string()), DataError);
}

TEST_CASE("8 kHz input is resampled") {
  const Eigen::Index n = 4000;
  const Waveform s = sine(300, 8000, n);
  const auto p = scratch("eight.wav").string();
  save_wav(s, p);
  const Waveform r = load_wav(p);
  CHECK(r.sample_rate == kCanonicalRate);
  CHECK(std::abs(r.samples.size() - (2 * n - 1)) <= 1);
  const double e_in = s.samples.squaredNorm() / static_cast<double>(n);
  const double e_out = r.samples.squaredNorm() / static_cast<double>(r.samples.size());
  CHECK(std::abs(e_out - e_in) / e_in < 0.05);
}

TEST_CASE("pad and trim to one second") {
  Waveform w;
  w.samples = Eigen::VectorXd::LinSpaced(8000, 1, 8000);
  const Waveform p = pad_trim_1s(w);
  REQUIRE(p.samples.size() == 16000);
  CHECK(p.samples(3999) == 0.0);
  CHECK(p.samples(4000) == 1.0);
  CHECK(p.samples(11999) == 8000.0);
  CHECK(p.samples(12000) == 0.0);

  w.samples = Eigen::VectorXd::LinSpaced(20000, 0, 19999);
  const Waveform t = pad_trim_1s(w);
  REQUIRE(t.samples.size() == 16000);
  CHECK(t.samples(0) == 2000.0);

  w.samples = Eigen::VectorXd::Ones(16001);
  CHECK(pad_trim_1s(w).samples.size() == 16000);
  w.samples = Eigen::VectorXd::Ones(3);
  const Waveform odd = pad_trim_1s(w);
  CHECK(odd.samples.sum() == 3.0);
  CHECK(odd.samples(7997) == 0.0);
  CHECK(odd.samples(7998) == 1.0);
  CHECK(odd.samples(8001) == 0.0);

  w.samples.resize(0);
  CHECK_THROWS_AS(pad_trim_1s(w), DataError);
}

TEST_CASE("white noise hits the requested SNR") {
  const Waveform s = sine(500, kCanonicalRate, 16000);
  for (double snr : {0.0, 10.0, 30.0}) {
    const Waveform n = add_white_noise(s, snr, 99);
    const double ps = s.samples.squaredNorm() / 16000.0;
    const double pn = (n.samples - s.samples).squaredNorm() / 16000.0;
    CHECK(std::abs(std::sqrt(pn) - std::sqrt(ps / std::pow(10.0, snr / 10.0))) / std::sqrt(pn) < 0.01);
  }
  CHECK(add_white_noise(s, 10, 5).samples == add_white_noise(s, 10, 5).samples);
  CHECK(add_white_noise(s, 10, 5).samples != add_white_noise(s, 10, 6).samples);
  CHECK(add_white_noise(s, std::numeric_limits<double>::infinity(), 5).samples == s.samples);
  Waveform silent;
  silent.samples = Eigen::VectorXd::Zero(100);
  CHECK_THROWS_AS(add_white_noise(silent, 10, 1), DataError);
}

TEST_CASE("mel scale and window") {
  CHECK(hz_to_mel(0) == 0.0);
  CHECK(hz_to_mel(700) == doctest::Approx(2595.0 * std::log10(2.0)));
  for (double f : {50.0, 1000.0, 7999.0}) CHECK(mel_to_hz(hz_to_mel(f)) == doctest::Approx(f).epsilon(1e-12));
  const Eigen::VectorXd h = hann_window(8);
  CHECK(h(0) == 0.0);
  CHECK(h(4) == doctest::Approx(1.0));
  CHECK(h(1) == doctest::Approx(h(7)));
}

TEST_CASE("power spectrum against a naive DFT") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0, 1);
  for (int n : {16, 64, 1024}) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = g(rng);
    const Eigen::VectorXd ps = power_spectrum(x);
    const Eigen::VectorXd ref = oracle::dft_power(x);
    REQUIRE(ps.size() == n / 2 + 1);
    CHECK(oracle::relative_error(ps, ref) < 1e-10);
    // Parseval over the one-sided spectrum.
    double total = ps(0) + ps(n / 2);
    for (int k = 1; k < n / 2; ++k) total += 2 * ps(k);
    CHECK(total / n == doctest::Approx(x.squaredNorm()).epsilon(1e-10));
  }
}

TEST_CASE("mel spectrogram") {
  const MelConfig cfg;
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  CHECK(fb.rows() == 60);
  CHECK(fb.cols() == 513);
  CHECK(fb.minCoeff() >= 0.0);
  CHECK(fb.maxCoeff() <= 1.0 + 1e-12);
  const Eigen::VectorXd centers = mel_center_frequencies(cfg);
  for (Eigen::Index i = 1; i < centers.size(); ++i) CHECK(centers(i) > centers(i - 1));

  Waveform zero;
  zero.samples = Eigen::VectorXd::Zero(16000);
  const auto mz = mel_spectrogram(zero, cfg);
  CHECK(mz.values.rows() == 1 + (16000 - 1024) / 512);
  CHECK(mz.values.cwiseAbs().maxCoeff() == doctest::Approx(std::abs(std::log(1e-10))));
  CHECK(mz.values.minCoeff() == doctest::Approx(std::log(1e-10)));

  const auto m = mel_spectrogram(sine(440, kCanonicalRate, 16000), cfg);
  Eigen::Index best = 0;
  frame_mean(m).maxCoeff(&best);
  Eigen::Index nearest = 0;
  (centers.array() - 440.0).abs().minCoeff(&nearest);
  CHECK(std::abs(best - nearest) <= 1);

  Waveform shortw;
  shortw.samples = Eigen::VectorXd::Ones(100);
  CHECK_THROWS_AS(mel_spectrogram(shortw, cfg), DataError);
  MelConfig bad = cfg;
  bad.fmax = 9000;
  CHECK_THROWS_AS(mel_filterbank(bad), ConfigError);
}

TEST_CASE("band pooling") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd X = random_rows(1, 60, rng);
  const Eigen::VectorXd v = X.row(0).transpose();
  CHECK(pool_bands(v, 60) == v);
  CHECK(pool_bands(v, 1)(0) == doctest::Approx(v.mean()).epsilon(1e-12));
  const Eigen::VectorXd p8 = pool_bands(v, 8);
  CHECK(p8.size() == 8);
  const Eigen::VectorXd p7 = pool_bands(Eigen::VectorXd::LinSpaced(7, 0, 6), 3);
  // Groups {0,1}, {2,3}, {4,5,6}.
  CHECK((p7 - Eigen::Vector3d(0.5, 2.5, 5.0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(pool_bands(v, 61), ConfigError);
  CHECK_THROWS_AS(pool_bands(v, 0), ConfigError);
  const Eigen::MatrixXd rows = random_rows(5, 60, rng);
  const Eigen::MatrixXd pr = pool_band_rows(rows, 8);
  for (int i = 0; i < 5; ++i) CHECK(pr.row(i).transpose() == pool_bands(rows.row(i).transpose(), 8));
}

TEST_CASE("PCA against a covariance eigendecomposition") {
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd X = random_rows(40, 6, rng);
  const PcaReducer p = PcaReducer::fit(X, 3);
  const Eigen::MatrixXd C = p.components();
  CHECK((C.transpose() * C - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / 39.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::MatrixXd top = eig.eigenvectors().rightCols(3);
  // Same subspace: projectors agree.
  CHECK((C * C.transpose() - top * top.transpose()).cwiseAbs().maxCoeff() < 1e-10);

  // Projection is idempotent.
  const Eigen::MatrixXd once = p.reconstruct(p.transform(X));
  const Eigen::MatrixXd twice = p.reconstruct(p.transform(once));
  CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((PcaReducer::fit(X, 6).reconstruct(PcaReducer::fit(X, 6).transform(X)) - X).cwiseAbs().maxCoeff() < 1e-10);

  CHECK_THROWS_AS(PcaReducer::fit(X, 7), ConfigError);
  CHECK_THROWS_AS(PcaReducer::fit(X.topRows(1), 2), DataError);
}

TEST_CASE("normalization uses training statistics only") {
  Eigen::MatrixXd train(3, 2);
  train << 0, 5, 1, 5, 2, 5;
  const MinMaxNormalizer n = MinMaxNormalizer::fit(train);
  Eigen::MatrixXd test(3, 2);
  test << -1, 7, 1, 5, 4, 0;
  const Eigen::MatrixXd t = n.transform(test);
  CHECK(t(0, 0) == -1.0);
  CHECK(t(1, 0) == 0.0);
  CHECK(t(2, 0) == 1.0);
  CHECK(t.col(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(n.transform(train).col(0) == Eigen::Vector3d(-1, 0, 1));

  std::mt19937_64 rng(4);
  const Eigen::MatrixXd rows = random_rows(30, 60, rng);
  for (ReducerKind kind : {ReducerKind::Pool, ReducerKind::Pca}) {
    const FeatureReducer r = FeatureReducer::fit(kind, 4, rows.topRows(20));
    Eigen::MatrixXd mutated = rows;
    mutated.bottomRows(10).setConstant(1e6);
    const FeatureReducer r2 = FeatureReducer::fit(kind, 4, mutated.topRows(20));
    CHECK(r.normalizer.lower() == r2.normalizer.lower());
    CHECK(r.normalizer.upper() == r2.normalizer.upper());
    const Eigen::MatrixXd a = r.apply(rows);
    CHECK(a.cols() == 4);
    CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
    CHECK(a.topRows(20).colwise().minCoeff().isApprox(Eigen::RowVectorXd::Constant(4, -1.0)));
  }
  CHECK(parse_reducer("pca") == ReducerKind::Pca);
  CHECK(to_string(ReducerKind::Pool) == "pool");
  CHECK_THROWS_AS(parse_reducer("svd"), ConfigError);
}

TEST_CASE("feature cache round trip") {
  std::mt19937_64 rng(6);
  FeatureCache c;
  c.rows = random_rows(7, 5, rng);
  c.tag = "frame_mean";
  const auto p = scratch("cache.qfeat").string();
  save_feature_cache(c, p);
  const FeatureCache r = load_feature_cache(p);
  CHECK(r.rows == c.rows);
  CHECK(r.tag == c.tag);
  fs::resize_file(p, fs::file_size(p) - 8);
  CHECK_THROWS_AS(load_feature_cache(p), DataError);
}
