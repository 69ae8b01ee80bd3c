#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "qkl/errors.hpp"
#include "qkl/kernels.hpp"
#include "qkl/svm.hpp"

using namespace qkl;

namespace {

GramMatrix gram_of(const KernelKind& k, const Eigen::MatrixXd& X) {
  GramMatrix g;
  g.kind = k;
  g.values.resize(X.rows(), X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.rows(); ++j) g.values(i, j) = classical_kernel(k, X.row(i).transpose(), X.row(j).transpose());
  return g;
}

struct Problem {
  Eigen::MatrixXd K;
  Eigen::VectorXd y;
  double C;
};

Problem random_problem(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(2, 8);
  std::normal_distribution<double> g(0, 1);
  const int n = size(rng);
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y(i) = i % 2 ? 1.0 : -1.0;
    X(i, 0) = g(rng) + 0.7 * y(i);
    X(i, 1) = g(rng);
  }
  const double Cs[] = {0.3, 1.0, 10.0};
  const KernelKind kinds[] = {KernelKind::rbf(0.8), KernelKind::linear()};
  return {gram_of(kinds[rng() % 2], X).values, y, Cs[rng() % 3]};
}

Eigen::VectorXd decision(const Eigen::MatrixXd& K, const Eigen::VectorXd& alpha, const Eigen::VectorXd& y, double b) {
  return K * alpha.cwiseProduct(y) + Eigen::VectorXd::Constant(K.rows(), b);
}

}  // namespace

TEST_CASE("two-point analytic solution") {
  Eigen::MatrixXd X(2, 1);
  X << -1, 1;
  const GramMatrix g = gram_of(KernelKind::linear(), X);
  SvmConfig cfg;
  cfg.C = 10;
  const SvmModel m = train(g, {"neg", "pos"}, cfg);
  REQUIRE(m.classes == std::vector<std::string>{"neg", "pos"});
  const BinarySvm& pos = m.machines[1];
  CHECK(pos.alpha(0) == doctest::Approx(0.5));
  CHECK(pos.alpha(1) == doctest::Approx(0.5));
  CHECK(pos.support.size() == 2);
  CHECK(std::abs(pos.bias) < 1e-9);
  CHECK(predict(m, g.values) == std::vector<std::string>{"neg", "pos"});

  // Decision function f(x) = x: sign flips between symmetric test points.
  Eigen::MatrixXd cross(2, 2);
  cross << -0.5 * -1, -0.5 * 1, 0.5 * -1, 0.5 * 1;
  const Eigen::MatrixXd dv = decision_values(m, cross);
  CHECK(dv(0, 1) == doctest::Approx(-0.5));
  CHECK(dv(1, 1) == doctest::Approx(0.5));
  CHECK(predict(m, cross) == std::vector<std::string>{"neg", "pos"});
  CHECK(predict(m, Eigen::MatrixXd(0, 2)).empty());
}

TEST_CASE("XOR separability flip") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 1, -1, -1, 1, -1, -1, 1;
  const std::vector<std::string> labels = {"a", "a", "b", "b"};
  auto acc = [&](const KernelKind& k) {
    const GramMatrix g = gram_of(k, X);
    const auto p = predict(train(g, labels), g.values);
    int ok = 0;
    for (int i = 0; i < 4; ++i) ok += p[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(i)];
    return ok / 4.0;
  };
  CHECK(acc(KernelKind::linear()) <= 0.75);
  CHECK(acc(KernelKind::rbf(1.0)) == 1.0);
}

TEST_CASE("SMO matches the brute-force dual") {
  std::mt19937_64 rng(100);
  for (int t = 0; t < 50; ++t) {
    const Problem p = random_problem(rng);
    SvmConfig cfg;
    cfg.C = p.C;
    cfg.record_objective = true;
    const BinarySvm s = train_binary(p.K, p.y, cfg);
    const auto o = oracle::solve_dual(p.K, p.y, p.C);
    const double obj = s.dual_objective(p.K);
    CHECK(std::abs(obj - o.objective) <= 1e-4 * std::max(1.0, std::abs(o.objective)));
    const Eigen::VectorXd fs = decision(p.K, s.alpha, p.y, s.bias);
    const Eigen::VectorXd fo = decision(p.K, o.alpha, p.y, o.bias);
    for (Eigen::Index i = 0; i < p.K.rows(); ++i) CHECK((fs(i) >= 0) == (fo(i) >= 0));

    // Box and equality constraints; monotone objective.
    CHECK(s.alpha.minCoeff() >= 0.0);
    CHECK(s.alpha.maxCoeff() <= p.C);
    CHECK(std::abs(s.alpha.dot(p.y)) < 1e-6);
    for (std::size_t k = 1; k < s.objective_trace.size(); ++k) {
      CHECK(s.objective_trace[k] >= s.objective_trace[k - 1] - 1e-12);
    }
  }
}

TEST_CASE("KKT conditions within tolerance") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    const Problem p = random_problem(rng);
    SvmConfig cfg;
    cfg.C = p.C;
    const BinarySvm s = train_binary(p.K, p.y, cfg);
    const Eigen::VectorXd grad = (p.y * p.y.transpose()).cwiseProduct(p.K) * s.alpha - Eigen::VectorXd::Ones(p.y.size());
    double up = -1e300, low = 1e300;
    for (Eigen::Index i = 0; i < p.y.size(); ++i) {
      const double v = -p.y(i) * grad(i);
      const bool in_up = (p.y(i) > 0 && s.alpha(i) < p.C) || (p.y(i) < 0 && s.alpha(i) > 0);
      const bool in_low = (p.y(i) > 0 && s.alpha(i) > 0) || (p.y(i) < 0 && s.alpha(i) < p.C);
      if (in_up) up = std::max(up, v);
      if (in_low) low = std::min(low, v);
    }
    CHECK(up - low < cfg.tol + 1e-12);
  }
}

TEST_CASE("permutation equivariance and scale invariance") {
  std::mt19937_64 rng(44);
  std::normal_distribution<double> g(0, 1);
  Eigen::MatrixXd X(12, 2);
  std::vector<std::string> labels;
  for (int i = 0; i < 12; ++i) {
    const int c = i % 3;
    X(i, 0) = 4.0 * c + 0.3 * g(rng);
    X(i, 1) = 0.3 * g(rng);
    labels.push_back("c" + std::to_string(c));
  }
  const GramMatrix gram = gram_of(KernelKind::rbf(0.5), X);
  // Positive definite Gram: the dual optimum is unique, so solve it tightly.
  SvmConfig tight;
  tight.tol = 1e-10;
  const SvmModel m = train(gram, labels, tight);
  const auto base = predict(m, gram.values);
  CHECK(base == labels);

  std::vector<Eigen::Index> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  GramMatrix pg = gram;
  std::vector<std::string> pl(12);
  for (int i = 0; i < 12; ++i) {
    pl[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    for (int j = 0; j < 12; ++j) pg.values(i, j) = gram.values(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  const SvmModel pm = train(pg, pl, tight);
  for (std::size_t c = 0; c < 3; ++c)
    for (int i = 0; i < 12; ++i)
      CHECK(std::abs(pm.machines[c].alpha(i) - m.machines[c].alpha(perm[static_cast<std::size_t>(i)])) < 1e-6);
  CHECK(predict(pm, pg.values) == pl);

  GramMatrix sg = gram;
  sg.values *= 4.0;
  SvmConfig cfg;
  cfg.C = 0.25;
  CHECK(predict(train(sg, labels, cfg), sg.values) == base);
}

TEST_CASE("ties go to the lowest class index") {
  SvmModel m;
  m.classes = {"a", "b"};
  m.row_ids = {"0", "1"};
  BinarySvm zero;
  zero.alpha = Eigen::Vector2d::Zero();
  zero.y = Eigen::Vector2d(1, -1);
  m.machines = {zero, zero};
  CHECK(predict(m, Eigen::Matrix2d::Identity()) == std::vector<std::string>{"a", "a"});
}

TEST_CASE("training errors") {
  GramMatrix g;
  g.kind = KernelKind::linear();
  g.values = Eigen::MatrixXd::Ones(1, 1);
  CHECK_THROWS_AS(train(g, {"a"}), UsageError);
  g.values = Eigen::Matrix2d::Identity();
  CHECK_THROWS_AS(train(g, {"a", "a"}), UsageError);
  CHECK_THROWS_AS(train(g, {"a"}), UsageError);
  g.values(0, 1) = g.values(1, 0) = std::nan("");
  CHECK_THROWS_AS(train(g, {"a", "b"}), DataError);
  g.values << 1, 2, 2, 1;
  CHECK_THROWS_AS(train(g, {"a", "b"}), NumericError);
  SvmConfig bad;
  bad.C = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("column alignment") {
  Eigen::MatrixXd X(4, 1);
  X << -2, -1, 1, 2;
  GramMatrix g = gram_of(KernelKind::linear(), X);
  g.row_ids = {"w", "x", "y", "z"};
  const SvmModel m = train(g, {"n", "n", "p", "p"});
  CHECK(predict(m, g.values, {"w", "x", "y", "z"}) == std::vector<std::string>{"n", "n", "p", "p"});
  CHECK_THROWS_AS(predict(m, g.values, {"x", "w", "y", "z"}), UsageError);
  CHECK_THROWS_AS(predict(m, Eigen::MatrixXd::Zero(2, 3)), UsageError);
}

TEST_CASE("model persistence is bit-exact") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gd(0, 1);
  Eigen::MatrixXd X(9, 2);
  std::vector<std::string> labels;
  for (int i = 0; i < 9; ++i) {
    X(i, 0) = gd(rng) + 2 * (i % 3);
    X(i, 1) = gd(rng);
    labels.push_back(std::string(1, static_cast<char>('a' + i % 3)));
  }
  GramMatrix g = gram_of(KernelKind::rbf(0.3), X);
  for (int i = 0; i < 9; ++i) g.row_ids.push_back("r" + std::to_string(i));
  const SvmModel m = train(g, labels);
  const std::string path = (std::filesystem::temp_directory_path() / "qkl_test_model.txt").string();
  save_model(m, path);
  const SvmModel r = load_model(path);
  CHECK(r.classes == m.classes);
  CHECK(r.row_ids == m.row_ids);
  CHECK(r.C == m.C);
  for (std::size_t c = 0; c < m.machines.size(); ++c) {
    CHECK(r.machines[c].alpha == m.machines[c].alpha);
    CHECK(r.machines[c].y == m.machines[c].y);
    CHECK(r.machines[c].bias == m.machines[c].bias);
    CHECK(r.machines[c].support == m.machines[c].support);
  }
  CHECK(decision_values(r, g.values) == decision_values(m, g.values));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_model(path), DataError);
}
