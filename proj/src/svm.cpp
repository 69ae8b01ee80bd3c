#include "qkl/svm.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace qkl {

namespace {

constexpr double kTau = 1e-12;

bool in_up(double a, double y, double C) { return (y > 0 && a < C) || (y < 0 && a > 0); }
bool in_low(double a, double y, double C) { return (y > 0 && a > 0) || (y < 0 && a < C); }

// Alphas within rounding distance of a bound are put on it; otherwise a
// vector can sit a few ulps inside the box where no update registers.
double snap(double a, double C) {
  const double eps = 1e-12 * C;
  if (a < eps) return 0.0;
  if (a > C - eps) return C;
  return a;
}

// Bias from the KKT conditions: average over free vectors, otherwise the
// midpoint of the feasible interval.
double solve_bias(const Eigen::VectorXd& alpha, const Eigen::VectorXd& y, const Eigen::VectorXd& G, double C) {
  double sum = 0.0;
  int free = 0;
  double lb = -std::numeric_limits<double>::infinity();
  double ub = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < alpha.size(); ++t) {
    const double v = -y(t) * G(t);
    const bool up = in_up(alpha(t), y(t), C), low = in_low(alpha(t), y(t), C);
    if (up && low) {
      sum += v;
      ++free;
    } else if (up) {
      lb = std::max(lb, v);
    } else if (low) {
      ub = std::min(ub, v);
    }
  }
  if (free > 0) return sum / free;
  if (std::isinf(lb)) return ub;
  if (std::isinf(ub)) return lb;
  return 0.5 * (lb + ub);
}

std::string hex(double v) {
  std::ostringstream os;
  os << std::hexfloat << v;
  return os.str();
}

double parse_double(const std::string& tok, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw DataError(path + ": bad number '" + tok + "'");
  return v;
}

}  // namespace

void SvmConfig::validate() const {
  if (!(C > 0.0) || !std::isfinite(C)) throw ConfigError("svm C must be > 0");
  if (!(tol > 0.0)) throw ConfigError("svm tol must be > 0");
  if (max_passes < 1) throw ConfigError("svm max_passes must be >= 1");
}

double BinarySvm::dual_objective(const Eigen::MatrixXd& K) const {
  const Eigen::VectorXd ay = alpha.cwiseProduct(y);
  return alpha.sum() - 0.5 * ay.dot(K * ay);
}

BinarySvm train_binary(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, const SvmConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = K.rows();
  if (K.cols() != n || y.size() != n) throw UsageError("kernel and label sizes disagree");
  const double C = cfg.C;

  BinarySvm m;
  m.y = y;
  m.alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd G = Eigen::VectorXd::Constant(n, -1.0);  // gradient of 1/2 a'Qa - e'a
  Rng rng(cfg.seed);

  const long long max_iter = static_cast<long long>(cfg.max_passes) * std::max<Eigen::Index>(n, 1);
  auto objective = [&]() { return 0.5 * m.alpha.sum() - 0.5 * m.alpha.dot(G); };

  bool converged = false;
  for (long long iter = 0; iter < max_iter; ++iter) {
    // i: maximal violator in I_up.
    Eigen::Index i = -1;
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      const double v = -y(t) * G(t);
      if (in_up(m.alpha(t), y(t), C) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(m.alpha(t), y(t), C) && v < gmin) gmin = v;
    }
    if (i < 0 || gmax - gmin < cfg.tol) {
      converged = true;
      break;
    }

    // j: largest second-order gain among violators in I_low.
    Eigen::Index j = -1;
    double best = std::numeric_limits<double>::infinity();
    std::vector<Eigen::Index> violators;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!in_low(m.alpha(t), y(t), C)) continue;
      const double v = -y(t) * G(t);
      if (v >= gmax) continue;
      violators.push_back(t);
      const double b = gmax - v;
      double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
      if (a <= 0) a = kTau;
      const double gain = -(b * b) / a;
      if (gain < best) {
        best = gain;
        j = t;
      }
    }

    auto step = [&](Eigen::Index jj) {
      const double ai = m.alpha(i), aj = m.alpha(jj);
      double eta = K(i, i) + K(jj, jj) - 2.0 * K(i, jj);
      if (eta <= 0) eta = kTau;
      double lo, hi;
      if (y(i) != y(jj)) {
        lo = std::max(0.0, aj - ai);
        hi = std::min(C, C + aj - ai);
      } else {
        lo = std::max(0.0, ai + aj - C);
        hi = std::min(C, ai + aj);
      }
      const double ei_minus_ej = y(i) * G(i) - y(jj) * G(jj);
      const double aj_new = snap(std::clamp(aj + y(jj) * ei_minus_ej / eta, lo, hi), C);
      const double ai_new = snap(std::clamp(ai + y(i) * y(jj) * (aj - aj_new), 0.0, C), C);
      const double di = ai_new - ai, dj = aj_new - aj;
      if (di == 0.0 && dj == 0.0) return false;
      m.alpha(i) = ai_new;
      m.alpha(jj) = aj_new;
      G.array() += y.array() * (y(i) * di * K.col(i).array() + y(jj) * dj * K.col(jj).array());
      return true;
    };

    bool moved = j >= 0 && step(j);
    if (!moved && !violators.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, violators.size() - 1);
      moved = step(violators[pick(rng)]);
    }
    ++m.iterations;
    if (cfg.record_objective) m.objective_trace.push_back(objective());
    if (!moved) throw NumericError("SMO stalled: no pair update makes progress");
  }
  if (!converged) {
    throw NumericError("SMO did not converge within " + std::to_string(max_iter) + " iterations");
  }

  m.bias = solve_bias(m.alpha, y, G, C);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (m.alpha(t) > 0) m.support.push_back(t);
  }
  return m;
}

SvmModel train(const GramMatrix& gram, const std::vector<std::string>& labels, const SvmConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = gram.values.rows();
  if (gram.values.cols() != n) throw UsageError("Gram matrix is not square");
  if (static_cast<Eigen::Index>(labels.size()) != n) throw UsageError("label count does not match Gram size");
  if (n < 2) throw UsageError("SVM training needs at least two samples");
  if (!gram.values.allFinite()) throw DataError("Gram matrix contains non-finite entries");

  SvmModel model;
  model.classes = labels;
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) throw UsageError("SVM training needs at least two distinct labels");

  const Eigen::MatrixXd K = 0.5 * (gram.values + gram.values.transpose());
  const double lambda_min = min_eigenvalue(K);
  if (lambda_min < cfg.eig_clamp) {
    throw NumericError("Gram matrix minimum eigenvalue " + std::to_string(lambda_min) +
                       " is below the clamp; recompute the kernel");
  }

  model.row_ids = gram.row_ids;
  if (model.row_ids.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) model.row_ids.push_back(std::to_string(i));
  }
  model.C = cfg.C;

  const auto nc = static_cast<int>(model.classes.size());
  model.machines.resize(static_cast<std::size_t>(nc));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nc));
#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < nc; ++c) {
    try {
      Eigen::VectorXd y(n);
      for (Eigen::Index t = 0; t < n; ++t) {
        y(t) = labels[static_cast<std::size_t>(t)] == model.classes[static_cast<std::size_t>(c)] ? 1.0 : -1.0;
      }
      SvmConfig sub = cfg;
      sub.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(c)});
      model.machines[static_cast<std::size_t>(c)] = train_binary(K, y, sub);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return model;
}

Eigen::MatrixXd decision_values(const SvmModel& model, const Eigen::MatrixXd& cross) {
  const auto n = static_cast<Eigen::Index>(model.row_ids.size());
  if (cross.rows() > 0 && cross.cols() != n) {
    throw UsageError("cross-Gram has " + std::to_string(cross.cols()) + " columns, model was trained on " +
                     std::to_string(n) + " rows");
  }
  const auto nc = static_cast<Eigen::Index>(model.machines.size());
  Eigen::MatrixXd coef(n, nc);
  Eigen::RowVectorXd bias(nc);
  for (Eigen::Index c = 0; c < nc; ++c) {
    const BinarySvm& b = model.machines[static_cast<std::size_t>(c)];
    coef.col(c) = b.alpha.cwiseProduct(b.y);
    bias(c) = b.bias;
  }
  Eigen::MatrixXd scores = cross * coef;
  scores.rowwise() += bias;
  return scores;
}

std::vector<std::string> predict(const SvmModel& model, const Eigen::MatrixXd& cross) {
  const Eigen::MatrixXd scores = decision_values(model, cross);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index t = 0; t < scores.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(t, c) > scores(t, best)) best = c;
    }
    out.push_back(model.classes[static_cast<std::size_t>(best)]);
  }
  return out;
}

Eigen::MatrixXd decision_values(const SvmModel& model, const Eigen::MatrixXd& cross,
                                const std::vector<std::string>& column_ids) {
  if (column_ids != model.row_ids) throw UsageError("cross-Gram columns are not aligned with the training rows");
  return decision_values(model, cross);
}

std::vector<std::string> predict(const SvmModel& model, const Eigen::MatrixXd& cross,
                                 const std::vector<std::string>& column_ids) {
  if (column_ids != model.row_ids) throw UsageError("cross-Gram columns are not aligned with the training rows");
  return predict(model, cross);
}

void save_model(const SvmModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "qkl-svm 1\n";
  out << "C " << hex(model.C) << "\n";
  out << "classes " << model.classes.size() << "\n";
  for (const auto& c : model.classes) out << c << "\n";
  out << "rows " << model.row_ids.size() << "\n";
  for (const auto& r : model.row_ids) out << r << "\n";
  for (std::size_t c = 0; c < model.machines.size(); ++c) {
    const BinarySvm& b = model.machines[c];
    out << "machine " << c << " bias " << hex(b.bias) << " iterations " << b.iterations << "\n";
    out << "alpha";
    for (Eigen::Index t = 0; t < b.alpha.size(); ++t) out << ' ' << hex(b.alpha(t));
    out << "\ny";
    for (Eigen::Index t = 0; t < b.y.size(); ++t) out << ' ' << (b.y(t) > 0 ? "+1" : "-1");
    out << "\nsupport " << b.support.size();
    for (Eigen::Index s : b.support) out << ' ' << s;
    out << "\n";
  }
  if (!out) throw DataError("failed writing " + path);
}

SvmModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  auto line = [&]() {
    std::string s;
    if (!std::getline(in, s)) throw DataError(path + ": unexpected end of model file");
    return s;
  };
  auto expect_key = [&](std::istringstream& is, const std::string& key) {
    std::string k;
    is >> k;
    if (k != key) throw DataError(path + ": expected '" + key + "', found '" + k + "'");
  };

  if (line() != "qkl-svm 1") throw DataError(path + ": not a version-1 SVM model file");
  SvmModel model;
  {
    std::istringstream is(line());
    expect_key(is, "C");
    std::string tok;
    is >> tok;
    model.C = parse_double(tok, path);
  }
  std::size_t count = 0;
  {
    std::istringstream is(line());
    expect_key(is, "classes");
    is >> count;
  }
  for (std::size_t c = 0; c < count; ++c) model.classes.push_back(line());
  {
    std::istringstream is(line());
    expect_key(is, "rows");
    is >> count;
  }
  for (std::size_t r = 0; r < count; ++r) model.row_ids.push_back(line());
  const auto n = static_cast<Eigen::Index>(model.row_ids.size());

  for (std::size_t c = 0; c < model.classes.size(); ++c) {
    BinarySvm b;
    {
      std::istringstream is(line());
      std::string tok;
      std::size_t idx = 0;
      expect_key(is, "machine");
      is >> idx;
      if (idx != c) throw DataError(path + ": machines out of order");
      expect_key(is, "bias");
      is >> tok;
      b.bias = parse_double(tok, path);
      expect_key(is, "iterations");
      is >> b.iterations;
    }
    {
      std::istringstream is(line());
      expect_key(is, "alpha");
      b.alpha.resize(n);
      std::string tok;
      for (Eigen::Index t = 0; t < n; ++t) {
        if (!(is >> tok)) throw DataError(path + ": alpha row too short");
        b.alpha(t) = parse_double(tok, path);
      }
    }
    {
      std::istringstream is(line());
      expect_key(is, "y");
      b.y.resize(n);
      std::string tok;
      for (Eigen::Index t = 0; t < n; ++t) {
        if (!(is >> tok)) throw DataError(path + ": label row too short");
        b.y(t) = tok == "+1" ? 1.0 : -1.0;
      }
    }
    {
      std::istringstream is(line());
      expect_key(is, "support");
      std::size_t ns = 0;
      is >> ns;
      for (std::size_t s = 0; s < ns; ++s) {
        Eigen::Index idx = 0;
        if (!(is >> idx) || idx < 0 || idx >= n) throw DataError(path + ": bad support index");
        b.support.push_back(idx);
      }
    }
    model.machines.push_back(std::move(b));
  }
  return model;
}

}  // namespace qkl
