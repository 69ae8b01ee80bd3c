#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "qkl/kernels.hpp"

namespace qkl {

struct SvmConfig {
  double C = 1.0;
  double tol = 1e-3;
  // Iteration cap is max_passes * N pair updates per binary problem.
  int max_passes = 10000;
  double eig_clamp = -1e-7;
  std::uint64_t seed = 0;
  bool record_objective = false;

  void validate() const;
  bool operator==(const SvmConfig&) const = default;
};

// One binary soft-margin problem in dual form: labels are +1/-1.
struct BinarySvm {
  Eigen::VectorXd alpha;
  Eigen::VectorXd y;
  double bias = 0.0;
  std::vector<Eigen::Index> support;
  int iterations = 0;
  std::vector<double> objective_trace;  // dual objective after each update, if recorded

  double dual_objective(const Eigen::MatrixXd& K) const;
};

struct SvmModel {
  std::vector<std::string> classes;  // sorted; index = class id
  std::vector<BinarySvm> machines;   // one-vs-rest, aligned with classes
  std::vector<std::string> row_ids;  // training rows, aligned with cross-Gram columns
  double C = 1.0;
};

// SMO over a precomputed kernel. Exposed for testing and oracle comparison.
BinarySvm train_binary(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, const SvmConfig& cfg);

SvmModel train(const GramMatrix& gram, const std::vector<std::string>& labels, const SvmConfig& cfg = {});

// Rows: test samples; columns: classes.
Eigen::MatrixXd decision_values(const SvmModel& model, const Eigen::MatrixXd& cross);

// Argmax of decision values; ties go to the lowest class index.
std::vector<std::string> predict(const SvmModel& model, const Eigen::MatrixXd& cross);

// Column-checked variants: `column_ids` must equal the model's training row_ids.
Eigen::MatrixXd decision_values(const SvmModel& model, const Eigen::MatrixXd& cross,
                                const std::vector<std::string>& column_ids);
std::vector<std::string> predict(const SvmModel& model, const Eigen::MatrixXd& cross,
                                 const std::vector<std::string>& column_ids);

// Versioned text format; floats are written as hexfloats so reload is bit-exact.
void save_model(const SvmModel& model, const std::string& path);
SvmModel load_model(const std::string& path);

}  // namespace qkl
