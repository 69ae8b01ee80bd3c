#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qkl {

// Linear projection plus the learnable affine map on cosine similarity.
struct ProjectionHead {
  Eigen::MatrixXd weight;  // d_out x d_in
  double scale = 10.0;
  double offset = -5.0;

  static ProjectionHead identity(Eigen::Index dim) { return {Eigen::MatrixXd::Identity(dim, dim), 10.0, -5.0}; }
  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

// Rows of X projected through the head's weight.
Eigen::MatrixXd project(const ProjectionHead& head, const Eigen::MatrixXd& X);

// Per class: M support vectors (rows of support[c]) and one query (row c of queries).
struct EmbeddingBatch {
  std::vector<Eigen::MatrixXd> support;
  Eigen::MatrixXd queries;

  int num_classes() const { return static_cast<int>(support.size()); }
  int support_size() const { return support.empty() ? 0 : static_cast<int>(support.front().rows()); }
  Eigen::Index dim() const { return queries.cols(); }
  void validate() const;
};

struct HeadGradient {
  Eigen::MatrixXd weight;
  double scale = 0.0;
  double offset = 0.0;

  double norm() const { return std::sqrt(weight.squaredNorm() + scale * scale + offset * offset); }
};

struct LossResult {
  double loss = 0.0;
  HeadGradient head;
  std::vector<Eigen::MatrixXd> support_grad;
  Eigen::MatrixXd query_grad;
};

// Query-to-prototype softmax over w*cos + b, mean cross-entropy.
LossResult angular_proto_loss(const EmbeddingBatch& batch, const ProjectionHead& head);

// Softmax GE2E over the support vectors: each vector against every class
// centroid, its own centroid computed without it. Needs M >= 2.
LossResult ge2e_loss(const EmbeddingBatch& batch, const ProjectionHead& head);

struct HeadTrainConfig {
  double lr = 0.05;
  int epochs = 30;
  int classes_per_batch = 0;  // 0: every class in each batch
  int support = 4;            // M; each class contributes M + 1 samples
  double joint_weight = 1.0;  // total = angular_proto + joint_weight * ge2e
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const HeadTrainConfig&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double cluster_distance = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  std::string to_csv() const;  // header: epoch,loss,grad_norm,cluster_distance
};

struct LabeledSet {
  Eigen::MatrixXd X;  // one row per sample
  std::vector<std::string> labels;
};

struct HeadTrainResult {
  ProjectionHead head;
  TrainLog log;
};

// Cluster distance per epoch is measured on `probe` (the training set when absent);
// NaN when the probe's class centroids coincide.
HeadTrainResult train_head(const LabeledSet& train, const HeadTrainConfig& cfg,
                           const std::optional<LabeledSet>& probe = std::nullopt,
                           std::optional<ProjectionHead> init = std::nullopt);

// Joint objective on one batch; what train_head descends.
LossResult joint_loss(const EmbeddingBatch& batch, const ProjectionHead& head, double joint_weight);

// Mean within-class distance to the centroid, divided by the mean distance
// between class centroids. Scale invariant; lower is tighter.
double cluster_distance(const LabeledSet& set);

}  // namespace qkl
