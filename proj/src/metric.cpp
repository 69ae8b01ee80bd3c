#include "qkl/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "qkl/errors.hpp"
#include "qkl/random.hpp"

namespace qkl {

namespace {

// d cos(u, p) / du and / dp.
struct CosineGrad {
  double value;
  Eigen::VectorXd du;
  Eigen::VectorXd dp;
};

CosineGrad cosine_with_grad(const Eigen::VectorXd& u, const Eigen::VectorXd& p) {
  const double nu = u.norm(), np = p.norm();
  if (nu == 0.0 || np == 0.0) throw NumericError("cosine similarity of a zero-norm projected vector");
  const double c = u.dot(p) / (nu * np);
  return {c, p / (nu * np) - c * u / (nu * nu), u / (nu * np) - c * p / (np * np)};
}

// Row-wise log-softmax cross-entropy against `target`; returns loss and
// d loss / d logits (unscaled).
double softmax_xent(const Eigen::RowVectorXd& logits, Eigen::Index target, Eigen::RowVectorXd& grad) {
  const double mx = logits.maxCoeff();
  const Eigen::RowVectorXd e = (logits.array() - mx).exp();
  const double sum = e.sum();
  grad = e / sum;
  grad(target) -= 1.0;
  return std::log(sum) + mx - logits(target);
}

LossResult empty_result(const EmbeddingBatch& batch, const ProjectionHead& head) {
  LossResult r;
  r.head.weight = Eigen::MatrixXd::Zero(head.weight.rows(), head.weight.cols());
  for (const auto& s : batch.support) r.support_grad.push_back(Eigen::MatrixXd::Zero(s.rows(), s.cols()));
  r.query_grad = Eigen::MatrixXd::Zero(batch.queries.rows(), batch.queries.cols());
  return r;
}

void check_head(const EmbeddingBatch& batch, const ProjectionHead& head) {
  batch.validate();
  if (head.in_dim() != batch.dim()) throw UsageError("projection head input dimension does not match embeddings");
  if (!(head.scale > 0.0)) throw UsageError("projection head scale must be > 0");
}

}  // namespace

Eigen::MatrixXd project(const ProjectionHead& head, const Eigen::MatrixXd& X) {
  if (X.cols() != head.in_dim()) throw UsageError("projection head input dimension does not match data");
  return X * head.weight.transpose();
}

void EmbeddingBatch::validate() const {
  if (num_classes() < 2) throw UsageError("embedding batch needs at least two classes");
  if (queries.rows() != num_classes()) throw UsageError("embedding batch needs one query per class");
  const Eigen::Index m = support_size();
  if (m < 1) throw UsageError("embedding batch needs at least one support vector per class");
  for (const auto& s : support) {
    if (s.rows() != m || s.cols() != queries.cols()) throw UsageError("embedding batch shapes are inconsistent");
    if (!s.allFinite()) throw UsageError("embedding batch contains non-finite values");
  }
  if (!queries.allFinite()) throw UsageError("embedding batch contains non-finite values");
}

LossResult angular_proto_loss(const EmbeddingBatch& batch, const ProjectionHead& head) {
  check_head(batch, head);
  const int nc = batch.num_classes();
  const double m = batch.support_size();
  const Eigen::MatrixXd& W = head.weight;

  std::vector<Eigen::VectorXd> support_mean(static_cast<std::size_t>(nc)), protos(static_cast<std::size_t>(nc)),
      proj_q(static_cast<std::size_t>(nc));
  for (int k = 0; k < nc; ++k) {
    support_mean[k] = batch.support[k].colwise().mean().transpose();
    protos[k] = W * support_mean[k];
    proj_q[k] = W * batch.queries.row(k).transpose();
  }

  LossResult r = empty_result(batch, head);
  std::vector<Eigen::VectorXd> g_query(nc, Eigen::VectorXd::Zero(W.rows()));
  std::vector<Eigen::VectorXd> g_proto(nc, Eigen::VectorXd::Zero(W.rows()));
  Eigen::RowVectorXd logits(nc), dlogits;
  std::vector<CosineGrad> cg;
  for (int c = 0; c < nc; ++c) {
    cg.clear();
    for (int k = 0; k < nc; ++k) {
      cg.push_back(cosine_with_grad(proj_q[c], protos[k]));
      logits(k) = head.scale * cg.back().value + head.offset;
    }
    r.loss += softmax_xent(logits, c, dlogits) / nc;
    dlogits /= nc;
    for (int k = 0; k < nc; ++k) {
      const double g = dlogits(k);
      r.head.scale += g * cg[k].value;
      r.head.offset += g;
      g_query[c] += g * head.scale * cg[k].du;
      g_proto[k] += g * head.scale * cg[k].dp;
    }
  }
  for (int k = 0; k < nc; ++k) {
    r.head.weight += g_query[k] * batch.queries.row(k) + g_proto[k] * support_mean[k].transpose();
    r.query_grad.row(k) = (W.transpose() * g_query[k]).transpose();
    const Eigen::RowVectorXd gs = (W.transpose() * g_proto[k]).transpose() / m;
    r.support_grad[k].rowwise() = gs;
  }
  return r;
}

LossResult ge2e_loss(const EmbeddingBatch& batch, const ProjectionHead& head) {
  check_head(batch, head);
  const int nc = batch.num_classes();
  const int m = batch.support_size();
  if (m < 2) throw UsageError("GE2E loss needs at least two support vectors per class");
  const Eigen::MatrixXd& W = head.weight;

  std::vector<Eigen::MatrixXd> proj(nc);  // rows: projected support vectors
  std::vector<Eigen::VectorXd> centroid(nc);
  for (int k = 0; k < nc; ++k) {
    proj[k] = batch.support[k] * W.transpose();
    centroid[k] = proj[k].colwise().mean().transpose();
  }

  LossResult r = empty_result(batch, head);
  std::vector<Eigen::MatrixXd> g_proj(nc);
  for (int k = 0; k < nc; ++k) g_proj[k] = Eigen::MatrixXd::Zero(m, W.rows());

  const double norm = static_cast<double>(nc) * m;
  Eigen::RowVectorXd logits(nc), dlogits;
  std::vector<CosineGrad> cg;
  for (int j = 0; j < nc; ++j) {
    for (int i = 0; i < m; ++i) {
      const Eigen::VectorXd u = proj[j].row(i).transpose();
      cg.clear();
      for (int k = 0; k < nc; ++k) {
        const Eigen::VectorXd target = k == j ? Eigen::VectorXd((m * centroid[j] - u) / (m - 1)) : centroid[k];
        cg.push_back(cosine_with_grad(u, target));
        logits(k) = head.scale * cg.back().value + head.offset;
      }
      r.loss += softmax_xent(logits, j, dlogits) / norm;
      dlogits /= norm;
      for (int k = 0; k < nc; ++k) {
        const double g = dlogits(k);
        r.head.scale += g * cg[k].value;
        r.head.offset += g;
        g_proj[j].row(i) += (g * head.scale * cg[k].du).transpose();
        const Eigen::RowVectorXd gt = (g * head.scale * cg[k].dp).transpose();
        if (k == j) {
          for (int ip = 0; ip < m; ++ip) {
            if (ip != i) g_proj[j].row(ip) += gt / (m - 1);
          }
        } else {
          g_proj[k].rowwise() += gt / m;
        }
      }
    }
  }
  for (int k = 0; k < nc; ++k) {
    r.head.weight += g_proj[k].transpose() * batch.support[k];
    r.support_grad[k] = g_proj[k] * W;
  }
  return r;
}

LossResult joint_loss(const EmbeddingBatch& batch, const ProjectionHead& head, double joint_weight) {
  LossResult r = angular_proto_loss(batch, head);
  if (joint_weight == 0.0) return r;
  const LossResult g = ge2e_loss(batch, head);
  r.loss += joint_weight * g.loss;
  r.head.weight += joint_weight * g.head.weight;
  r.head.scale += joint_weight * g.head.scale;
  r.head.offset += joint_weight * g.head.offset;
  for (std::size_t k = 0; k < r.support_grad.size(); ++k) r.support_grad[k] += joint_weight * g.support_grad[k];
  return r;
}

void HeadTrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("metric lr must be > 0");
  if (epochs < 0) throw ConfigError("metric epochs must be >= 0");
  if (support < 1) throw ConfigError("metric support size must be >= 1");
  if (classes_per_batch == 1 || classes_per_batch < 0) throw ConfigError("metric classes_per_batch must be 0 or >= 2");
  if (joint_weight < 0.0) throw ConfigError("metric joint_weight must be >= 0");
  if (joint_weight > 0.0 && support < 2) throw ConfigError("GE2E term needs support >= 2");
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,loss,grad_norm,cluster_distance\n";
  for (const auto& e : epochs) os << e.epoch << ',' << e.loss << ',' << e.grad_norm << ',' << e.cluster_distance << '\n';
  return os.str();
}

HeadTrainResult train_head(const LabeledSet& train, const HeadTrainConfig& cfg, const std::optional<LabeledSet>& probe,
                           std::optional<ProjectionHead> init) {
  cfg.validate();
  if (static_cast<Eigen::Index>(train.labels.size()) != train.X.rows()) throw UsageError("label count mismatch");

  std::map<std::string, std::vector<Eigen::Index>> by_class;
  for (Eigen::Index i = 0; i < train.X.rows(); ++i) by_class[train.labels[static_cast<std::size_t>(i)]].push_back(i);
  if (by_class.size() < 2) throw UsageError("metric head training needs at least two classes");
  for (const auto& [label, rows] : by_class) {
    if (static_cast<int>(rows.size()) < cfg.support + 1) {
      throw UsageError("class '" + label + "' has " + std::to_string(rows.size()) + " samples; metric batches need " +
                       std::to_string(cfg.support + 1));
    }
  }
  std::vector<const std::vector<Eigen::Index>*> classes;
  for (const auto& kv : by_class) classes.push_back(&kv.second);
  const int nclass = static_cast<int>(classes.size());
  const int per_batch = cfg.classes_per_batch == 0 ? nclass : std::min(cfg.classes_per_batch, nclass);

  HeadTrainResult result;
  result.head = init ? *init : ProjectionHead::identity(train.X.cols());
  if (result.head.in_dim() != train.X.cols()) throw UsageError("initial head does not match embedding dimension");

  const Eigen::Index per_step = static_cast<Eigen::Index>(per_batch) * (cfg.support + 1);
  const Eigen::Index steps = std::max<Eigen::Index>(1, train.X.rows() / per_step);
  Rng rng(cfg.seed);
  const LabeledSet& probe_set = probe ? *probe : train;

  std::vector<int> class_order(static_cast<std::size_t>(nclass));
  std::iota(class_order.begin(), class_order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0, grad_sum = 0.0;
    for (Eigen::Index step = 0; step < steps; ++step) {
      std::shuffle(class_order.begin(), class_order.end(), rng);
      EmbeddingBatch batch;
      batch.queries.resize(per_batch, train.X.cols());
      for (int c = 0; c < per_batch; ++c) {
        std::vector<Eigen::Index> rows = *classes[static_cast<std::size_t>(class_order[static_cast<std::size_t>(c)])];
        std::shuffle(rows.begin(), rows.end(), rng);
        Eigen::MatrixXd s(cfg.support, train.X.cols());
        for (int i = 0; i < cfg.support; ++i) s.row(i) = train.X.row(rows[static_cast<std::size_t>(i)]);
        batch.support.push_back(std::move(s));
        batch.queries.row(c) = train.X.row(rows[static_cast<std::size_t>(cfg.support)]);
      }
      const LossResult r = joint_loss(batch, result.head, cfg.joint_weight);
      loss_sum += r.loss;
      grad_sum += r.head.norm();
      result.head.weight -= cfg.lr * r.head.weight;
      result.head.scale = std::max(1e-6, result.head.scale - cfg.lr * r.head.scale);
      result.head.offset -= cfg.lr * r.head.offset;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(steps);
    rec.grad_norm = grad_sum / static_cast<double>(steps);
    // Monitoring only: a degenerate probe set must not abort training.
    try {
      rec.cluster_distance = cluster_distance({project(result.head, probe_set.X), probe_set.labels});
    } catch (const NumericError&) {
      rec.cluster_distance = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(rec.loss) || !std::isfinite(rec.grad_norm)) {
      throw NumericError("metric head training diverged at epoch " + std::to_string(epoch));
    }
    result.log.epochs.push_back(rec);
  }
  return result;
}

double cluster_distance(const LabeledSet& set) {
  if (static_cast<Eigen::Index>(set.labels.size()) != set.X.rows()) throw UsageError("label count mismatch");
  std::map<std::string, std::vector<Eigen::Index>> by_class;
  for (Eigen::Index i = 0; i < set.X.rows(); ++i) by_class[set.labels[static_cast<std::size_t>(i)]].push_back(i);
  if (by_class.size() < 2) throw UsageError("cluster distance needs at least two classes");

  std::vector<Eigen::VectorXd> centroids;
  double intra = 0.0;
  for (const auto& [label, rows] : by_class) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(set.X.cols());
    for (Eigen::Index r : rows) c += set.X.row(r).transpose();
    c /= static_cast<double>(rows.size());
    double spread = 0.0;
    for (Eigen::Index r : rows) spread += (set.X.row(r).transpose() - c).norm();
    intra += spread / static_cast<double>(rows.size());
    centroids.push_back(std::move(c));
  }
  intra /= static_cast<double>(centroids.size());

  double inter = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < centroids.size(); ++a) {
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      inter += (centroids[a] - centroids[b]).norm();
      ++pairs;
    }
  }
  inter /= pairs;
  if (inter == 0.0) throw NumericError("class centroids coincide; cluster distance undefined");
  return intra / inter;
}

}  // namespace qkl
