#pragma once

#include <json.hpp>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qkl/encoding.hpp"
#include "qkl/features.hpp"
#include "qkl/kernels.hpp"
#include "qkl/metric.hpp"
#include "qkl/svm.hpp"

namespace qkl {

struct FeatureConfig {
  ReducerKind reducer = ReducerKind::Pool;
  int num_features = 8;  // must equal encoding.num_qubits
  double snr_db = std::numeric_limits<double>::infinity();  // augmentation; +inf disables
  MelConfig mel;

  bool operator==(const FeatureConfig&) const = default;
};

// What classical kernels compare: Z-measurement embeddings of the encoded
// state, or the normalized classical features directly.
enum class KernelInput { Embedding, Features };

struct KernelConfig {
  KernelKind kind;
  KernelInput input = KernelInput::Embedding;

  bool operator==(const KernelConfig&) const = default;
};

struct MetricConfig {
  bool enabled = false;
  HeadTrainConfig train;

  bool operator==(const MetricConfig&) const = default;
};

enum class ProtocolKind { KFold, FixedSplit, Sweep };

struct ProtocolConfig {
  ProtocolKind kind = ProtocolKind::KFold;
  int k = 10;
  double train_fraction = 0.8;  // fixed split when the manifest carries no split tags
  std::vector<int> sizes;       // sweep

  bool operator==(const ProtocolConfig&) const = default;
};

struct ExperimentConfig {
  std::string label = "experiment";
  std::uint64_t seed = 0;
  EncodingSpec encoding;
  KernelConfig kernel;
  SvmConfig svm;
  MetricConfig metric;
  FeatureConfig features;
  ProtocolConfig protocol;
  std::uint64_t shots = 0;  // 0: exact simulation

  void validate() const;
  SampleMode sample_mode(std::uint64_t stream) const;
};

std::string to_string(ProtocolKind k);
ProtocolKind parse_protocol(const std::string& s);

nlohmann::json to_json(const ExperimentConfig& cfg);
// Missing keys take defaults except "seed", which is mandatory. Unknown keys
// are rejected; a top-level "run" object (run-record metadata) is ignored.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

}  // namespace qkl
