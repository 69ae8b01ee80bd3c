#include "qkl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace qkl {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

double read_snr(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  if (j.is_number()) return j.get<double>();
  throw ConfigError("features.snr_db must be a number, \"inf\" or null");
}

}  // namespace

std::string to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::KFold: return "kfold";
    case ProtocolKind::FixedSplit: return "fixed_split";
    case ProtocolKind::Sweep: return "sweep";
  }
  return "kfold";
}

ProtocolKind parse_protocol(const std::string& s) {
  if (s == "kfold") return ProtocolKind::KFold;
  if (s == "fixed_split") return ProtocolKind::FixedSplit;
  if (s == "sweep") return ProtocolKind::Sweep;
  throw ConfigError("unknown protocol '" + s + "' (expected kfold, fixed_split or sweep)");
}

void ExperimentConfig::validate() const {
  encoding.validate();
  kernel.kind.validate();
  svm.validate();
  if (metric.enabled) metric.train.validate();
  if (features.num_features != encoding.num_qubits) {
    throw ConfigError("features.num_features (" + std::to_string(features.num_features) +
                      ") must equal encoding.num_qubits (" + std::to_string(encoding.num_qubits) + ")");
  }
  if (features.num_features < 1) throw ConfigError("features.num_features must be >= 1");
  if (std::isnan(features.snr_db)) throw ConfigError("features.snr_db is NaN");
  if (protocol.kind == ProtocolKind::KFold && protocol.k < 2) throw ConfigError("protocol.k must be >= 2");
  if (!(protocol.train_fraction > 0.0 && protocol.train_fraction < 1.0)) {
    throw ConfigError("protocol.train_fraction must be in (0, 1)");
  }
  if (protocol.kind == ProtocolKind::Sweep && protocol.sizes.empty()) throw ConfigError("sweep needs protocol.sizes");
  for (int s : protocol.sizes) {
    if (s < 2) throw ConfigError("sweep sizes must be >= 2");
  }
}

SampleMode ExperimentConfig::sample_mode(std::uint64_t stream) const {
  if (shots == 0) return SampleMode::exact();
  return SampleMode::with_shots(shots, derive_seed(seed, {0x5307u, stream}));
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["label"] = c.label;
  j["seed"] = c.seed;
  j["shots"] = c.shots == 0 ? json("exact") : json(c.shots);
  j["encoding"] = {{"num_qubits", c.encoding.num_qubits},
                   {"depth", c.encoding.depth},
                   {"rotation_axis", to_string(c.encoding.rotation_axis)},
                   {"entangler", to_string(c.encoding.entangler)},
                   {"feature_scale", c.encoding.feature_scale},
                   {"data_reuploading", c.encoding.data_reuploading}};
  j["kernel"] = {{"kind", variant_name(c.kernel.kind.variant)},
                 {"gamma", c.kernel.kind.gamma},
                 {"squared", c.kernel.kind.fidelity_squared},
                 {"input", c.kernel.input == KernelInput::Embedding ? "embedding" : "features"}};
  j["svm"] = {{"C", c.svm.C}, {"tol", c.svm.tol}, {"max_passes", c.svm.max_passes}, {"eig_clamp", c.svm.eig_clamp}};
  j["metric"] = {{"enabled", c.metric.enabled},
                 {"lr", c.metric.train.lr},
                 {"epochs", c.metric.train.epochs},
                 {"lambda", c.metric.train.joint_weight},
                 {"classes_per_batch", c.metric.train.classes_per_batch},
                 {"support", c.metric.train.support}};
  j["features"] = {{"reducer", to_string(c.features.reducer)},
                   {"num_features", c.features.num_features},
                   {"snr_db", std::isinf(c.features.snr_db) ? json(nullptr) : json(c.features.snr_db)},
                   {"n_fft", c.features.mel.n_fft},
                   {"hop", c.features.mel.hop},
                   {"n_mels", c.features.mel.n_mels},
                   {"fmin", c.features.mel.fmin},
                   {"fmax", c.features.mel.fmax}};
  j["protocol"] = {{"kind", to_string(c.protocol.kind)},
                   {"k", c.protocol.k},
                   {"train_fraction", c.protocol.train_fraction},
                   {"sizes", c.protocol.sizes}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j, {"label", "seed", "shots", "encoding", "kernel", "svm", "metric", "features", "protocol", "run"},
                 "config");
  if (!j.contains("seed")) throw ConfigError("config must set \"seed\"");
  ExperimentConfig c;
  read(j, "label", c.label, "config");
  read(j, "seed", c.seed, "config");
  if (j.contains("shots")) {
    const json& s = j.at("shots");
    if (s.is_string() && s.get<std::string>() == "exact") {
      c.shots = 0;
    } else if (s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0)) {
      c.shots = s.get<std::uint64_t>();
    } else {
      throw ConfigError("shots must be \"exact\" or a non-negative integer");
    }
  }
  if (j.contains("encoding")) {
    const json& e = j.at("encoding");
    reject_unknown(e, {"num_qubits", "depth", "rotation_axis", "entangler", "feature_scale", "data_reuploading"},
                   "encoding");
    read(e, "num_qubits", c.encoding.num_qubits, "encoding");
    read(e, "depth", c.encoding.depth, "encoding");
    read(e, "feature_scale", c.encoding.feature_scale, "encoding");
    read(e, "data_reuploading", c.encoding.data_reuploading, "encoding");
    std::string s;
    if (e.contains("rotation_axis")) {
      read(e, "rotation_axis", s, "encoding");
      c.encoding.rotation_axis = parse_rotation_axis(s);
    }
    if (e.contains("entangler")) {
      read(e, "entangler", s, "encoding");
      c.encoding.entangler = parse_entangler(s);
    }
  }
  if (j.contains("kernel")) {
    const json& k = j.at("kernel");
    reject_unknown(k, {"kind", "gamma", "squared", "input"}, "kernel");
    std::string s;
    if (k.contains("kind")) {
      read(k, "kind", s, "kernel");
      c.kernel.kind.variant = parse_variant(s);
    }
    read(k, "gamma", c.kernel.kind.gamma, "kernel");
    read(k, "squared", c.kernel.kind.fidelity_squared, "kernel");
    if (k.contains("input")) {
      read(k, "input", s, "kernel");
      if (s == "embedding") {
        c.kernel.input = KernelInput::Embedding;
      } else if (s == "features") {
        c.kernel.input = KernelInput::Features;
      } else {
        throw ConfigError("kernel.input must be embedding or features");
      }
    }
  }
  if (j.contains("svm")) {
    const json& s = j.at("svm");
    reject_unknown(s, {"C", "tol", "max_passes", "eig_clamp"}, "svm");
    read(s, "C", c.svm.C, "svm");
    read(s, "tol", c.svm.tol, "svm");
    read(s, "max_passes", c.svm.max_passes, "svm");
    read(s, "eig_clamp", c.svm.eig_clamp, "svm");
  }
  if (j.contains("metric")) {
    const json& m = j.at("metric");
    reject_unknown(m, {"enabled", "lr", "epochs", "lambda", "classes_per_batch", "support"}, "metric");
    read(m, "enabled", c.metric.enabled, "metric");
    read(m, "lr", c.metric.train.lr, "metric");
    read(m, "epochs", c.metric.train.epochs, "metric");
    read(m, "lambda", c.metric.train.joint_weight, "metric");
    read(m, "classes_per_batch", c.metric.train.classes_per_batch, "metric");
    read(m, "support", c.metric.train.support, "metric");
  }
  if (j.contains("features")) {
    const json& f = j.at("features");
    reject_unknown(f, {"reducer", "num_features", "snr_db", "n_fft", "hop", "n_mels", "fmin", "fmax"}, "features");
    std::string s;
    if (f.contains("reducer")) {
      read(f, "reducer", s, "features");
      c.features.reducer = parse_reducer(s);
    }
    read(f, "num_features", c.features.num_features, "features");
    if (f.contains("snr_db")) c.features.snr_db = read_snr(f.at("snr_db"));
    read(f, "n_fft", c.features.mel.n_fft, "features");
    read(f, "hop", c.features.mel.hop, "features");
    read(f, "n_mels", c.features.mel.n_mels, "features");
    read(f, "fmin", c.features.mel.fmin, "features");
    read(f, "fmax", c.features.mel.fmax, "features");
  } else {
    c.features.num_features = c.encoding.num_qubits;
  }
  if (j.contains("protocol")) {
    const json& p = j.at("protocol");
    reject_unknown(p, {"kind", "k", "train_fraction", "sizes"}, "protocol");
    std::string s;
    if (p.contains("kind")) {
      read(p, "kind", s, "protocol");
      c.protocol.kind = parse_protocol(s);
    }
    read(p, "k", c.protocol.k, "protocol");
    read(p, "train_fraction", c.protocol.train_fraction, "protocol");
    read(p, "sizes", c.protocol.sizes, "protocol");
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open config");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace qkl
