#pragma once

#include <string>
#include <vector>

namespace qkl {

struct ManifestEntry {
  std::string id;
  std::string path;
  std::string label;
  std::string split;  // "train", "test", other tag, or empty
};

// CSV with header id,path,label,split. Relative paths resolve against base_dir.
struct Manifest {
  std::vector<ManifestEntry> entries;
  std::string base_dir;
  std::string source;

  std::size_t size() const { return entries.size(); }
  std::vector<std::string> ids() const;
  std::vector<std::string> labels() const;  // per entry
  std::vector<std::string> label_set() const;  // sorted, unique
  std::string resolve(const ManifestEntry& e) const;
  void validate() const;  // unique, non-empty ids and labels
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

}  // namespace qkl
