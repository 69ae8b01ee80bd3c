#include "qkl/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "qkl/errors.hpp"

namespace qkl {

namespace {

std::vector<std::string> split_csv(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<std::string> Manifest::ids() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

std::vector<std::string> Manifest::labels() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

std::vector<std::string> Manifest::label_set() const {
  std::set<std::string> s;
  for (const auto& e : entries) s.insert(e.label);
  return {s.begin(), s.end()};
}

std::string Manifest::resolve(const ManifestEntry& e) const {
  const std::filesystem::path p(e.path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (std::filesystem::path(base_dir) / p).string();
}

void Manifest::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (e.id.empty()) throw DataError(source + ": entry with empty id");
    if (e.label.empty()) throw DataError(source + ": entry '" + e.id + "' has no label");
    if (!seen.insert(e.id).second) throw DataError(source + ": duplicate id '" + e.id + "'");
  }
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open manifest");
  Manifest m;
  m.source = path;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty manifest");
  const auto header = split_csv(line);
  const bool has_split = header.size() == 4;
  if (!(header.size() == 3 || has_split) || header[0] != "id" || header[1] != "path" || header[2] != "label" ||
      (has_split && header[3] != "split")) {
    throw DataError(path + ": header must be id,path,label,split");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields");
    }
    m.entries.push_back({f[0], f[1], f[2], has_split ? f[3] : ""});
  }
  m.validate();
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "id,path,label,split\n";
  for (const auto& e : m.entries) out << e.id << ',' << e.path << ',' << e.label << ',' << e.split << '\n';
  if (!out) throw DataError(path + ": write failed");
}

}  // namespace qkl
