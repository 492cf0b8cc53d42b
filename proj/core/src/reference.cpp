#include "treeproj/reference.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "treeproj/ensemble.hpp"
#include "treeproj/gp.hpp"

namespace treeproj {

std::unique_ptr<ReferenceModel> reference_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("format") != "treeproj-reference") {
    throw std::invalid_argument("not a reference model document");
  }
  const std::string kind = j.at("kind");
  if (kind == "gp") return GpModel::from_json(j);
  if (kind == "ensemble") return EnsembleModel::from_json(j);
  throw std::invalid_argument("unknown reference model kind: " + kind);
}

std::unique_ptr<ReferenceModel> load_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return reference_from_json(ss.str());
}

void save_reference(const ReferenceModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  out << model.to_json();
}

std::string model_fingerprint(const ReferenceModel& model) {
  const std::string text = model.to_json();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace treeproj
