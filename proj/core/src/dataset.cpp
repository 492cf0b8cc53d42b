#include "treeproj/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace treeproj {

Eigen::VectorXd Dataset::feature_sds() const {
  Eigen::VectorXd sds(dim());
  for (long k = 0; k < dim(); ++k) {
    const auto col = features.col(k);
    const double mean = col.mean();
    double ss = 0.0;
    for (long i = 0; i < n(); ++i) {
      const double dlt = col(i) - mean;
      ss += dlt * dlt;
    }
    sds(k) = n() > 1 ? std::sqrt(ss / static_cast<double>(n() - 1)) : 0.0;
  }
  return sds;
}

Dataset Dataset::subset(const std::vector<long>& rows) const {
  Dataset out;
  out.task = task;
  out.n_classes = n_classes;
  out.feature_names = feature_names;
  out.label_names = label_names;
  out.features.resize(static_cast<long>(rows.size()), dim());
  if (task == Task::regression) out.target.resize(static_cast<long>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<long>(i)) = features.row(rows[i]);
    if (task == Task::regression) {
      out.target(static_cast<long>(i)) = target(rows[i]);
    } else {
      out.labels.push_back(labels[static_cast<size_t>(rows[i])]);
    }
  }
  compute_feature_ranges(out);
  return out;
}

void compute_feature_ranges(Dataset& ds) {
  ds.feature_ranges.assign(static_cast<size_t>(ds.dim()), FeatureRange{});
  for (long k = 0; k < ds.dim(); ++k) {
    if (ds.n() == 0) continue;
    ds.feature_ranges[static_cast<size_t>(k)] = {ds.features.col(k).minCoeff(),
                                                 ds.features.col(k).maxCoeff()};
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno == 0;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& target_column,
                 Task task) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty file: " + path);
  const auto header = split_line(line);
  long target_idx = -1;
  for (size_t j = 0; j < header.size(); ++j) {
    if (header[j] == target_column) target_idx = static_cast<long>(j);
  }
  if (target_idx < 0)
    throw std::invalid_argument("target column not found: " + target_column);

  Dataset ds;
  ds.task = task;
  for (size_t j = 0; j < header.size(); ++j) {
    if (static_cast<long>(j) != target_idx) ds.feature_names.push_back(header[j]);
  }
  const long d = static_cast<long>(ds.feature_names.size());
  if (d < 1) throw std::invalid_argument("no feature columns in " + path);

  std::vector<double> values;
  std::vector<double> targets;
  std::vector<int> labels;
  std::unordered_map<std::string, int> label_ids;
  std::vector<std::string> label_names;
  long row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("row " + std::to_string(row) + ": expected " +
                                  std::to_string(header.size()) + " cells, got " +
                                  std::to_string(cells.size()));
    }
    for (size_t j = 0; j < cells.size(); ++j) {
      if (cells[j].empty()) {
        throw std::invalid_argument("missing value at row " + std::to_string(row) +
                                    ", column " + header[j]);
      }
      if (static_cast<long>(j) == target_idx) {
        if (task == Task::regression) {
          double v = 0;
          if (!parse_double(cells[j], v)) {
            throw std::invalid_argument("non-numeric target at row " +
                                        std::to_string(row));
          }
          targets.push_back(v);
        } else {
          auto it = label_ids.find(cells[j]);
          if (it == label_ids.end()) {
            const int id = static_cast<int>(label_ids.size()) + 1;
            it = label_ids.emplace(cells[j], id).first;
            label_names.push_back(cells[j]);
          }
          labels.push_back(it->second);
        }
      } else {
        double v = 0;
        if (!parse_double(cells[j], v)) {
          throw std::invalid_argument("non-numeric feature cell at row " +
                                      std::to_string(row) + ", column " + header[j]);
        }
        values.push_back(v);
      }
    }
  }
  if (row == 0) throw std::invalid_argument("no data rows in " + path);
  if (task == Task::classification && label_ids.size() < 2) {
    throw std::invalid_argument("classification target has a single class");
  }

  ds.features.resize(row, d);
  for (long i = 0; i < row; ++i)
    for (long j = 0; j < d; ++j)
      ds.features(i, j) = values[static_cast<size_t>(i * d + j)];
  if (task == Task::regression) {
    ds.target = Eigen::Map<Eigen::VectorXd>(targets.data(), row);
  } else {
    ds.labels = std::move(labels);
    ds.n_classes = static_cast<int>(label_ids.size());
    ds.label_names = std::move(label_names);
  }
  compute_feature_ranges(ds);
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (size_t j = 0; j < ds.feature_names.size(); ++j) {
    out << ds.feature_names[j] << ',';
  }
  out << "target\n";
  for (long i = 0; i < ds.n(); ++i) {
    for (long j = 0; j < ds.dim(); ++j) out << format_double(ds.features(i, j)) << ',';
    if (ds.task == Task::regression) {
      out << format_double(ds.target(i));
    } else {
      out << ds.label_names[static_cast<size_t>(ds.labels[static_cast<size_t>(i)] - 1)];
    }
    out << '\n';
  }
}

std::string label_map_json(const Dataset& ds) {
  nlohmann::ordered_json j;
  for (size_t k = 0; k < ds.label_names.size(); ++k) {
    j[ds.label_names[k]] = static_cast<int>(k) + 1;
  }
  return j.dump(2);
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0)) {
    throw std::invalid_argument("train_fraction must be in (0,1]");
  }
  std::vector<long> idx(static_cast<size_t>(ds.n()));
  std::iota(idx.begin(), idx.end(), 0L);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const long n_train = static_cast<long>(
      std::ceil(spec.train_fraction * static_cast<double>(ds.n())));
  std::vector<long> train_idx(idx.begin(), idx.begin() + n_train);
  std::vector<long> test_idx(idx.begin() + n_train, idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

double smooth_truth(double x) { return 2.0 / (1.0 + std::exp(-3.0 * x)); }

SynthResult synth_smooth_1d(long n, double noise_sd, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("synth_smooth_1d requires n >= 2");
  if (noise_sd < 0) throw std::invalid_argument("noise_sd must be >= 0");
  Dataset ds;
  ds.task = Task::regression;
  ds.feature_names = {"x"};
  ds.features.resize(n, 1);
  ds.target.resize(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (long i = 0; i < n; ++i) {
    const double x = ux(rng);
    ds.features(i, 0) = x;
    ds.target(i) = smooth_truth(x) + noise_sd * noise(rng);
  }
  compute_feature_ranges(ds);
  return {std::move(ds), smooth_truth};
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 over master xor stream counter
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace treeproj
