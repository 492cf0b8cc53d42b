#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace treeproj {

enum class Task { regression, classification };

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;
};

/// Tabular dataset: all-numeric features, regression target or contiguous
/// class labels in {1..K}. Immutable after construction by convention.
struct Dataset {
  Task task = Task::regression;
  Eigen::MatrixXd features;  // N x d, row per sample
  Eigen::VectorXd target;    // regression only
  std::vector<int> labels;   // classification only, values in 1..n_classes
  int n_classes = 0;
  std::vector<std::string> feature_names;
  std::vector<FeatureRange> feature_ranges;
  std::vector<std::string> label_names;  // class k stored at index k-1

  long n() const { return features.rows(); }
  long dim() const { return features.cols(); }

  /// Per-feature standard deviation; zero-variance features report 0.
  Eigen::VectorXd feature_sds() const;

  Dataset subset(const std::vector<long>& rows) const;
};

void compute_feature_ranges(Dataset& ds);

struct SplitSpec {
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
};

Dataset load_csv(const std::string& path, const std::string& target_column,
                 Task task);
void write_csv(const Dataset& ds, const std::string& path);
/// Classification label mapping {label_string: integer} as a JSON string.
std::string label_map_json(const Dataset& ds);

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

/// Fixed smooth strictly increasing curve on [-2, 2].
double smooth_truth(double x);

struct SynthResult {
  Dataset data;
  std::function<double(double)> truth;
};

SynthResult synth_smooth_1d(long n, double noise_sd, std::uint64_t seed);

/// Child stream seed derived from a master seed by a fixed counter scheme.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace treeproj
