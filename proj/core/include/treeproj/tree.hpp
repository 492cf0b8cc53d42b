#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "treeproj/dataset.hpp"

namespace treeproj {

// Residual variances below this floor are clamped before taking logs.
inline constexpr double kVarFloor = 1e-12;

struct TreeNode {
  bool is_leaf = true;
  int feature = -1;
  double pivot = 0.0;
  int left = -1;
  int right = -1;
  // leaf payload
  double mu = 0.0;
  std::vector<double> probs;   // classification, length K
  std::vector<long> counts;    // classification, length K
  long n = 0;                  // samples routed during fitting
};

/// Binary decision tree proxy. nodes[0] is the root.
struct ProxyTree {
  Task task = Task::regression;
  std::vector<TreeNode> nodes;
  double sigma2 = 0.0;  // global residual variance, regression only
  int n_classes = 0;

  int leaf_count() const;
  int internal_count() const { return static_cast<int>(nodes.size()) - leaf_count(); }
  int depth() const;

  int leaf_index_for(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  double predict_value(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& points) const;
  std::vector<double> predict_probs(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  int predict_class(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

  /// Distinct feature indices used by internal nodes, ascending.
  std::vector<int> features_used() const;
};

/// Fitting targets: query points with the reference model's predictive
/// summary at those points (means/variances for regression, hard labels
/// for classification).
struct FitTargets {
  Task task = Task::regression;
  Eigen::MatrixXd points;      // S x d
  Eigen::VectorXd means;       // regression
  Eigen::VectorXd variances;   // regression; zero vector when absent
  std::vector<int> labels;     // classification, 1..n_classes
  int n_classes = 0;

  long size() const { return points.rows(); }
  FitTargets subset(const std::vector<long>& rows) const;
};

struct GrowConfig {
  long min_leaf = 5;
  long max_depth = 0;  // 0 = unbounded; otherwise max split levels per path
};

/// Per-node regression statistics. cost is the node's contribution to the
/// tree residual sum: sum_j [sigma_j^2 + (ybar_j - mu_hat)^2].
struct NodeStats {
  double mu_hat = 0.0;
  double cost = 0.0;
  long n = 0;
  double variance() const { return n > 0 ? cost / static_cast<double>(n) : 0.0; }
};

NodeStats node_stats_regression(const FitTargets& targets,
                                const std::vector<long>& idx);
/// Node log-likelihood score up to a constant: -n log(variance), clamped.
double node_score_regression(const NodeStats& stats);

/// Multinomial node score: sum_k n_k log(n_k / n), with 0 log 0 = 0.
double node_score_classification(const std::vector<long>& class_counts);
std::vector<long> node_class_counts(const FitTargets& targets,
                                    const std::vector<long>& idx);

struct SplitCandidate {
  int feature = -1;
  double pivot = 0.0;
  double gain = 0.0;  // log-likelihood increase of the split
};

/// Exhaustive search over features and midpoints of consecutive distinct
/// values; ties break to the lowest feature index, then smallest pivot.
std::optional<SplitCandidate> best_split(const FitTargets& targets,
                                         const std::vector<long>& idx,
                                         const GrowConfig& cfg);

ProxyTree grow(const FitTargets& targets, const GrowConfig& cfg);
ProxyTree grow_classification(const FitTargets& targets, const GrowConfig& cfg);

/// Tree log-likelihood with reference variances folded into the residual
/// term, evaluated at the tree's own sigma2.
double tree_log_likelihood(const ProxyTree& tree, const FitTargets& targets);

/// Held-out mean negative log-likelihood per sample.
double heldout_nll(const ProxyTree& tree, const FitTargets& targets);

std::string tree_to_json(const ProxyTree& tree,
                         const std::vector<std::string>& feature_names);
ProxyTree tree_from_json(const std::string& text);
std::string tree_to_dot(const ProxyTree& tree,
                        const std::vector<std::string>& feature_names);

}  // namespace treeproj
