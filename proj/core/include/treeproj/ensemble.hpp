#pragma once

#include <cstdint>

#include <json.hpp>

#include "treeproj/reference.hpp"
#include "treeproj/tree.hpp"

namespace treeproj {

struct EnsembleConfig {
  int n_trees = 100;
  long max_depth = 0;  // 0 = unbounded
  long min_leaf = 5;
  std::uint64_t bootstrap_seed = 0;
};

/// Bagged-tree reference model: each bootstrap tree is one posterior draw.
/// Predictive mean is the across-tree mean; predictive variance is the
/// across-tree variance plus the mean in-leaf residual variance.
class EnsembleModel : public ReferenceModel {
 public:
  static std::unique_ptr<EnsembleModel> fit(const Dataset& train,
                                            const EnsembleConfig& cfg);
  static std::unique_ptr<EnsembleModel> from_json(const nlohmann::json& j);

  Task task() const override { return task_; }
  long dim() const override { return dim_; }
  std::string kind() const override { return "ensemble"; }
  PredictiveSummary predict_summary(const Eigen::MatrixXd& points) const override;
  int max_draws() const override { return static_cast<int>(trees_.size()); }
  std::vector<PosteriorDraw> posterior_draws(int count) const override;
  std::string to_json() const override;

  const std::vector<ProxyTree>& trees() const { return trees_; }
  double aleatoric_variance() const { return aleatoric_; }

 private:
  Task task_ = Task::regression;
  long dim_ = 0;
  int n_classes_ = 0;
  std::vector<ProxyTree> trees_;
  double aleatoric_ = 0.0;  // mean in-leaf residual variance across trees
  EnsembleConfig cfg_;
};

}  // namespace treeproj
