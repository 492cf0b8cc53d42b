#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "treeproj/prune.hpp"
#include "treeproj/reference.hpp"
#include "treeproj/tree.hpp"

namespace treeproj {

/// Isotropic Gaussian neighborhood around a query point. Per-feature scales
/// (typically training standard deviations) multiply the common sd.
struct NeighborhoodSpec {
  Eigen::VectorXd center;
  double sd = 1.0;
  long samples = 200;
  std::uint64_t seed = 0;
  Eigen::VectorXd feature_scales;  // empty = all ones
};

FitTargets make_global_targets(const ReferenceModel& model, const Dataset& train);
FitTargets make_local_targets(const ReferenceModel& model, const NeighborhoodSpec& nb);

/// Proxy size control: a fixed leaf budget or CV-selected alpha.
struct SizeOrCv {
  bool use_cv = false;
  int size = 8;
  int cv_folds = 5;
  std::uint64_t cv_seed = 0;
};

struct ExplanationReport {
  ProxyTree proxy;
  double fidelity = 0.0;   // MSE vs reference means (regression) or
                           // disagreement with the reference argmax
  int complexity = 1;      // leaf count
  bool global = true;
  Eigen::VectorXd center;  // local mode only
  std::vector<int> features_used;
  bool exact_size = true;
  double alpha = 0.0;      // CV mode only
};

double proxy_fidelity(const ProxyTree& tree, const FitTargets& targets);

ExplanationReport explain_global(const ReferenceModel& model, const Dataset& train,
                                 const GrowConfig& cfg, const SizeOrCv& size);
ExplanationReport explain_local(const ReferenceModel& model,
                                const NeighborhoodSpec& nb, const GrowConfig& cfg,
                                const SizeOrCv& size);

std::string report_to_json(const ExplanationReport& report,
                           const std::vector<std::string>& feature_names,
                           const std::string& model_fingerprint,
                           std::uint64_t seed);

enum class LinearLink { identity, logistic };

struct LinearProxy {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  LinearLink link = LinearLink::identity;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Least squares with a small ridge floor on the normal equations, or
/// soft-label logistic regression by damped IRLS.
LinearProxy fit_linear(const Eigen::MatrixXd& points, const Eigen::VectorXd& y,
                       LinearLink link);

struct UncertaintyExplanation {
  std::vector<LinearProxy> per_draw;
  Eigen::VectorXd mean_weights;
  Eigen::VectorXd var_weights;  // population variance over draws
  double mean_intercept = 0.0;
  double var_intercept = 0.0;
};

/// One linear/logistic proxy per posterior draw, fit to that draw's
/// predictions at the given points; weights aggregated elementwise.
UncertaintyExplanation fit_linear_proxy_per_draw(const ReferenceModel& model,
                                                 const Eigen::MatrixXd& points,
                                                 int draws, LinearLink link);

}  // namespace treeproj
