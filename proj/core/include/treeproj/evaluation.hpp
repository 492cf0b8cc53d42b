#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "treeproj/ensemble.hpp"
#include "treeproj/gp.hpp"
#include "treeproj/projection.hpp"

namespace treeproj {

double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

/// Per-node similarity: indicator of matching split features times pivot
/// proximity relative to the feature range, clamped to [0, 1].
double tree_similarity_at_node(const TreeNode& a, const TreeNode& b,
                               const std::vector<FeatureRange>& ranges);

/// Dissimilarity over structurally aligned internal nodes (matched by their
/// left/right path from the root); weights are uniform over the first
/// tree's internal nodes. Not symmetric by construction.
double tree_dissimilarity(const ProxyTree& t1, const ProxyTree& t2,
                          const std::vector<FeatureRange>& ranges);
/// Mean of both orientations.
double tree_dissimilarity_symmetric(const ProxyTree& t1, const ProxyTree& t2,
                                    const std::vector<FeatureRange>& ranges);

enum class ProxyApproach { prior, utility };

struct ReferenceSpec {
  enum class Kind { gp, ensemble };
  Kind kind = Kind::ensemble;
  GpConfig gp;
  EnsembleConfig ensemble;

  std::unique_ptr<ReferenceModel> fit(const Dataset& train,
                                      std::uint64_t seed) const;
};

struct StabilityResult {
  std::vector<double> pairwise_d;
  double mean = 0.0;
  double sd = 0.0;
};

/// Bootstrap the training set B times, fit one proxy per resample (direct
/// fit for prior mode, reference projection for utility mode), and collect
/// all pairwise tree dissimilarities.
StabilityResult stability(ProxyApproach approach, const Dataset& ds,
                          const ReferenceSpec& ref, const GrowConfig& cfg,
                          int proxy_size, int iterations, std::uint64_t seed,
                          bool refit_reference = true);

using LocalProxyFitter =
    std::function<ProxyTree(const ReferenceModel&, const NeighborhoodSpec&)>;

LocalProxyFitter utility_local_fitter(const GrowConfig& cfg, const SizeOrCv& size);
/// Direct-fit baseline: tree grown on the raw training rows nearest the
/// neighborhood center, at the same size budget.
LocalProxyFitter prior_local_fitter(const Dataset& train, const GrowConfig& cfg,
                                    const SizeOrCv& size);

/// Gaussian-weighted squared loss between proxy and reference over the
/// neighborhood samples, one value per test point.
std::vector<double> local_fidelity_per_point(const ReferenceModel& model,
                                             const LocalProxyFitter& fitter,
                                             const Eigen::MatrixXd& test_points,
                                             const NeighborhoodSpec& nb_template);
/// Mean of local_fidelity_per_point over the test points.
double local_fidelity(const ReferenceModel& model, const LocalProxyFitter& fitter,
                      const Eigen::MatrixXd& test_points,
                      const NeighborhoodSpec& nb_template);

struct SweepResult {
  std::vector<int> sizes;
  std::vector<double> rmse_utility_mean, rmse_utility_sd;
  std::vector<double> rmse_prior_mean, rmse_prior_sd;
  double rmse_reference_mean = 0.0, rmse_reference_sd = 0.0;
  int runs = 0;
  std::vector<std::uint64_t> seeds;
  // run-level test RMSEs, [size][run]
  std::vector<std::vector<double>> utility_runs, prior_runs;
};

SweepResult sweep(const Dataset& ds, const ReferenceSpec& ref,
                  const std::vector<int>& sizes, int runs, std::uint64_t seed,
                  const GrowConfig& cfg, double train_fraction = 0.75);

std::string sweep_to_csv(const SweepResult& result);
std::string stability_to_csv(const StabilityResult& result);

struct BootstrapCi {
  double mean_diff = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool significant = false;  // the interval excludes zero
};

/// Percentile bootstrap CI of the mean paired difference b - a.
BootstrapCi paired_bootstrap_ci(const std::vector<double>& a,
                                const std::vector<double>& b, double level,
                                int resamples, std::uint64_t seed);

}  // namespace treeproj
