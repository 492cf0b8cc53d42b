#pragma once

#include <cstdint>
#include <vector>

#include "treeproj/tree.hpp"

namespace treeproj {

/// Nested subtree sequence from weakest-link cost-complexity pruning.
/// subtrees[0] is the full tree, the last element is root-only; alphas is
/// monotone nondecreasing with alphas[0] = 0.
struct PruneSequence {
  std::vector<ProxyTree> subtrees;
  std::vector<double> alphas;
};

PruneSequence prune_path(const ProxyTree& tree, const FitTargets& targets);

/// Path element whose alpha interval contains the given alpha.
const ProxyTree& tree_for_alpha(const PruneSequence& seq, double alpha);

struct AlphaSelection {
  double alpha = 0.0;
  ProxyTree tree;
  double cv_score = 0.0;  // mean held-out NLL at the selected alpha
};

/// 5-fold (configurable) cross-validated alpha selection over the
/// geometric-midpoint grid of the full-data prune path.
AlphaSelection select_alpha(const FitTargets& targets, const GrowConfig& cfg,
                            int folds, std::uint64_t seed);

struct SizeConstrainedFit {
  ProxyTree tree;
  bool exact_size = true;  // false when path granularity skipped the target
};

/// Grow, prune, and return the path element with the requested leaf count
/// (or the largest leaf count below it).
SizeConstrainedFit fit_size_constrained(const FitTargets& targets,
                                        const GrowConfig& cfg, int target_leaves);

}  // namespace treeproj
