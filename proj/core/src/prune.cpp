#include "treeproj/prune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace treeproj {

namespace {

// Per-node target aggregates accumulated along each sample's routing path.
struct NodeAgg {
  long n = 0;
  double sum_y = 0.0;
  double sum_y2 = 0.0;
  double sum_v = 0.0;
  std::vector<long> counts;

  double pooled_mu() const { return n > 0 ? sum_y / static_cast<double>(n) : 0.0; }
  double pooled_cost() const {
    return n > 0 ? sum_v + sum_y2 - sum_y * sum_y / static_cast<double>(n) : 0.0;
  }
};

std::vector<NodeAgg> route_aggregates(const ProxyTree& tree, const FitTargets& t) {
  std::vector<NodeAgg> agg(tree.nodes.size());
  if (t.task == Task::classification) {
    for (auto& a : agg) a.counts.assign(static_cast<size_t>(t.n_classes), 0);
  }
  for (long s = 0; s < t.size(); ++s) {
    int i = 0;
    for (;;) {
      auto& a = agg[static_cast<size_t>(i)];
      ++a.n;
      if (t.task == Task::regression) {
        a.sum_y += t.means(s);
        a.sum_y2 += t.means(s) * t.means(s);
        a.sum_v += t.variances(s);
      } else {
        ++a.counts[static_cast<size_t>(t.labels[static_cast<size_t>(s)] - 1)];
      }
      const auto& nd = tree.nodes[static_cast<size_t>(i)];
      if (nd.is_leaf) break;
      i = t.points(s, nd.feature) <= nd.pivot ? nd.left : nd.right;
    }
  }
  return agg;
}

// Pruning state: collapsed[i] marks a node acting as a leaf in the current
// subtree.
struct PruneState {
  const ProxyTree* tree;
  const std::vector<NodeAgg>* agg;
  std::vector<char> collapsed;

  bool is_leaf(int i) const {
    return tree->nodes[static_cast<size_t>(i)].is_leaf || collapsed[static_cast<size_t>(i)];
  }

  long leaves_under(int i) const {
    if (is_leaf(i)) return 1;
    const auto& nd = tree->nodes[static_cast<size_t>(i)];
    return leaves_under(nd.left) + leaves_under(nd.right);
  }

  // Sum of per-leaf residual costs (regression) in the current subtree at i.
  double leaf_cost_under(int i) const {
    if (is_leaf(i)) return (*agg)[static_cast<size_t>(i)].pooled_cost();
    const auto& nd = tree->nodes[static_cast<size_t>(i)];
    return leaf_cost_under(nd.left) + leaf_cost_under(nd.right);
  }

  // Sum of per-leaf multinomial scores in the current subtree at i.
  double leaf_score_under(int i) const {
    if (is_leaf(i)) return node_score_classification((*agg)[static_cast<size_t>(i)].counts);
    const auto& nd = tree->nodes[static_cast<size_t>(i)];
    return leaf_score_under(nd.left) + leaf_score_under(nd.right);
  }

  void active_internal_nodes(int i, std::vector<int>& out) const {
    if (is_leaf(i)) return;
    out.push_back(i);
    const auto& nd = tree->nodes[static_cast<size_t>(i)];
    active_internal_nodes(nd.left, out);
    active_internal_nodes(nd.right, out);
  }
};

int copy_subtree(const PruneState& st, int src, ProxyTree& out) {
  const int id = static_cast<int>(out.nodes.size());
  out.nodes.emplace_back();
  const auto& a = (*st.agg)[static_cast<size_t>(src)];
  out.nodes[static_cast<size_t>(id)].n = a.n;
  if (st.is_leaf(src)) {
    auto& leaf = out.nodes[static_cast<size_t>(id)];
    if (st.tree->task == Task::regression) {
      leaf.mu = a.pooled_mu();
    } else {
      leaf.counts = a.counts;
      leaf.probs.resize(a.counts.size());
      for (size_t c = 0; c < a.counts.size(); ++c) {
        leaf.probs[c] = a.n > 0 ? static_cast<double>(a.counts[c]) /
                                      static_cast<double>(a.n)
                                : 0.0;
      }
    }
    return id;
  }
  const auto& nd = st.tree->nodes[static_cast<size_t>(src)];
  const int left = copy_subtree(st, nd.left, out);
  const int right = copy_subtree(st, nd.right, out);
  auto& split_nd = out.nodes[static_cast<size_t>(id)];
  split_nd.is_leaf = false;
  split_nd.feature = nd.feature;
  split_nd.pivot = nd.pivot;
  split_nd.left = left;
  split_nd.right = right;
  return id;
}

ProxyTree snapshot(const PruneState& st, const FitTargets& t) {
  ProxyTree out;
  out.task = st.tree->task;
  out.n_classes = st.tree->n_classes;
  copy_subtree(st, 0, out);
  if (out.task == Task::regression) {
    out.sigma2 = st.leaf_cost_under(0) / static_cast<double>(t.size());
  }
  return out;
}

double clamped_log_var(double cost, long s) {
  return std::log(std::max(cost / static_cast<double>(s), kVarFloor));
}

}  // namespace

PruneSequence prune_path(const ProxyTree& tree, const FitTargets& targets) {
  if (targets.size() == 0) throw std::invalid_argument("prune_path: empty targets");
  const long s = targets.size();
  const auto agg = route_aggregates(tree, targets);
  PruneState st{&tree, &agg, std::vector<char>(tree.nodes.size(), 0)};

  PruneSequence seq;
  seq.subtrees.push_back(snapshot(st, targets));
  seq.alphas.push_back(0.0);

  while (!st.is_leaf(0)) {
    std::vector<int> internal;
    st.active_internal_nodes(0, internal);

    // Current tree fit cost: log residual variance (regression) or mean
    // multinomial deviance (classification).
    double fit_cost;
    if (tree.task == Task::regression) {
      fit_cost = clamped_log_var(st.leaf_cost_under(0), s);
    } else {
      fit_cost = -st.leaf_score_under(0) / static_cast<double>(s);
    }

    double best_alpha = std::numeric_limits<double>::infinity();
    int best_node = -1;
    for (int h : internal) {
      const long leaves_h = st.leaves_under(h);
      double collapsed_fit;
      if (tree.task == Task::regression) {
        const double delta = agg[static_cast<size_t>(h)].pooled_cost() -
                             st.leaf_cost_under(h);
        collapsed_fit = clamped_log_var(st.leaf_cost_under(0) + delta, s);
      } else {
        const double delta = st.leaf_score_under(h) -
                             node_score_classification(agg[static_cast<size_t>(h)].counts);
        collapsed_fit = fit_cost + delta / static_cast<double>(s);
      }
      const double alpha = (collapsed_fit - fit_cost) /
                           static_cast<double>(leaves_h - 1);
      if (alpha < best_alpha) {
        best_alpha = alpha;
        best_node = h;
      }
    }

    st.collapsed[static_cast<size_t>(best_node)] = 1;
    seq.subtrees.push_back(snapshot(st, targets));
    // The raw weakest-link alphas under a log-scale cost are not guaranteed
    // monotone; the emitted path clamps to the running maximum so that
    // alpha intervals index the path consistently.
    seq.alphas.push_back(std::max(best_alpha, seq.alphas.back()));
  }
  return seq;
}

const ProxyTree& tree_for_alpha(const PruneSequence& seq, double alpha) {
  size_t pick = 0;
  for (size_t i = 0; i < seq.alphas.size(); ++i) {
    if (seq.alphas[i] <= alpha) pick = i;
  }
  return seq.subtrees[pick];
}

AlphaSelection select_alpha(const FitTargets& targets, const GrowConfig& cfg,
                            int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("select_alpha: folds must be >= 2");
  if (targets.size() < folds * cfg.min_leaf) {
    throw std::invalid_argument("select_alpha: too few samples for the fold count");
  }
  const auto full_tree = targets.task == Task::regression
                             ? grow(targets, cfg)
                             : grow_classification(targets, cfg);
  const auto full_path = prune_path(full_tree, targets);

  // Candidate alphas: geometric midpoints of consecutive path knots, plus
  // the terminal knot for the root-only regime.
  std::vector<double> candidates;
  for (size_t i = 0; i + 1 < full_path.alphas.size(); ++i) {
    const double a = full_path.alphas[i];
    const double b = full_path.alphas[i + 1];
    candidates.push_back(a > 0.0 && b > 0.0 ? std::sqrt(a * b) : a);
  }
  candidates.push_back(full_path.alphas.back());

  std::vector<long> idx(static_cast<size_t>(targets.size()));
  std::iota(idx.begin(), idx.end(), 0L);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  std::vector<double> nll_sum(candidates.size(), 0.0);
  std::vector<long> nll_count(candidates.size(), 0);
  for (int f = 0; f < folds; ++f) {
    std::vector<long> train_idx, val_idx;
    for (size_t i = 0; i < idx.size(); ++i) {
      (static_cast<int>(i % static_cast<size_t>(folds)) == f ? val_idx : train_idx)
          .push_back(idx[i]);
    }
    if (train_idx.empty() || val_idx.empty()) continue;
    const auto train = targets.subset(train_idx);
    const auto val = targets.subset(val_idx);
    const auto fold_tree = targets.task == Task::regression
                               ? grow(train, cfg)
                               : grow_classification(train, cfg);
    const auto fold_path = prune_path(fold_tree, train);
    for (size_t c = 0; c < candidates.size(); ++c) {
      const auto& sub = tree_for_alpha(fold_path, candidates[c]);
      nll_sum[c] += heldout_nll(sub, val) * static_cast<double>(val.size());
      nll_count[c] += val.size();
    }
  }

  // Scan candidates from largest alpha so that ties favor the simpler tree.
  double best_score = std::numeric_limits<double>::infinity();
  size_t best_c = candidates.size() - 1;
  for (size_t c = candidates.size(); c-- > 0;) {
    const double score = nll_sum[c] / static_cast<double>(nll_count[c]);
    if (score < best_score - 1e-12) {
      best_score = score;
      best_c = c;
    }
  }

  AlphaSelection sel;
  sel.alpha = candidates[best_c];
  sel.tree = tree_for_alpha(full_path, sel.alpha);
  sel.cv_score = best_score;
  return sel;
}

SizeConstrainedFit fit_size_constrained(const FitTargets& targets,
                                        const GrowConfig& cfg, int target_leaves) {
  if (target_leaves < 1) {
    throw std::invalid_argument("fit_size_constrained: target_leaves must be >= 1");
  }
  const auto tree = targets.task == Task::regression
                        ? grow(targets, cfg)
                        : grow_classification(targets, cfg);
  const auto path = prune_path(tree, targets);
  // Leaf counts decrease strictly along the path; pick the largest count
  // not exceeding the target.
  for (const auto& sub : path.subtrees) {
    if (sub.leaf_count() <= target_leaves) {
      return {sub, sub.leaf_count() == target_leaves ||
                       &sub == &path.subtrees.front()};
    }
  }
  return {path.subtrees.back(), false};
}

}  // namespace treeproj
