#include "treeproj/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace treeproj {

namespace {

constexpr double kPi = 3.14159265358979323846;

// A split is accepted only when the residual cost strictly improves beyond
// numerical noise. The brute-force oracles in the test suite apply the same
// threshold.
bool cost_improves(double parent_cost, double child_cost) {
  return parent_cost - child_cost > 1e-12 * std::max(1.0, parent_cost);
}

bool score_improves(double parent_score, double child_score) {
  return child_score - parent_score > 1e-9 * std::max(1.0, std::abs(parent_score));
}

}  // namespace

int ProxyTree::leaf_count() const {
  int c = 0;
  for (const auto& nd : nodes) c += nd.is_leaf ? 1 : 0;
  return c;
}

int ProxyTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int best = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    const auto& nd = nodes[static_cast<size_t>(i)];
    if (nd.is_leaf) {
      best = std::max(best, d);
    } else {
      stack.push_back({nd.left, d + 1});
      stack.push_back({nd.right, d + 1});
    }
  }
  return best;
}

int ProxyTree::leaf_index_for(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  int i = 0;
  while (!nodes[static_cast<size_t>(i)].is_leaf) {
    const auto& nd = nodes[static_cast<size_t>(i)];
    i = x(nd.feature) <= nd.pivot ? nd.left : nd.right;
  }
  return i;
}

double ProxyTree::predict_value(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  return nodes[static_cast<size_t>(leaf_index_for(x))].mu;
}

Eigen::VectorXd ProxyTree::predict(const Eigen::MatrixXd& points) const {
  if (!nodes.empty() && points.cols() == 0) {
    throw std::invalid_argument("predict: empty points");
  }
  Eigen::VectorXd out(points.rows());
  for (long i = 0; i < points.rows(); ++i) out(i) = predict_value(points.row(i));
  return out;
}

std::vector<double> ProxyTree::predict_probs(
    const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  return nodes[static_cast<size_t>(leaf_index_for(x))].probs;
}

int ProxyTree::predict_class(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const auto& p = predict_probs(x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) + 1;
}

std::vector<int> ProxyTree::features_used() const {
  std::vector<int> used;
  for (const auto& nd : nodes) {
    if (!nd.is_leaf) used.push_back(nd.feature);
  }
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  return used;
}

FitTargets FitTargets::subset(const std::vector<long>& rows) const {
  FitTargets out;
  out.task = task;
  out.n_classes = n_classes;
  out.points.resize(static_cast<long>(rows.size()), points.cols());
  if (task == Task::regression) {
    out.means.resize(static_cast<long>(rows.size()));
    out.variances.resize(static_cast<long>(rows.size()));
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    out.points.row(static_cast<long>(i)) = points.row(rows[i]);
    if (task == Task::regression) {
      out.means(static_cast<long>(i)) = means(rows[i]);
      out.variances(static_cast<long>(i)) = variances(rows[i]);
    } else {
      out.labels.push_back(labels[static_cast<size_t>(rows[i])]);
    }
  }
  return out;
}

NodeStats node_stats_regression(const FitTargets& targets,
                                const std::vector<long>& idx) {
  if (idx.empty()) throw std::invalid_argument("node_stats_regression: empty node");
  NodeStats st;
  st.n = static_cast<long>(idx.size());
  double sum = 0.0;
  for (long i : idx) sum += targets.means(i);
  st.mu_hat = sum / static_cast<double>(st.n);
  for (long i : idx) {
    const double r = targets.means(i) - st.mu_hat;
    st.cost += targets.variances(i) + r * r;
  }
  return st;
}

double node_score_regression(const NodeStats& stats) {
  return -static_cast<double>(stats.n) * std::log(std::max(stats.variance(), kVarFloor));
}

double node_score_classification(const std::vector<long>& class_counts) {
  long n = 0;
  for (long c : class_counts) n += c;
  double score = 0.0;
  for (long c : class_counts) {
    if (c > 0) score += static_cast<double>(c) *
                        std::log(static_cast<double>(c) / static_cast<double>(n));
  }
  return score;
}

std::vector<long> node_class_counts(const FitTargets& targets,
                                    const std::vector<long>& idx) {
  std::vector<long> counts(static_cast<size_t>(targets.n_classes), 0);
  for (long i : idx) ++counts[static_cast<size_t>(targets.labels[static_cast<size_t>(i)] - 1)];
  return counts;
}

namespace {

struct BestChoice {
  bool found = false;
  int feature = -1;
  double pivot = 0.0;
  double child_objective = 0.0;  // cost (regression, minimized) or score (classification, maximized)
};

// Sorted sweep with prefix sums over one feature; candidates are midpoints
// between consecutive distinct values.
void sweep_feature_regression(const FitTargets& t, const std::vector<long>& idx,
                              int k, long min_leaf, BestChoice& best) {
  const long n = static_cast<long>(idx.size());
  std::vector<long> order(idx);
  std::sort(order.begin(), order.end(), [&](long a, long b) {
    return t.points(a, k) < t.points(b, k);
  });
  double sum_y = 0.0, sum_y2 = 0.0, sum_v = 0.0;
  double tot_y = 0.0, tot_y2 = 0.0, tot_v = 0.0;
  for (long i : order) {
    tot_y += t.means(i);
    tot_y2 += t.means(i) * t.means(i);
    tot_v += t.variances(i);
  }
  for (long p = 0; p + 1 < n; ++p) {
    const long i = order[static_cast<size_t>(p)];
    sum_y += t.means(i);
    sum_y2 += t.means(i) * t.means(i);
    sum_v += t.variances(i);
    const long nl = p + 1;
    const long nr = n - nl;
    if (nl < min_leaf || nr < min_leaf) continue;
    const double xl = t.points(i, k);
    const double xr = t.points(order[static_cast<size_t>(p + 1)], k);
    if (!(xr > xl)) continue;
    const double cost_l = sum_v + sum_y2 - sum_y * sum_y / static_cast<double>(nl);
    const double ry = tot_y - sum_y;
    const double cost_r = (tot_v - sum_v) + (tot_y2 - sum_y2) -
                          ry * ry / static_cast<double>(nr);
    const double cost = cost_l + cost_r;
    if (!best.found || cost < best.child_objective) {
      best = {true, k, xl + 0.5 * (xr - xl), cost};
    }
  }
}

void sweep_feature_classification(const FitTargets& t, const std::vector<long>& idx,
                                  int k, long min_leaf, BestChoice& best) {
  const long n = static_cast<long>(idx.size());
  std::vector<long> order(idx);
  std::sort(order.begin(), order.end(), [&](long a, long b) {
    return t.points(a, k) < t.points(b, k);
  });
  std::vector<long> left(static_cast<size_t>(t.n_classes), 0);
  std::vector<long> total = node_class_counts(t, idx);
  for (long p = 0; p + 1 < n; ++p) {
    const long i = order[static_cast<size_t>(p)];
    ++left[static_cast<size_t>(t.labels[static_cast<size_t>(i)] - 1)];
    const long nl = p + 1;
    const long nr = n - nl;
    if (nl < min_leaf || nr < min_leaf) continue;
    const double xl = t.points(i, k);
    const double xr = t.points(order[static_cast<size_t>(p + 1)], k);
    if (!(xr > xl)) continue;
    std::vector<long> right(total);
    for (size_t c = 0; c < right.size(); ++c) right[c] -= left[c];
    const double score = node_score_classification(left) +
                         node_score_classification(right);
    if (!best.found || score > best.child_objective) {
      best = {true, k, xl + 0.5 * (xr - xl), score};
    }
  }
}

}  // namespace

std::optional<SplitCandidate> best_split(const FitTargets& targets,
                                         const std::vector<long>& idx,
                                         const GrowConfig& cfg) {
  const long n = static_cast<long>(idx.size());
  if (n < 2 * cfg.min_leaf) return std::nullopt;
  BestChoice best;
  for (int k = 0; k < targets.points.cols(); ++k) {
    if (targets.task == Task::regression) {
      sweep_feature_regression(targets, idx, k, cfg.min_leaf, best);
    } else {
      sweep_feature_classification(targets, idx, k, cfg.min_leaf, best);
    }
  }
  if (!best.found) return std::nullopt;
  if (targets.task == Task::regression) {
    const auto parent = node_stats_regression(targets, idx);
    if (!cost_improves(parent.cost, best.child_objective)) return std::nullopt;
    const double dn = static_cast<double>(n);
    const double gain =
        dn * (std::log(std::max(parent.cost / dn, kVarFloor)) -
              std::log(std::max(best.child_objective / dn, kVarFloor)));
    if (!(gain > 0.0)) return std::nullopt;
    return SplitCandidate{best.feature, best.pivot, gain};
  }
  const double parent_score = node_score_classification(node_class_counts(targets, idx));
  if (!score_improves(parent_score, best.child_objective)) return std::nullopt;
  return SplitCandidate{best.feature, best.pivot, best.child_objective - parent_score};
}

namespace {

int grow_node(ProxyTree& tree, const FitTargets& t, const std::vector<long>& idx,
              const GrowConfig& cfg, long depth, double& total_cost) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes[static_cast<size_t>(id)].n = static_cast<long>(idx.size());

  std::optional<SplitCandidate> cand;
  if (cfg.max_depth == 0 || depth < cfg.max_depth) {
    cand = best_split(t, idx, cfg);
  }
  if (!cand) {
    auto& leaf = tree.nodes[static_cast<size_t>(id)];
    if (t.task == Task::regression) {
      const auto st = node_stats_regression(t, idx);
      leaf.mu = st.mu_hat;
      total_cost += st.cost;
    } else {
      leaf.counts = node_class_counts(t, idx);
      leaf.probs.resize(leaf.counts.size());
      for (size_t c = 0; c < leaf.counts.size(); ++c) {
        leaf.probs[c] = static_cast<double>(leaf.counts[c]) /
                        static_cast<double>(idx.size());
      }
    }
    return id;
  }

  std::vector<long> left_idx, right_idx;
  for (long i : idx) {
    (t.points(i, cand->feature) <= cand->pivot ? left_idx : right_idx).push_back(i);
  }
  // depth-first, left child first
  const int left = grow_node(tree, t, left_idx, cfg, depth + 1, total_cost);
  const int right = grow_node(tree, t, right_idx, cfg, depth + 1, total_cost);
  auto& nd = tree.nodes[static_cast<size_t>(id)];
  nd.is_leaf = false;
  nd.feature = cand->feature;
  nd.pivot = cand->pivot;
  nd.left = left;
  nd.right = right;
  return id;
}

ProxyTree grow_impl(const FitTargets& targets, const GrowConfig& cfg) {
  if (targets.size() == 0) throw std::invalid_argument("grow: empty targets");
  if (cfg.min_leaf < 1) throw std::invalid_argument("grow: min_leaf must be >= 1");
  ProxyTree tree;
  tree.task = targets.task;
  tree.n_classes = targets.n_classes;
  std::vector<long> idx(static_cast<size_t>(targets.size()));
  std::iota(idx.begin(), idx.end(), 0L);
  double total_cost = 0.0;
  grow_node(tree, targets, idx, cfg, 0, total_cost);
  if (targets.task == Task::regression) {
    tree.sigma2 = total_cost / static_cast<double>(targets.size());
  }
  return tree;
}

}  // namespace

ProxyTree grow(const FitTargets& targets, const GrowConfig& cfg) {
  if (targets.task != Task::regression) {
    throw std::invalid_argument("grow: regression targets expected");
  }
  return grow_impl(targets, cfg);
}

ProxyTree grow_classification(const FitTargets& targets, const GrowConfig& cfg) {
  if (targets.task != Task::classification) {
    throw std::invalid_argument("grow_classification: classification targets expected");
  }
  if (targets.n_classes < 2) {
    throw std::invalid_argument("grow_classification: need at least 2 classes");
  }
  return grow_impl(targets, cfg);
}

double tree_log_likelihood(const ProxyTree& tree, const FitTargets& targets) {
  const long s = targets.size();
  if (tree.task == Task::regression) {
    const double s2 = std::max(tree.sigma2, kVarFloor);
    double cost = 0.0;
    for (long i = 0; i < s; ++i) {
      const double r = targets.means(i) - tree.predict_value(targets.points.row(i));
      cost += targets.variances(i) + r * r;
    }
    return -0.5 * static_cast<double>(s) * std::log(2.0 * kPi * s2) -
           cost / (2.0 * s2);
  }
  double ll = 0.0;
  for (long i = 0; i < s; ++i) {
    const auto& p = tree.predict_probs(targets.points.row(i));
    const double pk = p[static_cast<size_t>(targets.labels[static_cast<size_t>(i)] - 1)];
    ll += std::log(std::max(pk, 1e-12));
  }
  return ll;
}

double heldout_nll(const ProxyTree& tree, const FitTargets& targets) {
  if (targets.size() == 0) throw std::invalid_argument("heldout_nll: empty targets");
  return -tree_log_likelihood(tree, targets) / static_cast<double>(targets.size());
}

std::string tree_to_json(const ProxyTree& tree,
                         const std::vector<std::string>& feature_names) {
  nlohmann::ordered_json j;
  j["format"] = "treeproj-tree";
  j["version"] = 1;
  j["task"] = tree.task == Task::regression ? "regression" : "classification";
  if (tree.task == Task::regression) {
    j["sigma2"] = tree.sigma2;
  } else {
    j["n_classes"] = tree.n_classes;
  }
  auto& nodes = j["nodes"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& nd = tree.nodes[i];
    nlohmann::ordered_json nj;
    nj["id"] = i;
    if (nd.is_leaf) {
      nj["kind"] = "leaf";
      if (tree.task == Task::regression) {
        nj["mu"] = nd.mu;
      } else {
        nj["probs"] = nd.probs;
        nj["counts"] = nd.counts;
      }
      nj["n"] = nd.n;
    } else {
      nj["kind"] = "split";
      nj["feature"] = nd.feature;
      nj["feature_name"] = static_cast<size_t>(nd.feature) < feature_names.size()
                               ? feature_names[static_cast<size_t>(nd.feature)]
                               : ("x" + std::to_string(nd.feature));
      nj["pivot"] = nd.pivot;
      nj["left"] = nd.left;
      nj["right"] = nd.right;
    }
    nodes.push_back(std::move(nj));
  }
  return j.dump(2);
}

ProxyTree tree_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("format") != "treeproj-tree") {
    throw std::invalid_argument("not a tree document");
  }
  ProxyTree tree;
  tree.task = j.at("task") == "regression" ? Task::regression : Task::classification;
  if (tree.task == Task::regression) {
    tree.sigma2 = j.at("sigma2").get<double>();
  } else {
    tree.n_classes = j.at("n_classes").get<int>();
  }
  for (const auto& nj : j.at("nodes")) {
    TreeNode nd;
    if (nj.at("kind") == "leaf") {
      if (tree.task == Task::regression) {
        nd.mu = nj.at("mu").get<double>();
      } else {
        nd.probs = nj.at("probs").get<std::vector<double>>();
        nd.counts = nj.at("counts").get<std::vector<long>>();
      }
      nd.n = nj.at("n").get<long>();
    } else {
      nd.is_leaf = false;
      nd.feature = nj.at("feature").get<int>();
      nd.pivot = nj.at("pivot").get<double>();
      nd.left = nj.at("left").get<int>();
      nd.right = nj.at("right").get<int>();
    }
    tree.nodes.push_back(std::move(nd));
  }
  return tree;
}

std::string tree_to_dot(const ProxyTree& tree,
                        const std::vector<std::string>& feature_names) {
  std::ostringstream out;
  out << "digraph tree {\n  node [shape=box];\n";
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& nd = tree.nodes[i];
    if (nd.is_leaf) {
      out << "  n" << i << " [label=\"";
      if (tree.task == Task::regression) {
        out << "mu=" << nd.mu << ", n=" << nd.n;
      } else {
        out << "p=[";
        for (size_t c = 0; c < nd.probs.size(); ++c) {
          if (c) out << ", ";
          out << nd.probs[c];
        }
        out << "], n=" << nd.n;
      }
      out << "\"];\n";
    } else {
      const std::string name = static_cast<size_t>(nd.feature) < feature_names.size()
                                   ? feature_names[static_cast<size_t>(nd.feature)]
                                   : ("x" + std::to_string(nd.feature));
      out << "  n" << i << " [label=\"" << name << " <= " << nd.pivot << "\"];\n";
      out << "  n" << i << " -> n" << nd.left << " [label=\"yes\"];\n";
      out << "  n" << i << " -> n" << nd.right << " [label=\"no\"];\n";
    }
  }
  out << "}\n";
  return out.str();
}

}  // namespace treeproj
