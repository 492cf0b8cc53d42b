#include "treeproj/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace treeproj {

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void collect_paths(const ProxyTree& t, int node, const std::string& path,
                   std::vector<std::pair<std::string, int>>& out) {
  const auto& nd = t.nodes[static_cast<size_t>(node)];
  if (nd.is_leaf) return;
  out.emplace_back(path, node);
  collect_paths(t, nd.left, path + "L", out);
  collect_paths(t, nd.right, path + "R", out);
}

const TreeNode* node_at_path(const ProxyTree& t, const std::string& path) {
  int i = 0;
  for (char c : path) {
    const auto& nd = t.nodes[static_cast<size_t>(i)];
    if (nd.is_leaf) return nullptr;
    i = c == 'L' ? nd.left : nd.right;
  }
  const auto& nd = t.nodes[static_cast<size_t>(i)];
  return nd.is_leaf ? nullptr : &nd;
}

FitTargets raw_targets(const Dataset& ds) {
  FitTargets t;
  t.task = ds.task;
  t.points = ds.features;
  if (ds.task == Task::regression) {
    t.means = ds.target;
    t.variances = Eigen::VectorXd::Zero(ds.n());
  } else {
    t.labels = ds.labels;
    t.n_classes = ds.n_classes;
  }
  return t;
}

}  // namespace

double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
  if (predictions.size() != targets.size() || predictions.size() == 0) {
    throw std::invalid_argument("rmse: length mismatch");
  }
  return std::sqrt((predictions - targets).squaredNorm() /
                   static_cast<double>(predictions.size()));
}

double tree_similarity_at_node(const TreeNode& a, const TreeNode& b,
                               const std::vector<FeatureRange>& ranges) {
  if (a.is_leaf || b.is_leaf) return 0.0;
  if (a.feature != b.feature) return 0.0;
  const auto& r = ranges.at(static_cast<size_t>(a.feature));
  const double span = r.max - r.min;
  if (span <= 0.0) return a.pivot == b.pivot ? 1.0 : 0.0;
  return std::clamp(1.0 - std::abs(a.pivot - b.pivot) / span, 0.0, 1.0);
}

double tree_dissimilarity(const ProxyTree& t1, const ProxyTree& t2,
                          const std::vector<FeatureRange>& ranges) {
  std::vector<std::pair<std::string, int>> paths;
  collect_paths(t1, 0, "", paths);
  if (paths.empty()) {
    // both root-only with equal leaves counts as identical, otherwise
    // maximally dissimilar
    if (t2.internal_count() == 0 && !t1.nodes.empty() && !t2.nodes.empty()) {
      if (t1.task == Task::regression) {
        return t1.nodes[0].mu == t2.nodes[0].mu ? 0.0 : 1.0;
      }
      return t1.nodes[0].probs == t2.nodes[0].probs ? 0.0 : 1.0;
    }
    return 1.0;
  }
  // uniform weights over the first tree's internal nodes so that
  // d(T, T) == 0 exactly
  const double q = 1.0 / static_cast<double>(paths.size());
  double sim = 0.0;
  for (const auto& [path, node] : paths) {
    const TreeNode* other = node_at_path(t2, path);
    if (!other) continue;
    sim += q * tree_similarity_at_node(t1.nodes[static_cast<size_t>(node)], *other,
                                       ranges);
  }
  return 1.0 - sim;
}

double tree_dissimilarity_symmetric(const ProxyTree& t1, const ProxyTree& t2,
                                    const std::vector<FeatureRange>& ranges) {
  return 0.5 * (tree_dissimilarity(t1, t2, ranges) +
                tree_dissimilarity(t2, t1, ranges));
}

std::unique_ptr<ReferenceModel> ReferenceSpec::fit(const Dataset& train,
                                                   std::uint64_t seed) const {
  if (kind == Kind::gp) {
    GpConfig cfg = gp;
    cfg.seed = seed;
    return GpModel::fit(train, cfg);
  }
  EnsembleConfig cfg = ensemble;
  cfg.bootstrap_seed = seed;
  return EnsembleModel::fit(train, cfg);
}

StabilityResult stability(ProxyApproach approach, const Dataset& ds,
                          const ReferenceSpec& ref, const GrowConfig& cfg,
                          int proxy_size, int iterations, std::uint64_t seed,
                          bool refit_reference) {
  if (iterations < 2) throw std::invalid_argument("stability: iterations must be >= 2");

  std::unique_ptr<ReferenceModel> shared_model;
  if (approach == ProxyApproach::utility && !refit_reference) {
    shared_model = ref.fit(ds, derive_seed(seed, 0xFEED));
  }

  std::vector<ProxyTree> trees;
  for (int b = 0; b < iterations; ++b) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::uniform_int_distribution<long> pick(0, ds.n() - 1);
    std::vector<long> rows(static_cast<size_t>(ds.n()));
    for (auto& r : rows) r = pick(rng);
    const Dataset resample = ds.subset(rows);

    if (approach == ProxyApproach::prior) {
      trees.push_back(fit_size_constrained(raw_targets(resample), cfg, proxy_size).tree);
    } else {
      const ReferenceModel* model = shared_model.get();
      std::unique_ptr<ReferenceModel> local;
      if (refit_reference) {
        local = ref.fit(resample, derive_seed(seed, 0x1000 + static_cast<std::uint64_t>(b)));
        model = local.get();
      }
      const auto targets = make_global_targets(*model, resample);
      trees.push_back(fit_size_constrained(targets, cfg, proxy_size).tree);
    }
  }

  StabilityResult result;
  for (size_t i = 0; i < trees.size(); ++i) {
    for (size_t j = i + 1; j < trees.size(); ++j) {
      result.pairwise_d.push_back(
          tree_dissimilarity_symmetric(trees[i], trees[j], ds.feature_ranges));
    }
  }
  result.mean = mean_of(result.pairwise_d);
  result.sd = sd_of(result.pairwise_d);
  return result;
}

LocalProxyFitter utility_local_fitter(const GrowConfig& cfg, const SizeOrCv& size) {
  return [cfg, size](const ReferenceModel& model, const NeighborhoodSpec& nb) {
    const auto targets = make_local_targets(model, nb);
    if (size.use_cv) return select_alpha(targets, cfg, size.cv_folds, size.cv_seed).tree;
    return fit_size_constrained(targets, cfg, size.size).tree;
  };
}

LocalProxyFitter prior_local_fitter(const Dataset& train, const GrowConfig& cfg,
                                    const SizeOrCv& size) {
  return [train, cfg, size](const ReferenceModel&, const NeighborhoodSpec& nb) {
    const long d = train.dim();
    Eigen::VectorXd scales = nb.feature_scales.size() == d
                                 ? nb.feature_scales
                                 : Eigen::VectorXd::Ones(d);
    // training rows nearest the center in neighborhood-scaled distance
    std::vector<std::pair<double, long>> dist;
    for (long i = 0; i < train.n(); ++i) {
      double sq = 0.0;
      for (long k = 0; k < d; ++k) {
        const double z = (train.features(i, k) - nb.center(k)) /
                         (nb.sd * std::max(scales(k), 1e-12));
        sq += z * z;
      }
      dist.emplace_back(sq, i);
    }
    std::sort(dist.begin(), dist.end());
    const long keep = std::min<long>(train.n(), std::max<long>(nb.samples, 2 * cfg.min_leaf));
    std::vector<long> rows;
    for (long i = 0; i < keep; ++i) rows.push_back(dist[static_cast<size_t>(i)].second);
    std::sort(rows.begin(), rows.end());
    const auto targets = raw_targets(train.subset(rows));
    if (size.use_cv) return select_alpha(targets, cfg, size.cv_folds, size.cv_seed).tree;
    return fit_size_constrained(targets, cfg, size.size).tree;
  };
}

std::vector<double> local_fidelity_per_point(const ReferenceModel& model,
                                             const LocalProxyFitter& fitter,
                                             const Eigen::MatrixXd& test_points,
                                             const NeighborhoodSpec& nb_template) {
  if (test_points.rows() < 1) throw std::invalid_argument("local_fidelity: no test points");
  const long d = test_points.cols();
  Eigen::VectorXd scales = nb_template.feature_scales.size() == d
                               ? nb_template.feature_scales
                               : Eigen::VectorXd::Ones(d);
  std::vector<double> per_point;
  for (long i = 0; i < test_points.rows(); ++i) {
    NeighborhoodSpec nb = nb_template;
    nb.center = test_points.row(i).transpose();
    nb.seed = derive_seed(nb_template.seed, static_cast<std::uint64_t>(i));
    const auto targets = make_local_targets(model, nb);
    const auto proxy = fitter(model, nb);
    double wsum = 0.0, loss = 0.0;
    for (long s = 0; s < targets.size(); ++s) {
      double sq = 0.0;
      for (long k = 0; k < d; ++k) {
        const double z = (targets.points(s, k) - nb.center(k)) /
                         (nb.sd * std::max(scales(k), 1e-12));
        sq += z * z;
      }
      const double w = std::exp(-0.5 * sq);
      const double e = proxy.predict_value(targets.points.row(s)) - targets.means(s);
      wsum += w;
      loss += w * e * e;
    }
    per_point.push_back(wsum > 0.0 ? loss / wsum : 0.0);
  }
  return per_point;
}

double local_fidelity(const ReferenceModel& model, const LocalProxyFitter& fitter,
                      const Eigen::MatrixXd& test_points,
                      const NeighborhoodSpec& nb_template) {
  return mean_of(local_fidelity_per_point(model, fitter, test_points, nb_template));
}

SweepResult sweep(const Dataset& ds, const ReferenceSpec& ref,
                  const std::vector<int>& sizes, int runs, std::uint64_t seed,
                  const GrowConfig& cfg, double train_fraction) {
  if (sizes.empty()) throw std::invalid_argument("sweep: sizes must be nonempty");
  if (runs < 1) throw std::invalid_argument("sweep: runs must be >= 1");

  SweepResult result;
  result.sizes = sizes;
  result.runs = runs;
  result.utility_runs.assign(sizes.size(), {});
  result.prior_runs.assign(sizes.size(), {});
  std::vector<double> ref_rmses;

  for (int r = 0; r < runs; ++r) {
    const std::uint64_t run_seed = derive_seed(seed, static_cast<std::uint64_t>(r));
    result.seeds.push_back(run_seed);
    const auto [train, test] = split(ds, SplitSpec{train_fraction, run_seed});
    const auto model = ref.fit(train, derive_seed(seed, 0x10000 + static_cast<std::uint64_t>(r)));

    const auto summary = model->predict_summary(test.features);
    ref_rmses.push_back(rmse(summary.means, test.target));

    const auto utility_targets = make_global_targets(*model, train);
    const auto utility_path = prune_path(grow(utility_targets, cfg), utility_targets);
    const auto prior_targets = raw_targets(train);
    const auto prior_path = prune_path(grow(prior_targets, cfg), prior_targets);

    auto at_size = [](const PruneSequence& path, int target) -> const ProxyTree& {
      for (const auto& sub : path.subtrees) {
        if (sub.leaf_count() <= target) return sub;
      }
      return path.subtrees.back();
    };
    for (size_t si = 0; si < sizes.size(); ++si) {
      result.utility_runs[si].push_back(
          rmse(at_size(utility_path, sizes[si]).predict(test.features), test.target));
      result.prior_runs[si].push_back(
          rmse(at_size(prior_path, sizes[si]).predict(test.features), test.target));
    }
  }

  for (size_t si = 0; si < sizes.size(); ++si) {
    result.rmse_utility_mean.push_back(mean_of(result.utility_runs[si]));
    result.rmse_utility_sd.push_back(sd_of(result.utility_runs[si]));
    result.rmse_prior_mean.push_back(mean_of(result.prior_runs[si]));
    result.rmse_prior_sd.push_back(sd_of(result.prior_runs[si]));
  }
  result.rmse_reference_mean = mean_of(ref_rmses);
  result.rmse_reference_sd = sd_of(ref_rmses);
  return result;
}

std::string sweep_to_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "size,rmse_utility_mean,rmse_utility_sd,rmse_prior_mean,rmse_prior_sd,"
         "rmse_reference_mean,rmse_reference_sd,runs\n";
  for (size_t i = 0; i < result.sizes.size(); ++i) {
    out << result.sizes[i] << ',' << fmt(result.rmse_utility_mean[i]) << ','
        << fmt(result.rmse_utility_sd[i]) << ',' << fmt(result.rmse_prior_mean[i])
        << ',' << fmt(result.rmse_prior_sd[i]) << ','
        << fmt(result.rmse_reference_mean) << ',' << fmt(result.rmse_reference_sd)
        << ',' << result.runs << '\n';
  }
  return out.str();
}

std::string stability_to_csv(const StabilityResult& result) {
  std::ostringstream out;
  out << "pair,dissimilarity\n";
  for (size_t i = 0; i < result.pairwise_d.size(); ++i) {
    out << i << ',' << fmt(result.pairwise_d[i]) << '\n';
  }
  return out.str();
}

BootstrapCi paired_bootstrap_ci(const std::vector<double>& a,
                                const std::vector<double>& b, double level,
                                int resamples, std::uint64_t seed) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("paired_bootstrap_ci: length mismatch");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("paired_bootstrap_ci: level must be in (0,1)");
  }
  const size_t n = a.size();
  std::vector<double> diff(n);
  for (size_t i = 0; i < n; ++i) diff[i] = b[i] - a[i];

  BootstrapCi ci;
  ci.mean_diff = mean_of(diff);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, n - 1);
  std::vector<double> means(static_cast<size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += diff[pick(rng)];
    means[static_cast<size_t>(r)] = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, means.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return means[lo] * (1.0 - frac) + means[hi] * frac;
  };
  ci.lo = std::min(quantile(tail), ci.mean_diff);
  ci.hi = std::max(quantile(1.0 - tail), ci.mean_diff);
  ci.significant = ci.lo > 0.0 || ci.hi < 0.0;
  return ci;
}

}  // namespace treeproj
