#include "treeproj/projection.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace treeproj {

namespace {

FitTargets targets_from_summary(Eigen::MatrixXd points, const PredictiveSummary& sm) {
  FitTargets t;
  t.task = sm.task;
  t.points = std::move(points);
  if (sm.task == Task::regression) {
    t.means = sm.means;
    t.variances = sm.variances;
  } else {
    // hard labels from the reference argmax; ties go to the lowest class
    t.n_classes = static_cast<int>(sm.class_probs.cols());
    for (long i = 0; i < sm.class_probs.rows(); ++i) {
      int best = 0;
      for (int k = 1; k < t.n_classes; ++k) {
        if (sm.class_probs(i, k) > sm.class_probs(i, best)) best = k;
      }
      t.labels.push_back(best + 1);
    }
  }
  return t;
}

ExplanationReport fit_report(const FitTargets& targets, const GrowConfig& cfg,
                             const SizeOrCv& size) {
  ExplanationReport report;
  if (size.use_cv) {
    const auto sel = select_alpha(targets, cfg, size.cv_folds, size.cv_seed);
    report.proxy = sel.tree;
    report.alpha = sel.alpha;
  } else {
    const auto fit = fit_size_constrained(targets, cfg, size.size);
    report.proxy = fit.tree;
    report.exact_size = fit.exact_size;
  }
  report.complexity = report.proxy.leaf_count();
  report.fidelity = proxy_fidelity(report.proxy, targets);
  report.features_used = report.proxy.features_used();
  return report;
}

}  // namespace

FitTargets make_global_targets(const ReferenceModel& model, const Dataset& train) {
  if (train.n() == 0) throw std::invalid_argument("make_global_targets: empty train set");
  if (train.dim() != model.dim()) {
    throw std::invalid_argument("make_global_targets: dimension mismatch");
  }
  return targets_from_summary(train.features, model.predict_summary(train.features));
}

FitTargets make_local_targets(const ReferenceModel& model, const NeighborhoodSpec& nb) {
  if (nb.samples < 1) throw std::invalid_argument("make_local_targets: samples must be >= 1");
  if (!(nb.sd > 0)) throw std::invalid_argument("make_local_targets: sd must be > 0");
  if (nb.center.size() != model.dim()) {
    throw std::invalid_argument("make_local_targets: center dimension mismatch");
  }
  const long d = nb.center.size();
  Eigen::VectorXd scales = nb.feature_scales.size() == d
                               ? nb.feature_scales
                               : Eigen::VectorXd::Ones(d);
  Eigen::MatrixXd points(nb.samples, d);
  std::mt19937_64 rng(nb.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (long i = 0; i < nb.samples; ++i) {
    for (long k = 0; k < d; ++k) {
      points(i, k) = nb.center(k) + nb.sd * scales(k) * normal(rng);
    }
  }
  const auto summary = model.predict_summary(points);
  return targets_from_summary(std::move(points), summary);
}

double proxy_fidelity(const ProxyTree& tree, const FitTargets& targets) {
  if (targets.size() == 0) throw std::invalid_argument("proxy_fidelity: empty targets");
  if (targets.task == Task::regression) {
    double se = 0.0;
    for (long i = 0; i < targets.size(); ++i) {
      const double e = tree.predict_value(targets.points.row(i)) - targets.means(i);
      se += e * e;
    }
    return se / static_cast<double>(targets.size());
  }
  long wrong = 0;
  for (long i = 0; i < targets.size(); ++i) {
    if (tree.predict_class(targets.points.row(i)) !=
        targets.labels[static_cast<size_t>(i)]) {
      ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(targets.size());
}

ExplanationReport explain_global(const ReferenceModel& model, const Dataset& train,
                                 const GrowConfig& cfg, const SizeOrCv& size) {
  auto report = fit_report(make_global_targets(model, train), cfg, size);
  report.global = true;
  return report;
}

ExplanationReport explain_local(const ReferenceModel& model,
                                const NeighborhoodSpec& nb, const GrowConfig& cfg,
                                const SizeOrCv& size) {
  auto report = fit_report(make_local_targets(model, nb), cfg, size);
  report.global = false;
  report.center = nb.center;
  return report;
}

std::string report_to_json(const ExplanationReport& report,
                           const std::vector<std::string>& feature_names,
                           const std::string& fingerprint, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["format"] = "treeproj-explanation";
  j["version"] = 1;
  j["target_kind"] = report.global ? "global" : "local";
  if (!report.global) {
    auto& c = j["center"] = nlohmann::ordered_json::array();
    for (long k = 0; k < report.center.size(); ++k) c.push_back(report.center(k));
  }
  j["fidelity"] = report.fidelity;
  j["complexity"] = report.complexity;
  j["exact_size"] = report.exact_size;
  j["alpha"] = report.alpha;
  auto& used = j["features_used"] = nlohmann::ordered_json::array();
  for (int k : report.features_used) {
    used.push_back(static_cast<size_t>(k) < feature_names.size()
                       ? feature_names[static_cast<size_t>(k)]
                       : ("x" + std::to_string(k)));
  }
  j["seed"] = seed;
  j["reference_fingerprint"] = fingerprint;
  j["proxy"] = nlohmann::ordered_json::parse(tree_to_json(report.proxy, feature_names));
  return j.dump(2);
}

double LinearProxy::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const double z = intercept + x * weights;
  return link == LinearLink::identity ? z : 1.0 / (1.0 + std::exp(-z));
}

LinearProxy fit_linear(const Eigen::MatrixXd& points, const Eigen::VectorXd& y,
                       LinearLink link) {
  const long n = points.rows();
  const long d = points.cols();
  if (n != y.size() || n == 0) throw std::invalid_argument("fit_linear: size mismatch");

  Eigen::MatrixXd design(n, d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = points;

  LinearProxy proxy;
  proxy.link = link;
  if (link == LinearLink::identity) {
    Eigen::MatrixXd normal_eq = design.transpose() * design;
    normal_eq.diagonal().array() += 1e-8;  // ridge floor for collinear neighborhoods
    const Eigen::VectorXd beta = normal_eq.ldlt().solve(design.transpose() * y);
    proxy.intercept = beta(0);
    proxy.weights = beta.tail(d);
    return proxy;
  }

  // soft-label logistic regression by damped IRLS
  for (long i = 0; i < n; ++i) {
    if (y(i) < -1e-9 || y(i) > 1.0 + 1e-9) {
      throw std::invalid_argument("fit_linear: logistic targets must be in [0,1]");
    }
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd z = design * beta;
    Eigen::VectorXd p(n), w(n);
    for (long i = 0; i < n; ++i) {
      p(i) = 1.0 / (1.0 + std::exp(-z(i)));
      w(i) = std::max(p(i) * (1.0 - p(i)), 1e-6);
    }
    const Eigen::VectorXd grad = design.transpose() * (y - p);
    if (grad.norm() < 1e-8) break;
    Eigen::MatrixXd hess = design.transpose() * w.asDiagonal() * design;
    hess.diagonal().array() += 1e-8;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    // halve the step until it does not blow up the linear predictor
    double damp = 1.0;
    while (damp > 1e-4 && (design * (beta + damp * step)).cwiseAbs().maxCoeff() > 30.0) {
      damp *= 0.5;
    }
    beta += damp * step;
  }
  proxy.intercept = beta(0);
  proxy.weights = beta.tail(d);
  return proxy;
}

UncertaintyExplanation fit_linear_proxy_per_draw(const ReferenceModel& model,
                                                 const Eigen::MatrixXd& points,
                                                 int draws, LinearLink link) {
  if (draws < 1) throw std::invalid_argument("fit_linear_proxy_per_draw: draws must be >= 1");
  if (draws > model.max_draws()) {
    throw std::invalid_argument("fit_linear_proxy_per_draw: not enough posterior draws");
  }
  const auto draw_list = model.posterior_draws(draws);
  UncertaintyExplanation out;
  const long d = points.cols();
  for (const auto& draw : draw_list) {
    Eigen::VectorXd y;
    if (model.task() == Task::regression) {
      y = draw.predict_mean(points);
    } else {
      const Eigen::MatrixXd probs = draw.predict_probs(points);
      if (probs.cols() != 2) {
        throw std::invalid_argument("logistic proxy requires binary classification");
      }
      y = probs.col(1);
    }
    out.per_draw.push_back(fit_linear(points, y, link));
  }
  out.mean_weights = Eigen::VectorXd::Zero(d);
  out.var_weights = Eigen::VectorXd::Zero(d);
  for (const auto& proxy : out.per_draw) {
    out.mean_weights += proxy.weights;
    out.mean_intercept += proxy.intercept;
  }
  const double nl = static_cast<double>(out.per_draw.size());
  out.mean_weights /= nl;
  out.mean_intercept /= nl;
  for (const auto& proxy : out.per_draw) {
    out.var_weights += (proxy.weights - out.mean_weights).cwiseAbs2();
    const double di = proxy.intercept - out.mean_intercept;
    out.var_intercept += di * di;
  }
  out.var_weights /= nl;
  out.var_intercept /= nl;
  return out;
}

}  // namespace treeproj
