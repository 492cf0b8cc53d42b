#include "treeproj/ensemble.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace treeproj {

std::unique_ptr<EnsembleModel> EnsembleModel::fit(const Dataset& train,
                                                  const EnsembleConfig& cfg) {
  if (cfg.n_trees < 1) throw std::invalid_argument("ensemble: n_trees must be >= 1");
  if (cfg.min_leaf < 1) throw std::invalid_argument("ensemble: min_leaf must be >= 1");
  if (train.n() < 2 * cfg.min_leaf) {
    throw std::invalid_argument("ensemble: too few training samples");
  }

  auto model = std::make_unique<EnsembleModel>();
  model->task_ = train.task;
  model->dim_ = train.dim();
  model->n_classes_ = train.n_classes;
  model->cfg_ = cfg;

  const GrowConfig grow_cfg{cfg.min_leaf, cfg.max_depth};
  double aleatoric_sum = 0.0;
  for (int t = 0; t < cfg.n_trees; ++t) {
    std::mt19937_64 rng(derive_seed(cfg.bootstrap_seed, static_cast<std::uint64_t>(t)));
    std::uniform_int_distribution<long> pick(0, train.n() - 1);
    FitTargets targets;
    targets.task = train.task;
    targets.n_classes = train.n_classes;
    targets.points.resize(train.n(), train.dim());
    if (train.task == Task::regression) {
      targets.means.resize(train.n());
      targets.variances = Eigen::VectorXd::Zero(train.n());
    }
    for (long i = 0; i < train.n(); ++i) {
      const long r = pick(rng);
      targets.points.row(i) = train.features.row(r);
      if (train.task == Task::regression) {
        targets.means(i) = train.target(r);
      } else {
        targets.labels.push_back(train.labels[static_cast<size_t>(r)]);
      }
    }
    auto tree = train.task == Task::regression ? grow(targets, grow_cfg)
                                               : grow_classification(targets, grow_cfg);
    if (train.task == Task::regression) aleatoric_sum += tree.sigma2;
    model->trees_.push_back(std::move(tree));
  }
  if (train.task == Task::regression) {
    model->aleatoric_ = aleatoric_sum / static_cast<double>(cfg.n_trees);
  }
  return model;
}

PredictiveSummary EnsembleModel::predict_summary(const Eigen::MatrixXd& points) const {
  if (points.cols() != dim_) throw std::invalid_argument("ensemble: dimension mismatch");
  PredictiveSummary out;
  out.task = task_;
  const long s = points.rows();
  const double nt = static_cast<double>(trees_.size());
  if (task_ == Task::regression) {
    out.means = Eigen::VectorXd::Zero(s);
    out.variances = Eigen::VectorXd::Zero(s);
    for (const auto& tree : trees_) {
      for (long i = 0; i < s; ++i) {
        const double p = tree.predict_value(points.row(i));
        out.means(i) += p;
        out.variances(i) += p * p;
      }
    }
    out.means /= nt;
    for (long i = 0; i < s; ++i) {
      // across-tree (epistemic) variance plus mean in-leaf residual variance
      const double across = out.variances(i) / nt - out.means(i) * out.means(i);
      out.variances(i) = std::max(across, 0.0) + aleatoric_;
    }
  } else {
    out.class_probs = Eigen::MatrixXd::Zero(s, n_classes_);
    for (const auto& tree : trees_) {
      for (long i = 0; i < s; ++i) {
        const auto& p = tree.predict_probs(points.row(i));
        for (int k = 0; k < n_classes_; ++k) out.class_probs(i, k) += p[static_cast<size_t>(k)];
      }
    }
    out.class_probs /= nt;
  }
  return out;
}

std::vector<PosteriorDraw> EnsembleModel::posterior_draws(int count) const {
  if (count > static_cast<int>(trees_.size())) {
    throw std::invalid_argument("ensemble: requested more draws than trees");
  }
  std::vector<PosteriorDraw> draws;
  for (int l = 0; l < count; ++l) {
    PosteriorDraw draw;
    draw.draw_index = l;
    const ProxyTree* tree = &trees_[static_cast<size_t>(l)];
    draw.predict_mean = [tree](const Eigen::MatrixXd& points) {
      return tree->predict(points);
    };
    const int n_classes = n_classes_;
    draw.predict_probs = [tree, n_classes](const Eigen::MatrixXd& points) {
      Eigen::MatrixXd probs(points.rows(), n_classes);
      for (long i = 0; i < points.rows(); ++i) {
        const auto& p = tree->predict_probs(points.row(i));
        for (int k = 0; k < n_classes; ++k) probs(i, k) = p[static_cast<size_t>(k)];
      }
      return probs;
    };
    draws.push_back(std::move(draw));
  }
  return draws;
}

std::string EnsembleModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "treeproj-reference";
  j["version"] = 1;
  j["kind"] = "ensemble";
  j["task"] = task_ == Task::regression ? "regression" : "classification";
  j["dim"] = dim_;
  j["n_classes"] = n_classes_;
  j["aleatoric"] = aleatoric_;
  j["n_trees"] = cfg_.n_trees;
  j["max_depth"] = cfg_.max_depth;
  j["min_leaf"] = cfg_.min_leaf;
  j["bootstrap_seed"] = cfg_.bootstrap_seed;
  auto& trees = j["trees"] = nlohmann::ordered_json::array();
  for (const auto& tree : trees_) {
    trees.push_back(nlohmann::ordered_json::parse(tree_to_json(tree, {})));
  }
  return j.dump(2);
}

std::unique_ptr<EnsembleModel> EnsembleModel::from_json(const nlohmann::json& j) {
  auto model = std::make_unique<EnsembleModel>();
  model->task_ = j.at("task") == "regression" ? Task::regression : Task::classification;
  model->dim_ = j.at("dim").get<long>();
  model->n_classes_ = j.at("n_classes").get<int>();
  model->aleatoric_ = j.at("aleatoric").get<double>();
  model->cfg_.n_trees = j.at("n_trees").get<int>();
  model->cfg_.max_depth = j.at("max_depth").get<long>();
  model->cfg_.min_leaf = j.at("min_leaf").get<long>();
  model->cfg_.bootstrap_seed = j.at("bootstrap_seed").get<std::uint64_t>();
  for (const auto& tj : j.at("trees")) {
    model->trees_.push_back(tree_from_json(tj.dump()));
  }
  return model;
}

}  // namespace treeproj
