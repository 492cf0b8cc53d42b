#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "treeproj/reference.hpp"

namespace treeproj {

enum class GpKernel { matern52, rbf };

struct GpConfig {
  GpKernel kernel = GpKernel::matern52;
  // Empty grids default to the standard multiples of the (standardized)
  // target variance / median pairwise distance.
  std::vector<double> variance_grid;
  std::vector<double> lengthscale_grid;
  std::vector<double> noise_grid;
  int cv_folds = 5;
  std::uint64_t seed = 0;
};

struct GpHyperparams {
  double variance = 1.0;
  double lengthscale = 1.0;
  double noise = 0.1;
};

/// Exact GP regression with grid-CV hyperparameters. Inputs and targets are
/// standardized internally; predictions are returned on the original scale.
class GpModel : public ReferenceModel {
 public:
  static std::unique_ptr<GpModel> fit(const Dataset& train, const GpConfig& cfg);
  static std::unique_ptr<GpModel> from_json(const nlohmann::json& j);

  Task task() const override { return Task::regression; }
  long dim() const override { return x_train_.cols(); }
  std::string kind() const override { return "gp"; }
  PredictiveSummary predict_summary(const Eigen::MatrixXd& points) const override;
  int max_draws() const override { return 1 << 20; }
  std::vector<PosteriorDraw> posterior_draws(int count) const override;
  std::string to_json() const override;

  const GpHyperparams& hyperparams() const { return hp_; }
  GpKernel kernel() const { return kernel_; }

 private:
  void factorize();
  Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a,
                                const Eigen::MatrixXd& b) const;
  Eigen::MatrixXd standardize(const Eigen::MatrixXd& points) const;

  GpKernel kernel_ = GpKernel::matern52;
  GpHyperparams hp_;
  std::uint64_t seed_ = 0;
  Eigen::MatrixXd x_train_;   // original scale
  Eigen::VectorXd y_train_;   // original scale
  Eigen::VectorXd x_mean_, x_sd_;
  double y_mean_ = 0.0, y_sd_ = 1.0;
  Eigen::MatrixXd xs_;        // standardized inputs
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;     // (K + noise I)^-1 ys
  double jitter_ = 0.0;
};

}  // namespace treeproj
