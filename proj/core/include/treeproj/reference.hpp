#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "treeproj/dataset.hpp"

namespace treeproj {

/// Predictive summary of a reference model at a set of query points.
struct PredictiveSummary {
  Task task = Task::regression;
  Eigen::VectorXd means;       // length S
  Eigen::VectorXd variances;   // length S, elementwise >= 0
  Eigen::MatrixXd class_probs; // S x K, row-stochastic

  long size() const {
    return task == Task::regression ? means.size() : class_probs.rows();
  }
};

/// Draw-conditioned point predictor from the reference posterior.
struct PosteriorDraw {
  int draw_index = 0;
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> predict_mean;
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> predict_probs;
};

class ReferenceModel {
 public:
  virtual ~ReferenceModel() = default;
  virtual Task task() const = 0;
  virtual long dim() const = 0;
  virtual std::string kind() const = 0;
  virtual PredictiveSummary predict_summary(const Eigen::MatrixXd& points) const = 0;
  virtual int max_draws() const = 0;
  virtual std::vector<PosteriorDraw> posterior_draws(int count) const = 0;
  virtual std::string to_json() const = 0;
};

std::unique_ptr<ReferenceModel> reference_from_json(const std::string& text);
std::unique_ptr<ReferenceModel> load_reference(const std::string& path);
void save_reference(const ReferenceModel& model, const std::string& path);

/// FNV-1a hash of the model's serialization, for report provenance.
std::string model_fingerprint(const ReferenceModel& model);

}  // namespace treeproj
