#include "treeproj/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace treeproj {

namespace {

double kernel_value(GpKernel kernel, double variance, double lengthscale, double r) {
  const double z = r / lengthscale;
  if (kernel == GpKernel::rbf) return variance * std::exp(-0.5 * z * z);
  const double a = std::sqrt(5.0) * z;
  return variance * (1.0 + a + 5.0 * z * z / 3.0) * std::exp(-a);
}

double median_pairwise_distance(const Eigen::MatrixXd& xs, std::uint64_t seed) {
  const long n = xs.rows();
  std::vector<long> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0L);
  if (n > 256) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(256);
  }
  std::vector<double> dists;
  for (size_t i = 0; i < idx.size(); ++i) {
    for (size_t j = i + 1; j < idx.size(); ++j) {
      dists.push_back((xs.row(idx[i]) - xs.row(idx[j])).norm());
    }
  }
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + static_cast<long>(dists.size()) / 2,
                   dists.end());
  const double med = dists[dists.size() / 2];
  return med > 1e-12 ? med : 1.0;
}

struct GpCore {
  GpKernel kernel;
  GpHyperparams hp;
  Eigen::MatrixXd xs;
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd alpha;
  double jitter = 0.0;

  Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const {
    Eigen::MatrixXd k(a.rows(), b.rows());
    for (long i = 0; i < a.rows(); ++i) {
      for (long j = 0; j < b.rows(); ++j) {
        k(i, j) = kernel_value(kernel, hp.variance, hp.lengthscale,
                               (a.row(i) - b.row(j)).norm());
      }
    }
    return k;
  }

  // Cholesky of K + noise I, escalating jitter from 1e-10 to 1e-4 of the
  // signal variance before giving up.
  void factorize(const Eigen::VectorXd& ys) {
    Eigen::MatrixXd k = gram(xs, xs);
    k.diagonal().array() += hp.noise;
    for (double j = 0.0;; j = j == 0.0 ? 1e-10 * hp.variance : j * 10.0) {
      Eigen::MatrixXd kj = k;
      kj.diagonal().array() += j;
      llt.compute(kj);
      if (llt.info() == Eigen::Success) {
        jitter = j;
        break;
      }
      if (j >= 1e-4 * hp.variance && j > 0.0) {
        throw std::runtime_error("gp: kernel matrix not positive definite");
      }
    }
    alpha = llt.solve(ys);
  }

  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& q) const {
    return gram(q, xs) * alpha;
  }

  void predict(const Eigen::MatrixXd& q, Eigen::VectorXd& mean,
               Eigen::VectorXd& var) const {
    const Eigen::MatrixXd kq = gram(q, xs);
    mean = kq * alpha;
    const Eigen::MatrixXd v = llt.matrixL().solve(kq.transpose());
    var.resize(q.rows());
    for (long i = 0; i < q.rows(); ++i) {
      var(i) = std::max(hp.variance - v.col(i).squaredNorm(), 0.0) + hp.noise;
    }
  }

  Eigen::MatrixXd posterior_cov(const Eigen::MatrixXd& q) const {
    const Eigen::MatrixXd kq = gram(q, xs);
    const Eigen::MatrixXd v = llt.matrixL().solve(kq.transpose());
    return gram(q, q) - v.transpose() * v;
  }
};

}  // namespace

Eigen::MatrixXd GpModel::standardize(const Eigen::MatrixXd& points) const {
  Eigen::MatrixXd out = points;
  for (long k = 0; k < out.cols(); ++k) {
    out.col(k) = (out.col(k).array() - x_mean_(k)) / x_sd_(k);
  }
  return out;
}

Eigen::MatrixXd GpModel::kernel_matrix(const Eigen::MatrixXd& a,
                                       const Eigen::MatrixXd& b) const {
  GpCore core{kernel_, hp_, {}, {}, {}, 0.0};
  return core.gram(a, b);
}

void GpModel::factorize() {
  GpCore core{kernel_, hp_, xs_, {}, {}, 0.0};
  const Eigen::VectorXd ys = (y_train_.array() - y_mean_) / y_sd_;
  core.factorize(ys);
  llt_ = core.llt;
  alpha_ = core.alpha;
  jitter_ = core.jitter;
}

std::unique_ptr<GpModel> GpModel::fit(const Dataset& train, const GpConfig& cfg) {
  if (train.task != Task::regression) {
    throw std::invalid_argument("gp: regression task required");
  }
  if (train.n() < 1) throw std::invalid_argument("gp: empty training set");
  if (cfg.cv_folds < 2) throw std::invalid_argument("gp: cv_folds must be >= 2");

  auto model = std::make_unique<GpModel>();
  model->kernel_ = cfg.kernel;
  model->seed_ = cfg.seed;
  model->x_train_ = train.features;
  model->y_train_ = train.target;

  const long n = train.n();
  const long d = train.dim();
  model->x_mean_.resize(d);
  model->x_sd_.resize(d);
  for (long k = 0; k < d; ++k) {
    model->x_mean_(k) = train.features.col(k).mean();
    const double sd = std::sqrt(
        (train.features.col(k).array() - model->x_mean_(k)).square().sum() /
        std::max<double>(1.0, static_cast<double>(n - 1)));
    model->x_sd_(k) = sd > 1e-12 ? sd : 1.0;
  }
  model->y_mean_ = train.target.mean();
  const double ysd = std::sqrt(
      (train.target.array() - model->y_mean_).square().sum() /
      std::max<double>(1.0, static_cast<double>(n - 1)));
  model->y_sd_ = ysd > 1e-12 ? ysd : 1.0;
  model->xs_ = model->standardize(train.features);

  // Grid defaults are relative to the standardized target (unit variance)
  // and the median pairwise distance of the standardized inputs.
  std::vector<double> var_grid = cfg.variance_grid;
  std::vector<double> len_grid = cfg.lengthscale_grid;
  std::vector<double> noise_grid = cfg.noise_grid;
  if (var_grid.empty()) var_grid = {0.1, 1.0, 10.0};
  if (len_grid.empty()) {
    const double med = median_pairwise_distance(model->xs_, cfg.seed);
    len_grid = {0.1 * med, 0.5 * med, 1.0 * med, 2.0 * med};
  }
  if (noise_grid.empty()) noise_grid = {1e-3, 1e-2, 1e-1};
  for (double v : var_grid)
    if (!(v > 0)) throw std::invalid_argument("gp: variance grid must be positive");
  for (double v : len_grid)
    if (!(v > 0)) throw std::invalid_argument("gp: lengthscale grid must be positive");
  for (double v : noise_grid)
    if (!(v > 0)) throw std::invalid_argument("gp: noise grid must be positive");

  const size_t n_cells = var_grid.size() * len_grid.size() * noise_grid.size();
  const Eigen::VectorXd ys = (train.target.array() - model->y_mean_) / model->y_sd_;

  if (n_cells > 1) {
    if (n < cfg.cv_folds) {
      throw std::invalid_argument("gp: fewer samples than cv folds");
    }
    std::vector<long> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0L);
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(idx.begin(), idx.end(), rng);

    double best_mse = std::numeric_limits<double>::infinity();
    GpHyperparams best = {var_grid[0], len_grid[0], noise_grid[0]};
    for (double variance : var_grid) {
      for (double lengthscale : len_grid) {
        for (double noise : noise_grid) {
          double se = 0.0;
          long count = 0;
          for (int f = 0; f < cfg.cv_folds; ++f) {
            std::vector<long> tr, va;
            for (size_t i = 0; i < idx.size(); ++i) {
              (static_cast<int>(i % static_cast<size_t>(cfg.cv_folds)) == f ? va : tr)
                  .push_back(idx[i]);
            }
            if (tr.empty() || va.empty()) continue;
            GpCore core{cfg.kernel, {variance, lengthscale, noise}, {}, {}, {}, 0.0};
            core.xs.resize(static_cast<long>(tr.size()), d);
            Eigen::VectorXd yf(static_cast<long>(tr.size()));
            for (size_t i = 0; i < tr.size(); ++i) {
              core.xs.row(static_cast<long>(i)) = model->xs_.row(tr[i]);
              yf(static_cast<long>(i)) = ys(tr[i]);
            }
            core.factorize(yf);
            Eigen::MatrixXd qv(static_cast<long>(va.size()), d);
            for (size_t i = 0; i < va.size(); ++i) {
              qv.row(static_cast<long>(i)) = model->xs_.row(va[i]);
            }
            const Eigen::VectorXd pm = core.predict_mean(qv);
            for (size_t i = 0; i < va.size(); ++i) {
              const double e = pm(static_cast<long>(i)) - ys(va[i]);
              se += e * e;
              ++count;
            }
          }
          const double mse = se / static_cast<double>(count);
          if (mse < best_mse) {
            best_mse = mse;
            best = {variance, lengthscale, noise};
          }
        }
      }
    }
    model->hp_ = best;
  } else {
    model->hp_ = {var_grid[0], len_grid[0], noise_grid[0]};
  }

  model->factorize();
  return model;
}

PredictiveSummary GpModel::predict_summary(const Eigen::MatrixXd& points) const {
  if (points.cols() != dim()) throw std::invalid_argument("gp: dimension mismatch");
  GpCore core{kernel_, hp_, xs_, llt_, alpha_, jitter_};
  Eigen::VectorXd mean, var;
  core.predict(standardize(points), mean, var);
  PredictiveSummary out;
  out.task = Task::regression;
  out.means = (mean.array() * y_sd_ + y_mean_).matrix();
  out.variances = (var.array() * y_sd_ * y_sd_).matrix();
  return out;
}

std::vector<PosteriorDraw> GpModel::posterior_draws(int count) const {
  std::vector<PosteriorDraw> draws;
  for (int l = 0; l < count; ++l) {
    PosteriorDraw draw;
    draw.draw_index = l;
    // Function draws are realized at whatever finite point set the caller
    // queries; the per-draw seed makes repeated queries at the same points
    // identical.
    draw.predict_mean = [this, l](const Eigen::MatrixXd& points) {
      GpCore core{kernel_, hp_, xs_, llt_, alpha_, jitter_};
      const Eigen::MatrixXd q = standardize(points);
      const Eigen::VectorXd mean = core.predict_mean(q);
      Eigen::MatrixXd cov = core.posterior_cov(q);
      cov.diagonal().array() += 1e-10 * hp_.variance;
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) {
        throw std::runtime_error("gp: draw covariance not positive definite");
      }
      std::mt19937_64 rng(derive_seed(seed_, 0x6472617700ULL + static_cast<std::uint64_t>(l)));
      std::normal_distribution<double> normal(0.0, 1.0);
      Eigen::VectorXd z(q.rows());
      for (long i = 0; i < q.rows(); ++i) z(i) = normal(rng);
      const Eigen::VectorXd f = mean + Eigen::MatrixXd(llt.matrixL()) * z;
      return Eigen::VectorXd((f.array() * y_sd_ + y_mean_).matrix());
    };
    draws.push_back(std::move(draw));
  }
  return draws;
}

std::string GpModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "treeproj-reference";
  j["version"] = 1;
  j["kind"] = "gp";
  j["kernel"] = kernel_ == GpKernel::matern52 ? "matern52" : "rbf";
  j["variance"] = hp_.variance;
  j["lengthscale"] = hp_.lengthscale;
  j["noise"] = hp_.noise;
  j["seed"] = seed_;
  auto& x = j["x_train"] = nlohmann::ordered_json::array();
  for (long i = 0; i < x_train_.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (long k = 0; k < x_train_.cols(); ++k) row.push_back(x_train_(i, k));
    x.push_back(std::move(row));
  }
  auto& y = j["y_train"] = nlohmann::ordered_json::array();
  for (long i = 0; i < y_train_.size(); ++i) y.push_back(y_train_(i));
  return j.dump(2);
}

std::unique_ptr<GpModel> GpModel::from_json(const nlohmann::json& j) {
  Dataset train;
  train.task = Task::regression;
  const auto& x = j.at("x_train");
  const long n = static_cast<long>(x.size());
  const long d = n > 0 ? static_cast<long>(x[0].size()) : 0;
  train.features.resize(n, d);
  for (long i = 0; i < n; ++i) {
    for (long k = 0; k < d; ++k) {
      train.features(i, k) = x[static_cast<size_t>(i)][static_cast<size_t>(k)].get<double>();
    }
  }
  train.target.resize(n);
  for (long i = 0; i < n; ++i) train.target(i) = j.at("y_train")[static_cast<size_t>(i)].get<double>();
  for (long k = 0; k < d; ++k) train.feature_names.push_back("x" + std::to_string(k));
  compute_feature_ranges(train);

  GpConfig cfg;
  cfg.kernel = j.at("kernel") == "matern52" ? GpKernel::matern52 : GpKernel::rbf;
  cfg.variance_grid = {j.at("variance").get<double>()};
  cfg.lengthscale_grid = {j.at("lengthscale").get<double>()};
  cfg.noise_grid = {j.at("noise").get<double>()};
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return fit(train, cfg);
}

}  // namespace treeproj
