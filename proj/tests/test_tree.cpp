#include <doctest.h>

#include <cmath>
#include <numeric>

#include "test_helpers.hpp"
#include "treeproj/tree.hpp"

using namespace treeproj;
using namespace treeproj::testing;

namespace {

// ---------------------------------------------------------------------------
// Independent oracles. These recompute everything naively (per-candidate
// two-pass means, explicit residual sums) and never touch the sweep-based
// implementation path.
// ---------------------------------------------------------------------------

double oracle_node_cost(const FitTargets& t, const std::vector<long>& idx) {
  double mu = 0.0;
  for (long i : idx) mu += t.means(i);
  mu /= static_cast<double>(idx.size());
  double cost = 0.0;
  for (long i : idx) cost += t.variances(i) + (t.means(i) - mu) * (t.means(i) - mu);
  return cost;
}

struct OracleSplit {
  bool found = false;
  int feature = -1;
  double pivot = 0.0;
  double child_cost = 0.0;
};

OracleSplit oracle_best_split(const FitTargets& t, const std::vector<long>& idx,
                              long min_leaf) {
  OracleSplit best;
  for (int k = 0; k < t.points.cols(); ++k) {
    // enumerate midpoints of consecutive distinct sorted values
    std::vector<double> xs;
    for (long i : idx) xs.push_back(t.points(i, k));
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    for (size_t v = 0; v + 1 < xs.size(); ++v) {
      const double pivot = xs[v] + 0.5 * (xs[v + 1] - xs[v]);
      std::vector<long> left, right;
      for (long i : idx) (t.points(i, k) <= pivot ? left : right).push_back(i);
      if (static_cast<long>(left.size()) < min_leaf ||
          static_cast<long>(right.size()) < min_leaf) {
        continue;
      }
      const double cost = oracle_node_cost(t, left) + oracle_node_cost(t, right);
      if (!best.found || cost < best.child_cost) {
        best = {true, k, pivot, cost};
      }
    }
  }
  return best;
}

struct OracleTree {
  struct Node {
    bool is_leaf = true;
    int feature = -1;
    double pivot = 0.0;
    double mu = 0.0;
    int left = -1, right = -1;
  };
  std::vector<Node> nodes;
};

// classical least-squares CART with midpoint pivots and the same stopping
// rule (min_leaf, strict cost improvement)
int oracle_cart(const FitTargets& t, const std::vector<long>& idx, long min_leaf,
                OracleTree& tree) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  const double parent = oracle_node_cost(t, idx);
  OracleSplit best;
  if (static_cast<long>(idx.size()) >= 2 * min_leaf) {
    best = oracle_best_split(t, idx, min_leaf);
  }
  if (!best.found || !(parent - best.child_cost > 1e-12 * std::max(1.0, parent))) {
    double mu = 0.0;
    for (long i : idx) mu += t.means(i);
    tree.nodes[static_cast<size_t>(id)].mu = mu / static_cast<double>(idx.size());
    return id;
  }
  std::vector<long> left_idx, right_idx;
  for (long i : idx) {
    (t.points(i, best.feature) <= best.pivot ? left_idx : right_idx).push_back(i);
  }
  const int left = oracle_cart(t, left_idx, min_leaf, tree);
  const int right = oracle_cart(t, right_idx, min_leaf, tree);
  auto& nd = tree.nodes[static_cast<size_t>(id)];
  nd.is_leaf = false;
  nd.feature = best.feature;
  nd.pivot = best.pivot;
  nd.left = left;
  nd.right = right;
  return id;
}

std::vector<long> all_rows(const FitTargets& t) {
  std::vector<long> idx(static_cast<size_t>(t.size()));
  std::iota(idx.begin(), idx.end(), 0L);
  return idx;
}

}  // namespace

TEST_CASE("node_stats_regression hand examples") {
  FitTargets t;
  t.task = Task::regression;
  t.points.resize(2, 1);
  t.points << 0, 1;

  SUBCASE("means {1,3}, zero variances") {
    t.means.resize(2);
    t.means << 1, 3;
    t.variances = Eigen::VectorXd::Zero(2);
    const auto st = node_stats_regression(t, {0, 1});
    CHECK(st.mu_hat == doctest::Approx(2.0));
    CHECK(st.variance() == doctest::Approx(1.0));
  }
  SUBCASE("constant means, pure reference variance") {
    t.means.resize(2);
    t.means << 2, 2;
    t.variances.resize(2);
    t.variances << 0.5, 0.5;
    const auto st = node_stats_regression(t, {0, 1});
    CHECK(st.mu_hat == doctest::Approx(2.0));
    CHECK(st.variance() == doctest::Approx(0.5));
  }
}

TEST_CASE("node variance matches a brute-force recomputation") {
  const auto t = random_targets(20, 1, 123);
  const auto idx = all_rows(t);
  const auto st = node_stats_regression(t, idx);
  CHECK(st.cost == doctest::Approx(oracle_node_cost(t, idx)).epsilon(1e-12));
}

TEST_CASE("multinomial node score: pure node scores zero") {
  CHECK(node_score_classification({7, 0, 0}) == 0.0);
  CHECK(node_score_classification({0, 0, 3}) == 0.0);
  // mixed node scores are negative
  CHECK(node_score_classification({3, 3}) < 0.0);
}

TEST_CASE("best_split separates a perfect step") {
  FitTargets t;
  t.task = Task::regression;
  t.points.resize(4, 1);
  t.points << 1, 2, 3, 4;
  t.means.resize(4);
  t.means << 0, 0, 10, 10;
  t.variances = Eigen::VectorXd::Zero(4);
  const auto cand = best_split(t, all_rows(t), GrowConfig{1, 0});
  REQUIRE(cand.has_value());
  CHECK(cand->feature == 0);
  CHECK(cand->pivot == doctest::Approx(2.5));
  CHECK(cand->gain > 0.0);
}

TEST_CASE("best_split agrees with exhaustive enumeration on random nodes") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto t = random_targets(15, 3, 1000 + seed);
    const auto idx = all_rows(t);
    const auto cand = best_split(t, idx, GrowConfig{2, 0});
    const auto oracle = oracle_best_split(t, idx, 2);
    REQUIRE(cand.has_value());
    REQUIRE(oracle.found);
    CHECK(cand->feature == oracle.feature);
    CHECK(cand->pivot == doctest::Approx(oracle.pivot).epsilon(1e-12));
  }
}

TEST_CASE("with zero reference variances the split equals classical CART") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto t = random_targets(25, 3, 2000 + seed, /*with_variances=*/false);
    const auto idx = all_rows(t);
    const auto cand = best_split(t, idx, GrowConfig{2, 0});
    const auto oracle = oracle_best_split(t, idx, 2);
    REQUIRE(cand.has_value());
    CHECK(cand->feature == oracle.feature);
    CHECK(cand->pivot == doctest::Approx(oracle.pivot).epsilon(1e-12));
  }
}

TEST_CASE("grow degenerate cases") {
  SUBCASE("too few samples for any split") {
    auto t = random_targets(5, 2, 7);
    const auto tree = grow(t, GrowConfig{5, 0});
    CHECK(tree.leaf_count() == 1);
    CHECK(tree.nodes[0].mu == doctest::Approx(t.means.mean()));
  }
  SUBCASE("constant means with zero variances") {
    FitTargets t;
    t.task = Task::regression;
    t.points.resize(6, 1);
    t.points << 1, 2, 3, 4, 5, 6;
    t.means = Eigen::VectorXd::Constant(6, 4.2);
    t.variances = Eigen::VectorXd::Zero(6);
    const auto tree = grow(t, GrowConfig{1, 0});
    CHECK(tree.leaf_count() == 1);
    CHECK(tree.sigma2 == 0.0);
  }
  SUBCASE("empty targets") {
    FitTargets t;
    t.task = Task::regression;
    CHECK_THROWS_AS(grow(t, GrowConfig{}), std::invalid_argument);
  }
}

TEST_CASE("growing can only increase the tree log-likelihood") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto t = random_targets(60, 2, 3000 + seed);
    const auto grown = grow(t, GrowConfig{5, 0});
    FitTargets root_t = t;
    const auto root = grow(t, GrowConfig{static_cast<long>(t.size()), 0});
    CHECK(root.leaf_count() == 1);
    CHECK(tree_log_likelihood(grown, t) >= tree_log_likelihood(root, t) - 1e-9);
  }
}

TEST_CASE("tree log-likelihood identity at the ML estimates") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t = random_targets(40, 2, 4000 + seed);
    const auto tree = grow(t, GrowConfig{4, 0});
    const double s = static_cast<double>(t.size());
    const double expected =
        -0.5 * s * std::log(2.0 * M_PI * std::max(tree.sigma2, kVarFloor)) - 0.5 * s;
    CHECK(tree_log_likelihood(tree, t) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("scale equivariance of the grown structure") {
  const auto t = random_targets(50, 2, 99);
  const auto base = grow(t, GrowConfig{5, 0});
  FitTargets scaled = t;
  const double gamma = 3.5;
  scaled.means *= gamma;
  scaled.variances *= gamma * gamma;
  const auto tree = grow(scaled, GrowConfig{5, 0});
  REQUIRE(tree.nodes.size() == base.nodes.size());
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    CHECK(tree.nodes[i].is_leaf == base.nodes[i].is_leaf);
    if (base.nodes[i].is_leaf) {
      CHECK(tree.nodes[i].mu == doctest::Approx(gamma * base.nodes[i].mu).epsilon(1e-9));
    } else {
      CHECK(tree.nodes[i].feature == base.nodes[i].feature);
      CHECK(tree.nodes[i].pivot == doctest::Approx(base.nodes[i].pivot).epsilon(1e-12));
    }
  }
}

TEST_CASE("classification grow") {
  SUBCASE("perfect separation reaches training accuracy 1") {
    FitTargets t;
    t.task = Task::classification;
    t.n_classes = 2;
    t.points.resize(8, 1);
    t.points << 1, 2, 3, 4, 5, 6, 7, 8;
    t.labels = {1, 1, 1, 1, 2, 2, 2, 2};
    const auto tree = grow_classification(t, GrowConfig{1, 0});
    for (long i = 0; i < t.size(); ++i) {
      CHECK(tree.predict_class(t.points.row(i)) == t.labels[static_cast<size_t>(i)]);
    }
  }
  SUBCASE("best split agrees with brute force under the multinomial gain") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto t = random_class_targets(20, 2, 2, 5000 + seed);
      const auto cand = best_split(t, all_rows(t), GrowConfig{2, 0});
      // exhaustive enumeration with naive score recomputation
      bool found = false;
      int bf = -1;
      double bp = 0.0, bscore = 0.0;
      for (int k = 0; k < 2; ++k) {
        std::vector<double> xs;
        for (long i = 0; i < t.size(); ++i) xs.push_back(t.points(i, k));
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        for (size_t v = 0; v + 1 < xs.size(); ++v) {
          const double pivot = xs[v] + 0.5 * (xs[v + 1] - xs[v]);
          std::vector<long> cl(2, 0), cr(2, 0);
          for (long i = 0; i < t.size(); ++i) {
            auto& c = t.points(i, k) <= pivot ? cl : cr;
            ++c[static_cast<size_t>(t.labels[static_cast<size_t>(i)] - 1)];
          }
          const long nl = cl[0] + cl[1], nr = cr[0] + cr[1];
          if (nl < 2 || nr < 2) continue;
          const double score =
              node_score_classification(cl) + node_score_classification(cr);
          if (!found || score > bscore) {
            found = true;
            bf = k;
            bp = pivot;
            bscore = score;
          }
        }
      }
      if (cand.has_value()) {
        REQUIRE(found);
        CHECK(cand->feature == bf);
        CHECK(cand->pivot == doctest::Approx(bp).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("predict matches a brute-force partition lookup") {
  const auto t = random_targets(80, 3, 8);
  const auto tree = grow(t, GrowConfig{10, 3});
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ux(-1.5, 1.5);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::RowVectorXd x(3);
    for (int k = 0; k < 3; ++k) x(k) = ux(rng);
    // independent routing reimplementation
    int node = 0;
    while (!tree.nodes[static_cast<size_t>(node)].is_leaf) {
      const auto& nd = tree.nodes[static_cast<size_t>(node)];
      node = x(nd.feature) <= nd.pivot ? nd.left : nd.right;
    }
    CHECK(tree.predict_value(x) == tree.nodes[static_cast<size_t>(node)].mu);
  }
}

TEST_CASE("prediction is piecewise constant over leaves") {
  const auto t = random_targets(60, 2, 31);
  const auto tree = grow(t, GrowConfig{5, 0});
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::RowVectorXd a(2), b(2);
    for (int k = 0; k < 2; ++k) {
      a(k) = ux(rng);
      b(k) = ux(rng);
    }
    if (tree.leaf_index_for(a) == tree.leaf_index_for(b)) {
      CHECK(tree.predict_value(a) == tree.predict_value(b));
    }
  }
}

TEST_CASE("grow with zero variances reproduces classical CART trees") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto t = random_targets(20 + seed % 11, 1 + seed % 3, 6000 + seed,
                                  /*with_variances=*/false);
    const GrowConfig cfg{3, 0};
    const auto tree = grow(t, cfg);
    OracleTree oracle;
    oracle_cart(t, all_rows(t), cfg.min_leaf, oracle);
    REQUIRE(tree.nodes.size() == oracle.nodes.size());
    for (size_t i = 0; i < tree.nodes.size(); ++i) {
      CHECK(tree.nodes[i].is_leaf == oracle.nodes[i].is_leaf);
      if (oracle.nodes[i].is_leaf) {
        CHECK(tree.nodes[i].mu == doctest::Approx(oracle.nodes[i].mu).epsilon(1e-9));
      } else {
        CHECK(tree.nodes[i].feature == oracle.nodes[i].feature);
        CHECK(tree.nodes[i].pivot ==
              doctest::Approx(oracle.nodes[i].pivot).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("tree json round trip preserves structure and predictions") {
  const auto t = random_targets(50, 2, 55);
  const auto tree = grow(t, GrowConfig{5, 0});
  const auto text = tree_to_json(tree, {"f0", "f1"});
  const auto back = tree_from_json(text);
  CHECK(back.nodes.size() == tree.nodes.size());
  CHECK(back.sigma2 == tree.sigma2);
  for (long i = 0; i < t.size(); ++i) {
    CHECK(back.predict_value(t.points.row(i)) == tree.predict_value(t.points.row(i)));
  }
}

TEST_CASE("dot export names features and leaves") {
  const auto t = random_targets(30, 2, 66);
  const auto tree = grow(t, GrowConfig{5, 0});
  const auto dot = tree_to_dot(tree, {"alpha", "beta"});
  CHECK(dot.find("digraph") != std::string::npos);
  CHECK(dot.find("mu=") != std::string::npos);
}
