#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "treeproj/dataset.hpp"
#include "treeproj/ensemble.hpp"
#include "treeproj/evaluation.hpp"
#include "treeproj/gp.hpp"
#include "treeproj/json_io.hpp"
#include "treeproj/projection.hpp"
#include "treeproj/prune.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using namespace treeproj;

// Exit codes: 0 success, 1 runtime/numeric failure, 2 configuration/input
// error. std::invalid_argument is the configuration-error channel.

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file " + path + ": " + e.what());
  }
}

// Config-file values fill in options not given on the command line;
// flags always win.
template <class T>
void merge(const CLI::App& app, const json& cfg, const char* flag, const char* key,
           T& value) {
  if (app.count(flag) == 0 && cfg.contains(key)) {
    try {
      value = cfg.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(std::string("config key ") + key + ": " + e.what());
    }
  }
}

std::string resolve_out(const std::string& out) {
  if (!out.empty() && out.front() == '/') return out;
  const char* root = std::getenv("TREEPROJ_OUTPUT_ROOT");
  if (root && *root) return std::string(root) + "/" + out;
  return out;
}

void write_output(const std::string& dir, const std::string& name,
                  const std::string& content) {
  std::filesystem::create_directories(dir);
  atomic_write(dir + "/" + name, content);
}

Task parse_task(const std::string& s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  throw std::invalid_argument("unknown task: " + s);
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

// Shared option bundles -----------------------------------------------------

struct DataOpts {
  std::string data;
  std::string target = "target";
  std::string task = "regression";

  void attach(CLI::App& app) {
    app.add_option("--data", data, "input CSV path");
    app.add_option("--target", target, "target column name");
    app.add_option("--task", task, "regression|classification");
  }
  void merge_config(const CLI::App& app, const json& cfg) {
    merge(app, cfg, "--data", "data", data);
    merge(app, cfg, "--target", "target", target);
    merge(app, cfg, "--task", "task", task);
  }
  Dataset load() const {
    if (data.empty()) throw std::invalid_argument("missing --data");
    return load_csv(data, target, parse_task(task));
  }
  void echo(ordered_json& j) const {
    j["data"] = data;
    j["target"] = target;
    j["task"] = task;
  }
};

struct ReferenceOpts {
  std::string kind = "ensemble";
  int n_trees = 100;
  long model_min_leaf = 5;
  long model_max_depth = 0;
  std::string kernel = "matern52";
  std::string variance_grid, lengthscale_grid, noise_grid;
  int gp_cv_folds = 5;

  void attach(CLI::App& app) {
    app.add_option("--kind", kind, "reference model kind: gp|ensemble");
    app.add_option("--n-trees", n_trees, "ensemble size");
    app.add_option("--model-min-leaf", model_min_leaf, "ensemble tree min leaf");
    app.add_option("--model-max-depth", model_max_depth,
                   "ensemble tree depth cap (0 = unbounded)");
    app.add_option("--kernel", kernel, "gp kernel: matern52|rbf");
    app.add_option("--variance-grid", variance_grid, "gp variance grid, comma list");
    app.add_option("--lengthscale-grid", lengthscale_grid,
                   "gp lengthscale grid, comma list");
    app.add_option("--noise-grid", noise_grid, "gp noise grid, comma list");
    app.add_option("--gp-cv-folds", gp_cv_folds, "gp hyperparameter CV folds");
  }
  void merge_config(const CLI::App& app, const json& cfg) {
    merge(app, cfg, "--kind", "kind", kind);
    merge(app, cfg, "--n-trees", "n_trees", n_trees);
    merge(app, cfg, "--model-min-leaf", "model_min_leaf", model_min_leaf);
    merge(app, cfg, "--model-max-depth", "model_max_depth", model_max_depth);
    merge(app, cfg, "--kernel", "kernel", kernel);
    merge(app, cfg, "--variance-grid", "variance_grid", variance_grid);
    merge(app, cfg, "--lengthscale-grid", "lengthscale_grid", lengthscale_grid);
    merge(app, cfg, "--noise-grid", "noise_grid", noise_grid);
    merge(app, cfg, "--gp-cv-folds", "gp_cv_folds", gp_cv_folds);
  }
  ReferenceSpec spec() const {
    ReferenceSpec ref;
    if (kind == "gp") {
      ref.kind = ReferenceSpec::Kind::gp;
    } else if (kind == "ensemble") {
      ref.kind = ReferenceSpec::Kind::ensemble;
    } else {
      throw std::invalid_argument("unknown reference kind: " + kind);
    }
    if (kernel == "matern52") {
      ref.gp.kernel = GpKernel::matern52;
    } else if (kernel == "rbf") {
      ref.gp.kernel = GpKernel::rbf;
    } else {
      throw std::invalid_argument("unknown gp kernel: " + kernel);
    }
    ref.gp.variance_grid = parse_double_list(variance_grid);
    ref.gp.lengthscale_grid = parse_double_list(lengthscale_grid);
    ref.gp.noise_grid = parse_double_list(noise_grid);
    ref.gp.cv_folds = gp_cv_folds;
    ref.ensemble.n_trees = n_trees;
    ref.ensemble.min_leaf = model_min_leaf;
    ref.ensemble.max_depth = model_max_depth;
    return ref;
  }
  void echo(ordered_json& j) const {
    j["kind"] = kind;
    if (kind == "ensemble") {
      j["n_trees"] = n_trees;
      j["model_min_leaf"] = model_min_leaf;
      j["model_max_depth"] = model_max_depth;
    } else {
      j["kernel"] = kernel;
      j["variance_grid"] = variance_grid;
      j["lengthscale_grid"] = lengthscale_grid;
      j["noise_grid"] = noise_grid;
      j["gp_cv_folds"] = gp_cv_folds;
    }
  }
};

struct ProxyOpts {
  int size = 8;
  bool use_cv = false;
  int cv_folds = 5;
  long min_leaf = 5;
  long max_depth = 0;

  void attach(CLI::App& app) {
    app.add_option("--size", size, "proxy leaf budget");
    app.add_flag("--cv", use_cv, "select the proxy size by cross-validated alpha");
    app.add_option("--cv-folds", cv_folds, "alpha-selection CV folds");
    app.add_option("--min-leaf", min_leaf, "proxy min samples per leaf");
    app.add_option("--max-depth", max_depth, "proxy depth cap (0 = unbounded)");
  }
  void merge_config(const CLI::App& app, const json& cfg) {
    merge(app, cfg, "--size", "size", size);
    merge(app, cfg, "--cv", "cv", use_cv);
    merge(app, cfg, "--cv-folds", "cv_folds", cv_folds);
    merge(app, cfg, "--min-leaf", "min_leaf", min_leaf);
    merge(app, cfg, "--max-depth", "max_depth", max_depth);
  }
  GrowConfig grow_config() const { return {min_leaf, max_depth}; }
  SizeOrCv size_or_cv(std::uint64_t seed) const {
    SizeOrCv s;
    s.use_cv = use_cv;
    s.size = size;
    s.cv_folds = cv_folds;
    s.cv_seed = seed;
    return s;
  }
  void echo(ordered_json& j) const {
    j["size"] = size;
    j["cv"] = use_cv;
    j["cv_folds"] = cv_folds;
    j["min_leaf"] = min_leaf;
    j["max_depth"] = max_depth;
  }
};

// Subcommands ---------------------------------------------------------------

int cmd_fit_reference(const CLI::App& app, const json& cfg, DataOpts& data,
                      ReferenceOpts& ref_opts, std::string out,
                      std::uint64_t seed, double train_fraction) {
  merge(app, cfg, "--out", "out", out);
  merge(app, cfg, "--seed", "seed", seed);
  merge(app, cfg, "--train-fraction", "train_fraction", train_fraction);
  data.merge_config(app, cfg);
  ref_opts.merge_config(app, cfg);
  out = resolve_out(out);

  const auto ds = data.load();
  const auto [train, test] = split(ds, SplitSpec{train_fraction, seed});
  const auto ref = ref_opts.spec();
  if (ref.kind == ReferenceSpec::Kind::gp && ds.task == Task::classification) {
    throw std::invalid_argument("gp reference supports regression only");
  }
  const auto model = ref.fit(train, seed);

  ordered_json report;
  report["format"] = "treeproj-fit-report";
  report["version"] = 1;
  report["kind"] = model->kind();
  report["fingerprint"] = model_fingerprint(*model);
  if (ref.kind == ReferenceSpec::Kind::gp) {
    const auto* gp = dynamic_cast<const GpModel*>(model.get());
    report["hyperparams"] = {{"variance", gp->hyperparams().variance},
                             {"lengthscale", gp->hyperparams().lengthscale},
                             {"noise", gp->hyperparams().noise}};
  } else {
    report["n_trees"] = ref_opts.n_trees;
  }
  auto metrics = [&](const Dataset& part) {
    ordered_json m;
    m["n"] = part.n();
    const auto s = model->predict_summary(part.features);
    if (part.task == Task::regression) {
      m["rmse"] = rmse(s.means, part.target);
    } else {
      long correct = 0;
      for (long i = 0; i < part.n(); ++i) {
        long arg = 0;
        s.class_probs.row(i).maxCoeff(&arg);
        if (static_cast<int>(arg) + 1 == part.labels[static_cast<size_t>(i)]) ++correct;
      }
      m["accuracy"] = static_cast<double>(correct) / static_cast<double>(part.n());
    }
    return m;
  };
  report["train"] = metrics(train);
  if (test.n() > 0) report["test"] = metrics(test);

  ordered_json eff;
  data.echo(eff);
  ref_opts.echo(eff);
  eff["seed"] = seed;
  eff["train_fraction"] = train_fraction;

  write_output(out, "model.json", model->to_json());
  write_output(out, "fit_report.json", report.dump(2));
  write_output(out, "effective_config.json", eff.dump(2));
  std::cout << "model written to " << out << "/model.json\n";
  return 0;
}

int cmd_explain(const CLI::App& app, const json& cfg, DataOpts& data,
                ProxyOpts& proxy, std::string out, std::string model_path,
                std::string mode, long center_row, std::string center_str,
                double nb_sd, long nb_samples, std::uint64_t seed) {
  merge(app, cfg, "--out", "out", out);
  merge(app, cfg, "--model", "model", model_path);
  merge(app, cfg, "--mode", "mode", mode);
  merge(app, cfg, "--center-row", "center_row", center_row);
  merge(app, cfg, "--center", "center", center_str);
  merge(app, cfg, "--nb-sd", "nb_sd", nb_sd);
  merge(app, cfg, "--nb-samples", "nb_samples", nb_samples);
  merge(app, cfg, "--seed", "seed", seed);
  data.merge_config(app, cfg);
  proxy.merge_config(app, cfg);
  out = resolve_out(out);

  if (model_path.empty()) throw std::invalid_argument("missing --model");
  if (mode != "global" && mode != "local") {
    throw std::invalid_argument("--mode must be global or local");
  }
  const auto model = load_reference(model_path);
  const auto ds = data.load();
  if (ds.dim() != model->dim()) {
    throw std::invalid_argument("dataset dimension does not match the model");
  }

  ExplanationReport report;
  if (mode == "global") {
    report = explain_global(*model, ds, proxy.grow_config(),
                            proxy.size_or_cv(derive_seed(seed, 1)));
  } else {
    NeighborhoodSpec nb;
    nb.sd = nb_sd;
    nb.samples = nb_samples;
    nb.seed = derive_seed(seed, 2);
    nb.feature_scales = ds.feature_sds();
    if (!center_str.empty()) {
      const auto vals = parse_double_list(center_str);
      if (static_cast<long>(vals.size()) != ds.dim()) {
        throw std::invalid_argument("--center must list one value per feature");
      }
      nb.center = Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                                    static_cast<long>(vals.size()));
    } else if (center_row >= 0) {
      if (center_row >= ds.n()) {
        throw std::invalid_argument("--center-row out of range");
      }
      nb.center = ds.features.row(center_row).transpose();
    } else {
      throw std::invalid_argument("local mode requires --center-row or --center");
    }
    report = explain_local(*model, nb, proxy.grow_config(),
                           proxy.size_or_cv(derive_seed(seed, 1)));
  }

  ordered_json eff;
  data.echo(eff);
  proxy.echo(eff);
  eff["model"] = model_path;
  eff["mode"] = mode;
  if (mode == "local") {
    eff["center_row"] = center_row;
    eff["center"] = center_str;
    eff["nb_sd"] = nb_sd;
    eff["nb_samples"] = nb_samples;
  }
  eff["seed"] = seed;

  write_output(out, "explanation.json",
               report_to_json(report, ds.feature_names, model_fingerprint(*model),
                              seed));
  write_output(out, "tree.dot", tree_to_dot(report.proxy, ds.feature_names));
  write_output(out, "effective_config.json", eff.dump(2));
  std::cout << "explanation written to " << out << "/explanation.json\n";
  return 0;
}

int cmd_sweep(const CLI::App& app, const json& cfg, DataOpts& data,
              ReferenceOpts& ref_opts, ProxyOpts& proxy, std::string out,
              std::string sizes_str, int runs, std::uint64_t seed,
              double train_fraction, double ci_level, int ci_resamples) {
  merge(app, cfg, "--out", "out", out);
  merge(app, cfg, "--sizes", "sizes", sizes_str);
  merge(app, cfg, "--runs", "runs", runs);
  merge(app, cfg, "--seed", "seed", seed);
  merge(app, cfg, "--train-fraction", "train_fraction", train_fraction);
  merge(app, cfg, "--ci-level", "ci_level", ci_level);
  merge(app, cfg, "--ci-resamples", "ci_resamples", ci_resamples);
  data.merge_config(app, cfg);
  ref_opts.merge_config(app, cfg);
  proxy.merge_config(app, cfg);
  out = resolve_out(out);

  const auto ds = data.load();
  const auto sizes = parse_int_list(sizes_str);
  const auto result = sweep(ds, ref_opts.spec(), sizes, runs, seed,
                            proxy.grow_config(), train_fraction);

  ordered_json summary;
  summary["format"] = "treeproj-sweep-summary";
  summary["version"] = 1;
  summary["runs"] = runs;
  summary["rmse_reference_mean"] = result.rmse_reference_mean;
  summary["rmse_reference_sd"] = result.rmse_reference_sd;
  auto& per_size = summary["per_size"] = ordered_json::array();
  for (size_t si = 0; si < sizes.size(); ++si) {
    // CI of (prior - utility): positive mean favors the utility projection
    const auto ci = paired_bootstrap_ci(result.utility_runs[si], result.prior_runs[si],
                                        ci_level, ci_resamples,
                                        derive_seed(seed, 0x2000 + si));
    ordered_json row;
    row["size"] = sizes[si];
    row["rmse_utility_mean"] = result.rmse_utility_mean[si];
    row["rmse_utility_sd"] = result.rmse_utility_sd[si];
    row["rmse_prior_mean"] = result.rmse_prior_mean[si];
    row["rmse_prior_sd"] = result.rmse_prior_sd[si];
    row["ci_prior_minus_utility"] = {{"mean_diff", ci.mean_diff},
                                     {"lo", ci.lo},
                                     {"hi", ci.hi},
                                     {"level", ci_level},
                                     {"significant", ci.significant}};
    per_size.push_back(std::move(row));
  }

  ordered_json eff;
  data.echo(eff);
  ref_opts.echo(eff);
  proxy.echo(eff);
  eff["sizes"] = sizes_str;
  eff["runs"] = runs;
  eff["seed"] = seed;
  eff["train_fraction"] = train_fraction;
  eff["ci_level"] = ci_level;
  eff["ci_resamples"] = ci_resamples;

  write_output(out, "sweep.csv", sweep_to_csv(result));
  write_output(out, "sweep_summary.json", summary.dump(2));
  write_output(out, "effective_config.json", eff.dump(2));
  std::cout << "sweep written to " << out << "/sweep.csv\n";
  return 0;
}

int cmd_stability(const CLI::App& app, const json& cfg, DataOpts& data,
                  ReferenceOpts& ref_opts, ProxyOpts& proxy, std::string out,
                  int iterations, std::uint64_t seed, std::string approach,
                  bool reuse_reference) {
  merge(app, cfg, "--out", "out", out);
  merge(app, cfg, "--iterations", "iterations", iterations);
  merge(app, cfg, "--seed", "seed", seed);
  merge(app, cfg, "--approach", "approach", approach);
  merge(app, cfg, "--reuse-reference", "reuse_reference", reuse_reference);
  data.merge_config(app, cfg);
  ref_opts.merge_config(app, cfg);
  proxy.merge_config(app, cfg);
  out = resolve_out(out);

  if (approach != "both" && approach != "prior" && approach != "utility") {
    throw std::invalid_argument("--approach must be both, prior, or utility");
  }
  const auto ds = data.load();
  const auto ref = ref_opts.spec();

  ordered_json summary;
  summary["format"] = "treeproj-stability-summary";
  summary["version"] = 1;
  summary["iterations"] = iterations;
  auto run_one = [&](ProxyApproach a, const std::string& name) {
    const auto res = stability(a, ds, ref, proxy.grow_config(), proxy.size,
                               iterations, seed, !reuse_reference);
    write_output(out, "stability_" + name + ".csv", stability_to_csv(res));
    summary[name] = {{"pairs", res.pairwise_d.size()},
                     {"mean", res.mean},
                     {"sd", res.sd}};
  };
  if (approach != "utility") run_one(ProxyApproach::prior, "prior");
  if (approach != "prior") run_one(ProxyApproach::utility, "utility");

  ordered_json eff;
  data.echo(eff);
  ref_opts.echo(eff);
  proxy.echo(eff);
  eff["iterations"] = iterations;
  eff["seed"] = seed;
  eff["approach"] = approach;
  eff["reuse_reference"] = reuse_reference;

  write_output(out, "stability_summary.json", summary.dump(2));
  write_output(out, "effective_config.json", eff.dump(2));
  std::cout << "stability written to " << out << "/stability_summary.json\n";
  return 0;
}

int cmd_fidelity(const CLI::App& app, const json& cfg, DataOpts& data,
                 ReferenceOpts& ref_opts, ProxyOpts& proxy, std::string out,
                 double nb_sd, long nb_samples, std::uint64_t seed,
                 double train_fraction, long max_test_points) {
  merge(app, cfg, "--out", "out", out);
  merge(app, cfg, "--nb-sd", "nb_sd", nb_sd);
  merge(app, cfg, "--nb-samples", "nb_samples", nb_samples);
  merge(app, cfg, "--seed", "seed", seed);
  merge(app, cfg, "--train-fraction", "train_fraction", train_fraction);
  merge(app, cfg, "--max-test-points", "max_test_points", max_test_points);
  data.merge_config(app, cfg);
  ref_opts.merge_config(app, cfg);
  proxy.merge_config(app, cfg);
  out = resolve_out(out);

  const auto ds = data.load();
  if (ds.task != Task::regression) {
    throw std::invalid_argument("fidelity supports regression only");
  }
  const auto [train, test] = split(ds, SplitSpec{train_fraction, seed});
  if (test.n() == 0) throw std::invalid_argument("fidelity needs a nonempty test split");
  const auto model = ref_opts.spec().fit(train, derive_seed(seed, 1));

  const long n_points = std::min(test.n(), max_test_points);
  const Eigen::MatrixXd points = test.features.topRows(n_points);

  NeighborhoodSpec nb;
  nb.sd = nb_sd;
  nb.samples = nb_samples;
  nb.seed = derive_seed(seed, 2);
  nb.feature_scales = train.feature_sds();

  const auto size = proxy.size_or_cv(derive_seed(seed, 3));
  const auto utility = local_fidelity_per_point(
      *model, utility_local_fitter(proxy.grow_config(), size), points, nb);
  const auto prior = local_fidelity_per_point(
      *model, prior_local_fitter(train, proxy.grow_config(), size), points, nb);

  std::ostringstream csv;
  csv.precision(17);
  csv << "point,fidelity_utility,fidelity_prior\n";
  double mean_u = 0.0, mean_p = 0.0;
  for (long i = 0; i < n_points; ++i) {
    csv << i << ',' << utility[static_cast<size_t>(i)] << ','
        << prior[static_cast<size_t>(i)] << '\n';
    mean_u += utility[static_cast<size_t>(i)];
    mean_p += prior[static_cast<size_t>(i)];
  }
  mean_u /= static_cast<double>(n_points);
  mean_p /= static_cast<double>(n_points);
  csv << "aggregate," << mean_u << ',' << mean_p << '\n';

  ordered_json summary;
  summary["format"] = "treeproj-fidelity-summary";
  summary["version"] = 1;
  summary["test_points"] = n_points;
  summary["nb_samples"] = nb_samples;
  summary["fidelity_utility_mean"] = mean_u;
  summary["fidelity_prior_mean"] = mean_p;

  ordered_json eff;
  data.echo(eff);
  ref_opts.echo(eff);
  proxy.echo(eff);
  eff["nb_sd"] = nb_sd;
  eff["nb_samples"] = nb_samples;
  eff["seed"] = seed;
  eff["train_fraction"] = train_fraction;
  eff["max_test_points"] = max_test_points;

  write_output(out, "fidelity.csv", csv.str());
  write_output(out, "fidelity_summary.json", summary.dump(2));
  write_output(out, "effective_config.json", eff.dump(2));
  std::cout << "fidelity written to " << out << "/fidelity.csv\n";
  return 0;
}

int cmd_export_dot(const std::string& input, std::string output) {
  const auto j = json::parse(read_file(input));
  json tree_doc;
  if (j.contains("proxy")) {
    tree_doc = j.at("proxy");  // explanation report wrapping a tree
  } else if (j.value("format", "") == "treeproj-tree") {
    tree_doc = j;
  } else {
    throw std::invalid_argument(input + " is not a tree or explanation document");
  }
  const auto tree = tree_from_json(tree_doc.dump());
  std::vector<std::string> names;
  for (const auto& nj : tree_doc.at("nodes")) {
    if (nj.at("kind") == "split") {
      const int f = nj.at("feature").get<int>();
      if (static_cast<size_t>(f) >= names.size()) names.resize(static_cast<size_t>(f) + 1);
      names[static_cast<size_t>(f)] = nj.at("feature_name").get<std::string>();
    }
  }
  for (size_t k = 0; k < names.size(); ++k) {
    if (names[k].empty()) names[k] = "x" + std::to_string(k);
  }
  output = resolve_out(output);
  const auto dir = std::filesystem::path(output).parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  atomic_write(output, tree_to_dot(tree, names));
  std::cout << "dot written to " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reference-model projection onto interpretable tree proxies"};
  app.require_subcommand(1);

  // shared state per subcommand
  struct Common {
    std::string config, out = ".";
    int jobs = 1;
    std::uint64_t seed = 0;
  };

  auto add_common = [](CLI::App& sub, Common& c) {
    sub.add_option("--config", c.config, "JSON config file; flags override it");
    sub.add_option("--out", c.out, "output directory");
    sub.add_option("--jobs", c.jobs, "worker cap for evaluation runs")
        ->check(CLI::PositiveNumber);
    sub.add_option("--seed", c.seed, "master seed");
  };

  int rc = 0;
  auto guard = [&rc](auto&& fn) {
    try {
      rc = fn();
    } catch (const std::invalid_argument& e) {
      std::cerr << "error: " << e.what() << "\n";
      rc = 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      rc = 1;
    }
  };

  // fit-reference
  auto* fit = app.add_subcommand("fit-reference", "fit and persist a reference model");
  auto fit_common = std::make_shared<Common>();
  auto fit_data = std::make_shared<DataOpts>();
  auto fit_ref = std::make_shared<ReferenceOpts>();
  auto fit_frac = std::make_shared<double>(0.75);
  add_common(*fit, *fit_common);
  fit_data->attach(*fit);
  fit_ref->attach(*fit);
  fit->add_option("--train-fraction", *fit_frac, "train split fraction");
  fit->callback([=, &rc, &guard] {
    guard([&] {
      return cmd_fit_reference(*fit, load_config(fit_common->config), *fit_data,
                               *fit_ref, fit_common->out, fit_common->seed,
                               *fit_frac);
    });
  });

  // explain
  auto* exp = app.add_subcommand("explain", "project the reference onto a proxy tree");
  auto exp_common = std::make_shared<Common>();
  auto exp_data = std::make_shared<DataOpts>();
  auto exp_proxy = std::make_shared<ProxyOpts>();
  auto exp_model = std::make_shared<std::string>();
  auto exp_mode = std::make_shared<std::string>("global");
  auto exp_center_row = std::make_shared<long>(-1);
  auto exp_center = std::make_shared<std::string>();
  auto exp_nb_sd = std::make_shared<double>(1.0);
  auto exp_nb_samples = std::make_shared<long>(200);
  add_common(*exp, *exp_common);
  exp_data->attach(*exp);
  exp_proxy->attach(*exp);
  exp->add_option("--model", *exp_model, "fitted model JSON path");
  exp->add_option("--mode", *exp_mode, "global|local");
  exp->add_option("--center-row", *exp_center_row, "local center: dataset row index");
  exp->add_option("--center", *exp_center, "local center: comma list of values");
  exp->add_option("--nb-sd", *exp_nb_sd, "neighborhood width (feature sd units)");
  exp->add_option("--nb-samples", *exp_nb_samples, "neighborhood sample count");
  exp->callback([=, &rc, &guard] {
    guard([&] {
      return cmd_explain(*exp, load_config(exp_common->config), *exp_data, *exp_proxy,
                         exp_common->out, *exp_model, *exp_mode, *exp_center_row,
                         *exp_center, *exp_nb_sd, *exp_nb_samples, exp_common->seed);
    });
  });

  // sweep
  auto* sw = app.add_subcommand("sweep", "size sweep: utility vs direct-fit proxies");
  auto sw_common = std::make_shared<Common>();
  auto sw_data = std::make_shared<DataOpts>();
  auto sw_ref = std::make_shared<ReferenceOpts>();
  auto sw_proxy = std::make_shared<ProxyOpts>();
  auto sw_sizes = std::make_shared<std::string>("2,4,8,16");
  auto sw_runs = std::make_shared<int>(20);
  auto sw_frac = std::make_shared<double>(0.75);
  auto sw_ci_level = std::make_shared<double>(0.95);
  auto sw_ci_res = std::make_shared<int>(2000);
  add_common(*sw, *sw_common);
  sw_data->attach(*sw);
  sw_ref->attach(*sw);
  sw_proxy->attach(*sw);
  sw->add_option("--sizes", *sw_sizes, "comma list of leaf budgets");
  sw->add_option("--runs", *sw_runs, "number of train/test repetitions");
  sw->add_option("--train-fraction", *sw_frac, "train split fraction");
  sw->add_option("--ci-level", *sw_ci_level, "bootstrap CI level");
  sw->add_option("--ci-resamples", *sw_ci_res, "bootstrap resamples");
  sw->callback([=, &rc, &guard] {
    guard([&] {
      return cmd_sweep(*sw, load_config(sw_common->config), *sw_data, *sw_ref,
                       *sw_proxy, sw_common->out, *sw_sizes, *sw_runs,
                       sw_common->seed, *sw_frac, *sw_ci_level, *sw_ci_res);
    });
  });

  // stability
  auto* st = app.add_subcommand("stability", "bootstrap stability of proxy structure");
  auto st_common = std::make_shared<Common>();
  auto st_data = std::make_shared<DataOpts>();
  auto st_ref = std::make_shared<ReferenceOpts>();
  auto st_proxy = std::make_shared<ProxyOpts>();
  auto st_iters = std::make_shared<int>(10);
  auto st_approach = std::make_shared<std::string>("both");
  auto st_reuse = std::make_shared<bool>(false);
  add_common(*st, *st_common);
  st_data->attach(*st);
  st_ref->attach(*st);
  st_proxy->attach(*st);
  st->add_option("--iterations", *st_iters, "bootstrap iterations");
  st->add_option("--approach", *st_approach, "both|prior|utility");
  st->add_flag("--reuse-reference", *st_reuse,
               "reuse one reference fit across resamples");
  st->callback([=, &rc, &guard] {
    guard([&] {
      return cmd_stability(*st, load_config(st_common->config), *st_data, *st_ref,
                           *st_proxy, st_common->out, *st_iters, st_common->seed,
                           *st_approach, *st_reuse);
    });
  });

  // fidelity
  auto* fid = app.add_subcommand("fidelity", "local fidelity over the test split");
  auto fid_common = std::make_shared<Common>();
  auto fid_data = std::make_shared<DataOpts>();
  auto fid_ref = std::make_shared<ReferenceOpts>();
  auto fid_proxy = std::make_shared<ProxyOpts>();
  auto fid_nb_sd = std::make_shared<double>(1.0);
  auto fid_nb_samples = std::make_shared<long>(200);
  auto fid_frac = std::make_shared<double>(0.75);
  auto fid_max_points = std::make_shared<long>(20);
  add_common(*fid, *fid_common);
  fid_data->attach(*fid);
  fid_ref->attach(*fid);
  fid_proxy->attach(*fid);
  fid->add_option("--nb-sd", *fid_nb_sd, "neighborhood width (feature sd units)");
  fid->add_option("--nb-samples", *fid_nb_samples, "neighborhood sample count");
  fid->add_option("--train-fraction", *fid_frac, "train split fraction");
  fid->add_option("--max-test-points", *fid_max_points, "test point cap");
  fid->callback([=, &rc, &guard] {
    guard([&] {
      return cmd_fidelity(*fid, load_config(fid_common->config), *fid_data, *fid_ref,
                          *fid_proxy, fid_common->out, *fid_nb_sd, *fid_nb_samples,
                          fid_common->seed, *fid_frac, *fid_max_points);
    });
  });

  // export-dot
  auto* dot = app.add_subcommand("export-dot", "render a saved tree as graphviz DOT");
  auto dot_input = std::make_shared<std::string>();
  auto dot_output = std::make_shared<std::string>("tree.dot");
  dot->add_option("--input", *dot_input, "tree or explanation JSON")->required();
  dot->add_option("--output", *dot_output, "output DOT path");
  dot->callback([=, &rc, &guard] {
    guard([&] { return cmd_export_dot(*dot_input, *dot_output); });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return rc;
}
