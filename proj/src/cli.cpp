#include "covshift/cli.hpp"

#include <omp.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "covshift/estimators.hpp"
#include "covshift/opl.hpp"
#include "covshift/synthetic.hpp"

namespace covshift {

namespace {

using nlohmann::json;

// Reads the keys of one JSON object and rejects whatever is left over.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& target) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      target = it->template get<T>();
    } catch (const json::exception&) {
      throw ValidationError(where_ + ": key '" + key + "' has the wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ValidationError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(t.header.size()) + " fields");
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size() || c.empty() || !std::isfinite(v)) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": cannot parse '" + c + "'");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty() || t.rows.empty()) throw ValidationError(path + ": no data rows");
  return t;
}

std::unique_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto log = std::make_unique<spdlog::logger>("covshift", sink);
  log->set_pattern("[%l] %v");
  const char* env = std::getenv("COVSHIFT_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    log->set_level(spdlog::level::err);
  } else if (level == "info") {
    log->set_level(spdlog::level::info);
  } else if (level == "debug") {
    log->set_level(spdlog::level::debug);
  } else {
    throw ValidationError("COVSHIFT_LOG must be one of error, info, debug");
  }
  return log;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

std::string json_mirror_path(const std::string& csv_path) {
  const auto dot = csv_path.rfind('.');
  const auto slash = csv_path.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) return csv_path.substr(0, dot) + ".json";
  return csv_path + ".json";
}

// ---------------------------------------------------------------------------
// Subcommands

int run_evaluate(const RunConfig& c, std::ostream& out, spdlog::logger& log) {
  const HistoricalDataset hist = read_historical_csv(c.data, c.actions, c.reward_max);
  const EvaluationDataset evl = read_evaluation_csv(c.evl);
  if (evl.dim() != hist.dim()) throw ValidationError("historical and evaluation files have different covariate counts");
  Policy pi_e = uniform_policy(hist.action_count());
  if (!c.policy.empty()) {
    std::ifstream f(c.policy);
    if (!f) throw ValidationError("cannot open '" + c.policy + "'");
    json pj;
    try {
      pj = json::parse(f);
    } catch (const json::exception& e) {
      throw ValidationError(c.policy + ": " + e.what());
    }
    const SoftmaxKernelPolicy p = softmax_policy_from_json(pj);
    if (p.action_count() != hist.action_count() || p.dim() != hist.dim()) {
      throw ValidationError("policy shape does not match the data");
    }
    pi_e = as_policy(p);
  }
  log.info("evaluate: {} historical rows, {} evaluation rows, {} actions", hist.size(), evl.size(),
           hist.action_count());
  json estimates = json::object();
  for (const auto& name : c.bench.estimators) {
    const EstimateReport r = estimate_by_name(name, hist, evl, pi_e, c.bench.folds, c.bench.seed);
    estimates[name] = name.rfind("DRCS", 0) == 0 ? to_json(r) : json{{"estimate", r.estimate}};
    log.info("{}: {:.6f}", name, r.estimate);
  }
  const json doc = {{"policy", c.policy.empty() ? "uniform" : c.policy},
                    {"n_hist", hist.size()},
                    {"n_evl", evl.size()},
                    {"seed", c.bench.seed},
                    {"estimates", estimates}};
  write_text(c.out, doc.dump(2) + "\n", out);
  return 0;
}

int run_learn(const RunConfig& c, std::ostream& out, spdlog::logger& log) {
  const HistoricalDataset hist = read_historical_csv(c.data, c.actions, c.reward_max);
  const EvaluationDataset evl = read_evaluation_csv(c.evl);
  if (evl.dim() != hist.dim()) throw ValidationError("historical and evaluation files have different covariate counts");
  OplConfig oc = c.bench.opl;
  oc.folds = c.bench.folds;
  oc.seed = c.bench.seed;
  const OplEstimator kind = opl_estimator_from_string(c.learn_estimator);
  const TrainResult t = train_policy(hist, evl, oc, kind);
  log.info("learn ({}): sigma2 = {:.6g}, lambda = {:.6g}, objective = {:.6f}, iterations = {}", to_string(kind),
           t.sigma2, t.lambda, t.fit.objective, t.fit.iterations);
  write_text(c.out, to_json(t.policy).dump(2) + "\n", out);
  return 0;
}

int run_bench(const RunConfig& c, bool opl, std::ostream& out, spdlog::logger& log) {
  LibsvmOptions lo;
  lo.standardize = c.standardize;
  const LabeledDataset data = load_libsvm(c.data, lo);
  log.info("{}: {} rows, {} features, {} classes", c.data, data.size(), data.x.cols(), data.class_count);
  const auto rows = opl ? run_opl_experiment(data, c.bench) : run_ope_experiment(data, c.bench);
  for (const auto& r : rows) {
    if (r.failures > 0) log.error("{} alpha={:.2f}: {} failed replications: {}", r.estimator, r.alpha, r.failures,
                                  r.first_error);
  }
  std::ostringstream csv;
  write_csv(csv, rows, c.timestamp);
  write_text(c.out, csv.str(), out);
  if (!c.out.empty()) write_text(json_mirror_path(c.out), to_json(rows).dump(2) + "\n", out);
  for (const auto& r : rows) {
    if (r.n_reps == 0) return 2;
  }
  return 0;
}

struct Moments {
  double mean;
  double mse;
  double se;
};

Moments moments(const std::vector<double>& v, double truth) {
  double mean = 0.0, mse = 0.0;
  for (double x : v) {
    mean += x;
    mse += (x - truth) * (x - truth);
  }
  const double n = static_cast<double>(v.size());
  mean /= n;
  mse /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, mse, std::sqrt(var / (n - 1.0) / n)};
}

int run_synth_check(const RunConfig& c, std::ostream& out) {
  const TabularProblem prob = reference_problem();
  const TabularDGP& dgp = prob.dgp;
  const Policy pi_e = tabular_policy(*prob.pi_e);
  const double truth = exact_policy_value(dgp, pi_e);
  const NuisanceSet oracle = oracle_nuisances(dgp);
  std::mt19937_64 rng(c.bench.seed);
  bool all = true;
  const auto line = [&](bool ok, const std::string& name, const std::string& detail) {
    all = all && ok;
    out << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
  };
  char buf[256];

  {
    const std::size_t n = 2000;
    std::vector<double> est;
    for (int r = 0; r < 1000; ++r) {
      const SampledData d = sample_datasets(dgp, n, dgp.rho(), rng);
      est.push_back(drcs_estimate(d.hist, d.evl, pi_e, fixed_nuisances(oracle), {2, rng()}).estimate);
    }
    const double upsilon = efficiency_bound_tabular(dgp, pi_e);
    const double scaled = static_cast<double>(n) * moments(est, truth).mse;
    std::snprintf(buf, sizeof buf, "upsilon %.6f, n*MSE %.6f, ratio %.4f (n=2000, 1000 reps, within 15%%)", upsilon,
                  scaled, scaled / upsilon);
    line(std::abs(scaled / upsilon - 1.0) <= 0.15, "efficiency", buf);
  }
  {
    const TabularDGP same(dgp.p(), dgp.p(), dgp.pi_b(), dgp.f(), 0.5);
    const double a = efficiency_bound_tabular(same, pi_e), b = no_shift_bound_tabular(same, pi_e);
    std::snprintf(buf, sizeof buf, "bound %.12f, 2 x no-shift bound %.12f", a, 2.0 * b);
    line(std::abs(a - 2.0 * b) <= 1e-12, "bound reduction", buf);
  }
  {
    const NuisanceSet bad_f(oracle_ratio(dgp), oracle_behavior(dgp),
                            misspecify(oracle_outcome(dgp), Corruption::Shift, 0.3), {});
    const NuisanceSet bad_r(misspecify(oracle_ratio(dgp), Corruption::Scale, 2.0), oracle_behavior(dgp),
                            oracle_outcome(dgp), {});
    std::vector<double> ef, er;
    for (int r = 0; r < 200; ++r) {
      const SampledData d = sample_datasets(dgp, 4000, dgp.rho(), rng);
      ef.push_back(drcs_estimate(d.hist, d.evl, pi_e, fixed_nuisances(bad_f), {2, rng()}).estimate);
      er.push_back(drcs_estimate(d.hist, d.evl, pi_e, fixed_nuisances(bad_r), {2, rng()}).estimate);
    }
    const double bf = moments(ef, truth).mean - truth, br = moments(er, truth).mean - truth;
    std::snprintf(buf, sizeof buf, "bias with wrong f-hat %.4f, with wrong r-hat %.4f (limit 0.01)", bf, br);
    line(std::abs(bf) < 0.01 && std::abs(br) < 0.01, "double robustness", buf);
  }
  {
    std::vector<double> est;
    for (int r = 0; r < 4000; ++r) {
      const HistoricalDataset h = sample_historical(dgp, 500, rng);
      est.push_back(ipwcsb_estimate(*oracle_ratio(dgp), dgp.behavior_policy(), pi_e, h));
    }
    const Moments m = moments(est, truth);
    std::snprintf(buf, sizeof buf, "mean %.5f, exact %.5f, 3 SE %.5f", m.mean, truth, 3.0 * m.se);
    line(std::abs(m.mean - truth) <= 3.0 * m.se, "oracle IPWCSB unbiased", buf);
  }
  return all ? 0 : 2;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  ObjectReader r(j, "config");
  r.get("data", c.data);
  r.get("evl", c.evl);
  r.get("out", c.out);
  r.get("policy", c.policy);
  r.get("learn_estimator", c.learn_estimator);
  r.get("actions", c.actions);
  r.get("reward_max", c.reward_max);
  r.get("standardize", c.standardize);
  r.get("timestamp", c.timestamp);
  r.get("jobs", c.jobs);
  BenchConfig& b = c.bench;
  r.get("dataset", b.dataset);
  r.get("alphas", b.alphas);
  r.get("sample_size", b.sample_size);
  r.get("replications", b.replications);
  r.get("hist_fraction", b.hist_fraction);
  r.get("noise_scale", b.noise_scale);
  r.get("shift", b.shift);
  r.get("estimators", b.estimators);
  r.get("opl_estimators", b.opl_estimators);
  r.get("folds", b.folds);
  r.get("seed", b.seed);
  if (const json* lj = r.sub("logistic")) {
    ObjectReader l(*lj, "config.logistic");
    l.get("l2", b.logistic.l2);
    l.get("iterations", b.logistic.iterations);
    l.finish();
  }
  if (const json* oj = r.sub("opl")) {
    ObjectReader o(*oj, "config.opl");
    o.get("sigma2_grid", b.opl.sigma2_grid);
    o.get("lambda_grid", b.opl.lambda_grid);
    o.get("cv_folds", b.opl.cv_folds);
    o.get("max_centers", b.opl.max_centers);
    if (const json* pj = o.sub("optimizer")) {
      ObjectReader p(*pj, "config.opl.optimizer");
      p.get("max_iterations", b.opl.optimizer.max_iterations);
      p.get("tolerance", b.opl.optimizer.tolerance);
      p.get("step", b.opl.optimizer.step);
      p.get("fixed_step", b.opl.optimizer.fixed_step);
      p.get("armijo", b.opl.optimizer.armijo);
      p.finish();
    }
    o.finish();
  }
  r.finish();
  validate(b);
  opl_estimator_from_string(c.learn_estimator);
  if (c.actions < 0) throw ValidationError("config: actions must be >= 0");
  if (!(c.reward_max > 0.0)) throw ValidationError("config: reward_max must be positive");
  if (c.jobs < 0) throw ValidationError("config: jobs must be >= 0");
  return c;
}

HistoricalDataset read_historical_csv(const std::string& path, int action_count, double reward_max) {
  const CsvTable t = read_csv(path);
  std::ptrdiff_t ai = -1, ri = -1;
  std::vector<std::size_t> cov;
  for (std::size_t k = 0; k < t.header.size(); ++k) {
    if (t.header[k] == "action") {
      ai = static_cast<std::ptrdiff_t>(k);
    } else if (t.header[k] == "reward") {
      ri = static_cast<std::ptrdiff_t>(k);
    } else {
      cov.push_back(k);
    }
  }
  if (ai < 0 || ri < 0) throw ValidationError(path + ": needs 'action' and 'reward' columns");
  if (cov.empty()) throw ValidationError(path + ": no covariate columns");
  Matrix x(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cov.size()));
  std::vector<int> a;
  std::vector<double> y;
  int max_action = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t k = 0; k < cov.size(); ++k) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = t.rows[i][cov[k]];
    }
    const double av = t.rows[i][static_cast<std::size_t>(ai)];
    if (av < 0 || av != std::floor(av)) throw ValidationError(path + ": actions must be non-negative integers");
    a.push_back(static_cast<int>(av));
    max_action = std::max(max_action, a.back());
    y.push_back(t.rows[i][static_cast<std::size_t>(ri)]);
  }
  return HistoricalDataset(std::move(x), std::move(a), std::move(y), action_count > 0 ? action_count : max_action + 1,
                           reward_max);
}

EvaluationDataset read_evaluation_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  for (const auto& h : t.header) {
    if (h == "action" || h == "reward") throw ValidationError(path + ": evaluation file has a '" + h + "' column");
  }
  Matrix z(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t k = 0; k < t.header.size(); ++k) {
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = t.rows[i][k];
    }
  }
  return EvaluationDataset(std::move(z));
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Off-policy evaluation and learning under covariate shift", "covshift"};
  app.require_subcommand(1);
  std::string config_path, data, evl, out_path, policy, estimator;
  std::uint64_t seed = 0;
  int jobs = 0;
  bool no_timestamp = false;

  const auto add_common = [&](CLI::App* s, bool needs_data) {
    s->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    auto* d = s->add_option("--data", data, needs_data ? "input data file" : "unused");
    if (needs_data) d->required();
    s->add_option("--out", out_path, "output path (default: stdout)");
    s->add_option("--seed", seed, "random seed");
    s->add_option("--jobs", jobs, "worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
    s->add_flag("--no-timestamp", no_timestamp, "omit the timestamp line from CSV output");
  };
  CLI::App* ev = app.add_subcommand("evaluate", "estimate a policy's value from historical and evaluation CSV files");
  add_common(ev, true);
  ev->add_option("--evl", evl, "evaluation covariates CSV")->required();
  ev->add_option("--policy", policy, "softmax policy JSON (default: uniform)");
  CLI::App* le = app.add_subcommand("learn", "train a softmax kernel policy and write it as JSON");
  add_common(le, true);
  le->add_option("--evl", evl, "evaluation covariates CSV")->required();
  le->add_option("--estimator", estimator, "DRCS, IPWCS or DM");
  CLI::App* bo = app.add_subcommand("bench-ope", "OPE table on a libsvm classification dataset");
  add_common(bo, true);
  CLI::App* bl = app.add_subcommand("bench-opl", "OPL table on a libsvm classification dataset");
  add_common(bl, true);
  CLI::App* sc = app.add_subcommand("synth-check", "oracle checks on the reference tabular problem");
  add_common(sc, false);

  std::vector<const char*> argv{"covshift"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    err << app.help();
    return 1;
  }

  try {
    const auto log = make_logger(err);
    RunConfig c;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      json j;
      try {
        j = json::parse(f);
      } catch (const json::exception& e) {
        throw ValidationError(config_path + ": " + e.what());
      }
      c = run_config_from_json(j);
    }
    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--data")) c.data = data;
    if (sub->count("--out")) c.out = out_path;
    if (sub->count("--seed")) c.bench.seed = seed;
    if (sub->count("--jobs")) c.jobs = jobs;
    if (no_timestamp) c.timestamp = false;
    if (sub == ev || sub == le) c.evl = evl;
    if (sub == ev && ev->count("--policy")) c.policy = policy;
    if (sub == le && le->count("--estimator")) {
      opl_estimator_from_string(estimator);
      c.learn_estimator = estimator;
    }
    if (c.jobs > 0) omp_set_num_threads(c.jobs);
    log->debug("seed {}, jobs {}", c.bench.seed, c.jobs);

    if (sub == ev) return run_evaluate(c, out, *log);
    if (sub == le) return run_learn(c, out, *log);
    if (sub == bo) return run_bench(c, false, out, *log);
    if (sub == bl) return run_bench(c, true, out, *log);
    return run_synth_check(c, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace covshift
