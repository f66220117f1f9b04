#pragma once

// Command-line front end: `covshift <subcommand> [flags]`.

#include <iosfwd>
#include <string>
#include <vector>

#include "covshift/bench.hpp"
#include "json.hpp"

namespace covshift {

/// Everything a run can be configured with. JSON keys mirror the field names;
/// BenchConfig fields sit at the top level, OplConfig under "opl".
struct RunConfig {
  std::string data;
  std::string evl;
  std::string out;
  /// Softmax policy JSON for `evaluate`; empty means the uniform policy.
  std::string policy;
  std::string learn_estimator = "DRCS";
  /// Action count for CSV input; 0 infers max action + 1.
  int actions = 0;
  double reward_max = 1.0;
  bool standardize = true;
  bool timestamp = true;
  /// OpenMP threads; 0 keeps the runtime default.
  int jobs = 0;
  BenchConfig bench;
};

/// Throws ValidationError on unknown keys, wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Historical CSV: header row, covariate columns, plus "action" (0-based) and
/// "reward" columns anywhere.
HistoricalDataset read_historical_csv(const std::string& path, int action_count = 0, double reward_max = 1.0);
/// Evaluation CSV: header row, covariate columns only.
EvaluationDataset read_evaluation_csv(const std::string& path);

/// Runs one command; args excludes the program name. Exit codes: 0 success,
/// 1 invalid input or flags, 2 runtime failure or a failed check.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace covshift
