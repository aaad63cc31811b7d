#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mfbo/mfhoo.hpp"
#include "mfbo/mfpoo.hpp"
#include "mfbo/objective.hpp"
#include "mfbo/subprocess.hpp"

namespace mfbo {

struct ExperimentConfig {
  std::string function;  // currin | hartmann3 | hartmann6 | branin | subprocess
  std::string algo;      // mfhoo | mfpoo | hoo | poo
  std::vector<double> budgets;
  std::vector<std::uint64_t> seeds;
  std::optional<double> sigma;   // overrides the function's default noise scale
  double rho_max = 0.95;
  std::optional<double> nu_max;  // empty = "auto" (from the bias estimator when one runs)
  bool known_bias = false;
  double bias_c = 1.0;
  RecommendationMode recommendation = RecommendationMode::kPractical;
  std::string out_dir = "results";
  int threads = 1;
  bool full_tree_refresh = false;
  bool parallel_instances = false;

  // subprocess objective
  std::string command;
  std::vector<Interval> sub_domain;
  double cost_base = 1.0, cost_scale = 0.0, cost_power = 1.0;  // lambda(z) = base + scale * z^power
  double timeout_s = 3600.0;

  bool is_subprocess() const { return function == "subprocess"; }

  void validate() const {
    static const std::vector<std::string> functions = {"currin", "hartmann3", "hartmann6", "branin",
                                                       "subprocess"};
    static const std::vector<std::string> algos = {"mfhoo", "mfpoo", "hoo", "poo"};
    if (std::find(functions.begin(), functions.end(), function) == functions.end()) {
      throw std::invalid_argument("config: unknown function '" + function + "'");
    }
    if (std::find(algos.begin(), algos.end(), algo) == algos.end()) {
      throw std::invalid_argument("config: unknown algo '" + algo + "'");
    }
    if (budgets.empty()) throw std::invalid_argument("config: budgets must be non-empty");
    for (std::size_t i = 0; i < budgets.size(); ++i) {
      if (!(budgets[i] > 0.0)) throw std::invalid_argument("config: budgets must be positive");
      if (i > 0 && budgets[i] <= budgets[i - 1]) {
        throw std::invalid_argument("config: budgets must be strictly ascending");
      }
    }
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      for (std::size_t j = i + 1; j < seeds.size(); ++j) {
        if (seeds[i] == seeds[j]) throw std::invalid_argument("config: seeds must be distinct");
      }
    }
    if (!(rho_max > 0.0 && rho_max < 1.0)) throw std::invalid_argument("config: rho_max must be in (0, 1)");
    if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
    if (is_subprocess()) {
      if (command.empty()) throw std::invalid_argument("config: subprocess objective needs a command");
      if (sub_domain.empty()) throw std::invalid_argument("config: subprocess objective needs a domain");
      if (threads != 1 || parallel_instances) {
        throw std::invalid_argument("config: subprocess objective requires sequential execution");
      }
    }
  }
};

namespace detail_config {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

inline double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad numeric value for '" + key + "': " + value);
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("config: bad boolean value for '" + key + "': " + value);
}

}  // namespace detail_config

/// Applies one `key = value` setting. Lists are comma-separated; the
/// subprocess domain is `lo:hi` pairs per coordinate.
inline void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using detail_config::parse_bool;
  using detail_config::parse_real;
  using detail_config::split_list;
  if (key == "function") {
    cfg.function = value;
  } else if (key == "algo") {
    cfg.algo = value;
  } else if (key == "budgets") {
    cfg.budgets.clear();
    for (const auto& item : split_list(value)) cfg.budgets.push_back(parse_real(key, item));
  } else if (key == "seeds") {
    cfg.seeds.clear();
    for (const auto& item : split_list(value)) {
      cfg.seeds.push_back(static_cast<std::uint64_t>(std::strtoull(item.c_str(), nullptr, 10)));
    }
  } else if (key == "sigma") {
    cfg.sigma = parse_real(key, value);
  } else if (key == "rho_max") {
    cfg.rho_max = parse_real(key, value);
  } else if (key == "nu_max") {
    if (value == "auto") {
      cfg.nu_max.reset();
    } else {
      cfg.nu_max = parse_real(key, value);
    }
  } else if (key == "known_bias") {
    cfg.known_bias = parse_bool(key, value);
  } else if (key == "bias_c") {
    cfg.bias_c = parse_real(key, value);
  } else if (key == "recommendation") {
    if (value == "practical") {
      cfg.recommendation = RecommendationMode::kPractical;
    } else if (value == "theoretical") {
      cfg.recommendation = RecommendationMode::kTheoretical;
    } else {
      throw std::invalid_argument("config: recommendation must be practical or theoretical");
    }
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "threads") {
    cfg.threads = static_cast<int>(parse_real(key, value));
  } else if (key == "full_tree_refresh") {
    cfg.full_tree_refresh = parse_bool(key, value);
  } else if (key == "parallel_instances") {
    cfg.parallel_instances = parse_bool(key, value);
  } else if (key == "command") {
    cfg.command = value;
  } else if (key == "domain") {
    cfg.sub_domain.clear();
    for (const auto& item : split_list(value)) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw std::invalid_argument("config: domain entries are lo:hi");
      cfg.sub_domain.push_back(Interval{parse_real(key, item.substr(0, colon)),
                                        parse_real(key, item.substr(colon + 1))});
    }
  } else if (key == "cost") {
    const auto parts = split_list(value);
    if (parts.size() != 3) throw std::invalid_argument("config: cost takes base,scale,power");
    cfg.cost_base = parse_real(key, parts[0]);
    cfg.cost_scale = parse_real(key, parts[1]);
    cfg.cost_power = parse_real(key, parts[2]);
  } else if (key == "timeout_s") {
    cfg.timeout_s = parse_real(key, value);
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

/// Flat `key = value` config text; '#' starts a comment.
inline ExperimentConfig parse_config_text(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail_config::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(line_no) + " is not key = value");
    }
    set_config_key(cfg, detail_config::trim(line.substr(0, eq)), detail_config::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  return parse_config_text(in);
}

struct RegretRow {
  std::string algo;
  std::string function;
  double budget = 0.0;
  std::uint64_t seed = 0;
  double simple_regret = std::numeric_limits<double>::quiet_NaN();
  std::int64_t n_evals = 0;
  double cost_spent = 0.0;
  double wall_time_s = 0.0;
  bool failed = false;
  bool config_failure = false;
  std::string error;
};

struct BudgetAggregate {
  double budget = 0.0;
  double mean_regret = 0.0;
  double stderr_regret = 0.0;
  int runs = 0;
};

struct ExperimentResult {
  std::vector<RegretRow> rows;
  std::vector<BudgetAggregate> aggregates;
  int exit_code = 0;  // 0 ok, 1 configuration error, 2 objective/protocol failure
};

namespace detail_harness {

inline std::string fmt(double v, const char* format = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

struct LogEntry {
  int depth = -1;
  std::string index = "0";  // probes and confirmation queries carry h=-1, i=0
  std::vector<double> x;
  double z = 1.0, y = 0.0, cost = 0.0;
};

inline std::string log_line(std::int64_t t, const LogEntry& e) {
  std::string s = "{\"t\":" + std::to_string(t) + ",\"h\":" + std::to_string(e.depth) + ",\"i\":" + e.index +
                  ",\"x\":[";
  for (std::size_t k = 0; k < e.x.size(); ++k) {
    if (k > 0) s.push_back(',');
    s += fmt(e.x[k]);
  }
  s += "],\"z\":" + fmt(e.z) + ",\"y\":" + fmt(e.y) + ",\"cost\":" + fmt(e.cost) + "}";
  return s;
}

inline void append_record(std::vector<LogEntry>& log, const EvalRecord& r) {
  log.push_back(LogEntry{r.cell.depth(), r.cell.index_decimal(), r.x, r.z, r.y, r.cost});
}

inline void append_observation(std::vector<LogEntry>& log, const Observation& o, double charged) {
  log.push_back(LogEntry{-1, "0", o.x, o.z, o.y, charged});
}

inline std::string runlog_name(const ExperimentConfig& cfg, double budget, std::uint64_t seed) {
  return "runlog_" + cfg.algo + "_" + cfg.function + "_b" + fmt(budget, "%.12g") + "_s" +
         std::to_string(seed) + ".jsonl";
}

inline std::unique_ptr<MultiFidelityObjective> build_objective(const ExperimentConfig& cfg) {
  if (cfg.is_subprocess()) {
    return std::make_unique<SubprocessObjective>(
        cfg.command, BoxDomain(cfg.sub_domain),
        CostFunction::poly(cfg.cost_base, cfg.cost_scale, cfg.cost_power), cfg.sigma.value_or(0.0),
        cfg.timeout_s);
  }
  AnalyticObjective base = make_synthetic(cfg.function);
  const double sigma = cfg.sigma.value_or(base.sigma());
  return std::make_unique<AnalyticObjective>(base.domain(), [base](std::span<const double> x, double z) {
    return *base.mean(x, z);
  }, CostFunction([base](double z) { return base.cost(z); }), sigma, base.optimum());
}

}  // namespace detail_harness

/// Per-budget mean and standard error (sample stddev / sqrt(k); zero for a
/// single run). Failed rows are excluded.
inline std::vector<BudgetAggregate> aggregate(const std::vector<RegretRow>& rows) {
  std::vector<BudgetAggregate> out;
  std::vector<double> budgets;
  for (const RegretRow& r : rows) {
    if (std::find(budgets.begin(), budgets.end(), r.budget) == budgets.end()) budgets.push_back(r.budget);
  }
  std::sort(budgets.begin(), budgets.end());
  for (double b : budgets) {
    BudgetAggregate agg;
    agg.budget = b;
    double sum = 0.0;
    for (const RegretRow& r : rows) {
      if (r.budget == b && !r.failed) {
        sum += r.simple_regret;
        ++agg.runs;
      }
    }
    if (agg.runs == 0) continue;
    agg.mean_regret = sum / agg.runs;
    if (agg.runs > 1) {
      double ss = 0.0;
      for (const RegretRow& r : rows) {
        if (r.budget == b && !r.failed) {
          const double d = r.simple_regret - agg.mean_regret;
          ss += d * d;
        }
      }
      agg.stderr_regret = std::sqrt(ss / (agg.runs - 1)) / std::sqrt(static_cast<double>(agg.runs));
    }
    out.push_back(agg);
  }
  return out;
}

/// Results CSV with the fixed column order
/// algo,function,budget,seed,simple_regret,n_evals,cost_spent,wall_time_s.
inline void write_results_csv(const std::vector<RegretRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "algo,function,budget,seed,simple_regret,n_evals,cost_spent,wall_time_s\n";
  for (const RegretRow& r : rows) {
    out << r.algo << ',' << r.function << ',' << detail_harness::fmt(r.budget, "%.12g") << ',' << r.seed
        << ',' << detail_harness::fmt(r.simple_regret, "%.12g") << ',' << r.n_evals << ','
        << detail_harness::fmt(r.cost_spent, "%.12g") << ',' << detail_harness::fmt(r.wall_time_s, "%.6f")
        << '\n';
  }
}

/// Plot-ready budget-vs-regret table: budget,mean_regret,stderr,runs.
inline void emit_plot_data(const std::vector<BudgetAggregate>& aggregates, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "budget,mean_regret,stderr,runs\n";
  for (const BudgetAggregate& a : aggregates) {
    out << detail_harness::fmt(a.budget, "%.12g") << ',' << detail_harness::fmt(a.mean_regret, "%.12g")
        << ',' << detail_harness::fmt(a.stderr_regret, "%.12g") << ',' << a.runs << '\n';
  }
}

namespace detail_harness {

struct RunOutcome {
  RegretRow row;
  double score = std::numeric_limits<double>::quiet_NaN();  // pooled-reference score (subprocess runs)
};

inline RunOutcome execute_run(const ExperimentConfig& cfg, double budget, std::uint64_t seed) {
  RunOutcome out;
  RegretRow& row = out.row;
  row.algo = cfg.algo;
  row.function = cfg.function;
  row.budget = budget;
  row.seed = seed;

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<LogEntry> log;
  std::vector<double> recommended_x;
  double pooled_score = std::numeric_limits<double>::quiet_NaN();
  std::unique_ptr<MultiFidelityObjective> objective;
  try {
    objective = build_objective(cfg);
    if (cfg.algo == "mfpoo" || cfg.algo == "poo") {
      MfpooConfig mc;
      mc.rho_max = cfg.rho_max;
      mc.sigma = cfg.sigma.value_or(objective->sigma());
      mc.budget = budget;
      mc.seed = seed;
      mc.parallel = cfg.parallel_instances;
      mc.full_tree_refresh = cfg.full_tree_refresh;
      mc.recommendation = cfg.recommendation;
      if (cfg.algo == "poo") {
        mc.nu_max = cfg.nu_max.value_or(1.0);
      } else if (cfg.known_bias) {
        mc.bias_known = true;
        mc.known_bias = BiasModel::linear(cfg.bias_c);
        mc.nu_max = cfg.nu_max.value_or(1.0);
      } else if (cfg.nu_max) {
        mc.nu_max = *cfg.nu_max;
      } else {
        mc.auto_nu = true;
      }
      const MfpooResult res =
          cfg.algo == "poo" ? run_poo_baseline(mc, *objective) : run_mfpoo(mc, *objective);
      for (const Observation& o : res.estimator_probes) append_observation(log, o, o.cost);
      for (const InstanceOutcome& inst : res.instances) {
        for (const EvalRecord& r : inst.result.evaluations) append_record(log, r);
      }
      if (res.aborted) throw EvaluationError(res.error);
      for (const InstanceOutcome& inst : res.instances) {
        append_observation(log, inst.final_evaluation, inst.final_evaluation.cost);
      }
      row.cost_spent = res.total_charged;
      recommended_x = res.recommended_x;
      pooled_score = res.recommended_value;
    } else {
      MfhooConfig hc;
      hc.rho = cfg.rho_max;
      hc.sigma = cfg.sigma.value_or(objective->sigma());
      hc.seed = seed;
      hc.recommendation = cfg.recommendation;
      hc.full_tree_refresh = cfg.full_tree_refresh;
      double estimator_spent = 0.0;
      std::optional<BiasEstimator> estimator;
      Rng master(seed);
      if (cfg.algo == "hoo") {
        hc.bias = BiasRef::known(BiasModel::zero());
        hc.nu = cfg.nu_max.value_or(1.0);
      } else if (cfg.known_bias) {
        hc.bias = BiasRef::known(BiasModel::linear(cfg.bias_c));
        hc.nu = cfg.nu_max.value_or(1.0);
      } else {
        const double probe_cost = objective->cost(0.2) + objective->cost(0.8);
        if (budget <= probe_cost) throw std::invalid_argument("budget cannot cover bias estimator probes");
        const auto& bounds = objective->domain().bounds();
        std::vector<double> probe_x(bounds.size());
        for (std::size_t k = 0; k < bounds.size(); ++k) probe_x[k] = master.uniform(bounds[k].lo, bounds[k].hi);
        const Observation hi = objective->evaluate(probe_x, 0.8, master);
        const Observation lo = objective->evaluate(probe_x, 0.2, master);
        estimator.emplace(2.0 * std::abs(hi.y - lo.y) / std::abs(0.8 - 0.2), hi.cost + lo.cost);
        append_observation(log, hi, hi.cost);
        append_observation(log, lo, lo.cost);
        estimator_spent = estimator->spent();
        hc.bias = BiasRef::live(&*estimator);
        hc.nu = cfg.nu_max.value_or(estimator->nu_max());
      }
      hc.budget = budget - estimator_spent;
      hc.seed = master.derive(0).seed();
      Mfhoo search(hc, *objective);
      const RunResult res = search.run();
      for (const EvalRecord& r : res.evaluations) append_record(log, r);
      if (res.aborted) throw EvaluationError(res.error);
      row.cost_spent = estimator_spent + res.total_cost;
      recommended_x = res.recommended_x;
      pooled_score = res.recommended_score;
    }

    if (!cfg.is_subprocess()) {
      const auto opt = objective->optimum();
      const auto value = objective->mean(recommended_x, 1.0);
      row.simple_regret = opt->value - *value;
    } else {
      out.score = pooled_score;  // regret filled in against the pooled reference
    }
    row.n_evals = static_cast<std::int64_t>(log.size());
  } catch (const EvaluationError& e) {
    row.failed = true;
    row.error = e.what();
    row.n_evals = static_cast<std::int64_t>(log.size());
  } catch (const std::invalid_argument& e) {
    row.failed = true;
    row.config_failure = true;
    row.error = e.what();
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = e.what();
    row.n_evals = static_cast<std::int64_t>(log.size());
  }
  row.wall_time_s =
      std::chrono::duration_cast<std::chrono::duration<double>>(std::chrono::steady_clock::now() - t0)
          .count();

  // Persist the (possibly partial) evaluation log.
  std::filesystem::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/" + runlog_name(cfg, budget, seed);
  std::ofstream lf(path, std::ios::binary);
  std::int64_t t = 0;
  for (const LogEntry& e : log) lf << log_line(++t, e) << '\n';
  return out;
}

}  // namespace detail_harness

/// Runs the full (budget x seed) grid, persists per-run logs, the results
/// CSV, and the plot table. Row order is (budget, seed) regardless of the
/// worker pool's completion order. Failed runs are recorded in their row and
/// the remaining runs continue.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);

  struct Task {
    double budget;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (double b : cfg.budgets) {
    for (std::uint64_t s : cfg.seeds) tasks.push_back(Task{b, s});
  }
  std::vector<detail_harness::RunOutcome> outcomes(tasks.size());

  const int workers = std::min<int>(cfg.threads, static_cast<int>(tasks.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      outcomes[i] = detail_harness::execute_run(cfg, tasks[i].budget, tasks[i].seed);
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        outcomes[i] = detail_harness::execute_run(cfg, tasks[i].budget, tasks[i].seed);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  ExperimentResult result;
  if (cfg.is_subprocess()) {
    // No ground-truth optimum: score runs against the best value any run found.
    double reference = -kInf;
    for (const auto& o : outcomes) {
      if (!o.row.failed && std::isfinite(o.score)) reference = std::max(reference, o.score);
    }
    for (auto& o : outcomes) {
      if (!o.row.failed && std::isfinite(o.score)) o.row.simple_regret = reference - o.score;
    }
  }
  for (auto& o : outcomes) result.rows.push_back(std::move(o.row));
  result.aggregates = aggregate(result.rows);

  write_results_csv(result.rows, cfg.out_dir + "/results.csv");
  emit_plot_data(result.aggregates, cfg.out_dir + "/plot.csv");

  for (const RegretRow& r : result.rows) {
    if (r.failed && !r.config_failure) result.exit_code = 2;
  }
  if (result.exit_code == 0) {
    for (const RegretRow& r : result.rows) {
      if (r.config_failure) result.exit_code = 1;
    }
  }
  return result;
}

}  // namespace mfbo
