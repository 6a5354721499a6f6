// Command line front end: dataset generation, training, influence updates,
// evaluation and the full experiment protocols.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ifdfm/config.hpp"
#include "ifdfm/data.hpp"
#include "ifdfm/error.hpp"
#include "ifdfm/harness.hpp"
#include "ifdfm/influence.hpp"
#include "ifdfm/model.hpp"
#include "ifdfm/rng.hpp"
#include "ifdfm/solvers.hpp"

namespace fs = std::filesystem;
using namespace ifdfm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

// Config file plus per-key overrides shared by every subcommand.
struct CommonOptions {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const auto& [key, value] : overrides) {
      set_config_value(cfg, key, value);
    }
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("-c,--config", common.config_path, "key = value config file")
      ->check(CLI::ExistingFile);
  for (const ConfigKey& key : config_keys()) {
    const std::string name = key.name;
    cmd->add_option_function<std::string>(
           "--" + name,
           [&common, name](const std::string& v) {
             common.overrides.emplace_back(name, v);
           },
           key.help)
        ->group("Config overrides");
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string fmt(const std::optional<double>& v) {
  return v ? fmt(*v) : std::string("-");
}

void print_table(const EvalReport& report) {
  std::cout << report.protocol << " | train " << report.data.n_train
            << " valid " << report.data.n_valid << " test "
            << report.data.n_test << " | |J| " << report.data.n_reversed
            << " |K| " << report.data.n_arrivals << " | seeds "
            << report.per_seed.size() << "\n";
  std::cout << std::left << std::setw(14) << "method" << std::setw(9) << "AUC"
            << std::setw(9) << "PRAUC" << std::setw(9) << "LogLoss"
            << std::setw(9) << "RI-AUC" << std::setw(9) << "RI-PR"
            << std::setw(9) << "RI-LL" << "time(s)\n";
  for (const auto& [name, m] : report.mean) {
    std::cout << std::left << std::setw(14) << name << std::setw(9)
              << fmt(m.auc) << std::setw(9) << fmt(m.prauc) << std::setw(9)
              << fmt(m.log_loss) << std::setw(9) << fmt(m.ri_auc)
              << std::setw(9) << fmt(m.ri_prauc) << std::setw(9)
              << fmt(m.ri_ll) << fmt(m.wall_time, 2) << "\n";
  }
}

void save_report(const EvalReport& report, const fs::path& dir) {
  write_file(dir / (report.protocol + ".json"), to_json(report) + "\n");
  std::ostringstream csv;
  write_csv(csv, report);
  write_file(dir / (report.protocol + ".csv"), csv.str());
  std::cout << "wrote " << (dir / (report.protocol + ".json")).string()
            << " and " << (dir / (report.protocol + ".csv")).string() << "\n";
}

const Dataset& split_by_name(const Prepared& prep, const std::string& name) {
  if (name == "train") return prep.split.train;
  if (name == "valid") return prep.split.valid;
  if (name == "test") return prep.split.test;
  throw ConfigError("unknown split '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Influence-function updates for delayed-feedback CVR models"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* generate = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(generate, common);
  std::string gen_out;
  generate->add_option("-o,--out", gen_out, "output CSV")->required();

  auto* train_cmd =
      app.add_subcommand("train", "train one method and save its checkpoint");
  add_common(train_cmd, common);
  std::string train_method_name = "vanilla";
  std::string train_out;
  std::string train_history;
  std::uint64_t train_seed = 0;
  bool train_with_arrivals = false;
  train_cmd->add_option("-m,--method", train_method_name)
      ->check(CLI::IsMember({"vanilla", "retrain", "oracle"}));
  train_cmd->add_option("-o,--out", train_out, "checkpoint path")->required();
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--history", train_history, "per-epoch CSV log");
  train_cmd->add_flag("--with-arrivals", train_with_arrivals,
                      "also train on the arrival pool (online retrain)");

  auto* update_cmd = app.add_subcommand(
      "update", "apply the influence update to a vanilla checkpoint");
  add_common(update_cmd, common);
  std::string update_in;
  std::string update_out;
  std::string update_report;
  std::string update_delta;
  std::uint64_t update_seed = 0;
  update_cmd->add_option("-i,--checkpoint", update_in)
      ->required()
      ->check(CLI::ExistingFile);
  update_cmd->add_option("-o,--out", update_out, "updated checkpoint")
      ->required();
  update_cmd->add_option("--report", update_report, "UpdateReport JSON path");
  update_cmd->add_option("--delta", update_delta,
                         "store the parameter change as a checkpoint");
  update_cmd->add_option("--seed", update_seed, "solver seed");

  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "score a checkpoint on a split");
  add_common(evaluate_cmd, common);
  std::string eval_in;
  std::string eval_split = "test";
  evaluate_cmd->add_option("-i,--checkpoint", eval_in)
      ->required()
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--split", eval_split)
      ->check(CLI::IsMember({"train", "valid", "test"}));

  auto* offline_cmd =
      app.add_subcommand("offline", "offline protocol over all seeds");
  add_common(offline_cmd, common);
  auto* online_cmd = app.add_subcommand("online", "online protocol");
  add_common(online_cmd, common);
  auto* timing_cmd =
      app.add_subcommand("timing", "update versus training wall time");
  add_common(timing_cmd, common);

  auto* compare_cmd = app.add_subcommand(
      "compare-solvers", "residual traces of cg, neumann and sq on one system");
  add_common(compare_cmd, common);
  std::string compare_in;
  compare_cmd->add_option("-i,--checkpoint", compare_in,
                          "vanilla checkpoint; trained when omitted")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const ExperimentConfig cfg = common.resolve();

    if (generate->parsed()) {
      const Dataset data = load_dataset(cfg);
      save_csv(data, gen_out);
      std::cout << "wrote " << data.size() << " samples to " << gen_out << "\n";
    } else if (train_cmd->parsed()) {
      const Prepared prep = prepare(cfg);
      const MethodRun run = train_method(cfg, prep, train_method_name,
                                         train_seed, train_with_arrivals);
      save_checkpoint(train_out, prep.spec, run.params);
      if (!train_history.empty()) write_history_csv(train_history, run.history);
      std::cout << train_method_name << ": " << run.epochs << " epochs, "
                << fmt(run.wall_time, 2) << " s -> " << train_out << "\n";
    } else if (update_cmd->parsed()) {
      const Prepared prep = prepare(cfg);
      const Checkpoint ckpt = load_checkpoint(update_in, prep.spec);
      const UpdateReport report =
          run_update(cfg, prep, ckpt.params, cfg.include_delay,
                     cfg.include_add, update_seed);
      save_checkpoint(update_out, prep.spec, apply_update(ckpt.params, report));
      if (!update_delta.empty()) {
        save_checkpoint(update_delta, prep.spec, report.delta);
      }
      const std::string json = to_json(report);
      if (!update_report.empty()) write_file(update_report, json + "\n");
      std::cout << json << "\n";
    } else if (evaluate_cmd->parsed()) {
      const Prepared prep = prepare(cfg);
      const Checkpoint ckpt = load_checkpoint(eval_in, prep.spec);
      const MethodMetrics m =
          evaluate_params(prep.spec, ckpt.params, split_by_name(prep, eval_split));
      nlohmann::json j = {{"split", eval_split},
                          {"auc", m.auc},
                          {"prauc", m.prauc},
                          {"log_loss", m.log_loss}};
      std::cout << j.dump(2) << "\n";
    } else if (offline_cmd->parsed() || online_cmd->parsed()) {
      const EvalReport report =
          offline_cmd->parsed() ? run_offline(cfg) : run_online(cfg);
      print_table(report);
      save_report(report, cfg.output_dir);
    } else if (timing_cmd->parsed()) {
      const TimingReport report = run_timing(cfg);
      std::cout << std::left << std::setw(10) << "n" << std::setw(12)
                << "vanilla(s)" << std::setw(12) << "retrain(s)"
                << std::setw(12) << "update(s)" << "ratio\n";
      for (const TimingRow& r : report.rows) {
        std::cout << std::left << std::setw(10) << r.n << std::setw(12)
                  << fmt(r.vanilla_seconds, 2) << std::setw(12)
                  << fmt(r.retrain_seconds, 2) << std::setw(12)
                  << fmt(r.update_seconds, 2) << fmt(r.ratio) << "\n";
      }
      const fs::path path = cfg.output_dir / "timing.json";
      write_file(path, to_json(report) + "\n");
      std::cout << "wrote " << path.string() << "\n";
    } else if (compare_cmd->parsed()) {
      const Prepared prep = prepare(cfg);
      const std::uint64_t seed = cfg.seeds.front();
      const ParamVector theta =
          compare_in.empty()
              ? train_method(cfg, prep, "vanilla", seed).params
              : load_checkpoint(compare_in, prep.spec).params;
      InfluenceRequest request;
      request.cutoff = cfg.t;
      request.reversed = prep.reversed;
      request.arrivals = prep.arrivals.data;
      request.arrival_labels = prep.arrivals.labels;
      request.include_delay = cfg.include_delay;
      request.include_add = cfg.include_add;
      request.lambda = cfg.lambda;
      const InfluenceRhs rhs =
          build_rhs(prep.spec, theta, prep.split.train, request);
      const DampedHessianOperator op(
          prep.spec, theta, prep.split.train.features(),
          labels(prep.split.train, ObservedView{cfg.t}), cfg.lambda);
      std::ostringstream csv;
      bool header = true;
      for (SolverKind kind :
           {SolverKind::kConjugateGradient, SolverKind::kNeumann,
            SolverKind::kStochasticQuadratic}) {
        SolverConfig sc = cfg.solver;
        sc.kind = kind;
        sc.seed = derive_seed(seed, 0x534f4c56);
        const SolveResult r = solve(op, rhs.b, sc);
        std::ostringstream part;
        write_trace_csv(part, solver_name(kind), r.trace);
        std::string text = part.str();
        if (!header) text = text.substr(text.find('\n') + 1);
        header = false;
        csv << text;
        std::cout << std::left << std::setw(9) << solver_name(kind)
                  << "iters " << std::setw(6) << r.iterations << "residual "
                  << r.residual_rel << (r.converged ? "" : " (not converged)")
                  << "\n";
      }
      const fs::path path = cfg.output_dir / "solver_traces.csv";
      write_file(path, csv.str());
      std::cout << "wrote " << path.string() << "\n";
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}
