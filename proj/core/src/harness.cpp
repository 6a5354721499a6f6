#include "ifdfm/harness.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "ifdfm/error.hpp"
#include "ifdfm/rng.hpp"

namespace ifdfm {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

constexpr std::uint64_t kHessianStream = 0x48455353;
constexpr std::uint64_t kSolverStream = 0x534f4c56;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs `f`, prefixing any library error with the pipeline stage. The error
// category is kept so callers can still map it to an exit code.
template <typename F>
auto staged(std::string_view stage, F&& f) -> decltype(f()) {
  const std::string prefix = std::string(stage) + ": ";
  try {
    return f();
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const InvariantViolation& e) {
    throw InvariantViolation(prefix + e.what());
  } catch (const ParseError& e) {
    throw ParseError(prefix + e.what(), 0);
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  }
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

UpdateSummary summarize(const UpdateReport& r) {
  return UpdateSummary{r.delta.norm(), r.residual_rel, r.solver_iters,
                       r.converged, r.wall_time};
}

DataSummary summarize(const ExperimentConfig& cfg, const Prepared& prep) {
  DataSummary s;
  s.n_total = prep.data.size();
  s.n_train = prep.split.train.size();
  s.n_valid = prep.split.valid.size();
  s.n_test = prep.split.test.size();
  s.n_reversed = static_cast<Index>(prep.reversed.size());
  s.n_arrivals = prep.arrivals.data.size();
  s.train_observed_cvr = mean_of(labels(prep.split.train, ObservedView{cfg.t}));
  s.test_cvr = mean_of(labels(prep.split.test, OracleView{}));
  return s;
}

void aggregate(EvalReport& report) {
  std::map<std::string, std::vector<const MethodMetrics*>> by_method;
  for (const auto& seed : report.per_seed) {
    for (const auto& [name, m] : seed.methods) by_method[name].push_back(&m);
  }
  for (const auto& [name, runs] : by_method) {
    std::vector<double> a, p, l, w;
    for (const MethodMetrics* m : runs) {
      a.push_back(m->auc);
      p.push_back(m->prauc);
      l.push_back(m->log_loss);
      w.push_back(m->wall_time);
    }
    MethodMetrics mean;
    mean.auc = mean_of(a);
    mean.prauc = mean_of(p);
    mean.log_loss = mean_of(l);
    mean.wall_time = mean_of(w);
    report.mean[name] = mean;
    MethodMetrics sd;
    sd.auc = sample_std(a);
    sd.prauc = sample_std(p);
    sd.log_loss = sample_std(l);
    sd.wall_time = sample_std(w);
    report.stddev[name] = sd;
  }
  attach_ri(report.mean);
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json metrics_json(const MethodMetrics& m, bool include_timings) {
  json j;
  j["auc"] = m.auc;
  j["prauc"] = m.prauc;
  j["log_loss"] = m.log_loss;
  if (m.ri_auc || m.ri_prauc || m.ri_ll) {
    j["ri_auc"] = optional_json(m.ri_auc);
    j["ri_prauc"] = optional_json(m.ri_prauc);
    j["ri_ll"] = optional_json(m.ri_ll);
  }
  if (include_timings) j["wall_time"] = m.wall_time;
  return j;
}

std::string csv_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

void csv_row(std::ostream& out, const std::string& protocol,
             const std::string& seed, const std::string& method,
             const MethodMetrics& m) {
  out << protocol << ',' << seed << ',' << method << ','
      << format_double(m.auc) << ',' << format_double(m.prauc) << ','
      << format_double(m.log_loss) << ',' << csv_optional(m.ri_auc) << ','
      << csv_optional(m.ri_prauc) << ',' << csv_optional(m.ri_ll) << ','
      << format_double(m.wall_time) << '\n';
}

}  // namespace

Dataset load_dataset(const ExperimentConfig& cfg) {
  return staged("data", [&] {
    return cfg.data_source == "csv" ? load_csv(cfg.csv_path)
                                    : generate_synthetic(cfg.synth);
  });
}

Prepared prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  return prepare(cfg, load_dataset(cfg));
}

Prepared prepare(const ExperimentConfig& cfg, Dataset data) {
  cfg.validate();
  return staged("split", [&] {
    Prepared prep;
    prep.split = temporal_split(data, cfg.t, cfg.t_prime, cfg.d_test);
    prep.reversed = reversal_set(prep.split.train, cfg.t, cfg.t_prime);
    LabeledSet pool = arrival_set(data, cfg.t, cfg.t_prime - cfg.d_test);
    pool.labels = labels(pool.data, ObservedView{cfg.t_prime});
    prep.arrivals = std::move(pool);
    prep.spec = cfg.model_spec(data.feature_dim());
    prep.data = std::move(data);
    return prep;
  });
}

MethodRun train_method(const ExperimentConfig& cfg, const Prepared& prep,
                       std::string_view method, std::uint64_t seed,
                       bool with_arrivals) {
  LabelView view;
  const LabelView valid_view = OracleView{};
  if (method == kMethodVanilla) {
    if (with_arrivals) {
      throw ConfigError("vanilla is trained on observed labels only");
    }
    view = ObservedView{cfg.t};
  } else if (method == kMethodRetrain) {
    view = RetrainView{cfg.t_prime};
  } else if (method == kMethodOracle) {
    view = OracleView{};
  } else {
    throw ConfigError("cannot train method '" + std::string(method) + "'");
  }
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  return staged("train " + std::string(method), [&] {
    const auto start = Clock::now();
    TrainResult result =
        with_arrivals
            ? train(prep.split.train.concat(prep.arrivals.data), view,
                    prep.split.valid, valid_view, prep.spec, tc)
            : train(prep.split.train, view, prep.split.valid, valid_view,
                    prep.spec, tc);
    MethodRun run;
    run.wall_time = seconds_since(start);
    run.epochs = static_cast<int>(result.history.size());
    run.params = std::move(result.params);
    run.history = std::move(result.history);
    return run;
  });
}

UpdateReport run_update(const ExperimentConfig& cfg, const Prepared& prep,
                        const ParamVector& theta_hat, bool include_delay,
                        bool include_add, std::uint64_t seed) {
  InfluenceRequest request;
  request.cutoff = cfg.t;
  request.reversed = prep.reversed;
  request.arrivals = prep.arrivals.data;
  request.arrival_labels = prep.arrivals.labels;
  request.include_delay = include_delay;
  request.include_add = include_add;
  request.lambda = cfg.lambda;
  request.solver = cfg.solver;
  request.solver.seed = derive_seed(seed, kSolverStream);
  request.allow_unconverged = cfg.accept_unconverged;
  request.hessian_rows = cfg.hessian_rows;
  request.hessian_seed = derive_seed(seed, kHessianStream);
  return staged("influence update", [&] {
    return delta_total(prep.spec, theta_hat, prep.split.train, request);
  });
}

MethodMetrics evaluate_params(const ModelSpec& spec, const ParamVector& params,
                              const Dataset& test) {
  return staged("evaluate", [&] {
    const Model model(spec);
    const Vector scores = model.predict_batch(params, test.features());
    ScoredSet s;
    s.scores.assign(scores.data(), scores.data() + scores.size());
    s.labels = labels(test, OracleView{});
    return evaluate(s);
  });
}

namespace {

// Influence update plus evaluation, recorded under `name`.
void add_update(const ExperimentConfig& cfg, const Prepared& prep,
                const ParamVector& vanilla, const std::string& name,
                bool include_delay, bool include_add, std::uint64_t seed,
                SeedReport& out) {
  const auto start = Clock::now();
  const UpdateReport update =
      run_update(cfg, prep, vanilla, include_delay, include_add, seed);
  const ParamVector updated = staged(name, [&] {
    return apply_update(vanilla, update);
  });
  const double elapsed = seconds_since(start);
  MethodMetrics m = evaluate_params(prep.spec, updated, prep.split.test);
  m.wall_time = elapsed;
  out.methods[name] = m;
  out.updates[name] = summarize(update);
}

EvalReport run_protocol(const ExperimentConfig& cfg, bool online) {
  const Prepared prep = prepare(cfg);
  EvalReport report;
  report.protocol = online ? "online" : "offline";
  report.config = resolved(cfg);
  report.data = summarize(cfg, prep);
  if (online && prep.arrivals.data.empty()) {
    throw ConfigError("online: the arrival pool [T, T' - d_test) is empty");
  }

  const bool need_vanilla = cfg.has_method(kMethodVanilla) ||
                            cfg.has_method(kMethodIfdfm) ||
                            cfg.has_method(kMethodIfdfmWoAdd);
  for (std::uint64_t seed : cfg.seeds) {
    SeedReport sr;
    sr.seed = seed;
    if (need_vanilla) {
      const MethodRun vanilla = train_method(cfg, prep, kMethodVanilla, seed);
      if (cfg.has_method(kMethodVanilla)) {
        MethodMetrics m =
            evaluate_params(prep.spec, vanilla.params, prep.split.test);
        m.wall_time = vanilla.wall_time;
        sr.methods[std::string(kMethodVanilla)] = m;
      }
      if (cfg.has_method(kMethodIfdfm)) {
        const bool add = online ? true : cfg.include_add;
        const bool delay = online ? true : cfg.include_delay;
        add_update(cfg, prep, vanilla.params, std::string(kMethodIfdfm), delay,
                   add, seed, sr);
      }
      if (cfg.has_method(kMethodIfdfmWoAdd)) {
        add_update(cfg, prep, vanilla.params, std::string(kMethodIfdfmWoAdd),
                   true, false, seed, sr);
      }
    }
    for (std::string_view method : {kMethodRetrain, kMethodOracle}) {
      if (!cfg.has_method(method)) continue;
      const MethodRun run = train_method(cfg, prep, method, seed, online);
      MethodMetrics m = evaluate_params(prep.spec, run.params, prep.split.test);
      m.wall_time = run.wall_time;
      sr.methods[std::string(method)] = m;
    }
    attach_ri(sr.methods);
    report.per_seed.push_back(std::move(sr));
  }
  aggregate(report);
  return report;
}

}  // namespace

EvalReport run_offline(const ExperimentConfig& cfg) {
  return run_protocol(cfg, false);
}

EvalReport run_online(const ExperimentConfig& cfg) {
  return run_protocol(cfg, true);
}

TimingReport run_timing(const ExperimentConfig& cfg) {
  cfg.validate();
  TimingReport report;
  report.config = resolved(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  std::vector<Index> sizes = cfg.timing_sizes;
  if (cfg.data_source == "csv") sizes = {0};

  for (Index n : sizes) {
    ExperimentConfig run_cfg = cfg;
    if (n > 0) run_cfg.synth.n = n;
    const Prepared prep = prepare(run_cfg);
    TimingRow row;
    row.n = prep.data.size();

    const MethodRun vanilla = train_method(run_cfg, prep, kMethodVanilla, seed);
    row.vanilla_seconds = vanilla.wall_time;
    row.vanilla_epochs = vanilla.epochs;
    const MethodRun retrain = train_method(run_cfg, prep, kMethodRetrain, seed);
    row.retrain_seconds = retrain.wall_time;
    row.retrain_epochs = retrain.epochs;

    const auto start = Clock::now();
    const UpdateReport update =
        run_update(run_cfg, prep, vanilla.params, run_cfg.include_delay,
                   run_cfg.include_add, seed);
    const ParamVector updated = apply_update(vanilla.params, update);
    row.update_seconds = seconds_since(start);
    if (updated.size() != vanilla.params.size()) {
      throw InvariantViolation("timing: update changed the parameter count");
    }
    row.ratio = row.update_seconds / row.vanilla_seconds;
    row.solver_iterations = update.solver_iters;
    row.residual_rel = update.residual_rel;
    row.converged = update.converged;
    report.rows.push_back(row);
  }
  return report;
}

std::string to_json(const EvalReport& report, bool include_timings) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["protocol"] = report.protocol;
  j["config"] = report.config;
  const DataSummary& d = report.data;
  j["data"] = {{"n_total", d.n_total},
               {"n_train", d.n_train},
               {"n_valid", d.n_valid},
               {"n_test", d.n_test},
               {"n_reversed", d.n_reversed},
               {"n_arrivals", d.n_arrivals},
               {"train_observed_cvr", d.train_observed_cvr},
               {"test_cvr", d.test_cvr}};
  json seeds = json::array();
  for (const SeedReport& sr : report.per_seed) {
    json s;
    s["seed"] = sr.seed;
    for (const auto& [name, m] : sr.methods) {
      s["methods"][name] = metrics_json(m, include_timings);
    }
    for (const auto& [name, u] : sr.updates) {
      json uj;
      uj["delta_norm"] = u.delta_norm;
      uj["residual_rel"] = optional_json(u.residual_rel);
      uj["iterations"] = u.iterations;
      uj["converged"] = u.converged;
      if (include_timings) uj["wall_time"] = u.wall_time;
      s["updates"][name] = uj;
    }
    seeds.push_back(s);
  }
  j["per_seed"] = seeds;
  for (const auto& [name, m] : report.mean) {
    j["mean"][name] = metrics_json(m, include_timings);
  }
  for (const auto& [name, m] : report.stddev) {
    j["std"][name] = metrics_json(m, include_timings);
  }
  return j.dump(2);
}

std::string to_json(const TimingReport& report) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["protocol"] = "timing";
  j["config"] = report.config;
  json rows = json::array();
  for (const TimingRow& r : report.rows) {
    rows.push_back({{"n", r.n},
                    {"vanilla_seconds", r.vanilla_seconds},
                    {"retrain_seconds", r.retrain_seconds},
                    {"update_seconds", r.update_seconds},
                    {"ratio", r.ratio},
                    {"vanilla_epochs", r.vanilla_epochs},
                    {"retrain_epochs", r.retrain_epochs},
                    {"solver_iterations", r.solver_iterations},
                    {"residual_rel", optional_json(r.residual_rel)},
                    {"converged", r.converged}});
  }
  j["rows"] = rows;
  return j.dump(2);
}

void write_csv(std::ostream& out, const EvalReport& report) {
  out << "protocol,seed,method,auc,prauc,log_loss,ri_auc,ri_prauc,ri_ll,"
         "wall_time\n";
  for (const SeedReport& sr : report.per_seed) {
    for (const auto& [name, m] : sr.methods) {
      csv_row(out, report.protocol, std::to_string(sr.seed), name, m);
    }
  }
  for (const auto& [name, m] : report.mean) {
    csv_row(out, report.protocol, "mean", name, m);
  }
  for (const auto& [name, m] : report.stddev) {
    csv_row(out, report.protocol, "std", name, m);
  }
}

}  // namespace ifdfm
