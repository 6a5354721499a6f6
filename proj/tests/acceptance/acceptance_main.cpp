// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Pass a config path to override the desk experiment.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fixtures.hpp"
#include "ifdfm/config.hpp"
#include "ifdfm/harness.hpp"
#include "ifdfm/influence.hpp"
#include "ifdfm/metrics.hpp"
#include "ifdfm/model.hpp"
#include "ifdfm/solvers.hpp"
#include "oracles.hpp"

using namespace ifdfm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

const std::string kVanilla(kMethodVanilla);
const std::string kRetrain(kMethodRetrain);
const std::string kOracle(kMethodOracle);
const std::string kIfdfm(kMethodIfdfm);
const std::string kWoAdd(kMethodIfdfmWoAdd);

ExperimentConfig g_desk;

// 1: exact HVP against central differences and the closed-form logistic
// Hessian.
Outcome hvp_correctness() {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> normal;
  double worst_fd = 0.0, worst_closed = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Index d = 3 + t % 6;
    const ModelSpec spec =
        t % 2 == 0 ? ModelSpec::logistic(d, 1e-2)
                   : ModelSpec::mlp(d, {4 + t % 5, 3 + t % 3}, 1e-3);
    const Model model(spec);
    const Index m = 32;
    FeatureMatrix x(m, d);
    std::vector<double> y(m);
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < d; ++j) x(i, j) = normal(gen);
      y[i] = (i % 3 == 0) ? 1.0 : 0.0;
    }
    const Vector theta =
        initial_params(spec, t) +
        0.1 * fixture::normal_vector(spec.num_params(), 100 + t);
    const Vector v = fixture::normal_vector(spec.num_params(), 200 + t);
    const Vector hv = model.hvp(theta, x, y, v);
    const double h = 1e-5;
    const Vector fd =
        (model.grad(theta + h * v, x, y) - model.grad(theta - h * v, x, y)) /
        (2 * h);
    worst_fd = std::max(worst_fd, rel(fd, hv));
    if (spec.kind == ModelSpec::Kind::kLogistic) {
      const Eigen::MatrixXd xd = x;
      const Vector exact =
          oracle::logistic_hessian(xd, y, spec.l2, theta) * v;
      worst_closed = std::max(worst_closed, rel(hv, exact));
    }
  }
  return {worst_fd < 1e-4 && worst_closed <= 1e-10,
          "max fd rel err " + fmt(worst_fd) + ", closed-form rel err " +
              fmt(worst_closed)};
}

// 2: every solver against a dense direct solve.
Outcome solver_equivalence() {
  double cg = 0.0, neumann = 0.0, sq = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int p = 5 + static_cast<int>(seed) * 15 / 9;
    const Eigen::MatrixXd a = oracle::random_spd(p, 0.5, 4.0, seed);
    const DenseOperator op(fixture::spd_pieces(a, 64, seed + 1), 1e-3);
    const Vector b = fixture::normal_vector(p, seed + 2);
    const Vector exact = op.matrix().ldlt().solve(b);

    SolverConfig c;
    c.kind = SolverKind::kConjugateGradient;
    c.tol = 1e-12;
    cg = std::max(cg, rel(cg_solve(op, b, c).delta, exact));

    SolverConfig n;
    n.kind = SolverKind::kNeumann;
    n.neumann_terms = 500;
    n.tol = 1e-12;
    neumann = std::max(neumann, rel(neumann_solve(op, b, n).delta, exact));

    SolverConfig s;
    s.kind = SolverKind::kStochasticQuadratic;
    s.minibatch_size = 16;
    s.max_epochs = 400;
    s.tol = 1e-3;
    s.seed = seed;
    sq = std::max(sq, rel(sq_solve(op, b, s).delta, exact));
  }
  return {cg <= 1e-8 && neumann <= 1e-3 && sq <= 1e-2,
          "max rel err cg " + fmt(cg) + ", neumann " + fmt(neumann) + ", sq " +
              fmt(sq)};
}

struct Fidelity {
  double cosine = 0.0;
  double rel_err = 0.0;
};

InfluenceRequest convex_request(const Dataset& train) {
  InfluenceRequest r;
  r.cutoff = Timestamp{fixture::kT};
  r.reversed = reversal_set(train, Timestamp{fixture::kT},
                            Timestamp{fixture::kTPrime});
  r.lambda = 1e-3;
  r.solver.kind = SolverKind::kConjugateGradient;
  r.solver.tol = 1e-10;
  return r;
}

Fidelity reversal_fidelity(const fixture::Convex& base, double fraction) {
  const auto flips = static_cast<Index>(
      std::lround(fraction * static_cast<double>(base.negatives.size())));
  const fixture::Convex c = fixture::with_reversals(base, flips);
  const Vector theta = fixture::fit(
      c.spec, c.train.features(),
      labels(c.train, ObservedView{Timestamp{fixture::kT}}),
      Vector::Zero(c.spec.num_params()));
  InfluenceRequest r = convex_request(c.train);
  r.include_add = false;
  const Vector delta = delta_total(c.spec, theta, c.train, r).delta;
  const Vector retrained = fixture::fit(
      c.spec, c.train.features(),
      labels(c.train, RetrainView{Timestamp{fixture::kTPrime}}), theta);
  const Vector target = retrained - theta;
  return {fixture::cosine(delta, target), rel(delta, target)};
}

// 3: label-reversal update against exact retraining on a convex model.
Outcome influence_fidelity() {
  const fixture::Convex base = fixture::make_convex(2000, 20, 1e-2, 7);
  const std::vector<double> fractions{0.04, 0.02, 0.01, 0.005};
  std::vector<Fidelity> f;
  for (double q : fractions) f.push_back(reversal_fidelity(base, q));
  const Fidelity at1 = f[2];
  bool monotone = true;
  std::string errs;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (i > 0 && f[i].rel_err > 1.1 * f[i - 1].rel_err) monotone = false;
    errs += (i ? " " : "") + fmt(f[i].rel_err);
  }
  return {at1.cosine >= 0.95 && at1.rel_err <= 0.25 && monotone,
          "1% flips: cosine " + fmt(at1.cosine) + ", rel err " +
              fmt(at1.rel_err) + "; rel err at 4/2/1/0.5%: " + errs};
}

// 4: new-sample update against retraining on n + 20 rows.
Outcome new_data_fidelity() {
  const fixture::Convex base = fixture::make_convex(2000, 20, 1e-2, 7);
  const Index flips = static_cast<Index>(
      std::lround(0.01 * static_cast<double>(base.negatives.size())));
  const fixture::Convex c = fixture::with_reversals(base, flips);
  const std::vector<double> y =
      labels(c.train, ObservedView{Timestamp{fixture::kT}});
  const Vector theta = fixture::fit(c.spec, c.train.features(), y,
                                    Vector::Zero(c.spec.num_params()));
  const LabeledSet fresh = fixture::fresh_samples(20, 20, 99);

  InfluenceRequest r = convex_request(c.train);
  r.include_delay = false;
  r.reversed.clear();
  r.arrivals = fresh.data;
  r.arrival_labels = fresh.labels;
  const Vector delta = delta_total(c.spec, theta, c.train, r).delta;

  const Dataset all = c.train.concat(fresh.data);
  std::vector<double> all_y = y;
  all_y.insert(all_y.end(), fresh.labels.begin(), fresh.labels.end());
  const Vector retrained =
      fixture::fit(c.spec, all.features(), all_y, theta);
  const double cos = fixture::cosine(delta, retrained - theta);
  return {cos >= 0.95, "cosine " + fmt(cos)};
}

// 5: relative-improvement formula on published reference numbers.
Outcome ri_formula() {
  const double a = ri(0.8411, 0.8353, 0.8419).value_or(NAN);
  const double b = ri(0.6491, 0.6398, 0.6513).value_or(NAN);
  return {std::abs(a - 0.8788) <= 5e-4 && std::abs(b - 0.8087) <= 5e-4,
          "ri = " + fmt(a) + ", " + fmt(b)};
}

// 6: AUC and PRAUC against brute-force definitions.
Outcome metric_oracles() {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double worst_auc = 0.0, worst_pr = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = 20 + static_cast<std::size_t>(uni(gen) * 480);
    const int levels = t % 3 == 0 ? 10 : 0;
    ScoredSet s;
    for (std::size_t i = 0; i < m; ++i) {
      double score = uni(gen);
      if (levels > 0) score = std::floor(score * levels) / levels;
      s.scores.push_back(score);
      s.labels.push_back(uni(gen) < 0.2 + 0.5 * score ? 1.0 : 0.0);
    }
    s.labels[0] = 1.0;
    s.labels[1] = 0.0;
    worst_auc = std::max(
        worst_auc, std::abs(auc(s) - oracle::brute_auc(s.scores, s.labels)));
    worst_pr = std::max(
        worst_pr, std::abs(prauc(s) - oracle::sweep_average_precision(
                                          s.scores, s.labels)));
  }
  return {worst_auc <= 1e-12 && worst_pr <= 1e-10,
          "max |auc err| " + fmt(worst_auc) + ", max |prauc err| " +
              fmt(worst_pr)};
}

// 7: offline ordering vanilla <= influence update <= retrain.
Outcome end_to_end_ordering() {
  ExperimentConfig cfg = g_desk;
  cfg.methods = {kVanilla, kRetrain, kIfdfm};
  const EvalReport r = run_offline(cfg);
  const double v = r.mean.at(kVanilla).auc;
  const double f = r.mean.at(kIfdfm).auc;
  const double t = r.mean.at(kRetrain).auc;
  const double ri_auc = r.mean.at(kIfdfm).ri_auc.value_or(NAN);
  return {f - v >= -0.002 && t - f >= -0.002 && ri_auc >= 0.5,
          "mean AUC vanilla " + fmt(v) + ", ifdfm " + fmt(f) + ", retrain " +
              fmt(t) + ", RI-AUC " + fmt(ri_auc)};
}

// 8: online protocol, arrivals help under drift.
Outcome online_ablation() {
  ExperimentConfig cfg = g_desk;
  cfg.methods = {kVanilla, kIfdfm, kWoAdd};
  const EvalReport r = run_online(cfg);
  const double with = r.mean.at(kIfdfm).auc;
  const double without = r.mean.at(kWoAdd).auc;
  return {with >= without,
          "mean AUC ifdfm " + fmt(with) + ", without arrivals " + fmt(without)};
}

// 9: update cost against training cost.
Outcome timing() {
  ExperimentConfig cfg = g_desk;
  cfg.timing_sizes = {25000, 50000, 100000};
  const TimingReport r = run_timing(cfg);
  bool pass = true;
  std::string detail;
  for (const TimingRow& row : r.rows) {
    if (!(row.update_seconds < row.retrain_seconds)) pass = false;
    if (row.n == 100000 && !(row.ratio <= 0.2)) pass = false;
    detail += (detail.empty() ? "" : "; ") + std::string("n=") +
              std::to_string(row.n) + " update " + fmt(row.update_seconds) +
              "s vanilla " + fmt(row.vanilla_seconds) + "s retrain " +
              fmt(row.retrain_seconds) + "s ratio " + fmt(row.ratio);
  }
  return {pass && !r.rows.empty() && r.rows.back().n == 100000, detail};
}

std::string checkpoint_bytes(const ModelSpec& spec, const ParamVector& p,
                             const std::filesystem::path& path) {
  save_checkpoint(path, spec, p);
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 10: reruns are bit-identical.
Outcome determinism() {
  ExperimentConfig cfg = g_desk;
  cfg.synth.n = 20000;
  cfg.seeds = {3};
  cfg.methods = {kVanilla, kRetrain, kOracle, kIfdfm,
                 kWoAdd};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ifdfm_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  std::vector<std::string> failures;

  std::string ckpt[2], delta[2], offline[2], online[2];
  for (int run = 0; run < 2; ++run) {
    const Prepared prep = prepare(cfg);
    const MethodRun vanilla = train_method(cfg, prep, kVanilla, 3);
    ckpt[run] = checkpoint_bytes(prep.spec, vanilla.params,
                                 dir / ("run" + std::to_string(run) + ".ckpt"));
    const UpdateReport u = run_update(cfg, prep, vanilla.params, true, true, 3);
    delta[run] = checkpoint_bytes(prep.spec, vanilla.params + u.delta,
                                  dir / ("upd" + std::to_string(run) + ".ckpt"));
    offline[run] = to_json(run_offline(cfg), false);
    online[run] = to_json(run_online(cfg), false);
  }
  std::filesystem::remove_all(dir);
  if (ckpt[0] != ckpt[1]) failures.push_back("vanilla checkpoint");
  if (delta[0] != delta[1]) failures.push_back("updated checkpoint");
  if (offline[0] != offline[1]) failures.push_back("offline report");
  if (online[0] != online[1]) failures.push_back("online report");
  std::string detail = "checkpoints, updates, offline and online reports ";
  if (failures.empty()) return {true, detail + "identical"};
  detail = "differs:";
  for (const auto& f : failures) detail += " " + f;
  return {false, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string config_path = argc > 1 ? argv[1] : IFDFM_DESK_CONFIG;
  try {
    g_desk = load_config(config_path);
    g_desk.validate();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cannot load %s: %s\n", config_path.c_str(), e.what());
    return 2;
  }

  const std::vector<Criterion> criteria{
      {1, "HVP correctness", 10, hvp_correctness},
      {2, "solver oracle equivalence", 30, solver_equivalence},
      {3, "influence fidelity on a convex model", 120, influence_fidelity},
      {4, "new-data fidelity", 120, new_data_fidelity},
      {5, "RI formula", 1, ri_formula},
      {6, "metric oracles", 20, metric_oracles},
      {7, "end-to-end ordering", 900, end_to_end_ordering},
      {8, "online ablation", 900, online_ablation},
      {9, "timing", 1200, timing},
      {10, "determinism", 1800, determinism},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    if (secs > c.limit_seconds) {
      o.pass = false;
      o.detail += "; exceeded " + fmt(c.limit_seconds) + "s limit";
    }
    if (!o.pass) ++failed;
    std::printf("AC%-2d %s  %s (%.1fs): %s\n", c.id, o.pass ? "PASS" : "FAIL",
                c.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n",
              static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
