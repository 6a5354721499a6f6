#include "ifdfm/influence.hpp"

#include <algorithm>
#include <chrono>
#include <unordered_set>

#include <json.hpp>

#include "ifdfm/rng.hpp"

namespace ifdfm {

GradVector sample_grad(const Model& model, const ParamVector& params,
                       std::span<const double> x, double label) {
  Eigen::Map<const FeatureMatrix> row(x.data(), 1,
                                      static_cast<Index>(x.size()));
  return model.grad(params, row, std::span<const double>(&label, 1));
}

namespace {

void validate_request(const Dataset& train, const InfluenceRequest& request) {
  if (!request.include_delay && !request.include_add) {
    throw ConfigError("influence: enable at least one of delay/add");
  }
  if (!(request.lambda >= 0.0)) throw ConfigError("influence: lambda < 0");
  if (request.hessian_rows < 0) {
    throw ConfigError("influence: hessian_rows < 0");
  }
  if (train.empty()) throw ConfigError("influence: empty training set");
  std::unordered_set<Index> seen;
  for (Index j : request.reversed) {
    if (j < 0 || j >= train.size()) {
      throw ConfigError("influence: reversal index " + std::to_string(j) +
                        " out of range");
    }
    if (!seen.insert(j).second) {
      throw ConfigError("influence: reversal index " + std::to_string(j) +
                        " repeated");
    }
    if (label_of(train.pay_ts(j), ObservedView{request.cutoff}) != 0) {
      throw InvariantViolation("influence: sample " + std::to_string(j) +
                               " is already positive at the cutoff");
    }
  }
  if (static_cast<Index>(request.arrival_labels.size()) !=
      request.arrivals.size()) {
    throw ConfigError("influence: one label per arrival required");
  }
  if (!request.arrivals.empty() &&
      request.arrivals.feature_dim() != train.feature_dim()) {
    throw ConfigError("influence: arrival feature dimension mismatch");
  }
}

}  // namespace

InfluenceRhs build_rhs(const ModelSpec& spec, const ParamVector& theta_hat,
                       const Dataset& train, const InfluenceRequest& request) {
  validate_request(train, request);
  const Model model(spec);
  InfluenceRhs rhs;
  rhs.n = train.size();
  rhs.b = Vector::Zero(model.num_params());

  // Sums of per-sample gradients come from batch means times batch size; the
  // L2 part cancels inside the reversal difference.
  if (request.include_delay && !request.reversed.empty()) {
    const Dataset rows = train.subset(request.reversed);
    const auto m = static_cast<double>(rows.size());
    const std::vector<double> zeros(request.reversed.size(), 0.0);
    const std::vector<double> ones(request.reversed.size(), 1.0);
    rhs.b += m * (model.grad(theta_hat, rows.features(), zeros) -
                  model.grad(theta_hat, rows.features(), ones));
  }
  if (request.include_add && !request.arrivals.empty()) {
    const auto m = static_cast<double>(request.arrivals.size());
    rhs.b -= m * model.grad(theta_hat, request.arrivals.features(),
                            request.arrival_labels);
  }
  rhs.b /= static_cast<double>(rhs.n);
  if (!rhs.b.allFinite()) throw NumericalError("influence: non-finite rhs");
  return rhs;
}

UpdateReport delta_total(const ModelSpec& spec, const ParamVector& theta_hat,
                         const Dataset& train, const InfluenceRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  const InfluenceRhs rhs = build_rhs(spec, theta_hat, train, request);

  UpdateReport report;
  report.solver = std::string(solver_name(request.solver.kind));
  if (rhs.b.norm() == 0.0) {
    report.delta = Vector::Zero(rhs.b.size());
  } else {
    const Index n = train.size();
    Dataset sampled;
    if (request.hessian_rows > 0 && request.hessian_rows < n) {
      const auto order = epoch_permutation(static_cast<std::size_t>(n),
                                           request.hessian_seed, 0);
      std::vector<Index> rows(order.begin(),
                              order.begin() + request.hessian_rows);
      std::sort(rows.begin(), rows.end());
      sampled = train.subset(rows);
    }
    const Dataset& h_set = sampled.size() > 0 ? sampled : train;
    const DampedHessianOperator op(spec, theta_hat, h_set.features(),
                                   labels(h_set, ObservedView{request.cutoff}),
                                   request.lambda);
    SolveResult solved = solve(op, rhs.b, request.solver);
    if (!solved.converged && !request.allow_unconverged) {
      throw SolverNotConverged(
          "influence: " + report.solver + " stopped at relative residual " +
              std::to_string(solved.residual_rel) + " after " +
              std::to_string(solved.iterations) + " iterations (tol " +
              std::to_string(request.solver.effective_tol()) + ")",
          std::move(solved.delta), solved.residual_rel);
    }
    report.delta = std::move(solved.delta);
    report.residual_rel = solved.residual_rel;
    report.solver_iters = solved.iterations;
    report.converged = solved.converged;
    report.trace = std::move(solved.trace);
  }
  report.wall_time = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  return report;
}

ParamVector apply_update(const ParamVector& theta_hat,
                         const UpdateReport& report) {
  if (report.delta.size() != theta_hat.size()) {
    throw ConfigError("apply_update: shape mismatch");
  }
  if (!report.delta.allFinite() || !theta_hat.allFinite()) {
    throw NumericalError("apply_update: non-finite parameter change");
  }
  return theta_hat + report.delta;
}

std::string to_json(const UpdateReport& report) {
  nlohmann::json j;
  j["solver"] = report.solver;
  j["delta_norm"] = report.delta.norm();
  j["residual_rel"] = report.residual_rel
                          ? nlohmann::json(*report.residual_rel)
                          : nlohmann::json(nullptr);
  j["iterations"] = report.solver_iters;
  j["converged"] = report.converged;
  j["wall_time"] = report.wall_time;
  return j.dump(2);
}

}  // namespace ifdfm
