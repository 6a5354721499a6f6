#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ifdfm {

// Predicted probabilities paired with true 0/1 labels.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<double> labels;
};

// Probability that a random positive outscores a random negative, ties
// counted 1/2 (midrank Mann-Whitney statistic). Throws ConfigError when only
// one class is present.
double auc(const ScoredSet& s);

// Average precision in descending score order; ties are broken by input
// index. Throws ConfigError without positives.
double prauc(const ScoredSet& s);

// Mean BCE with probabilities clipped to [1e-7, 1 - 1e-7].
double log_loss(const ScoredSet& s);

// Relative improvement of `m_f` between the vanilla floor and the retrain
// ceiling. Undefined (nullopt) when |m_retrain - m_vanilla| <= 1e-9.
std::optional<double> ri(double m_f, double m_vanilla, double m_retrain);

struct MethodMetrics {
  double auc = 0.0;
  double prauc = 0.0;
  double log_loss = 0.0;
  std::optional<double> ri_auc;
  std::optional<double> ri_prauc;
  std::optional<double> ri_ll;
  double wall_time = 0.0;  // seconds spent producing the method's parameters
};

MethodMetrics evaluate(const ScoredSet& s);

// Fills ri_* of every method from the "vanilla" and "retrain" entries. Leaves
// them empty when either reference is missing.
void attach_ri(std::map<std::string, MethodMetrics>& methods);

}  // namespace ifdfm
