#include "ifdfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ifdfm/error.hpp"

namespace ifdfm {

namespace {

void check_shape(const ScoredSet& s) {
  if (s.scores.size() != s.labels.size()) {
    throw ConfigError("metrics: scores and labels differ in length");
  }
  if (s.scores.empty()) throw ConfigError("metrics: empty scored set");
}

}  // namespace

double auc(const ScoredSet& s) {
  check_shape(s);
  const std::size_t m = s.scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.scores[a] < s.scores[b];
  });

  double pos_rank_sum = 0.0;
  double num_pos = 0.0;
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j + 1 < m && s.scores[order[j + 1]] == s.scores[order[i]]) ++j;
    // Ranks i+1 .. j+1 share their midrank.
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (s.labels[order[k]] > 0.5) {
        pos_rank_sum += midrank;
        num_pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double num_neg = static_cast<double>(m) - num_pos;
  if (num_pos == 0.0 || num_neg == 0.0) {
    throw ConfigError("auc: both classes must be present");
  }
  return (pos_rank_sum - num_pos * (num_pos + 1.0) / 2.0) / (num_pos * num_neg);
}

double prauc(const ScoredSet& s) {
  check_shape(s);
  const std::size_t m = s.scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return s.scores[a] > s.scores[b];
                   });
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < m; ++rank) {
    if (s.labels[order[rank]] > 0.5) {
      hits += 1.0;
      sum += hits / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0.0) throw ConfigError("prauc: no positive samples");
  return sum / hits;
}

double log_loss(const ScoredSet& s) {
  check_shape(s);
  double sum = 0.0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    const double f = std::clamp(s.scores[i], 1e-7, 1.0 - 1e-7);
    const double y = s.labels[i];
    sum -= y * std::log(f) + (1.0 - y) * std::log(1.0 - f);
  }
  return sum / static_cast<double>(s.scores.size());
}

std::optional<double> ri(double m_f, double m_vanilla, double m_retrain) {
  const double denom = m_retrain - m_vanilla;
  if (!(std::abs(denom) > 1e-9)) return std::nullopt;
  if (m_f == m_vanilla) return 0.0;  // not -0 when denom < 0
  return (m_f - m_vanilla) / denom;
}

MethodMetrics evaluate(const ScoredSet& s) {
  MethodMetrics m;
  m.auc = auc(s);
  m.prauc = prauc(s);
  m.log_loss = log_loss(s);
  return m;
}

void attach_ri(std::map<std::string, MethodMetrics>& methods) {
  const auto v = methods.find("vanilla");
  const auto r = methods.find("retrain");
  for (auto& [name, m] : methods) {
    if (v == methods.end() || r == methods.end()) {
      m.ri_auc = m.ri_prauc = m.ri_ll = std::nullopt;
      continue;
    }
    m.ri_auc = ri(m.auc, v->second.auc, r->second.auc);
    m.ri_prauc = ri(m.prauc, v->second.prauc, r->second.prauc);
    m.ri_ll = ri(m.log_loss, v->second.log_loss, r->second.log_loss);
  }
}

}  // namespace ifdfm
