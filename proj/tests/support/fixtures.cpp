#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"

namespace fixture {

using namespace ifdfm;

namespace {

struct Truth {
  std::vector<double> w;
  double b;
};

Truth truth(Index d) {
  std::mt19937_64 gen(12345);
  std::normal_distribution<double> normal;
  Truth t;
  for (Index j = 0; j < d; ++j) t.w.push_back(normal(gen) / std::sqrt(double(d)) * 2.0);
  t.b = -1.0;
  return t;
}

std::pair<FeatureMatrix, std::vector<double>> draw(Index n, Index d,
                                                   std::uint64_t seed) {
  const Truth t = truth(d);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  FeatureMatrix x(n, d);
  std::vector<double> y;
  for (Index i = 0; i < n; ++i) {
    double z = t.b;
    for (Index j = 0; j < d; ++j) {
      x(i, j) = normal(gen);
      z += t.w[j] * x(i, j);
    }
    y.push_back(uni(gen) < 1.0 / (1.0 + std::exp(-z)) ? 1.0 : 0.0);
  }
  return {x, y};
}

Dataset build(const FeatureMatrix& x, const std::vector<double>& observed,
              const std::vector<char>& reversed) {
  std::vector<Timestamp> clicks;
  std::vector<std::optional<Timestamp>> pays;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    clicks.push_back(Timestamp{static_cast<std::int64_t>(i % 900)});
    if (observed[i] == 1.0) {
      pays.emplace_back(Timestamp{950});
    } else if (reversed[i]) {
      pays.emplace_back(Timestamp{kT + 10});
    } else {
      pays.emplace_back(std::nullopt);
    }
  }
  return Dataset(x, std::move(clicks), std::move(pays));
}

}  // namespace

Convex make_convex(Index n, Index d, double rho, std::uint64_t seed) {
  auto [x, y] = draw(n, d, seed);
  Convex c;
  c.spec = ModelSpec::logistic(d, rho);
  for (Index i = 0; i < n; ++i) {
    if (y[i] == 0.0) c.negatives.push_back(i);
  }
  std::mt19937_64 gen(seed + 1);
  std::shuffle(c.negatives.begin(), c.negatives.end(), gen);
  c.train = build(x, y, std::vector<char>(static_cast<std::size_t>(n), 0));
  return c;
}

Convex with_reversals(const Convex& base, Index count) {
  const Index n = base.train.size();
  std::vector<char> rev(static_cast<std::size_t>(n), 0);
  for (Index k = 0; k < count; ++k) rev[base.negatives[k]] = 1;
  Convex c = base;
  c.train = build(base.train.features(),
                  labels(base.train, ObservedView{Timestamp{kT}}), rev);
  return c;
}

LabeledSet fresh_samples(Index count, Index d, std::uint64_t seed) {
  auto [x, y] = draw(count, d, seed);
  std::vector<Timestamp> clicks(static_cast<std::size_t>(count),
                                Timestamp{kT + 1});
  std::vector<std::optional<Timestamp>> pays;
  for (double label : y) {
    pays.push_back(label == 1.0 ? std::optional<Timestamp>(Timestamp{kT + 5})
                                : std::nullopt);
  }
  LabeledSet k;
  k.data = Dataset(x, std::move(clicks), std::move(pays));
  k.labels = y;
  return k;
}

ParamVector fit(const ModelSpec& spec, const FeatureMatrix& x,
                const std::vector<double>& y, const ParamVector& start) {
  const Eigen::MatrixXd xd = x;
  return oracle::newton_fit(xd, y, spec.l2, start, 1e-10);
}

double cosine(const Vector& a, const Vector& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

std::vector<Eigen::MatrixXd> spd_pieces(const Eigen::MatrixXd& a, int k,
                                        std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::vector<Eigen::MatrixXd> out;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  for (int i = 0; i + 1 < k; ++i) {
    Eigen::MatrixXd noise(a.rows(), a.cols());
    for (Index r = 0; r < a.rows(); ++r) {
      for (Index c = 0; c < a.cols(); ++c) noise(r, c) = 0.1 * normal(gen);
    }
    out.push_back(a + noise + noise.transpose());
    sum += out.back();
  }
  out.push_back(static_cast<double>(k) * a - sum);
  return out;
}

Vector normal_vector(Index p, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Vector v(p);
  for (Index i = 0; i < p; ++i) v(i) = normal(gen);
  return v;
}

}  // namespace fixture
