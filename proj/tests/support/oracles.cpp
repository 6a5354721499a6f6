#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace oracle {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Vec with_bias(const Mat& x, Eigen::Index i) {
  Vec row(x.cols() + 1);
  row.head(x.cols()) = x.row(i).transpose();
  row(x.cols()) = 1.0;
  return row;
}

Vec weight_part(const Vec& theta) {
  Vec w = theta;
  w(w.size() - 1) = 0.0;
  return w;
}

}  // namespace

double logistic_loss(const Mat& x, const std::vector<double>& y, double rho,
                     const Vec& theta) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double f = sigmoid(with_bias(x, i).dot(theta));
    total += -(y[i] * std::log(f) + (1.0 - y[i]) * std::log(1.0 - f));
  }
  const Vec w = weight_part(theta);
  return total / static_cast<double>(x.rows()) + 0.5 * rho * w.squaredNorm();
}

Vec logistic_sample_grad(const Vec& x, double y, double rho, const Vec& theta) {
  Vec xb(x.size() + 1);
  xb.head(x.size()) = x;
  xb(x.size()) = 1.0;
  const double f = sigmoid(xb.dot(theta));
  return (f - y) * xb + rho * weight_part(theta);
}

Vec logistic_grad(const Mat& x, const std::vector<double>& y, double rho,
                  const Vec& theta) {
  Vec g = Vec::Zero(theta.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vec xb = with_bias(x, i);
    g += (sigmoid(xb.dot(theta)) - y[i]) * xb;
  }
  return g / static_cast<double>(x.rows()) + rho * weight_part(theta);
}

Mat logistic_hessian(const Mat& x, const std::vector<double>& y, double rho,
                     const Vec& theta) {
  (void)y;
  const Eigen::Index p = theta.size();
  Mat h = Mat::Zero(p, p);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vec xb = with_bias(x, i);
    const double f = sigmoid(xb.dot(theta));
    h += f * (1.0 - f) * xb * xb.transpose();
  }
  h /= static_cast<double>(x.rows());
  for (Eigen::Index k = 0; k + 1 < p; ++k) h(k, k) += rho;
  return h;
}

Vec newton_fit(const Mat& x, const std::vector<double>& y, double rho,
               const Vec& start, double tol, int max_iters) {
  Vec theta = start;
  for (int it = 0; it < max_iters; ++it) {
    const Vec g = logistic_grad(x, y, rho, theta);
    if (g.norm() <= tol) break;
    const Vec step = logistic_hessian(x, y, rho, theta).ldlt().solve(g);
    double t = 1.0;
    const double f0 = logistic_loss(x, y, rho, theta);
    while (t > 1e-8 && logistic_loss(x, y, rho, theta - t * step) >
                           f0 - 1e-4 * t * g.dot(step)) {
      t *= 0.5;
    }
    theta -= t * step;
  }
  return theta;
}

double brute_auc(const std::vector<double>& scores,
                 const std::vector<double>& labels) {
  double good = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1.0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0.0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        good += 1.0;
      } else if (scores[i] == scores[j]) {
        good += 0.5;
      }
    }
  }
  return good / pairs;
}

double sweep_average_precision(const std::vector<double>& scores,
                               const std::vector<double>& labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  // Sweep the threshold down one rank at a time; every time recall moves,
  // add precision times the recall increment.
  const double positives =
      static_cast<double>(std::count(labels.begin(), labels.end(), 1.0));
  double tp = 0.0;
  double area = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 1.0) tp += 1.0;
    const double recall = tp / positives;
    const double precision = tp / static_cast<double>(k + 1);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

Mat random_spd(int p, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(lo, hi);
  Mat g(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) g(i, j) = normal(gen);
  }
  const Eigen::HouseholderQR<Mat> qr(g);
  const Mat q = qr.householderQ();
  Vec eig(p);
  for (int i = 0; i < p; ++i) eig(i) = uni(gen);
  eig(0) = lo;
  eig(p - 1) = hi;
  return q * eig.asDiagonal() * q.transpose();
}

}  // namespace oracle
