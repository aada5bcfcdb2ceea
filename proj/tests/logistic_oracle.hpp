#pragma once

#include <cmath>
#include <vector>

#include "evfuse/data.hpp"

namespace evfuse::testing {

/// Multinomial logistic regression on the concatenation of all views, fitted by full-batch
/// gradient descent with plain loops. Independent of the library's autodiff and networks.
class LogisticOracle {
 public:
  LogisticOracle(const MultiViewDataset& train, int iterations = 300, double lr = 0.5) : k_(train.classes) {
    for (const auto& v : train.views) d_ += v.cols();
    w_.assign((d_ + 1) * k_, 0.0);
    const std::size_t n = train.size();
    std::vector<double> grad(w_.size()), x(d_ + 1), p(k_);
    for (int it = 0; it < iterations; ++it) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        features(train, i, x);
        probabilities(x, p);
        for (std::size_t c = 0; c < k_; ++c) {
          const double r = p[c] - (train.labels[i] == c ? 1.0 : 0.0);
          for (std::size_t j = 0; j <= d_; ++j) grad[j * k_ + c] += r * x[j];
        }
      }
      for (std::size_t j = 0; j < w_.size(); ++j) w_[j] -= lr * grad[j] / static_cast<double>(n);
    }
  }

  double accuracy(const MultiViewDataset& test) const {
    std::vector<double> x(d_ + 1), p(k_);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      features(test, i, x);
      probabilities(x, p);
      hit += static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == test.labels[i];
    }
    return static_cast<double>(hit) / static_cast<double>(test.size());
  }

 private:
  void features(const MultiViewDataset& ds, std::size_t i, std::vector<double>& x) const {
    std::size_t j = 0;
    for (const auto& v : ds.views)
      for (std::size_t c = 0; c < v.cols(); ++c) x[j++] = v(i, c);
    x[j] = 1.0;
  }
  void probabilities(const std::vector<double>& x, std::vector<double>& p) const {
    double mx = -1e300;
    for (std::size_t c = 0; c < k_; ++c) {
      p[c] = 0.0;
      for (std::size_t j = 0; j <= d_; ++j) p[c] += x[j] * w_[j * k_ + c];
      mx = std::max(mx, p[c]);
    }
    double s = 0.0;
    for (auto& v : p) s += (v = std::exp(v - mx));
    for (auto& v : p) v /= s;
  }

  std::size_t k_;
  std::size_t d_ = 0;
  std::vector<double> w_;
};

}  // namespace evfuse::testing
