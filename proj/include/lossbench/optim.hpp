#ifndef LOSSBENCH_OPTIM_HPP
#define LOSSBENCH_OPTIM_HPP

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "lossbench/tensor.hpp"

namespace lossbench {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second-moment adaptive gradient descent with bias correction.
/// State is keyed by parameter name so parameters can live anywhere.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.lr < 0.0) throw std::invalid_argument("Adam: lr must be >= 0");
    if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0)
      throw std::invalid_argument("Adam: betas must be in [0,1)");
  }

  void step(std::map<std::string, Tensor>& params,
            const std::map<std::string, Tensor>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const Tensor& g = git->second;
      if (g.rows != p.rows || g.cols != p.cols)
        throw std::invalid_argument("Adam: gradient shape mismatch for " + name);
      Tensor& m = m_.try_emplace(name, Tensor::zeros(p.rows, p.cols)).first->second;
      Tensor& v = v_.try_emplace(name, Tensor::zeros(p.rows, p.cols)).first->second;
      for (std::size_t i = 0; i < p.size(); ++i) {
        m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g.data[i];
        v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g.data[i] * g.data[i];
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace lossbench

#endif  // LOSSBENCH_OPTIM_HPP
