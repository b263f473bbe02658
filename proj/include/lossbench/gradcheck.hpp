#ifndef LOSSBENCH_GRADCHECK_HPP
#define LOSSBENCH_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "lossbench/autodiff.hpp"

namespace lossbench {

/// Builds a scalar loss on a fresh tape from the given parameter leaves.
using ScalarFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

/// Compares reverse-mode gradients of `f` against central finite differences.
/// Returns the max over all parameter entries of
///   |analytic - numeric| / max(1e-8, |numeric|).
inline double grad_check(const ScalarFn& f, const std::vector<Tensor>& params, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  auto eval = [&](const std::vector<Tensor>& p) {
    Tape tape;
    std::vector<NodeId> ids;
    ids.reserve(p.size());
    for (const Tensor& t : p) ids.push_back(tape.parameter(t));
    NodeId loss = f(tape, ids);
    double v = tape.val(loss)(0, 0);
    if (!std::isfinite(v)) throw std::domain_error("grad_check: non-finite forward value");
    return std::pair<double, NodeId>{v, loss};
  };

  Tape tape;
  std::vector<NodeId> ids;
  for (const Tensor& t : params) ids.push_back(tape.parameter(t));
  NodeId loss = f(tape, ids);
  if (!std::isfinite(tape.val(loss)(0, 0)))
    throw std::domain_error("grad_check: non-finite forward value");
  auto grads = tape.backward(loss);

  double max_err = 0.0;
  std::vector<Tensor> work = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor& analytic = grads.at(ids[p]);
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      const double orig = work[p].data[k];
      work[p].data[k] = orig + step;
      const double up = eval(work).first;
      work[p].data[k] = orig - step;
      const double dn = eval(work).first;
      work[p].data[k] = orig;
      const double numeric = (up - dn) / (2.0 * step);
      const double err = std::abs(analytic.data[k] - numeric) / std::max(1e-8, std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace lossbench

#endif  // LOSSBENCH_GRADCHECK_HPP
