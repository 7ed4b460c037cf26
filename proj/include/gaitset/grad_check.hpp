#ifndef GAITSET_GRAD_CHECK_HPP_
#define GAITSET_GRAD_CHECK_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gaitset/tensor.hpp"

namespace gaitset {

struct GradCheckReport {
  double max_rel_err = 0.0;  // worst element, relative with absolute fallback
  int64_t checked = 0;
  std::string worst;  // "input#i[j]" of the worst element
};

// Compares reverse-mode gradients of a scalar-valued function against central
// differences taken element by element on the given leaves. fn must rebuild
// its graph from the leaves on every call so perturbations are observed.
template <typename T>
GradCheckReport grad_check(const std::function<BasicTensor<T>()>& fn,
                           std::vector<BasicTensor<T>> inputs, double eps = 1e-5) {
  for (auto& in : inputs) in.clear_grad();
  BasicTensor<T> loss = fn();
  if (loss.numel() != 1) throw ShapeError("grad_check: fn must return a scalar");
  loss.backward();

  std::vector<std::vector<T>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) {
    if (in.has_grad()) {
      auto g = in.grad();
      analytic.emplace_back(g.begin(), g.end());
    } else {
      analytic.emplace_back(static_cast<size_t>(in.numel()), T(0));
    }
  }

  GradCheckReport rep;
  NoGradGuard off;
  for (size_t p = 0; p < inputs.size(); ++p) {
    auto& data = inputs[p].mutable_data();
    const int64_t n = inputs[p].numel();
    for (int64_t j = 0; j < n; ++j) {
      const T saved = data[j];
      data[j] = saved + static_cast<T>(eps);
      const double lp = static_cast<double>(fn().item());
      data[j] = saved - static_cast<T>(eps);
      const double lm = static_cast<double>(fn().item());
      data[j] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double ana = static_cast<double>(analytic[p][static_cast<size_t>(j)]);
      const double denom = std::max(std::abs(ana), std::abs(numeric));
      const double err = denom < 1e-8 ? std::abs(ana - numeric) : std::abs(ana - numeric) / denom;
      ++rep.checked;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst = "input#" + std::to_string(p) + "[" + std::to_string(j) + "]";
      }
    }
  }
  return rep;
}

}  // namespace gaitset

#endif  // GAITSET_GRAD_CHECK_HPP_
