#pragma once

#include <functional>
#include <stdexcept>

#include "spnas/tensor.hpp"

namespace spnas {

/// Thrown when two forward evaluations of the checked function disagree.
class NondeterministicFunction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double autodiff = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of `f` w.r.t. `w` against central differences.
///
/// `f` records onto the tape it is given and returns a scalar. The relative
/// error of element i is |autodiff - numeric| / max(1e-8, |numeric|).
GradCheckResult finite_difference_check(const std::function<Tensor(Tape&)>& f, Tensor w,
                                        double h = 1e-5);

}  // namespace spnas
