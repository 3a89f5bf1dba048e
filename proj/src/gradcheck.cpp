#include "spnas/gradcheck.hpp"

#include <cmath>
#include <vector>

namespace spnas {

GradCheckResult finite_difference_check(const std::function<Tensor(Tape&)>& f, Tensor w,
                                        double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  if (!w.requires_grad()) {
    throw std::invalid_argument("finite_difference_check: tensor does not require grad");
  }
  auto eval = [&f]() {
    Tape tape(false);
    return f(tape).item();
  };
  const double first = eval();
  const double second = eval();
  if (first != second) {
    throw NondeterministicFunction("finite_difference_check: two forward passes differ (" +
                                   std::to_string(first) + " vs " + std::to_string(second) + ")");
  }

  const bool had_grad = w.has_grad();
  std::vector<double> saved_grad(w.grad().begin(), w.grad().end());
  w.zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  std::vector<double> analytic(w.mutable_grad().begin(), w.mutable_grad().end());
  if (had_grad) {
    std::copy(saved_grad.begin(), saved_grad.end(), w.mutable_grad().begin());
  } else {
    w.zero_grad();
  }

  GradCheckResult result;
  auto values = w.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double plus = eval();
    values[i] = orig - h;
    const double minus = eval();
    values[i] = orig;
    const double numeric = (plus - minus) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
    if (i == 0 || err > result.max_rel_error) {
      result = {err, i, analytic[i], numeric};
    }
  }
  return result;
}

}  // namespace spnas
