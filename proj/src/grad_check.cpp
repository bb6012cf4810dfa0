#include "gsamia/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace gsamia {

namespace {

double evaluate(const ScalarFn& f) {
  Tape tape;
  return f(tape).value().item();
}

}  // namespace

double grad_check(const ScalarFn& f, std::span<Parameter* const> params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  double worst = 0.0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = evaluate(f);
      p->value[i] = orig - h;
      const double down = evaluate(f);
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(p->grad[i] - numeric) / (std::abs(numeric) + 1e-12);
      worst = std::max(worst, err);
    }
  }
  for (auto* p : params) p->zero_grad();
  return worst;
}

}  // namespace gsamia
