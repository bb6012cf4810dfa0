#pragma once

#include <functional>
#include <span>

#include "gsamia/tensor.hpp"

namespace gsamia {

/// Builds a scalar from the current parameter values on the given tape.
using ScalarFn = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of f against central differences with
/// step h. Returns the max over all parameter entries of
/// |autodiff - numeric| / (|numeric| + 1e-12). Parameter values are restored
/// and their grads zeroed on return.
double grad_check(const ScalarFn& f, std::span<Parameter* const> params, double h);

}  // namespace gsamia
