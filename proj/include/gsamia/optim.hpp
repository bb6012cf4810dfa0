#pragma once

#include <vector>

#include "gsamia/tensor.hpp"

namespace gsamia {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by position in the
/// parameter list given at construction.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config = {});

  /// Applies one update from the current Parameter::grad values.
  void step(double learning_rate);
  long steps() const { return steps_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long steps_ = 0;
};

}  // namespace gsamia
