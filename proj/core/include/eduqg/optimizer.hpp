#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eduqg/io.hpp"
#include "eduqg/model.hpp"

namespace eduqg {

enum class LrSchedule { kConstant, kInverseSqrt, kLinear };

std::string to_string(LrSchedule s);
LrSchedule schedule_from_string(const std::string& s);

struct OptimizerSpec {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  LrSchedule schedule = LrSchedule::kConstant;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;  // used by the linear schedule
  double clip_norm = 0.0;       // 0 disables global-norm clipping

  void validate() const;
  Json to_json() const;
  static OptimizerSpec from_json(const Json& j);
};

/// Learning rate applied at 0-based optimizer step `step`.
///
/// kInverseSqrt: lr * min((step+1)/warmup, sqrt(warmup/(step+1))); with no
/// warmup it is lr / sqrt(step+1). kLinear: warmup then linear decay to 0 at
/// total_steps.
double learning_rate(const OptimizerSpec& spec, std::size_t step);

/// Adam with bias correction and decoupled weight decay.
class Adam {
 public:
  Adam(OptimizerSpec spec, const ParameterSet& params);

  /// Applies one update from `grads` (same order and shapes as params).
  /// Returns the pre-clip global gradient norm.
  double step(ParameterSet& params, std::vector<Matrix>& grads);

  std::size_t steps_taken() const { return t_; }
  const OptimizerSpec& spec() const { return spec_; }

  const std::vector<Matrix>& first_moment() const { return m_; }
  const std::vector<Matrix>& second_moment() const { return v_; }

  /// Restores moments and step count saved from an identical setup.
  void restore(std::size_t steps_taken, std::vector<Matrix> m, std::vector<Matrix> v);

 private:
  OptimizerSpec spec_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t t_ = 0;
};

}  // namespace eduqg
