#include "eduqg/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "eduqg/error.hpp"

namespace eduqg {

std::string to_string(LrSchedule s) {
  switch (s) {
    case LrSchedule::kConstant:
      return "constant";
    case LrSchedule::kInverseSqrt:
      return "inverse_sqrt";
    case LrSchedule::kLinear:
      return "linear";
  }
  return "constant";
}

LrSchedule schedule_from_string(const std::string& s) {
  if (s == "constant") return LrSchedule::kConstant;
  if (s == "inverse_sqrt") return LrSchedule::kInverseSqrt;
  if (s == "linear") return LrSchedule::kLinear;
  throw ConfigError("unknown learning-rate schedule '" + s + "' (constant, inverse_sqrt, linear)");
}

void OptimizerSpec::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("optimizer lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("optimizer betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("optimizer eps must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
  if (schedule == LrSchedule::kLinear && total_steps == 0) throw ConfigError("linear schedule needs total_steps");
}

Json OptimizerSpec::to_json() const {
  return Json{{"lr", lr},
              {"beta1", beta1},
              {"beta2", beta2},
              {"eps", eps},
              {"weight_decay", weight_decay},
              {"schedule", to_string(schedule)},
              {"warmup_steps", warmup_steps},
              {"total_steps", total_steps},
              {"clip_norm", clip_norm}};
}

OptimizerSpec OptimizerSpec::from_json(const Json& j) {
  OptimizerSpec s;
  try {
    s.lr = j.value("lr", s.lr);
    s.beta1 = j.value("beta1", s.beta1);
    s.beta2 = j.value("beta2", s.beta2);
    s.eps = j.value("eps", s.eps);
    s.weight_decay = j.value("weight_decay", s.weight_decay);
    s.schedule = schedule_from_string(j.value("schedule", std::string("constant")));
    s.warmup_steps = j.value("warmup_steps", s.warmup_steps);
    s.total_steps = j.value("total_steps", s.total_steps);
    s.clip_norm = j.value("clip_norm", s.clip_norm);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("optimizer: ") + e.what());
  }
  s.validate();
  return s;
}

double learning_rate(const OptimizerSpec& spec, std::size_t step) {
  const double n = static_cast<double>(step + 1);
  const double w = static_cast<double>(spec.warmup_steps);
  switch (spec.schedule) {
    case LrSchedule::kConstant:
      return spec.lr;
    case LrSchedule::kInverseSqrt:
      if (spec.warmup_steps == 0) return spec.lr / std::sqrt(n);
      return spec.lr * std::min(n / w, std::sqrt(w / n));
    case LrSchedule::kLinear: {
      if (spec.warmup_steps > 0 && step < spec.warmup_steps) return spec.lr * n / w;
      const double total = static_cast<double>(spec.total_steps);
      const double decay = std::max(1.0, total - w);
      return spec.lr * std::max(0.0, (total - static_cast<double>(step)) / decay);
    }
  }
  return spec.lr;
}

Adam::Adam(OptimizerSpec spec, const ParameterSet& params) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(Matrix::Zero(params.at(i).rows(), params.at(i).cols()));
    v_.push_back(Matrix::Zero(params.at(i).rows(), params.at(i).cols()));
  }
}

double Adam::step(ParameterSet& params, std::vector<Matrix>& grads) {
  if (grads.size() != params.size()) {
    throw InvalidArgument(fmt::format("Adam::step: {} gradients for {} parameters", grads.size(), params.size()));
  }
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    throw TrainingError("non-finite gradient norm");
  }
  const double clip = (spec_.clip_norm > 0.0 && norm > spec_.clip_norm) ? spec_.clip_norm / norm : 1.0;
  const double lr = learning_rate(spec_, t_);
  ++t_;
  const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params.at(i);
    const Matrix g = grads[i] * clip;
    m_[i] = spec_.beta1 * m_[i] + (1.0 - spec_.beta1) * g;
    v_[i] = spec_.beta2 * v_[i] + (1.0 - spec_.beta2) * g.cwiseProduct(g);
    const double a = lr / bc1;
    const double s = 1.0 / std::sqrt(bc2);
    p.array() -= a * m_[i].array() / ((v_[i].array().sqrt() * s) + spec_.eps);
    if (spec_.weight_decay > 0.0) p *= (1.0 - lr * spec_.weight_decay);
  }
  return norm;
}

void Adam::restore(std::size_t steps_taken, std::vector<Matrix> m, std::vector<Matrix> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw SchemaError("optimizer state does not match the parameter set");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].rows() != m_[i].rows() || m[i].cols() != m_[i].cols() || v[i].rows() != v_[i].rows() ||
        v[i].cols() != v_[i].cols()) {
      throw SchemaError(fmt::format("optimizer state shape mismatch at slot {}", i));
    }
  }
  t_ = steps_taken;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace eduqg
