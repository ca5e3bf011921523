#include "flex/vector_logic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace flex::logic {

namespace {

constexpr double kRoundOff = 1e-9;

void require_arity(std::span<const TruthVec> inputs, std::size_t min_n,
                   const char* op) {
  if (inputs.size() < min_n) {
    throw LogicError(std::string(op) + ": needs at least " +
                     std::to_string(min_n) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
  for (const TruthVec& v : inputs) {
    if (v.size() != inputs[0].size()) {
      throw LogicError(std::string(op) + ": length mismatch " +
                       std::to_string(inputs[0].size()) + " vs " +
                       std::to_string(v.size()));
    }
  }
}

void require_same_length(const TruthVec& a, const TruthVec& b, const char* op) {
  if (a.size() != b.size()) {
    throw LogicError(std::string(op) + ": length mismatch " +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

template <typename F>
TruthVec fold(std::span<const TruthVec> inputs, F f) {
  std::vector<double> acc = inputs[0].values();
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = f(acc[i], inputs[k][i]);
  }
  for (double& v : acc) v = clamp_unit(v);
  return TruthVec(std::move(acc));
}

template <typename F>
TruthVec zip(const TruthVec& a, const TruthVec& b, F f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = clamp_unit(f(a[i], b[i]));
  return TruthVec(std::move(out));
}

}  // namespace

double clamp_unit(double v) {
  if (v < -kRoundOff || v > 1.0 + kRoundOff || std::isnan(v)) {
    throw LogicError("truth value " + std::to_string(v) + " outside [0,1]");
  }
  return std::clamp(v, 0.0, 1.0);
}

TruthVec::TruthVec(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw LogicError("truth value " + std::to_string(v) + " outside [0,1]");
    }
  }
}

TruthVec vnot(const TruthVec& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = clamp_unit(not_(a[i]));
  return TruthVec(std::move(out));
}

TruthVec vand(std::span<const TruthVec> inputs) {
  require_arity(inputs, 2, "vand");
  return fold(inputs, and_);
}

TruthVec vor(std::span<const TruthVec> inputs) {
  require_arity(inputs, 2, "vor");
  return fold(inputs, or_);
}

TruthVec vimpl(const TruthVec& a, const TruthVec& b) {
  require_same_length(a, b, "vimpl");
  return zip(a, b, impl);
}

TruthVec vxor(const TruthVec& a, const TruthVec& b) {
  require_same_length(a, b, "vxor");
  return zip(a, b, xor_);
}

TruthVec vmin(std::span<const TruthVec> inputs) {
  require_arity(inputs, 1, "vmin");
  return fold(inputs, [](double x, double y) { return std::min(x, y); });
}

TruthVec vmax(std::span<const TruthVec> inputs) {
  require_arity(inputs, 1, "vmax");
  return fold(inputs, [](double x, double y) { return std::max(x, y); });
}

}  // namespace flex::logic
