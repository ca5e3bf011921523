#pragma once

// Many-valued vector logic on truth weights in [0,1], applied elementwise.
// A weight a stands for the truth vector a*s + (1-a)*n over orthonormal
// true/false basis vectors; the connectives below are the scalar reductions
// of the corresponding bilinear operators.

#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace flex::logic {

class LogicError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Scalar connectives.
inline double not_(double a) { return 1.0 - a; }
inline double and_(double a, double b) { return a * b; }
inline double or_(double a, double b) { return a + b - a * b; }
inline double impl(double a, double b) { return 1.0 - a * (1.0 - b); }
inline double xor_(double a, double b) { return a + b - 2.0 * a * b; }

// A vector of truth weights; construction rejects entries outside [0,1].
class TruthVec {
 public:
  TruthVec() = default;
  explicit TruthVec(std::vector<double> values);
  TruthVec(std::initializer_list<double> values)
      : TruthVec(std::vector<double>(values)) {}

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }
  bool operator==(const TruthVec&) const = default;

 private:
  std::vector<double> values_;
};

TruthVec vnot(const TruthVec& a);
TruthVec vand(std::span<const TruthVec> inputs);
// n-ary inclusion-exclusion, computed as a left fold of the binary OR.
TruthVec vor(std::span<const TruthVec> inputs);
TruthVec vimpl(const TruthVec& a, const TruthVec& b);
TruthVec vxor(const TruthVec& a, const TruthVec& b);
TruthVec vmin(std::span<const TruthVec> inputs);
TruthVec vmax(std::span<const TruthVec> inputs);

// Snap round-off just outside [0,1] back into range. Throws if the value
// is off by more than 1e-9, which would indicate a real defect.
double clamp_unit(double v);

}  // namespace flex::logic
