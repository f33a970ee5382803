#pragma once

// Scalar reverse-mode tape and forward-mode dual numbers.
//
// A `Tape` records one node per elementary operation on traced operands. Node
// indices are assigned in evaluation order, so every parent index is smaller
// than its child's and a single reverse sweep visits each node once.
// `Dual<T>` carries a tangent alongside a primal and composes over
// `TracedScalar`, which gives reverse-over-forward mixed derivatives.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "swingdiff/error.hpp"

namespace swingdiff::ad {

class Tape;

/// A real value optionally bound to a node of a tape. Values not bound to a
/// tape are constants and contribute nothing to gradients.
class TracedScalar {
 public:
  TracedScalar() = default;
  TracedScalar(double value) : value_(value) {}  // NOLINT: implicit constant

  double value() const noexcept { return value_; }
  bool is_constant() const noexcept { return tape_ == nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::uint32_t node() const noexcept { return node_; }

 private:
  friend class Tape;
  TracedScalar(double value, Tape* tape, std::uint32_t node)
      : value_(value), tape_(tape), node_(node) {}

  double value_ = 0.0;
  Tape* tape_ = nullptr;
  std::uint32_t node_ = 0;
};

/// Backward callback for a fused multi-output node. Receives the adjoints of
/// the op's outputs and must write d(out)/d(input)-weighted adjoints into
/// `input_adjoints` (zero-initialised, one slot per declared input).
using CustomBackward =
    std::function<void(std::span<const double> output_adjoints, std::span<double> input_adjoints)>;

class Gradient;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New leaf node.
  TracedScalar variable(double value);

  /// Records a node with one traced parent. `a` must be on this tape.
  TracedScalar unary(const TracedScalar& a, double value, double da);

  /// Records a node with two parents; either may be constant.
  TracedScalar binary(const TracedScalar& a, const TracedScalar& b, double value, double da,
                      double db);

  /// Records a fused op producing `output_values.size()` contiguous nodes.
  /// Constant inputs are accepted; their adjoints are discarded.
  std::vector<TracedScalar> custom(std::span<const TracedScalar> inputs,
                                   std::span<const double> output_values, CustomBackward backward);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept { return leaves_; }

  /// Drops every node. Scalars recorded earlier must not be used afterwards.
  void clear();

 private:
  friend Gradient backward(const Tape& tape, const TracedScalar& output);

  static constexpr std::uint32_t kNoParent = 0xffffffffu;
  static constexpr std::uint32_t kNoCustom = 0xffffffffu;

  struct Node {
    std::uint32_t parent[2] = {kNoParent, kNoParent};
    double partial[2] = {0.0, 0.0};
    std::uint32_t custom = kNoCustom;
  };

  struct CustomOp {
    std::vector<std::uint32_t> inputs;  // kNoParent for constants
    std::uint32_t first_output = 0;
    std::uint32_t output_count = 0;
    CustomBackward backward;
  };

  TracedScalar push(Node node, double value);
  void check_owned(const TracedScalar& x) const;

  std::vector<Node> nodes_;
  std::vector<CustomOp> customs_;
  std::size_t leaves_ = 0;
};

/// Adjoints of one backward sweep, indexed by node.
class Gradient {
 public:
  Gradient() = default;

  /// d(output)/d(x). Constants and nodes that are not ancestors give 0.
  double wrt(const TracedScalar& x) const;

  std::vector<double> wrt(std::span<const TracedScalar> xs) const;

 private:
  friend Gradient backward(const Tape& tape, const TracedScalar& output);
  const Tape* tape_ = nullptr;
  std::vector<double> adjoints_;
};

/// Reverse sweep from `output`. Throws `ErrorKind::tape_mismatch` if the
/// output is traced on a different tape. A constant output yields all zeros.
Gradient backward(const Tape& tape, const TracedScalar& output);

// ---- elementary operations on TracedScalar --------------------------------

TracedScalar operator+(const TracedScalar& a, const TracedScalar& b);
TracedScalar operator-(const TracedScalar& a, const TracedScalar& b);
TracedScalar operator*(const TracedScalar& a, const TracedScalar& b);
TracedScalar operator/(const TracedScalar& a, const TracedScalar& b);
TracedScalar operator-(const TracedScalar& a);

inline TracedScalar operator+(const TracedScalar& a, double b) { return a + TracedScalar(b); }
inline TracedScalar operator+(double a, const TracedScalar& b) { return TracedScalar(a) + b; }
inline TracedScalar operator-(const TracedScalar& a, double b) { return a - TracedScalar(b); }
inline TracedScalar operator-(double a, const TracedScalar& b) { return TracedScalar(a) - b; }
inline TracedScalar operator*(const TracedScalar& a, double b) { return a * TracedScalar(b); }
inline TracedScalar operator*(double a, const TracedScalar& b) { return TracedScalar(a) * b; }
inline TracedScalar operator/(const TracedScalar& a, double b) { return a / TracedScalar(b); }
inline TracedScalar operator/(double a, const TracedScalar& b) { return TracedScalar(a) / b; }

inline TracedScalar& operator+=(TracedScalar& a, const TracedScalar& b) { return a = a + b; }
inline TracedScalar& operator-=(TracedScalar& a, const TracedScalar& b) { return a = a - b; }
inline TracedScalar& operator*=(TracedScalar& a, const TracedScalar& b) { return a = a * b; }
inline TracedScalar& operator/=(TracedScalar& a, const TracedScalar& b) { return a = a / b; }

TracedScalar sin(const TracedScalar& x);
TracedScalar cos(const TracedScalar& x);
TracedScalar tanh(const TracedScalar& x);
TracedScalar exp(const TracedScalar& x);
TracedScalar log(const TracedScalar& x);
TracedScalar sqrt(const TracedScalar& x);
TracedScalar softplus(const TracedScalar& x);
TracedScalar sigmoid(const TracedScalar& x);

// Plain-double counterparts so generic code can call these unqualified.

/// ln(1 + e^x), evaluated as max(x,0) + ln(1 + e^-|x|).
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Inverse of softplus for v > 0.
inline double softplus_inverse(double v) { return v + std::log(-std::expm1(-v)); }

inline double value_of(double x) { return x; }
inline double value_of(const TracedScalar& x) { return x.value(); }

// ---- forward mode ----------------------------------------------------------

/// Primal/tangent pair. `T` is `double` or `TracedScalar`.
template <class T>
struct Dual {
  T primal{};
  T tangent{};

  Dual() = default;
  Dual(double v) : primal(v), tangent(0.0) {}  // NOLINT: implicit constant
  Dual(const T& p)  // NOLINT: implicit constant-tangent lift
    requires(!std::is_same_v<T, double>)
      : primal(p), tangent(0.0) {}
  Dual(T p, T t) : primal(std::move(p)), tangent(std::move(t)) {}
};

/// Seeds a directional derivative.
template <class T>
Dual<T> dual_lift(T x, double tangent) {
  return Dual<T>(std::move(x), T(tangent));
}

template <class T>
double value_of(const Dual<T>& x) {
  return value_of(x.primal);
}

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.primal + b.primal, a.tangent + b.tangent};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.primal - b.primal, a.tangent - b.tangent};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.primal * b.primal, a.tangent * b.primal + a.primal * b.tangent};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.primal / b.primal;
  return {q, (a.tangent - q * b.tangent) / b.primal};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.primal, -a.tangent};
}

// Mixed operands: the scalar side is non-deduced so `double` converts to `T`.
template <class T>
Dual<T> operator+(const Dual<T>& a, const std::type_identity_t<T>& b) { return {a.primal + b, a.tangent}; }
template <class T>
Dual<T> operator+(const std::type_identity_t<T>& a, const Dual<T>& b) { return {a + b.primal, b.tangent}; }
template <class T>
Dual<T> operator-(const Dual<T>& a, const std::type_identity_t<T>& b) { return {a.primal - b, a.tangent}; }
template <class T>
Dual<T> operator-(const std::type_identity_t<T>& a, const Dual<T>& b) { return {a - b.primal, -b.tangent}; }
template <class T>
Dual<T> operator*(const Dual<T>& a, const std::type_identity_t<T>& b) { return {a.primal * b, a.tangent * b}; }
template <class T>
Dual<T> operator*(const std::type_identity_t<T>& a, const Dual<T>& b) { return {a * b.primal, a * b.tangent}; }
template <class T>
Dual<T> operator/(const Dual<T>& a, const std::type_identity_t<T>& b) { return {a.primal / b, a.tangent / b}; }
template <class T>
Dual<T> operator/(const std::type_identity_t<T>& a, const Dual<T>& b) { return Dual<T>(a, T(0.0)) / b; }

template <class T>
Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) { return a = a + b; }
template <class T>
Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) { return a = a - b; }
template <class T>
Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) { return a = a * b; }

template <class T>
Dual<T> sin(const Dual<T>& x) {
  using std::cos, std::sin;
  return {sin(x.primal), cos(x.primal) * x.tangent};
}
template <class T>
Dual<T> cos(const Dual<T>& x) {
  using std::cos, std::sin;
  return {cos(x.primal), -(sin(x.primal) * x.tangent)};
}
template <class T>
Dual<T> tanh(const Dual<T>& x) {
  using std::tanh;
  T t = tanh(x.primal);
  return {t, (1.0 - t * t) * x.tangent};
}
template <class T>
Dual<T> exp(const Dual<T>& x) {
  using std::exp;
  T e = exp(x.primal);
  return {e, e * x.tangent};
}
template <class T>
Dual<T> log(const Dual<T>& x) {
  using std::log;
  return {log(x.primal), x.tangent / x.primal};
}
template <class T>
Dual<T> sqrt(const Dual<T>& x) {
  using std::sqrt;
  T r = sqrt(x.primal);
  return {r, x.tangent / (2.0 * r)};
}
template <class T>
Dual<T> sigmoid(const Dual<T>& x) {
  T s = sigmoid(x.primal);
  return {s, s * (1.0 - s) * x.tangent};
}
template <class T>
Dual<T> softplus(const Dual<T>& x) {
  return {softplus(x.primal), sigmoid(x.primal) * x.tangent};
}

}  // namespace swingdiff::ad
