#include "swingdiff/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace swingdiff {
namespace ad {

TracedScalar Tape::push(Node node, double value) {
  if (nodes_.size() >= kNoParent) {
    throw Error(ErrorKind::invalid_argument, "tape exceeds 2^32-1 nodes");
  }
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(node);
  return TracedScalar(value, this, index);
}

void Tape::check_owned(const TracedScalar& x) const {
  if (!x.is_constant() && x.tape() != this) {
    throw Error(ErrorKind::tape_mismatch, "operand belongs to a different tape");
  }
}

TracedScalar Tape::variable(double value) {
  ++leaves_;
  return push(Node{}, value);
}

TracedScalar Tape::unary(const TracedScalar& a, double value, double da) {
  check_owned(a);
  Node n;
  n.parent[0] = a.node();
  n.partial[0] = da;
  return push(n, value);
}

TracedScalar Tape::binary(const TracedScalar& a, const TracedScalar& b, double value, double da,
                          double db) {
  check_owned(a);
  check_owned(b);
  Node n;
  int k = 0;
  if (!a.is_constant()) {
    n.parent[k] = a.node();
    n.partial[k++] = da;
  }
  if (!b.is_constant()) {
    n.parent[k] = b.node();
    n.partial[k++] = db;
  }
  return push(n, value);
}

std::vector<TracedScalar> Tape::custom(std::span<const TracedScalar> inputs,
                                       std::span<const double> output_values,
                                       CustomBackward backward) {
  CustomOp op;
  op.inputs.reserve(inputs.size());
  for (const auto& x : inputs) {
    check_owned(x);
    op.inputs.push_back(x.is_constant() ? kNoParent : x.node());
  }
  op.first_output = static_cast<std::uint32_t>(nodes_.size());
  op.output_count = static_cast<std::uint32_t>(output_values.size());
  op.backward = std::move(backward);
  const auto id = static_cast<std::uint32_t>(customs_.size());
  customs_.push_back(std::move(op));

  std::vector<TracedScalar> out;
  out.reserve(output_values.size());
  for (double v : output_values) {
    Node n;
    n.custom = id;
    out.push_back(push(n, v));
  }
  return out;
}

void Tape::clear() {
  nodes_.clear();
  customs_.clear();
  leaves_ = 0;
}

Gradient backward(const Tape& tape, const TracedScalar& output) {
  Gradient g;
  g.tape_ = &tape;
  if (output.is_constant()) return g;
  if (output.tape() != &tape) {
    throw Error(ErrorKind::tape_mismatch, "backward: output is not recorded on this tape");
  }
  const std::size_t n = static_cast<std::size_t>(output.node()) + 1;
  auto& adj = g.adjoints_;
  adj.assign(n, 0.0);
  adj[n - 1] = 1.0;

  std::vector<double> scratch;
  for (std::size_t i = n; i-- > 0;) {
    const auto& node = tape.nodes_[i];
    if (node.custom != Tape::kNoCustom) {
      const auto& op = tape.customs_[node.custom];
      if (i != op.first_output) continue;  // handled once all outputs are final
      const std::size_t end = std::min<std::size_t>(op.first_output + op.output_count, n);
      bool any = false;
      for (std::size_t k = op.first_output; k < end; ++k) any = any || adj[k] != 0.0;
      if (!any) continue;
      std::vector<double> out_adj(op.output_count, 0.0);
      std::copy(adj.begin() + op.first_output, adj.begin() + static_cast<std::ptrdiff_t>(end),
                out_adj.begin());
      scratch.assign(op.inputs.size(), 0.0);
      op.backward(out_adj, scratch);
      for (std::size_t k = 0; k < op.inputs.size(); ++k) {
        if (op.inputs[k] != Tape::kNoParent) adj[op.inputs[k]] += scratch[k];
      }
      continue;
    }
    const double a = adj[i];
    if (a == 0.0) continue;
    if (node.parent[0] != Tape::kNoParent) adj[node.parent[0]] += node.partial[0] * a;
    if (node.parent[1] != Tape::kNoParent) adj[node.parent[1]] += node.partial[1] * a;
  }
  return g;
}

double Gradient::wrt(const TracedScalar& x) const {
  if (x.is_constant()) return 0.0;
  if (tape_ != nullptr && x.tape() != tape_) {
    throw Error(ErrorKind::tape_mismatch, "gradient queried for a scalar on another tape");
  }
  return x.node() < adjoints_.size() ? adjoints_[x.node()] : 0.0;
}

std::vector<double> Gradient::wrt(std::span<const TracedScalar> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(wrt(x));
  return out;
}

namespace {

Tape* common_tape(const TracedScalar& a, const TracedScalar& b) {
  if (a.is_constant()) return b.tape();
  if (!b.is_constant() && a.tape() != b.tape()) {
    throw Error(ErrorKind::tape_mismatch, "operands belong to different tapes");
  }
  return a.tape();
}

template <class F>
TracedScalar apply_unary(const TracedScalar& x, double value, F&& derivative) {
  if (x.is_constant()) return TracedScalar(value);
  return x.tape()->unary(x, value, derivative());
}

}  // namespace

TracedScalar operator+(const TracedScalar& a, const TracedScalar& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value() + b.value();
  return t ? t->binary(a, b, v, 1.0, 1.0) : TracedScalar(v);
}

TracedScalar operator-(const TracedScalar& a, const TracedScalar& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value() - b.value();
  return t ? t->binary(a, b, v, 1.0, -1.0) : TracedScalar(v);
}

TracedScalar operator*(const TracedScalar& a, const TracedScalar& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value() * b.value();
  return t ? t->binary(a, b, v, b.value(), a.value()) : TracedScalar(v);
}

TracedScalar operator/(const TracedScalar& a, const TracedScalar& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value() / b.value();
  return t ? t->binary(a, b, v, 1.0 / b.value(), -v / b.value()) : TracedScalar(v);
}

TracedScalar operator-(const TracedScalar& a) {
  return apply_unary(a, -a.value(), [] { return -1.0; });
}

TracedScalar sin(const TracedScalar& x) {
  return apply_unary(x, std::sin(x.value()), [&] { return std::cos(x.value()); });
}

TracedScalar cos(const TracedScalar& x) {
  return apply_unary(x, std::cos(x.value()), [&] { return -std::sin(x.value()); });
}

TracedScalar tanh(const TracedScalar& x) {
  const double t = std::tanh(x.value());
  return apply_unary(x, t, [&] { return 1.0 - t * t; });
}

TracedScalar exp(const TracedScalar& x) {
  const double e = std::exp(x.value());
  return apply_unary(x, e, [&] { return e; });
}

TracedScalar log(const TracedScalar& x) {
  return apply_unary(x, std::log(x.value()), [&] { return 1.0 / x.value(); });
}

TracedScalar sqrt(const TracedScalar& x) {
  const double r = std::sqrt(x.value());
  return apply_unary(x, r, [&] { return 0.5 / r; });
}

TracedScalar softplus(const TracedScalar& x) {
  return apply_unary(x, softplus(x.value()), [&] { return sigmoid(x.value()); });
}

TracedScalar sigmoid(const TracedScalar& x) {
  const double s = sigmoid(x.value());
  return apply_unary(x, s, [&] { return s * (1.0 - s); });
}

}  // namespace ad
}  // namespace swingdiff
