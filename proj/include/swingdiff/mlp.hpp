#pragma once

// Fully connected tanh network used as the PINN solution map and the NODE
// vector field. Parameters live in one flat vector, layer by layer: the
// row-major weight matrix (n_out x n_in) followed by the bias (n_out).
//
// Two evaluation routes exist. `forward<P, X>` is generic over scalar types and
// records one tape node per multiply/add, which is exact but slow. The batched
// routes run dense Eigen kernels; `forward_fused` records a whole batched
// network evaluation as a single multi-output tape node whose backward applies
// the hand-derived vector-Jacobian product.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <span>
#include <vector>

#include "swingdiff/autodiff.hpp"

namespace swingdiff::mlp {

struct Layer {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

struct MlpConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden{200, 150, 100, 50};
  std::size_t output_dim = 2;

  void validate() const;
  std::vector<Layer> layers() const;
  std::size_t parameter_count() const;

  bool operator==(const MlpConfig&) const = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class MlpParams {
 public:
  MlpParams() = default;
  /// All-zero parameters.
  explicit MlpParams(MlpConfig cfg);
  /// Rebuilds from a flat vector; throws `dimension_mismatch` on a size error.
  static MlpParams from_flat(MlpConfig cfg, std::vector<double> flat);

  const MlpConfig& config() const { return cfg_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  Eigen::Map<RowMatrix> weight(std::size_t layer);
  Eigen::Map<const RowMatrix> weight(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

 private:
  MlpConfig cfg_;
  std::vector<Layer> layers_;
  // Eigen picks its vector peeling from the pointer's alignment, so the base
  // must not depend on the allocator for results to be reproducible.
  std::vector<double, Eigen::aligned_allocator<double>> values_;
};

/// Glorot-uniform weights, zero biases. Deterministic in `seed`.
MlpParams init(const MlpConfig& cfg, std::uint64_t seed);

/// Generic evaluation, one scalar op at a time. `params` is the flat vector.
template <class P, class X>
auto forward(const MlpConfig& cfg, std::span<const P> params, std::span<const X> x) {
  using std::tanh;
  using R = decltype(std::declval<P>() * std::declval<X>());
  if (x.size() != cfg.input_dim) {
    throw Error(ErrorKind::dimension_mismatch, "mlp input has " + std::to_string(x.size()) +
                                                   " entries, expected " +
                                                   std::to_string(cfg.input_dim));
  }
  const auto layers = cfg.layers();
  if (params.size() != cfg.parameter_count()) {
    throw Error(ErrorKind::dimension_mismatch, "mlp parameter vector has the wrong length");
  }
  std::vector<R> a(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    std::vector<R> z(L.n_out);
    for (std::size_t o = 0; o < L.n_out; ++o) {
      R acc = R(params[L.bias_offset + o]);
      const std::size_t row = L.weight_offset + o * L.n_in;
      for (std::size_t i = 0; i < L.n_in; ++i) acc = acc + params[row + i] * a[i];
      z[o] = (l + 1 < layers.size()) ? R(tanh(acc)) : acc;
    }
    a = std::move(z);
  }
  return a;
}

/// Plain evaluation of a single input.
std::vector<double> forward(const MlpParams& params, std::span<const double> x);

/// d(output)/d(input), exact, via one forward-mode seed per input column.
Eigen::MatrixXd input_jacobian(const MlpParams& params, std::span<const double> x);

/// Activations cached by a batched pass (one column per sample).
struct BatchCache {
  std::vector<Eigen::MatrixXd> a;      // a[0] = inputs, a[l] = hidden layer l outputs
  std::vector<Eigen::MatrixXd> adot;   // tangents of a (tangent mode only)
  std::vector<Eigen::MatrixXd> zdot;   // pre-activation tangents of hidden layers
  bool tangent = false;
};

struct BatchResult {
  Eigen::MatrixXd y;     // output_dim x batch
  Eigen::MatrixXd ydot;  // d y / d input[tangent_input], tangent mode only
  BatchCache cache;
};

/// Batched forward pass. With `tangent_input`, also propagates the
/// derivative of every output with respect to that input coordinate.
BatchResult batch_forward(const MlpParams& params, const Eigen::MatrixXd& inputs,
                          std::optional<std::size_t> tangent_input = std::nullopt);

/// Vector-Jacobian product of a batched pass. Accumulates into `param_grad`
/// (flat layout) and, if non-null, writes the input adjoints.
void batch_backward(const MlpParams& params, const BatchCache& cache, const Eigen::MatrixXd& y_adj,
                    const Eigen::MatrixXd* ydot_adj, std::span<double> param_grad,
                    Eigen::MatrixXd* input_adj);

/// Parameters as tape leaves, with the values snapshot the fused node reads.
struct TracedNet {
  std::shared_ptr<const MlpParams> values;
  std::vector<ad::TracedScalar> params;
};

TracedNet trace(ad::Tape& tape, const MlpParams& params);

struct TracedOutput {
  std::vector<ad::TracedScalar> y;     // column-major output_dim x batch
  std::vector<ad::TracedScalar> ydot;  // same layout, tangent mode only
};

/// Records a batched evaluation as one fused tape node. `inputs` is
/// column-major input_dim x batch and may mix traced values and constants.
TracedOutput forward_fused(ad::Tape& tape, const TracedNet& net,
                           std::span<const ad::TracedScalar> inputs, std::size_t batch,
                           std::optional<std::size_t> tangent_input = std::nullopt);

// ---- optimizer -------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction and a fixed learning rate.
class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// ---- checkpoints -----------------------------------------------------------

struct Checkpoint {
  MlpParams params;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

/// JSON document: {"format", "version", "config": {input_dim, hidden,
/// output_dim}, "seed", "epoch", "parameter_count", "params": [...]}. Doubles
/// are written in shortest round-trip form, so load(save(x)) == x exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace swingdiff::mlp
