#include "swingdiff/mlp.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "swingdiff/random.hpp"

namespace swingdiff::mlp {

void MlpConfig::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw Error(ErrorKind::invalid_argument, "mlp input and output dims must be >= 1");
  }
  for (auto h : hidden) {
    if (h < 1) throw Error(ErrorKind::invalid_argument, "mlp hidden widths must be >= 1");
  }
}

std::vector<Layer> MlpConfig::layers() const {
  std::vector<Layer> out;
  std::size_t offset = 0;
  std::size_t n_in = input_dim;
  auto add = [&](std::size_t n_out) {
    Layer L{n_in, n_out, offset, offset + n_in * n_out};
    offset = L.bias_offset + n_out;
    out.push_back(L);
    n_in = n_out;
  };
  for (auto h : hidden) add(h);
  add(output_dim);
  return out;
}

std::size_t MlpConfig::parameter_count() const {
  std::size_t n = 0;
  std::size_t n_in = input_dim;
  for (auto h : hidden) {
    n += (n_in + 1) * h;
    n_in = h;
  }
  return n + (n_in + 1) * output_dim;
}

MlpParams::MlpParams(MlpConfig cfg)
    : cfg_(std::move(cfg)), layers_(cfg_.layers()), values_(cfg_.parameter_count(), 0.0) {
  cfg_.validate();
}

MlpParams MlpParams::from_flat(MlpConfig cfg, std::vector<double> flat) {
  MlpParams p(std::move(cfg));
  if (flat.size() != p.values_.size()) {
    throw Error(ErrorKind::dimension_mismatch,
                "flat parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                    std::to_string(p.values_.size()));
  }
  p.values_.assign(flat.begin(), flat.end());
  return p;
}

Eigen::Map<RowMatrix> MlpParams::weight(std::size_t l) {
  const auto& L = layers_.at(l);
  return {values_.data() + L.weight_offset, static_cast<Eigen::Index>(L.n_out),
          static_cast<Eigen::Index>(L.n_in)};
}

Eigen::Map<const RowMatrix> MlpParams::weight(std::size_t l) const {
  const auto& L = layers_.at(l);
  return {values_.data() + L.weight_offset, static_cast<Eigen::Index>(L.n_out),
          static_cast<Eigen::Index>(L.n_in)};
}

Eigen::Map<Eigen::VectorXd> MlpParams::bias(std::size_t l) {
  const auto& L = layers_.at(l);
  return {values_.data() + L.bias_offset, static_cast<Eigen::Index>(L.n_out)};
}

Eigen::Map<const Eigen::VectorXd> MlpParams::bias(std::size_t l) const {
  const auto& L = layers_.at(l);
  return {values_.data() + L.bias_offset, static_cast<Eigen::Index>(L.n_out)};
}

MlpParams init(const MlpConfig& cfg, std::uint64_t seed) {
  MlpParams p(cfg);
  auto rng = make_rng(seed, Stream::init);
  for (std::size_t l = 0; l < p.layers().size(); ++l) {
    const auto& L = p.layers()[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(L.n_in + L.n_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto w = p.flat().subspan(L.weight_offset, L.n_in * L.n_out);
    for (auto& v : w) v = dist(rng);
  }
  return p;
}

std::vector<double> forward(const MlpParams& params, std::span<const double> x) {
  if (x.size() != params.config().input_dim) {
    throw Error(ErrorKind::dimension_mismatch, "mlp input has " + std::to_string(x.size()) +
                                                   " entries, expected " +
                                                   std::to_string(params.config().input_dim));
  }
  Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  auto r = batch_forward(params, in);
  return {r.y.data(), r.y.data() + r.y.size()};
}

Eigen::MatrixXd input_jacobian(const MlpParams& params, std::span<const double> x) {
  const auto& cfg = params.config();
  if (x.size() != cfg.input_dim) {
    throw Error(ErrorKind::dimension_mismatch, "input_jacobian: wrong input dimension");
  }
  Eigen::MatrixXd J(cfg.output_dim, cfg.input_dim);
  std::vector<ad::Dual<double>> xd(x.size());
  for (std::size_t col = 0; col < x.size(); ++col) {
    for (std::size_t i = 0; i < x.size(); ++i) xd[i] = ad::dual_lift(x[i], i == col ? 1.0 : 0.0);
    auto y = forward<double, ad::Dual<double>>(cfg, params.flat(), xd);
    for (std::size_t o = 0; o < y.size(); ++o) {
      J(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(col)) = y[o].tangent;
    }
  }
  return J;
}

BatchResult batch_forward(const MlpParams& params, const Eigen::MatrixXd& inputs,
                          std::optional<std::size_t> tangent_input) {
  const auto& cfg = params.config();
  if (static_cast<std::size_t>(inputs.rows()) != cfg.input_dim) {
    throw Error(ErrorKind::dimension_mismatch, "batch_forward: inputs need input_dim rows");
  }
  if (tangent_input && *tangent_input >= cfg.input_dim) {
    throw Error(ErrorKind::invalid_argument, "batch_forward: tangent input out of range");
  }
  const auto& layers = params.layers();
  const std::size_t hidden = layers.size() - 1;
  const Eigen::Index batch = inputs.cols();

  BatchResult r;
  auto& c = r.cache;
  c.tangent = tangent_input.has_value();
  c.a.resize(hidden + 1);
  c.a[0] = inputs;
  if (c.tangent) {
    c.adot.resize(hidden + 1);
    c.zdot.resize(hidden + 1);
    c.adot[0] = Eigen::MatrixXd::Zero(inputs.rows(), batch);
    c.adot[0].row(static_cast<Eigen::Index>(*tangent_input)).setOnes();
  }
  for (std::size_t l = 1; l <= hidden; ++l) {
    const auto W = params.weight(l - 1);
    Eigen::MatrixXd z = W * c.a[l - 1];
    z.colwise() += params.bias(l - 1);
    c.a[l] = z.array().tanh().matrix();
    if (c.tangent) {
      c.zdot[l] = W * c.adot[l - 1];
      c.adot[l] = ((1.0 - c.a[l].array().square()) * c.zdot[l].array()).matrix();
    }
  }
  const auto W = params.weight(hidden);
  r.y = W * c.a[hidden];
  r.y.colwise() += params.bias(hidden);
  if (c.tangent) r.ydot = W * c.adot[hidden];
  return r;
}

void batch_backward(const MlpParams& params, const BatchCache& c, const Eigen::MatrixXd& y_adj,
                    const Eigen::MatrixXd* ydot_adj, std::span<double> param_grad,
                    Eigen::MatrixXd* input_adj) {
  const auto& layers = params.layers();
  const std::size_t hidden = layers.size() - 1;
  const bool tangent = c.tangent && ydot_adj != nullptr;
  if (param_grad.size() != params.size()) {
    throw Error(ErrorKind::dimension_mismatch, "batch_backward: gradient buffer size mismatch");
  }
  auto grad_w = [&](std::size_t l) {
    const auto& L = layers[l];
    return Eigen::Map<RowMatrix>(param_grad.data() + L.weight_offset,
                                 static_cast<Eigen::Index>(L.n_out),
                                 static_cast<Eigen::Index>(L.n_in));
  };
  auto grad_b = [&](std::size_t l) {
    const auto& L = layers[l];
    return Eigen::Map<Eigen::VectorXd>(param_grad.data() + L.bias_offset,
                                       static_cast<Eigen::Index>(L.n_out));
  };

  // Products land in owned (aligned) temporaries first: evaluated straight into
  // the caller's buffer, Eigen's FMA packet path would cover a different set of
  // entries depending on where that buffer sits in memory.
  RowMatrix gw;
  Eigen::VectorXd gb;

  // Output layer (affine).
  gw.noalias() = y_adj * c.a[hidden].transpose();
  if (tangent) gw.noalias() += (*ydot_adj) * c.adot[hidden].transpose();
  grad_w(hidden) += gw;
  gb = y_adj.rowwise().sum();
  grad_b(hidden) += gb;
  Eigen::MatrixXd a_adj = params.weight(hidden).transpose() * y_adj;
  Eigen::MatrixXd adot_adj;
  if (tangent) adot_adj = params.weight(hidden).transpose() * (*ydot_adj);

  for (std::size_t l = hidden; l >= 1; --l) {
    const auto s = (1.0 - c.a[l].array().square()).eval();
    Eigen::MatrixXd z_adj;
    Eigen::MatrixXd zdot_adj;
    if (tangent) {
      z_adj = (s * (a_adj.array() - 2.0 * c.a[l].array() * c.zdot[l].array() * adot_adj.array()))
                  .matrix();
      zdot_adj = (s * adot_adj.array()).matrix();
    } else {
      z_adj = (s * a_adj.array()).matrix();
    }
    gw.noalias() = z_adj * c.a[l - 1].transpose();
    if (tangent) gw.noalias() += zdot_adj * c.adot[l - 1].transpose();
    grad_w(l - 1) += gw;
    gb = z_adj.rowwise().sum();
    grad_b(l - 1) += gb;
    if (l > 1 || input_adj != nullptr) {
      const auto W = params.weight(l - 1);
      a_adj = W.transpose() * z_adj;
      if (tangent && l > 1) adot_adj = W.transpose() * zdot_adj;
    }
  }
  if (input_adj != nullptr) *input_adj = std::move(a_adj);
}

TracedNet trace(ad::Tape& tape, const MlpParams& params) {
  TracedNet net;
  net.values = std::make_shared<const MlpParams>(params);
  net.params.reserve(params.size());
  for (double v : params.flat()) net.params.push_back(tape.variable(v));
  return net;
}

TracedOutput forward_fused(ad::Tape& tape, const TracedNet& net,
                           std::span<const ad::TracedScalar> inputs, std::size_t batch,
                           std::optional<std::size_t> tangent_input) {
  const auto& cfg = net.values->config();
  const std::size_t n_in = cfg.input_dim * batch;
  if (inputs.size() != n_in) {
    throw Error(ErrorKind::dimension_mismatch, "forward_fused: inputs must be input_dim x batch");
  }
  Eigen::MatrixXd X(cfg.input_dim, batch);
  bool any_traced = false;
  for (std::size_t k = 0; k < n_in; ++k) {
    X.data()[k] = inputs[k].value();
    any_traced = any_traced || !inputs[k].is_constant();
  }
  auto result = batch_forward(*net.values, X, tangent_input);
  const std::size_t n_y = cfg.output_dim * batch;
  std::vector<double> out(result.y.data(), result.y.data() + n_y);
  if (tangent_input) out.insert(out.end(), result.ydot.data(), result.ydot.data() + n_y);

  std::vector<ad::TracedScalar> op_inputs;
  op_inputs.reserve(n_in + net.params.size());
  op_inputs.insert(op_inputs.end(), inputs.begin(), inputs.end());
  op_inputs.insert(op_inputs.end(), net.params.begin(), net.params.end());

  auto cache = std::make_shared<const BatchCache>(std::move(result.cache));
  auto values = net.values;
  const auto out_dim = static_cast<Eigen::Index>(cfg.output_dim);
  const auto cols = static_cast<Eigen::Index>(batch);
  const bool tangent = tangent_input.has_value();
  auto backward = [values, cache, out_dim, cols, n_in, n_y, tangent, any_traced](
                      std::span<const double> out_adj, std::span<double> in_adj) {
    Eigen::MatrixXd y_adj = Eigen::Map<const Eigen::MatrixXd>(out_adj.data(), out_dim, cols);
    Eigen::MatrixXd ydot_adj;
    if (tangent) ydot_adj = Eigen::Map<const Eigen::MatrixXd>(out_adj.data() + n_y, out_dim, cols);
    Eigen::MatrixXd x_adj;
    batch_backward(*values, *cache, y_adj, tangent ? &ydot_adj : nullptr, in_adj.subspan(n_in),
                   any_traced ? &x_adj : nullptr);
    if (any_traced) std::copy(x_adj.data(), x_adj.data() + n_in, in_adj.begin());
  };
  auto nodes = tape.custom(op_inputs, out, std::move(backward));

  TracedOutput r;
  r.y.assign(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(n_y));
  if (tangent) r.ydot.assign(nodes.begin() + static_cast<std::ptrdiff_t>(n_y), nodes.end());
  return r;
}

Adam::Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {
  if (!(cfg.lr > 0.0)) throw Error(ErrorKind::invalid_argument, "Adam learning rate must be > 0");
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error(ErrorKind::dimension_mismatch, "Adam::step: size mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& cfg = ckpt.params.config();
  nlohmann::json j;
  j["format"] = "swingdiff-mlp-checkpoint";
  j["version"] = 1;
  j["config"] = {{"input_dim", cfg.input_dim}, {"hidden", cfg.hidden}, {"output_dim", cfg.output_dim}};
  j["seed"] = ckpt.seed;
  j["epoch"] = ckpt.epoch;
  j["parameter_count"] = ckpt.params.size();
  j["params"] = std::vector<double>(ckpt.params.flat().begin(), ckpt.params.flat().end());
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::io, "cannot write checkpoint " + path.string());
  os << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::io, "cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    is >> j;
    if (j.at("format") != "swingdiff-mlp-checkpoint" || j.at("version") != 1) {
      throw Error(ErrorKind::io, "unrecognised checkpoint format in " + path.string());
    }
    MlpConfig cfg;
    cfg.input_dim = j.at("config").at("input_dim").get<std::size_t>();
    cfg.hidden = j.at("config").at("hidden").get<std::vector<std::size_t>>();
    cfg.output_dim = j.at("config").at("output_dim").get<std::size_t>();
    Checkpoint c;
    c.params = MlpParams::from_flat(cfg, j.at("params").get<std::vector<double>>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epoch = j.at("epoch").get<std::size_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::io, "malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace swingdiff::mlp
