#include "imupose/network.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/QR>

#include "imupose/error.hpp"

namespace imupose {

ModelConfig ModelConfig::toy(int hidden) {
  ModelConfig cfg;
  cfg.dense_units = hidden;
  cfg.hidden_units = hidden;
  return cfg;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::kInvalidArgument, std::string("model config: ") + what);
  };
  require(dense_units > 0 && hidden_units > 0 && num_layers > 0, "layer sizes must be positive");
  require(pose_dim == kJointCount * 9, "pose_dim must be 24 * 9");
  require(acc_dim == 3 * (sensor_count - 1), "acc_dim must be 3 * (sensor_count - 1)");
  require(sensor_count == kSensorCount, "only six-sensor models are supported");
  require(input_keep_prob > 0.0 && input_keep_prob <= 1.0, "input_keep_prob must be in (0, 1]");
  require(input_dim == layout().dim(), "input_dim does not match the normalization layout");
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Params

namespace {

DenseWeights dense_zeros(Eigen::Index out, Eigen::Index in) {
  return {MatrixXd::Zero(out, in), VectorXd::Zero(out)};
}

template <class Self, class View>
std::vector<View> collect_tensors(Self& p) {
  std::vector<View> views;
  auto add_matrix = [&](std::string name, auto& m) {
    views.push_back({std::move(name), const_cast<double*>(m.data()), m.rows(), m.cols(), 2});
  };
  auto add_vector = [&](std::string name, auto& v) {
    views.push_back({std::move(name), const_cast<double*>(v.data()), v.size(), 1, 1});
  };
  auto add_dense = [&](const std::string& prefix, auto& d) {
    add_matrix(prefix + "/weight", d.weight);
    add_vector(prefix + "/bias", d.bias);
  };
  add_dense("dense", p.dense);
  for (size_t l = 0; l < p.lstm.size(); ++l) {
    for (size_t d = 0; d < p.lstm[l].size(); ++d) {
      const std::string prefix = "lstm" + std::to_string(l) + (d == 0 ? "_fw" : "_bw");
      add_matrix(prefix + "/input", p.lstm[l][d].input);
      add_matrix(prefix + "/recurrent", p.lstm[l][d].recurrent);
      add_vector(prefix + "/bias", p.lstm[l][d].bias);
    }
  }
  add_dense("pose_mu", p.pose_mu);
  add_dense("pose_sigma", p.pose_sigma);
  add_dense("acc_mu", p.acc_mu);
  add_dense("acc_sigma", p.acc_sigma);
  return views;
}

// Haar-distributed orthogonal matrix from the QR factors of a Gaussian matrix.
MatrixXd random_orthogonal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd g(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) g(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ();
  const MatrixXd rmat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rmat(i, i) < 0.0) q.col(i) *= -1.0;
  }
  return q;
}

void fill_uniform(MatrixXd& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
  }
}

}  // namespace

Params Params::zeros(const ModelConfig& cfg) {
  const int h = cfg.hidden_units;
  Params p;
  p.dense = dense_zeros(cfg.dense_units, cfg.input_dim);
  p.lstm.resize(static_cast<size_t>(cfg.num_layers));
  for (int l = 0; l < cfg.num_layers; ++l) {
    const int in = l == 0 ? cfg.dense_units : h * cfg.directions();
    for (int d = 0; d < cfg.directions(); ++d) {
      p.lstm[l].push_back({MatrixXd::Zero(4 * h, in), MatrixXd::Zero(4 * h, h), VectorXd::Zero(4 * h)});
    }
  }
  const int top = h * cfg.directions();
  p.pose_mu = dense_zeros(cfg.pose_dim, top);
  p.pose_sigma = dense_zeros(cfg.pose_dim, top);
  p.acc_mu = dense_zeros(cfg.acc_dim, top);
  p.acc_sigma = dense_zeros(cfg.acc_dim, top);
  return p;
}

Params Params::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Params p = zeros(cfg);
  const auto h = static_cast<Eigen::Index>(cfg.hidden_units);
  auto init_dense = [&](DenseWeights& d) {
    fill_uniform(d.weight, 1.0 / std::sqrt(static_cast<double>(d.weight.cols())), rng);
  };
  init_dense(p.dense);
  for (auto& layer : p.lstm) {
    for (auto& cell : layer) {
      fill_uniform(cell.input, 1.0 / std::sqrt(static_cast<double>(cell.input.cols())), rng);
      for (int gate = 0; gate < 4; ++gate) cell.recurrent.middleRows(gate * h, h) = random_orthogonal(h, rng);
      cell.bias.segment(h, h).setOnes();
    }
  }
  init_dense(p.pose_mu);
  init_dense(p.pose_sigma);
  init_dense(p.acc_mu);
  init_dense(p.acc_sigma);
  // SoftPlus(log(e - 1)) = 1.
  const double unit_sigma = std::log(std::numbers::e - 1.0);
  p.pose_sigma.bias.setConstant(unit_sigma);
  p.acc_sigma.bias.setConstant(unit_sigma);
  return p;
}

std::vector<TensorView> Params::tensors() { return collect_tensors<Params, TensorView>(*this); }

std::vector<TensorView> Params::tensors() const {
  return collect_tensors<const Params, TensorView>(*this);
}

Eigen::Index Params::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

bool Params::all_finite() const {
  for (const auto& t : tensors()) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t.data[i])) return false;
    }
  }
  return true;
}

Params& Params::operator+=(const Params& other) {
  auto mine = tensors();
  const auto theirs = other.tensors();
  if (mine.size() != theirs.size()) fail(ErrorKind::kInvalidArgument, "parameter structure differs");
  for (size_t k = 0; k < mine.size(); ++k) {
    if (mine[k].size() != theirs[k].size()) fail(ErrorKind::kInvalidArgument, "parameter shape differs");
    for (Eigen::Index i = 0; i < mine[k].size(); ++i) mine[k].data[i] += theirs[k].data[i];
  }
  return *this;
}

Params& Params::operator*=(double s) {
  for (auto& t : tensors()) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] *= s;
  }
  return *this;
}

bool Params::operator==(const Params& other) const {
  const auto a = tensors();
  const auto b = other.tensors();
  if (a.size() != b.size()) return false;
  for (size_t k = 0; k < a.size(); ++k) {
    if (a[k].rows != b[k].rows || a[k].cols != b[k].cols) return false;
    for (Eigen::Index i = 0; i < a[k].size(); ++i) {
      if (a[k].data[i] != b[k].data[i]) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

void run_lstm(const LstmWeights& w, const MatrixXd& input, bool reverse, LstmTrace& trace) {
  const Eigen::Index h = w.recurrent.cols();
  const Eigen::Index t_count = input.cols();
  MatrixXd pre = w.input * input;
  pre.colwise() += w.bias;

  trace.gates.resize(4 * h, t_count);
  trace.cell.resize(h, t_count);
  trace.cell_tanh.resize(h, t_count);
  trace.hidden.resize(h, t_count);

  VectorXd hidden = VectorXd::Zero(h);
  VectorXd cell = VectorXd::Zero(h);
  VectorXd a(4 * h);
  for (Eigen::Index step = 0; step < t_count; ++step) {
    const Eigen::Index t = reverse ? t_count - 1 - step : step;
    a.noalias() = w.recurrent * hidden;
    a += pre.col(t);
    auto gates = trace.gates.col(t);
    for (Eigen::Index k = 0; k < h; ++k) {
      gates(k) = sigmoid(a(k));
      gates(h + k) = sigmoid(a(h + k));
      gates(2 * h + k) = std::tanh(a(2 * h + k));
      gates(3 * h + k) = sigmoid(a(3 * h + k));
    }
    for (Eigen::Index k = 0; k < h; ++k) {
      cell(k) = gates(h + k) * cell(k) + gates(k) * gates(2 * h + k);
      const double tc = std::tanh(cell(k));
      trace.cell_tanh(k, t) = tc;
      hidden(k) = gates(3 * h + k) * tc;
    }
    trace.cell.col(t) = cell;
    trace.hidden.col(t) = hidden;
  }
}

MatrixXd affine(const DenseWeights& d, const MatrixXd& x) {
  MatrixXd y = d.weight * x;
  y.colwise() += d.bias;
  return y;
}

MatrixXd sigma_from_pre(const MatrixXd& pre) {
  return pre.unaryExpr([](double v) { return softplus(v) + kSigmaFloor; });
}

}  // namespace

ForwardCache forward(const Params& params, const ModelConfig& cfg, const MatrixXd& inputs,
                     const MatrixXd* dropout_mask) {
  if (inputs.rows() != cfg.input_dim) {
    fail(ErrorKind::kInvalidArgument, "input has dimension " + std::to_string(inputs.rows()) +
                                          ", model expects " + std::to_string(cfg.input_dim));
  }
  if (inputs.cols() < 1) fail(ErrorKind::kInvalidArgument, "input sequence is empty");
  if (!inputs.allFinite()) fail(ErrorKind::kInvalidArgument, "input contains non-finite values");

  ForwardCache cache;
  if (dropout_mask) {
    if (dropout_mask->rows() != inputs.rows() || dropout_mask->cols() != inputs.cols()) {
      fail(ErrorKind::kInvalidArgument, "dropout mask shape does not match the input");
    }
    cache.input = inputs.cwiseProduct(*dropout_mask);
  } else {
    cache.input = inputs;
  }

  MatrixXd layer_in = affine(params.dense, cache.input);
  const int dirs = cfg.directions();
  const Eigen::Index h = cfg.hidden_units;
  cache.traces.resize(static_cast<size_t>(cfg.num_layers));
  for (int l = 0; l < cfg.num_layers; ++l) {
    cache.traces[l].resize(static_cast<size_t>(dirs));
    for (int d = 0; d < dirs; ++d) run_lstm(params.lstm[l][d], layer_in, d == 1, cache.traces[l][d]);
    MatrixXd out(h * dirs, inputs.cols());
    for (int d = 0; d < dirs; ++d) out.middleRows(d * h, h) = cache.traces[l][d].hidden;
    cache.layer_inputs.push_back(std::move(layer_in));
    layer_in = std::move(out);
  }
  cache.top = std::move(layer_in);

  cache.output.pose_mu = affine(params.pose_mu, cache.top);
  cache.pose_sigma_pre = affine(params.pose_sigma, cache.top);
  cache.output.pose_sigma = sigma_from_pre(cache.pose_sigma_pre);
  cache.output.acc_mu = affine(params.acc_mu, cache.top);
  cache.acc_sigma_pre = affine(params.acc_sigma, cache.top);
  cache.output.acc_sigma = sigma_from_pre(cache.acc_sigma_pre);
  return cache;
}

// ---------------------------------------------------------------------------
// Loss

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

double gaussian_nll_sum(const MatrixXd& mu, const MatrixXd& sigma, const MatrixXd& y) {
  if (y.rows() != mu.rows() || y.cols() != mu.cols()) {
    fail(ErrorKind::kInvalidArgument, "target shape does not match the output");
  }
  if (!(sigma.array() > 0.0).all()) {
    fail(ErrorKind::kInternalInvariant, "non-positive sigma in the network output");
  }
  const auto r = (y - mu).array() / sigma.array();
  return 0.5 * (static_cast<double>(mu.size()) * kLog2Pi +
                (2.0 * sigma.array().log() + r.square()).sum());
}

}  // namespace

double nll_loss(const GaussianSequence& out, const MatrixXd& pose_targets,
                const MatrixXd& acc_targets, const ModelConfig& cfg) {
  const auto t_count = static_cast<double>(out.length());
  if (out.length() == 0) fail(ErrorKind::kInvalidArgument, "empty output sequence");
  double total = gaussian_nll_sum(out.pose_mu, out.pose_sigma, pose_targets);
  if (cfg.use_acc_loss) total += gaussian_nll_sum(out.acc_mu, out.acc_sigma, acc_targets);
  return total / t_count;
}

// ---------------------------------------------------------------------------
// Backward

namespace {

// Gradients of the weighted NLL with respect to mu and the sigma
// pre-activation of one head.
void head_gradients(const MatrixXd& mu, const MatrixXd& sigma, const MatrixXd& sigma_pre,
                    const MatrixXd& y, double weight, MatrixXd& d_mu, MatrixXd& d_pre) {
  if (y.rows() != mu.rows() || y.cols() != mu.cols()) {
    fail(ErrorKind::kInvalidArgument, "target shape does not match the output");
  }
  const auto r = ((y - mu).array() / sigma.array()).eval();
  d_mu = (-weight * r / sigma.array()).matrix();
  const auto d_sigma = (weight * (1.0 - r.square()) / sigma.array()).eval();
  d_pre = (d_sigma * sigma_pre.unaryExpr([](double v) { return sigmoid(v); }).array()).matrix();
}

void accumulate_dense(const MatrixXd& d_out, const MatrixXd& x, DenseWeights& grad) {
  grad.weight.noalias() += d_out * x.transpose();
  grad.bias += d_out.rowwise().sum();
}

// Backpropagates through one direction of one layer. d_hidden is the
// gradient arriving at this direction's hidden outputs; d_input accumulates
// the gradient for the layer input.
void lstm_backward(const LstmWeights& w, const LstmTrace& trace, const MatrixXd& input,
                   const MatrixXd& d_hidden, bool reverse, LstmWeights& grad, MatrixXd& d_input) {
  const Eigen::Index h = w.recurrent.cols();
  const Eigen::Index t_count = input.cols();
  MatrixXd d_pre(4 * h, t_count);
  MatrixXd prev_hidden = MatrixXd::Zero(h, t_count);

  VectorXd dh_next = VectorXd::Zero(h);
  VectorXd dc_next = VectorXd::Zero(h);
  VectorXd dc(h);
  for (Eigen::Index step = t_count - 1; step >= 0; --step) {
    const Eigen::Index t = reverse ? t_count - 1 - step : step;
    const bool has_prev = step > 0;
    const Eigen::Index prev = reverse ? t + 1 : t - 1;
    const auto gates = trace.gates.col(t);
    auto da = d_pre.col(t);
    for (Eigen::Index k = 0; k < h; ++k) {
      const double dh = d_hidden(k, t) + dh_next(k);
      const double i = gates(k);
      const double f = gates(h + k);
      const double g = gates(2 * h + k);
      const double o = gates(3 * h + k);
      const double tc = trace.cell_tanh(k, t);
      const double c_prev = has_prev ? trace.cell(k, prev) : 0.0;
      dc(k) = dh * o * (1.0 - tc * tc) + dc_next(k);
      da(k) = dc(k) * g * i * (1.0 - i);
      da(h + k) = dc(k) * c_prev * f * (1.0 - f);
      da(2 * h + k) = dc(k) * i * (1.0 - g * g);
      da(3 * h + k) = dh * tc * o * (1.0 - o);
      dc_next(k) = dc(k) * f;
    }
    dh_next.noalias() = w.recurrent.transpose() * da;
    if (has_prev) prev_hidden.col(t) = trace.hidden.col(prev);
  }
  grad.recurrent.noalias() += d_pre * prev_hidden.transpose();
  grad.input.noalias() += d_pre * input.transpose();
  grad.bias += d_pre.rowwise().sum();
  d_input.noalias() += w.input.transpose() * d_pre;
}

}  // namespace

Params backward(const Params& params, const ModelConfig& cfg, const ForwardCache& cache,
                const MatrixXd& pose_targets, const MatrixXd& acc_targets, double loss_weight) {
  if (cache.empty() || cache.traces.size() != static_cast<size_t>(cfg.num_layers)) {
    fail(ErrorKind::kInvalidState, "backward called without a forward cache");
  }
  const GaussianSequence& out = cache.output;
  const double weight = loss_weight / static_cast<double>(out.length());
  Params grad = Params::zeros(cfg);

  MatrixXd d_mu;
  MatrixXd d_pre;
  head_gradients(out.pose_mu, out.pose_sigma, cache.pose_sigma_pre, pose_targets, weight, d_mu, d_pre);
  accumulate_dense(d_mu, cache.top, grad.pose_mu);
  accumulate_dense(d_pre, cache.top, grad.pose_sigma);
  MatrixXd d_top = params.pose_mu.weight.transpose() * d_mu;
  d_top.noalias() += params.pose_sigma.weight.transpose() * d_pre;

  if (cfg.use_acc_loss) {
    head_gradients(out.acc_mu, out.acc_sigma, cache.acc_sigma_pre, acc_targets, weight, d_mu, d_pre);
    accumulate_dense(d_mu, cache.top, grad.acc_mu);
    accumulate_dense(d_pre, cache.top, grad.acc_sigma);
    d_top.noalias() += params.acc_mu.weight.transpose() * d_mu;
    d_top.noalias() += params.acc_sigma.weight.transpose() * d_pre;
  }

  const Eigen::Index h = cfg.hidden_units;
  MatrixXd d_layer_out = std::move(d_top);
  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const MatrixXd& layer_in = cache.layer_inputs[l];
    MatrixXd d_in = MatrixXd::Zero(layer_in.rows(), layer_in.cols());
    for (int d = 0; d < cfg.directions(); ++d) {
      lstm_backward(params.lstm[l][d], cache.traces[l][d], layer_in, d_layer_out.middleRows(d * h, h),
                    d == 1, grad.lstm[l][d], d_in);
    }
    d_layer_out = std::move(d_in);
  }
  accumulate_dense(d_layer_out, cache.input, grad.dense);
  return grad;
}

DropoutResult apply_input_dropout(const MatrixXd& x, double keep_prob, std::mt19937_64& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "keep probability must be in (0, 1]");
  }
  DropoutResult r;
  if (keep_prob == 1.0) {
    r.mask = MatrixXd::Ones(x.rows(), x.cols());
    r.masked = x;
    return r;
  }
  const double scale = 1.0 / keep_prob;
  // 53-bit uniform draw; avoids depending on the library's distribution code.
  r.mask.resize(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      r.mask(k, c) = u < keep_prob ? scale : 0.0;
    }
  }
  r.masked = x.cwiseProduct(r.mask);
  return r;
}

}  // namespace imupose
