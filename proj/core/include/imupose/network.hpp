#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "imupose/normalization.hpp"

namespace imupose {

struct ModelConfig {
  int input_dim = 60;
  int dense_units = 512;
  int hidden_units = 512;  // per direction per layer
  int num_layers = 2;
  int pose_dim = kPoseDim;
  int acc_dim = kAccDim;
  int sensor_count = kSensorCount;
  bool bidirectional = true;
  double input_keep_prob = 0.8;
  bool use_acc_loss = true;
  bool use_acc_inputs = true;
  NormalizationScheme scheme = NormalizationScheme::kPerFrameRoot;

  InputLayout layout() const { return {scheme, use_acc_inputs}; }
  int directions() const { return bidirectional ? 2 : 1; }

  // Small model used by tests and the toy pipeline.
  static ModelConfig toy(int hidden);

  // Throws kInvalidArgument when dimensions are inconsistent.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kSigmaFloor = 1e-6;

// Named view of one parameter tensor. rank 1 tensors have cols == 1.
struct TensorView {
  std::string name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  int rank;

  Eigen::Index size() const { return rows * cols; }
};

struct DenseWeights {
  MatrixXd weight;
  VectorXd bias;
};

// Gates are stacked input, forget, cell candidate, output.
struct LstmWeights {
  MatrixXd input;      // 4H x in
  MatrixXd recurrent;  // 4H x H
  VectorXd bias;       // 4H
};

struct Params {
  DenseWeights dense;
  std::vector<std::vector<LstmWeights>> lstm;  // [layer][direction]
  DenseWeights pose_mu;
  DenseWeights pose_sigma;
  DenseWeights acc_mu;
  DenseWeights acc_sigma;

  static Params zeros(const ModelConfig& cfg);

  // Uniform(+-1/sqrt(fan_in)) input weights, orthogonal recurrent blocks,
  // forget-gate bias 1, sigma bias so that SoftPlus(bias) = 1.
  static Params initialize(const ModelConfig& cfg, std::uint64_t seed);

  // Every tensor in a fixed order. Views alias this object's storage.
  std::vector<TensorView> tensors();
  std::vector<TensorView> tensors() const;

  Eigen::Index parameter_count() const;
  bool all_finite() const;

  Params& operator+=(const Params& other);
  Params& operator*=(double s);

  bool operator==(const Params& other) const;
};

// Per-timestep Gaussian parameters, one column per timestep.
struct GaussianSequence {
  MatrixXd pose_mu;
  MatrixXd pose_sigma;
  MatrixXd acc_mu;
  MatrixXd acc_sigma;

  Eigen::Index length() const { return pose_mu.cols(); }
};

struct LstmTrace {
  MatrixXd gates;      // 4H x T, post-activation
  MatrixXd cell;       // H x T
  MatrixXd cell_tanh;  // H x T
  MatrixXd hidden;     // H x T
};

struct ForwardCache {
  MatrixXd input;                             // after dropout
  std::vector<MatrixXd> layer_inputs;         // input of each recurrent layer
  std::vector<std::vector<LstmTrace>> traces; // [layer][direction]
  MatrixXd top;                               // last recurrent layer output
  MatrixXd pose_sigma_pre;
  MatrixXd acc_sigma_pre;
  GaussianSequence output;

  bool empty() const { return output.length() == 0; }
};

// inputs: input_dim x T standardized frames. mask (training only) multiplies
// the inputs elementwise. Throws kInvalidArgument on non-finite input.
ForwardCache forward(const Params& params, const ModelConfig& cfg, const MatrixXd& inputs,
                     const MatrixXd* dropout_mask = nullptr);

// Negative log-likelihood, averaged over timesteps. The acceleration term is
// added when cfg.use_acc_loss is set.
double nll_loss(const GaussianSequence& out, const MatrixXd& pose_targets,
                const MatrixXd& acc_targets, const ModelConfig& cfg);

// Gradient of loss_weight * nll_loss with respect to every parameter.
// Throws kInvalidState when the cache is empty.
Params backward(const Params& params, const ModelConfig& cfg, const ForwardCache& cache,
                const MatrixXd& pose_targets, const MatrixXd& acc_targets,
                double loss_weight = 1.0);

struct DropoutResult {
  MatrixXd masked;
  MatrixXd mask;
};

// Inverted dropout: each entry kept with keep_prob and scaled by 1/keep_prob.
DropoutResult apply_input_dropout(const MatrixXd& x, double keep_prob, std::mt19937_64& rng);

double softplus(double x);
double sigmoid(double x);

// A trained network with the statistics its inputs and outputs are expressed in.
struct Model {
  ModelConfig config;
  Standardizer standardizer;
  Params params;
};

}  // namespace imupose
