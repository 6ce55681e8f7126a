#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "imupose/network.hpp"
#include "imupose/synthesis.hpp"

namespace imupose {

struct TrainConfig {
  double initial_lr = 0.001;
  double decay_rate = 0.96;
  double decay_steps = 2000;
  double clip_norm = 1.0;
  int batch_size = 8;
  int max_epochs = 100;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int window_frames = 300;  // training windows, 50% overlap
  int threads = 1;

  void validate() const;
};

// Exponential decay with a continuous exponent.
double lr_schedule(std::int64_t step, const TrainConfig& cfg);

// Scales every tensor by clip_norm / ||grads|| when the global L2 norm
// exceeds clip_norm. Returns the pre-clip norm. Throws kTrainingDiverged on
// non-finite gradients.
double clip_by_global_norm(Params& grads, double clip_norm);
double global_norm(const Params& grads);

struct AdamState {
  Params m;
  Params v;
  std::int64_t step = 0;

  static AdamState zeros_like(const ModelConfig& cfg) {
    return {Params::zeros(cfg), Params::zeros(cfg), 0};
  }
};

void adam_step(Params& params, const Params& grads, AdamState& state, double lr,
               const TrainConfig& cfg);

// Standardized tensors for one sequence.
struct TrainingSample {
  MatrixXd inputs;
  MatrixXd pose_targets;
  MatrixXd acc_targets;
};

// Fits nothing: applies the model's standardizer to raw features.
TrainingSample standardize_sample(const SequenceFeatures& f, const Standardizer& s);

struct EpochRecord {
  int epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_nll = 0.0;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
  bool diverged = false;
  std::string diverged_reason;
};

void write_report_csv(std::ostream& out, const TrainReport& report);

// Fixed windows of cfg.window_frames with 50% overlap; shorter sequences are
// used whole.
std::vector<std::pair<int, Eigen::Index>> make_windows(const std::vector<TrainingSample>& samples,
                                                       int window_frames);

// Mean per-timestep NLL over whole sequences, no dropout.
double evaluate_nll(const Model& model, const std::vector<TrainingSample>& samples);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Optimizes model.params in place on train, early-stopping on validation,
// and leaves the best parameters in model.params.
TrainReport fit(Model& model, const std::vector<TrainingSample>& train,
                const std::vector<TrainingSample>& validation, const TrainConfig& cfg,
                const EpochCallback& on_epoch = {});

// Builds features for the dataset, fits the standardizer on the training
// split, initializes parameters from cfg.seed and trains.
struct TrainResult {
  Model model;
  TrainReport report;
};

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& dataset,
                  const EpochCallback& on_epoch = {});

// Continues from a trained model on a new dataset with fresh optimizer state
// and schedule. The original standardizer is kept.
TrainResult finetune(const Model& pretrained, const Dataset& dataset, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {});

std::vector<SequenceFeatures> features_for(const Dataset& dataset, const std::vector<int>& indices,
                                           const InputLayout& layout);

// How sequences are divided into train/validation/test.
struct DataConfig {
  double train_ratio = 0.8;
  double validation_ratio = 0.1;
  double test_ratio = 0.1;
  std::uint64_t split_seed = 0;
};

// key = value text configuration shared by the CLI. '#' starts a comment.
using ConfigMap = std::map<std::string, std::string>;
ConfigMap parse_config(std::istream& in);
ConfigMap load_config_file(const std::string& path);

// Throws kInvalidArgument on unknown keys or unparsable values.
void apply_config(const ConfigMap& values, ModelConfig& model, TrainConfig& train, DataConfig& data);

}  // namespace imupose
