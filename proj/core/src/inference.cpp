#include "imupose/inference.hpp"

#include <algorithm>
#include <chrono>

#include "imupose/error.hpp"

namespace imupose {

void WindowConfig::validate() const {
  if (past < 0 || future < 0) fail(ErrorKind::kInvalidArgument, "window sizes must be non-negative");
}

Pose outputs_to_pose(const VectorXd& standardized_mu, const Standardizer& standardizer) {
  if (standardized_mu.size() != kPoseDim) {
    fail(ErrorKind::kInvalidArgument, "pose output must have 216 entries");
  }
  if (!standardized_mu.allFinite()) fail(ErrorKind::kInvalidArgument, "pose output is not finite");
  const VectorXd y = destandardize(standardized_mu, standardizer.target);
  Pose pose;
  pose.joint_rotations.reserve(kJointCount);
  for (int j = 0; j < kJointCount; ++j) {
    Mat3 m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = y(9 * j + i);
    try {
      pose.joint_rotations.push_back(project_to_rotation(m));
    } catch (const Error& e) {
      throw DegenerateOutputError(j, "joint " + std::to_string(j) + ": " + e.what());
    }
  }
  return pose;
}

InputPipeline::InputPipeline(const Model& model, std::optional<CalibrationState> calibration)
    : model_(&model), calibration_(std::move(calibration)) {}

VectorXd InputPipeline::process(const CalibratedFrame& frame) {
  const auto layout = model_->config.layout();
  if (!initial_root_ && !frame.orientations.empty()) initial_root_ = frame.orientations[kRootSensor];
  const VectorXd normalized = normalize_frame(frame, layout.scheme, initial_root_);
  return standardize(select_features(normalized, layout), model_->standardizer.input);
}

VectorXd InputPipeline::process_raw(const RawSensorFrame& frame) {
  if (!calibration_) fail(ErrorKind::kInvalidState, "raw frames need a calibration");
  return process(calibrate_frame(frame, *calibration_));
}

MatrixXd prepare_inputs(const Model& model, const ImuSequence& imu,
                        const std::optional<CalibrationState>& calibration) {
  InputPipeline pipeline(model, calibration);
  MatrixXd x(model.config.input_dim, static_cast<Eigen::Index>(imu.frames.size()));
  for (size_t t = 0; t < imu.frames.size(); ++t) {
    const auto& f = imu.frames[t];
    x.col(static_cast<Eigen::Index>(t)) =
        calibration ? pipeline.process_raw(RawSensorFrame{f.orientations, f.accelerations})
                    : pipeline.process(f);
  }
  return x;
}

std::vector<Pose> predict_offline(const Model& model, const MatrixXd& standardized_inputs) {
  if (standardized_inputs.rows() != model.config.input_dim) {
    fail(ErrorKind::kInvalidArgument, "input dimension " + std::to_string(standardized_inputs.rows()) +
                                          " does not match the model (" +
                                          std::to_string(model.config.input_dim) + ")");
  }
  const auto cache = forward(model.params, model.config, standardized_inputs);
  std::vector<Pose> poses;
  poses.reserve(static_cast<size_t>(standardized_inputs.cols()));
  for (Eigen::Index t = 0; t < standardized_inputs.cols(); ++t) {
    poses.push_back(outputs_to_pose(cache.output.pose_mu.col(t), model.standardizer));
  }
  return poses;
}

OnlinePredictor::OnlinePredictor(const Model& model, WindowConfig window)
    : model_(&model), window_(window) {
  window_.validate();
}

std::optional<Emission> OnlinePredictor::push(const VectorXd& standardized_input) {
  const auto start = std::chrono::steady_clock::now();
  if (standardized_input.size() != model_->config.input_dim) {
    fail(ErrorKind::kInvalidArgument, "input dimension does not match the model");
  }
  buffer_.push_back(standardized_input);
  if (static_cast<int>(buffer_.size()) > window_.capacity()) buffer_.pop_front();
  ++received_;
  if (received_ < window_.future + 1) return std::nullopt;

  const auto len = static_cast<Eigen::Index>(buffer_.size());
  MatrixXd x(model_->config.input_dim, len);
  for (Eigen::Index k = 0; k < len; ++k) x.col(k) = buffer_[static_cast<size_t>(k)];
  const auto cache = forward(model_->params, model_->config, x);
  const Eigen::Index readout = len - 1 - window_.future;

  Emission e;
  e.frame_index = received_ - 1 - window_.future;
  e.pose = outputs_to_pose(cache.output.pose_mu.col(readout), model_->standardizer);
  e.pose_sigma = (cache.output.pose_sigma.col(readout).array() *
                  model_->standardizer.target.std.array()).matrix();
  ++emitted_;
  latency_ms_ += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return e;
}

std::vector<Emission> predict_online(const Model& model, const MatrixXd& standardized_inputs,
                                     WindowConfig window) {
  OnlinePredictor predictor(model, window);
  std::vector<Emission> out;
  for (Eigen::Index t = 0; t < standardized_inputs.cols(); ++t) {
    if (auto e = predictor.push(standardized_inputs.col(t))) out.push_back(std::move(*e));
  }
  return out;
}

ThroughputReport measure_throughput(const Model& model, WindowConfig window, double seconds) {
  const auto seqs = generate_procedural_motions({{"walk", 600, 0, 60}}, 7);
  const auto imu = synthesize_imu(seqs.front(), default_tree(), default_sensors());

  ThroughputReport report;
  std::vector<double> latencies;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  // Each pass over the recording is a fresh stream.
  while (elapsed() < seconds || report.frames == 0) {
    InputPipeline pipeline(model);
    OnlinePredictor predictor(model, window);
    for (const auto& frame : imu.frames) {
      const auto t0 = std::chrono::steady_clock::now();
      auto emission = predictor.push(pipeline.process(frame));
      latencies.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      ++report.frames;
      (void)emission;
      if (elapsed() >= seconds) break;
    }
  }
  report.seconds = elapsed();
  report.fps = static_cast<double>(report.frames) / report.seconds;
  std::sort(latencies.begin(), latencies.end());
  double sum = 0.0;
  for (double l : latencies) sum += l;
  report.mean_latency_ms = sum / static_cast<double>(latencies.size());
  auto pct = [&](double q) {
    return latencies[std::min(latencies.size() - 1, static_cast<size_t>(q * static_cast<double>(latencies.size())))];
  };
  report.p50_latency_ms = pct(0.5);
  report.p95_latency_ms = pct(0.95);
  report.max_latency_ms = latencies.back();
  return report;
}

}  // namespace imupose
