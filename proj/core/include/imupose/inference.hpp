#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "imupose/calibration.hpp"
#include "imupose/network.hpp"

namespace imupose {

struct WindowConfig {
  int past = 20;
  int future = 5;

  int capacity() const { return past + 1 + future; }
  void validate() const;
};

// Destandardizes a 216-vector of pose means and projects each joint block to
// the nearest rotation. Throws DegenerateOutputError naming the joint.
Pose outputs_to_pose(const VectorXd& standardized_mu, const Standardizer& standardizer);

// Turns per-frame readings into standardized network inputs. Holds the
// sequence-initial root orientation for per_sequence_root models, so use one
// pipeline per stream.
class InputPipeline {
 public:
  explicit InputPipeline(const Model& model, std::optional<CalibrationState> calibration = std::nullopt);

  VectorXd process(const CalibratedFrame& frame);
  VectorXd process_raw(const RawSensorFrame& frame);

 private:
  const Model* model_;
  std::optional<CalibrationState> calibration_;
  std::optional<Rotation> initial_root_;
};

// Standardized inputs for a whole recording (columns = frames).
MatrixXd prepare_inputs(const Model& model, const ImuSequence& imu,
                        const std::optional<CalibrationState>& calibration = std::nullopt);

// One forward pass over the full sequence.
std::vector<Pose> predict_offline(const Model& model, const MatrixXd& standardized_inputs);

struct Emission {
  std::int64_t frame_index = 0;
  Pose pose;
  VectorXd pose_sigma;  // destandardized per-entry standard deviation
};

// Sliding-window predictor: keeps the last past + 1 + future inputs and,
// once `future` frames beyond a frame have arrived, runs a fresh forward
// pass over the buffered window and emits that frame.
class OnlinePredictor {
 public:
  OnlinePredictor(const Model& model, WindowConfig window);

  std::optional<Emission> push(const VectorXd& standardized_input);

  std::int64_t received() const { return received_; }
  std::int64_t emitted() const { return emitted_; }
  const WindowConfig& window() const { return window_; }
  double total_latency_ms() const { return latency_ms_; }

 private:
  const Model* model_;
  WindowConfig window_;
  std::deque<VectorXd> buffer_;
  std::int64_t received_ = 0;
  std::int64_t emitted_ = 0;
  double latency_ms_ = 0.0;
};

std::vector<Emission> predict_online(const Model& model, const MatrixXd& standardized_inputs,
                                     WindowConfig window);

struct ThroughputReport {
  double fps = 0.0;
  std::int64_t frames = 0;
  double seconds = 0.0;
  double mean_latency_ms = 0.0;
  double p50_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
  double max_latency_ms = 0.0;
};

// Streams a synthetic walking recording through normalization, the online
// predictor and pose conversion for at least `seconds` of wall clock.
ThroughputReport measure_throughput(const Model& model, WindowConfig window, double seconds);

}  // namespace imupose
