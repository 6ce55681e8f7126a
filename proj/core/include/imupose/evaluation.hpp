#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "imupose/inference.hpp"
#include "imupose/synthesis.hpp"

namespace imupose {

// Geodesic angle between two rotations, degrees in [0, 180].
double joint_angle_error(const Rotation& predicted, const Rotation& truth);

// Per-joint distance in centimeters between the joint positions of both
// poses under an identical (identity) root transform.
std::vector<double> positional_error(const Pose& predicted, const Pose& truth,
                                     const KinematicTree& tree);

struct EvalMode {
  bool online = false;
  WindowConfig window;

  // "offline" or "online:P,F".
  static EvalMode parse(std::string_view text);
  std::string describe() const;
};

struct FrameErrors {
  int sequence = 0;
  int frame = 0;
  std::vector<double> angle_deg;  // per joint
  std::vector<double> position_cm;
};

struct Histogram {
  double bin_width = 2.5;
  double range_max = 90.0;
  std::vector<std::int64_t> counts;  // regular bins followed by one overflow bin

  std::int64_t total() const;
};

struct EvalReport {
  std::string mode;
  double mean_angle = 0.0;
  double std_angle = 0.0;
  double mean_position = 0.0;
  double std_position = 0.0;
  double worst5_mean_angle = 0.0;  // mean per-frame error over the worst 5% of frames
  std::int64_t frame_count = 0;
  std::int64_t joint_count = 0;
  std::vector<FrameErrors> frames;
  Histogram histogram;
};

// Scores aligned prediction/truth sequences. truths[i] may be longer than
// predictions[i]; frames are matched by index from the start.
EvalReport evaluate_poses(const std::vector<std::vector<Pose>>& predictions,
                          const std::vector<std::vector<Pose>>& truths, const KinematicTree& tree,
                          std::string mode, double bin_width = 2.5);

EvalReport evaluate(const Model& model, const Dataset& dataset, const std::vector<int>& split,
                    const EvalMode& mode, const KinematicTree& tree = default_tree(),
                    double bin_width = 2.5);

struct SweepCell {
  int past = 0;
  int future = 0;
  double mean_angle = 0.0;
};

std::vector<SweepCell> window_sweep(const Model& model, const Dataset& dataset,
                                    const std::vector<int>& split, const std::vector<int>& pasts,
                                    const std::vector<int>& futures,
                                    const KinematicTree& tree = default_tree());

void write_summary_csv(std::ostream& out, const EvalReport& report);
void write_frames_csv(std::ostream& out, const EvalReport& report);
void write_histogram_csv(std::ostream& out, const EvalReport& report);
void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells);

}  // namespace imupose
