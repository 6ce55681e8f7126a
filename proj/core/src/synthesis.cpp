#include "imupose/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "imupose/error.hpp"

namespace imupose {

void PoseSequence::validate() const {
  if (fps == 0) fail(ErrorKind::kInvalidArgument, "fps must be positive");
  if (frames.size() < 3) {
    fail(ErrorKind::kInvalidArgument, "pose sequence needs at least 3 frames");
  }
}

std::vector<std::vector<RigidTransform>> sensor_trajectories(
    const PoseSequence& seq, const KinematicTree& tree, const std::vector<VirtualSensor>& sensors) {
  for (const auto& s : sensors) {
    if (s.bone < 0 || s.bone >= tree.joint_count()) {
      fail(ErrorKind::kInvalidArgument, "sensor '" + s.name + "' references an invalid bone");
    }
  }
  std::vector<std::vector<RigidTransform>> out;
  out.reserve(seq.frames.size());
  for (const auto& frame : seq.frames) {
    const auto joints = forward_kinematics(tree, frame.pose, frame.root_rotation, frame.root_position);
    auto& row = out.emplace_back();
    row.reserve(sensors.size());
    for (const auto& s : sensors) row.push_back(sensor_world_transform(joints[s.bone], s));
  }
  return out;
}

std::vector<std::vector<Rotation>> synthesize_orientations(
    const PoseSequence& seq, const KinematicTree& tree, const std::vector<VirtualSensor>& sensors) {
  const auto traj = sensor_trajectories(seq, tree, sensors);
  std::vector<std::vector<Rotation>> out(traj.size());
  for (size_t t = 0; t < traj.size(); ++t) {
    for (const auto& x : traj[t]) out[t].push_back(x.rotation);
  }
  return out;
}

std::vector<std::vector<Vec3>> synthesize_accelerations(
    const std::vector<std::vector<Vec3>>& positions, double dt) {
  if (positions.size() < 3) {
    fail(ErrorKind::kInvalidArgument, "acceleration synthesis needs at least 3 frames");
  }
  if (!(dt > 0.0)) fail(ErrorKind::kInvalidArgument, "dt must be positive");
  const double inv_dt2 = 1.0 / (dt * dt);
  std::vector<std::vector<Vec3>> out(positions.size() - 2);
  for (size_t t = 1; t + 1 < positions.size(); ++t) {
    const auto& prev = positions[t - 1];
    const auto& cur = positions[t];
    const auto& next = positions[t + 1];
    if (prev.size() != cur.size() || next.size() != cur.size()) {
      fail(ErrorKind::kInvalidArgument, "sensor count changes between frames");
    }
    auto& row = out[t - 1];
    row.reserve(cur.size());
    for (size_t s = 0; s < cur.size(); ++s) {
      row.push_back((prev[s] + next[s] - 2.0 * cur[s]) * inv_dt2);
    }
  }
  return out;
}

ImuSequence synthesize_imu(const PoseSequence& seq, const KinematicTree& tree,
                           const std::vector<VirtualSensor>& sensors) {
  seq.validate();
  const auto traj = sensor_trajectories(seq, tree, sensors);
  std::vector<std::vector<Vec3>> positions(traj.size());
  for (size_t t = 0; t < traj.size(); ++t) {
    for (const auto& x : traj[t]) positions[t].push_back(x.position);
  }
  auto acc = synthesize_accelerations(positions, 1.0 / seq.fps);

  ImuSequence imu;
  imu.fps = seq.fps;
  imu.frames.resize(acc.size());
  for (size_t k = 0; k < acc.size(); ++k) {
    auto& f = imu.frames[k];
    for (const auto& x : traj[k + 1]) f.orientations.push_back(x.rotation);
    f.accelerations = std::move(acc[k]);
  }
  return imu;
}

PoseSequence trim_to_imu_alignment(const PoseSequence& seq) {
  seq.validate();
  PoseSequence out;
  out.fps = seq.fps;
  out.frames.assign(seq.frames.begin() + 1, seq.frames.end() - 1);
  return out;
}

PoseSequence resample(const PoseSequence& seq, std::uint32_t target_fps) {
  if (target_fps == 0) fail(ErrorKind::kInvalidArgument, "target fps must be positive");
  if (target_fps > seq.fps) {
    fail(ErrorKind::kUnsupportedUpsample, "cannot resample " + std::to_string(seq.fps) +
                                              " fps up to " + std::to_string(target_fps) + " fps");
  }
  PoseSequence out;
  out.fps = target_fps;
  const size_t n = seq.frames.size();
  if (seq.fps % target_fps == 0) {
    const size_t stride = seq.fps / target_fps;
    for (size_t i = 0; i < n; i += stride) out.frames.push_back(seq.frames[i]);
    return out;
  }
  const double ratio = static_cast<double>(seq.fps) / target_fps;
  const auto count = static_cast<size_t>(
      std::floor(static_cast<double>(n) * target_fps / static_cast<double>(seq.fps)));
  out.frames.reserve(count);
  for (size_t k = 0; k < count; ++k) {
    const auto idx = static_cast<size_t>(std::llround(static_cast<double>(k) * ratio));
    out.frames.push_back(seq.frames[std::min(idx, n - 1)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Procedural motions

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPelvisHeight = 0.95;
constexpr double kArmsDown = 1.3;  // shoulder roll that brings a T-pose arm to the side

enum Joint : int {
  kPelvis = 0, kLeftHip = 1, kRightHip = 2, kSpine1 = 3, kLeftKnee = 4, kRightKnee = 5,
  kSpine2 = 6, kLeftAnkle = 7, kRightAnkle = 8, kSpine3 = 9, kNeck = 12, kHead = 15,
  kLeftShoulder = 16, kRightShoulder = 17, kLeftElbow = 18, kRightElbow = 19,
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class MotionRng {
 public:
  MotionRng(std::uint64_t seed, const std::string& family, int variant) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(fnv1a(family)),
                      static_cast<std::uint32_t>(fnv1a(family) >> 32),
                      static_cast<std::uint32_t>(variant)};
    engine_.seed(seq);
  }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double sign() { return uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0; }

 private:
  std::mt19937_64 engine_;
};

// Shared parameters of a single generated clip.
struct Clip {
  double heading = 0.0;
  double fps = 60.0;
  double arm_rest = kArmsDown;

  Pose base_pose() const {
    Pose p = Pose::identity();
    p.joint_rotations[kLeftShoulder] = Rotation::about_z(-arm_rest);
    p.joint_rotations[kRightShoulder] = Rotation::about_z(arm_rest);
    return p;
  }
};

// Raised-cosine pulse train in [0, 1].
double pulse(double phase) { return 0.5 * (1.0 - std::cos(phase)); }

PoseSequence make_clip(const MotionRequest& req, MotionRng& rng) {
  Clip clip;
  clip.heading = rng.uniform(-kPi, kPi);
  clip.fps = static_cast<double>(req.fps);
  clip.arm_rest = kArmsDown + rng.uniform(-0.15, 0.15);

  PoseSequence seq;
  seq.fps = req.fps;
  seq.frames.reserve(static_cast<size_t>(req.frames));

  const double freq = rng.uniform(0.3, 0.6);
  const double amp = rng.uniform(0.7, 1.0);
  const double phase0 = rng.uniform(0.0, 2.0 * kPi);
  const double lean = rng.uniform(-0.08, 0.08);
  const double speed = rng.uniform(0.8, 1.3);
  const double turn_rate = rng.sign() * rng.uniform(0.5, 1.5);
  const bool both_arms = rng.uniform(0.0, 1.0) < 0.5;

  for (int t = 0; t < req.frames; ++t) {
    const double time = t / clip.fps;
    const double w = 2.0 * kPi * freq * time + phase0;
    PoseFrame frame{clip.base_pose(), Rotation::about_y(clip.heading),
                    Vec3(0.0, kPelvisHeight, 0.0)};
    auto& r = frame.pose.joint_rotations;
    r[kSpine1] = Rotation::about_x(lean);

    if (req.family == "static") {
      // fixed pose for the whole clip
    } else if (req.family == "arm_raise") {
      const double left = amp * 2.2 * pulse(w);
      const double right = amp * 2.2 * pulse(both_arms ? w : w + kPi);
      r[kLeftShoulder] = Rotation::about_z(-clip.arm_rest + left);
      r[kRightShoulder] = Rotation::about_z(clip.arm_rest - right);
      r[kLeftElbow] = Rotation::about_y(0.6 * amp * pulse(w + 0.5));
      r[kRightElbow] = Rotation::about_y(-0.6 * amp * pulse(w + 0.5));
    } else if (req.family == "leg_raise") {
      const double left = amp * pulse(w);
      const double right = amp * pulse(w + kPi);
      r[kLeftHip] = Rotation::about_x(-1.3 * left);
      r[kRightHip] = Rotation::about_x(-1.3 * right);
      r[kLeftKnee] = Rotation::about_x(1.1 * left);
      r[kRightKnee] = Rotation::about_x(1.1 * right);
      r[kLeftElbow] = Rotation::about_y(0.3 * left);
      r[kRightElbow] = Rotation::about_y(-0.3 * right);
    } else if (req.family == "squat") {
      const double depth = amp * pulse(w);
      r[kLeftHip] = Rotation::about_x(-1.2 * depth);
      r[kRightHip] = Rotation::about_x(-1.2 * depth);
      r[kLeftKnee] = Rotation::about_x(1.8 * depth);
      r[kRightKnee] = Rotation::about_x(1.8 * depth);
      r[kLeftAnkle] = Rotation::about_x(-0.6 * depth);
      r[kRightAnkle] = Rotation::about_x(-0.6 * depth);
      r[kSpine1] = Rotation::about_x(lean + 0.5 * depth);
      r[kLeftShoulder] = Rotation::about_x(-1.2 * depth) * Rotation::about_z(-clip.arm_rest);
      r[kRightShoulder] = Rotation::about_x(-1.2 * depth) * Rotation::about_z(clip.arm_rest);
      frame.root_position.y() = kPelvisHeight - 0.35 * depth;
    } else if (req.family == "walk") {
      const double gait = 2.0 * kPi * (0.8 + 0.4 * (freq - 0.3) / 0.3) * time + phase0;
      const double stride = 0.35 * amp + 0.1;
      r[kLeftHip] = Rotation::about_x(-stride * std::sin(gait));
      r[kRightHip] = Rotation::about_x(stride * std::sin(gait));
      r[kLeftKnee] = Rotation::about_x(0.9 * stride * pulse(gait - 0.6 * kPi) + 0.05);
      r[kRightKnee] = Rotation::about_x(0.9 * stride * pulse(gait + 0.4 * kPi) + 0.05);
      r[kLeftShoulder] = Rotation::about_x(0.5 * stride * std::sin(gait)) *
                         Rotation::about_z(-clip.arm_rest);
      r[kRightShoulder] = Rotation::about_x(-0.5 * stride * std::sin(gait)) *
                          Rotation::about_z(clip.arm_rest);
      r[kLeftElbow] = Rotation::about_y(0.2 + 0.15 * pulse(gait));
      r[kRightElbow] = Rotation::about_y(-0.2 - 0.15 * pulse(gait + kPi));
      frame.root_rotation = Rotation::about_y(clip.heading + 0.05 * std::sin(gait));
      const Vec3 forward = Rotation::about_y(clip.heading) * Vec3::UnitZ();
      frame.root_position += forward * (speed * time);
      frame.root_position.y() += 0.02 * std::cos(2.0 * gait);
    } else if (req.family == "root_turn") {
      const double yaw = clip.heading + turn_rate * time + 0.3 * std::sin(w);
      frame.root_rotation = Rotation::about_y(yaw);
      r[kNeck] = Rotation::about_y(0.3 * std::sin(w + 1.0));
      r[kLeftElbow] = Rotation::about_y(0.4 * pulse(w));
      r[kRightElbow] = Rotation::about_y(-0.4 * pulse(w));
    } else {
      fail(ErrorKind::kInvalidArgument, "unknown motion family '" + req.family + "'");
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace

const std::vector<std::string>& motion_families() {
  static const std::vector<std::string> families = {"static", "arm_raise", "leg_raise",
                                                    "squat",  "walk",      "root_turn"};
  return families;
}

std::vector<PoseSequence> generate_procedural_motions(const std::vector<MotionRequest>& catalog,
                                                      std::uint64_t seed) {
  std::vector<PoseSequence> out;
  out.reserve(catalog.size());
  for (const auto& req : catalog) {
    const auto& families = motion_families();
    if (std::find(families.begin(), families.end(), req.family) == families.end()) {
      fail(ErrorKind::kInvalidArgument, "unknown motion family '" + req.family + "'");
    }
    if (req.frames < 300) {
      fail(ErrorKind::kInvalidArgument, "procedural motions need at least 300 frames");
    }
    if (req.fps == 0) fail(ErrorKind::kInvalidArgument, "fps must be positive");
    MotionRng rng(seed, req.family, req.variant);
    out.push_back(make_clip(req, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly

DatasetSplit split_sequences(int sequence_count, double train_ratio, double validation_ratio,
                             double test_ratio, std::uint64_t seed) {
  if (train_ratio < 0 || validation_ratio < 0 || test_ratio < 0 ||
      std::abs(train_ratio + validation_ratio + test_ratio - 1.0) > 1e-9) {
    fail(ErrorKind::kInvalidArgument, "split ratios must be non-negative and sum to 1");
  }
  const auto n_val = static_cast<int>(std::lround(validation_ratio * sequence_count));
  const auto n_test = static_cast<int>(std::lround(test_ratio * sequence_count));
  const int n_train = sequence_count - n_val - n_test;
  if (n_train <= 0 || n_val <= 0 || n_test <= 0) {
    fail(ErrorKind::kInvalidArgument,
         "empty split: " + std::to_string(sequence_count) + " sequences give train/val/test " +
             std::to_string(n_train) + "/" + std::to_string(n_val) + "/" + std::to_string(n_test));
  }
  std::vector<int> order(static_cast<size_t>(sequence_count));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (int i = sequence_count - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

Dataset build_dataset(std::vector<SequenceRecord> sequences, double train_ratio,
                      double validation_ratio, double test_ratio, std::uint64_t seed) {
  Dataset ds;
  ds.split = split_sequences(static_cast<int>(sequences.size()), train_ratio, validation_ratio,
                             test_ratio, seed);
  ds.sequences = std::move(sequences);
  return ds;
}

SequenceRecord make_record(std::string name, const PoseSequence& source, const KinematicTree& tree,
                           const std::vector<VirtualSensor>& sensors) {
  SequenceRecord rec;
  rec.name = std::move(name);
  rec.imu = synthesize_imu(source, tree, sensors);
  rec.poses = trim_to_imu_alignment(source);
  return rec;
}

}  // namespace imupose
