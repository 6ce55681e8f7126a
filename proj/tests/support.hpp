#pragma once

#include <cmath>
#include <random>

#include "imupose/network.hpp"
#include "imupose/rotation.hpp"
#include "imupose/synthesis.hpp"

namespace imupose::test {

// Uniform random rotation from a normalized Gaussian quaternion.
inline Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double w = n(rng), x = n(rng), y = n(rng), z = n(rng);
  const double len = std::sqrt(w * w + x * x + y * y + z * z);
  w /= len, x /= len, y /= len, z /= len;
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
       2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
       2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return Rotation::from_matrix(m);
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Pose random_pose(std::mt19937_64& rng) {
  Pose p;
  for (int j = 0; j < kJointCount; ++j) p.joint_rotations.push_back(random_rotation(rng));
  return p;
}

inline double max_abs_diff(const Mat3& a, const Mat3& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Dataset of procedural motions, one variant per listed family.
inline Dataset small_dataset(const std::vector<std::string>& families, int variants, int frames,
                             std::uint64_t seed) {
  std::vector<MotionRequest> catalog;
  for (const auto& f : families) {
    for (int v = 0; v < variants; ++v) catalog.push_back({f, frames, v, 60});
  }
  const auto sources = generate_procedural_motions(catalog, seed);
  std::vector<SequenceRecord> records;
  for (size_t i = 0; i < sources.size(); ++i) {
    records.push_back(make_record(catalog[i].family + std::to_string(catalog[i].variant), sources[i],
                                  default_tree(), default_sensors()));
  }
  Dataset ds;
  ds.sequences = std::move(records);
  return ds;
}

}  // namespace imupose::test
