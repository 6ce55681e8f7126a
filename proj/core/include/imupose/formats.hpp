#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "imupose/calibration.hpp"
#include "imupose/network.hpp"
#include "imupose/synthesis.hpp"

namespace imupose {

inline constexpr std::uint32_t kFormatVersion = 1;

// Little-endian serialization helpers shared by the file formats and the
// wire protocol.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::string_view s) { buf_.append(s); }
  void rotation(const Rotation& r);  // 9 x f32 row-major
  void vec3(const Vec3& v);          // 3 x f32

  const std::string& data() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

// Bounds-checked reader. Running past the end raises kTruncatedFile.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string_view bytes(size_t n);
  Rotation rotation();  // validated, kCorruptFile when not a rotation
  Vec3 vec3();

  // Checks the 4-byte magic and the version that follows it.
  void header(std::string_view magic);
  // Raises kTruncatedFile unless `count` records of `record_size` bytes remain.
  void require(std::uint64_t count, std::uint64_t record_size) const;
  // Raises kCorruptFile on trailing bytes.
  void finish() const;

  size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// DIPS
std::string encode_pose_sequence(const PoseSequence& seq);
PoseSequence decode_pose_sequence(std::string_view bytes);
void save_pose_sequence(const std::filesystem::path& path, const PoseSequence& seq);
PoseSequence load_pose_sequence(const std::filesystem::path& path);

// DIPI
std::string encode_imu_sequence(const ImuSequence& seq);
ImuSequence decode_imu_sequence(std::string_view bytes);
void save_imu_sequence(const std::filesystem::path& path, const ImuSequence& seq);
ImuSequence load_imu_sequence(const std::filesystem::path& path);

// DIPC. The offset composition is not persisted; loaded states use the default.
std::string encode_calibration(const CalibrationState& cal);
CalibrationState decode_calibration(std::string_view bytes);
void save_calibration(const std::filesystem::path& path, const CalibrationState& cal);
CalibrationState load_calibration(const std::filesystem::path& path);

// DIPM
std::string encode_model(const Model& model);
Model decode_model(std::string_view bytes);
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

// A dataset directory holds <name>.dips and <name>.dipi pairs. The pose file
// is either aligned with the readings or two frames longer (the raw source,
// trimmed on load).
void save_sequence_dir(const std::filesystem::path& dir, const std::vector<SequenceRecord>& records,
                       const std::vector<PoseSequence>& sources);
std::vector<SequenceRecord> load_sequence_dir(const std::filesystem::path& dir);

}  // namespace imupose
