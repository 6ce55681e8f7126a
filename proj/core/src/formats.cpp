#include "imupose/formats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "imupose/error.hpp"

namespace imupose {
namespace {

constexpr std::string_view kPoseMagic = "DIPS";
constexpr std::string_view kImuMagic = "DIPI";
constexpr std::string_view kCalibrationMagic = "DIPC";
constexpr std::string_view kModelMagic = "DIPM";

constexpr std::uint32_t kMaxTensorRank = 2;
constexpr std::uint32_t kMaxNameLength = 256;

template <typename T>
void put_le(std::string& buf, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t checked_u32(size_t n, const char* what) {
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    fail(ErrorKind::kInvalidArgument, std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(n);
}

[[noreturn]] void corrupt(const std::string& msg) { fail(ErrorKind::kCorruptFile, msg); }

}  // namespace

void ByteWriter::u16(std::uint16_t v) { put_le(buf_, v); }
void ByteWriter::u32(std::uint32_t v) { put_le(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(buf_, v); }
void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::rotation(const Rotation& r) {
  for (int i = 0; i < 9; ++i) f32(static_cast<float>(r(i / 3, i % 3)));
}

void ByteWriter::vec3(const Vec3& v) {
  for (int i = 0; i < 3; ++i) f32(static_cast<float>(v(i)));
}

std::string_view ByteReader::bytes(size_t n) {
  if (n > remaining()) {
    fail(ErrorKind::kTruncatedFile, "unexpected end of data at byte " + std::to_string(data_.size()));
  }
  const auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

namespace {
template <typename T>
T get_le(std::string_view b) {
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(b[i])) << (8 * i));
  }
  return v;
}
}  // namespace

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
std::uint16_t ByteReader::u16() { return get_le<std::uint16_t>(bytes(2)); }
std::uint32_t ByteReader::u32() { return get_le<std::uint32_t>(bytes(4)); }
std::uint64_t ByteReader::u64() { return get_le<std::uint64_t>(bytes(8)); }
float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

Rotation ByteReader::rotation() {
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = static_cast<double>(f32());
  if (!m.allFinite() || !Rotation::is_rotation(m)) corrupt("stored matrix is not a rotation");
  return Rotation::trusted(m);
}

Vec3 ByteReader::vec3() {
  Vec3 v;
  for (int i = 0; i < 3; ++i) v(i) = static_cast<double>(f32());
  if (!v.allFinite()) corrupt("stored vector is not finite");
  return v;
}

void ByteReader::header(std::string_view magic) {
  const auto got = bytes(magic.size());
  if (got != magic) fail(ErrorKind::kBadMagic, "expected magic '" + std::string(magic) + "'");
  const auto version = u32();
  if (version != kFormatVersion) {
    fail(ErrorKind::kVersionMismatch, std::string(magic) + " version " + std::to_string(version) +
                                          " is not supported (expected " +
                                          std::to_string(kFormatVersion) + ")");
  }
}

void ByteReader::require(std::uint64_t count, std::uint64_t record_size) const {
  if (record_size != 0 && count > remaining() / record_size) {
    fail(ErrorKind::kTruncatedFile, "data ends before the declared record count");
  }
}

void ByteReader::finish() const {
  if (remaining() != 0) corrupt(std::to_string(remaining()) + " trailing bytes");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::kIo, "error reading " + path.string());
  return data;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "error writing " + path.string());
}

// DIPS

std::string encode_pose_sequence(const PoseSequence& seq) {
  const size_t joints = seq.frames.empty() ? 0 : seq.frames.front().pose.joint_rotations.size();
  ByteWriter w;
  w.bytes(kPoseMagic);
  w.u32(kFormatVersion);
  w.u32(seq.fps);
  w.u32(checked_u32(seq.frames.size(), "frame count"));
  w.u32(checked_u32(joints, "joint count"));
  for (const auto& f : seq.frames) {
    if (f.pose.joint_rotations.size() != joints) {
      fail(ErrorKind::kInvalidArgument, "frames have different joint counts");
    }
    w.vec3(f.root_position);
    w.rotation(f.root_rotation);
    for (const auto& r : f.pose.joint_rotations) w.rotation(r);
  }
  return w.take();
}

PoseSequence decode_pose_sequence(std::string_view bytes) {
  ByteReader r(bytes);
  r.header(kPoseMagic);
  PoseSequence seq;
  seq.fps = r.u32();
  const auto frames = r.u32();
  const auto joints = r.u32();
  r.require(frames, 48 + 36 * static_cast<std::uint64_t>(joints));
  if (seq.fps == 0) corrupt("fps is zero");
  seq.frames.reserve(frames);
  for (std::uint32_t t = 0; t < frames; ++t) {
    PoseFrame f;
    f.root_position = r.vec3();
    f.root_rotation = r.rotation();
    f.pose.joint_rotations.reserve(joints);
    for (std::uint32_t j = 0; j < joints; ++j) f.pose.joint_rotations.push_back(r.rotation());
    seq.frames.push_back(std::move(f));
  }
  r.finish();
  return seq;
}

void save_pose_sequence(const std::filesystem::path& path, const PoseSequence& seq) {
  write_file(path, encode_pose_sequence(seq));
}

PoseSequence load_pose_sequence(const std::filesystem::path& path) {
  return decode_pose_sequence(read_file(path));
}

// DIPI

std::string encode_imu_sequence(const ImuSequence& seq) {
  const auto sensors = static_cast<size_t>(seq.sensor_count());
  ByteWriter w;
  w.bytes(kImuMagic);
  w.u32(kFormatVersion);
  w.u32(seq.fps);
  w.u32(checked_u32(seq.frames.size(), "frame count"));
  w.u32(checked_u32(sensors, "sensor count"));
  for (const auto& f : seq.frames) {
    if (f.orientations.size() != sensors || f.accelerations.size() != sensors) {
      fail(ErrorKind::kInvalidArgument, "frames have different sensor counts");
    }
    for (size_t s = 0; s < sensors; ++s) {
      w.rotation(f.orientations[s]);
      w.vec3(f.accelerations[s]);
    }
  }
  return w.take();
}

ImuSequence decode_imu_sequence(std::string_view bytes) {
  ByteReader r(bytes);
  r.header(kImuMagic);
  ImuSequence seq;
  seq.fps = r.u32();
  const auto frames = r.u32();
  const auto sensors = r.u32();
  r.require(frames, 48 * static_cast<std::uint64_t>(sensors));
  if (seq.fps == 0) corrupt("fps is zero");
  if (frames > 0 && sensors == 0) corrupt("frames without sensors");
  seq.frames.reserve(frames);
  for (std::uint32_t t = 0; t < frames; ++t) {
    ImuFrame f;
    for (std::uint32_t s = 0; s < sensors; ++s) {
      f.orientations.push_back(r.rotation());
      f.accelerations.push_back(r.vec3());
    }
    seq.frames.push_back(std::move(f));
  }
  r.finish();
  return seq;
}

void save_imu_sequence(const std::filesystem::path& path, const ImuSequence& seq) {
  write_file(path, encode_imu_sequence(seq));
}

ImuSequence load_imu_sequence(const std::filesystem::path& path) {
  return decode_imu_sequence(read_file(path));
}

// DIPC

std::string encode_calibration(const CalibrationState& cal) {
  ByteWriter w;
  w.bytes(kCalibrationMagic);
  w.u32(kFormatVersion);
  w.u32(checked_u32(cal.bone_offsets.size(), "sensor count"));
  w.rotation(cal.inertial_to_body);
  w.vec3(cal.gravity);
  for (const auto& r : cal.bone_offsets) w.rotation(r);
  return w.take();
}

CalibrationState decode_calibration(std::string_view bytes) {
  ByteReader r(bytes);
  r.header(kCalibrationMagic);
  const auto sensors = r.u32();
  CalibrationState cal;
  cal.inertial_to_body = r.rotation();
  cal.gravity = r.vec3();
  r.require(sensors, 36);
  for (std::uint32_t s = 0; s < sensors; ++s) cal.bone_offsets.push_back(r.rotation());
  r.finish();
  return cal;
}

void save_calibration(const std::filesystem::path& path, const CalibrationState& cal) {
  write_file(path, encode_calibration(cal));
}

CalibrationState load_calibration(const std::filesystem::path& path) {
  return decode_calibration(read_file(path));
}

// DIPM

namespace {

void write_stats(ByteWriter& w, const AffineStats& s) {
  w.u32(checked_u32(static_cast<size_t>(s.dim()), "statistics length"));
  for (Eigen::Index i = 0; i < s.mean.size(); ++i) w.f64(s.mean(i));
  for (Eigen::Index i = 0; i < s.std.size(); ++i) w.f64(s.std(i));
}

AffineStats read_stats(ByteReader& r, int expected_dim, const char* what) {
  const auto dim = r.u32();
  r.require(dim, 16);
  if (static_cast<std::int64_t>(dim) != expected_dim) {
    corrupt(std::string(what) + " statistics have length " + std::to_string(dim) + ", expected " +
            std::to_string(expected_dim));
  }
  AffineStats s;
  s.mean.resize(dim);
  s.std.resize(dim);
  for (std::uint32_t i = 0; i < dim; ++i) s.mean(i) = r.f64();
  for (std::uint32_t i = 0; i < dim; ++i) s.std(i) = r.f64();
  if (!s.mean.allFinite() || !s.std.allFinite() || (s.std.array() <= 0.0).any()) {
    corrupt(std::string(what) + " statistics are invalid");
  }
  return s;
}

}  // namespace

std::string encode_model(const Model& model) {
  const auto& c = model.config;
  ByteWriter w;
  w.bytes(kModelMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(c.input_dim));
  w.u32(static_cast<std::uint32_t>(c.dense_units));
  w.u32(static_cast<std::uint32_t>(c.hidden_units));
  w.u32(static_cast<std::uint32_t>(c.num_layers));
  w.u32(static_cast<std::uint32_t>(c.pose_dim));
  w.u32(static_cast<std::uint32_t>(c.acc_dim));
  w.u32(static_cast<std::uint32_t>(c.sensor_count));
  w.u8(c.bidirectional ? 1 : 0);
  w.f64(c.input_keep_prob);
  w.u8(c.use_acc_loss ? 1 : 0);
  w.u8(c.use_acc_inputs ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(c.scheme));

  write_stats(w, model.standardizer.input);
  write_stats(w, model.standardizer.target);
  write_stats(w, model.standardizer.acc);

  const auto tensors = model.params.tensors();
  w.u32(checked_u32(tensors.size(), "tensor count"));
  for (const auto& t : tensors) {
    w.u32(checked_u32(t.name.size(), "tensor name"));
    w.bytes(t.name);
    w.u32(static_cast<std::uint32_t>(t.rank));
    w.u32(static_cast<std::uint32_t>(t.rows));
    if (t.rank == 2) w.u32(static_cast<std::uint32_t>(t.cols));
    for (Eigen::Index i = 0; i < t.rows; ++i) {
      for (Eigen::Index j = 0; j < t.cols; ++j) w.f64(t.data[j * t.rows + i]);
    }
  }
  return w.take();
}

Model decode_model(std::string_view bytes) {
  ByteReader r(bytes);
  r.header(kModelMagic);
  Model model;
  auto& c = model.config;
  auto read_int = [&](const char* what) {
    const auto v = r.u32();
    if (v > 1u << 20) corrupt(std::string(what) + " is out of range");
    return static_cast<int>(v);
  };
  auto read_bool = [&](const char* what) {
    const auto v = r.u8();
    if (v > 1) corrupt(std::string(what) + " flag is not 0 or 1");
    return v == 1;
  };
  c.input_dim = read_int("input_dim");
  c.dense_units = read_int("dense_units");
  c.hidden_units = read_int("hidden_units");
  c.num_layers = read_int("num_layers");
  c.pose_dim = read_int("pose_dim");
  c.acc_dim = read_int("acc_dim");
  c.sensor_count = read_int("sensor_count");
  c.bidirectional = read_bool("bidirectional");
  c.input_keep_prob = r.f64();
  c.use_acc_loss = read_bool("use_acc_loss");
  c.use_acc_inputs = read_bool("use_acc_inputs");
  const auto scheme = r.u8();
  if (scheme > static_cast<std::uint8_t>(NormalizationScheme::kHeadingOnly)) corrupt("unknown scheme");
  c.scheme = static_cast<NormalizationScheme>(scheme);
  try {
    c.validate();
  } catch (const Error& e) {
    corrupt(std::string("invalid model configuration: ") + e.what());
  }

  model.standardizer.input = read_stats(r, c.input_dim, "input");
  model.standardizer.target = read_stats(r, c.pose_dim, "pose");
  model.standardizer.acc = read_stats(r, c.acc_dim, "acceleration");

  model.params = Params::zeros(c);
  auto tensors = model.params.tensors();
  const auto count = r.u32();
  if (count != tensors.size()) corrupt("checkpoint has " + std::to_string(count) + " tensors, expected " +
                                       std::to_string(tensors.size()));
  for (auto& t : tensors) {
    const auto name_len = r.u32();
    if (name_len > kMaxNameLength) corrupt("tensor name too long");
    const auto name = r.bytes(name_len);
    if (name != t.name) corrupt("unexpected tensor '" + std::string(name) + "', expected '" + t.name + "'");
    const auto rank = r.u32();
    if (rank == 0 || rank > kMaxTensorRank || static_cast<int>(rank) != t.rank) {
      corrupt("tensor '" + t.name + "' has the wrong rank");
    }
    const auto rows = r.u32();
    const auto cols = rank == 2 ? r.u32() : 1u;
    if (rows != t.rows || cols != t.cols) corrupt("tensor '" + t.name + "' has the wrong shape");
    r.require(static_cast<std::uint64_t>(rows) * cols, 8);
    for (Eigen::Index i = 0; i < t.rows; ++i) {
      for (Eigen::Index j = 0; j < t.cols; ++j) t.data[j * t.rows + i] = r.f64();
    }
  }
  r.finish();
  if (!model.params.all_finite()) corrupt("checkpoint holds non-finite parameters");
  return model;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  write_file(path, encode_model(model));
}

Model load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

// Dataset directories

void save_sequence_dir(const std::filesystem::path& dir, const std::vector<SequenceRecord>& records,
                       const std::vector<PoseSequence>& sources) {
  if (records.size() != sources.size()) {
    fail(ErrorKind::kInvalidArgument, "records and sources differ in length");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  for (size_t i = 0; i < records.size(); ++i) {
    save_pose_sequence(dir / (records[i].name + ".dips"), sources[i]);
    save_imu_sequence(dir / (records[i].name + ".dipi"), records[i].imu);
  }
}

std::vector<SequenceRecord> load_sequence_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) fail(ErrorKind::kIo, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> inputs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dipi") inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) fail(ErrorKind::kInvalidArgument, "no .dipi files in " + dir.string());

  std::vector<SequenceRecord> out;
  for (const auto& in : inputs) {
    SequenceRecord rec;
    rec.name = in.stem().string();
    rec.imu = load_imu_sequence(in);
    auto poses_path = in;
    poses_path.replace_extension(".dips");
    rec.poses = load_pose_sequence(poses_path);
    const auto n = rec.imu.frames.size();
    if (rec.poses.frames.size() == n + 2) {
      rec.poses = trim_to_imu_alignment(rec.poses);
    } else if (rec.poses.frames.size() != n) {
      fail(ErrorKind::kInvalidArgument, rec.name + ": pose and reading frame counts do not match");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace imupose
