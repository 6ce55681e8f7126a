#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "imupose/calibration.hpp"
#include "imupose/inference.hpp"

namespace imupose {

// Streaming protocol, all integers and floats little-endian:
//   client -> server  handshake "DIPW" u16 version, u8 sensor_count, u8 flags
//   server -> client  u8 accept (1), u8 future window F; or a single 0 byte
//   client -> server  WireFrame*   u64 frame_index, per sensor 9 f32 + 3 f32
//   server -> client  WirePose*    u64 frame_index, 216 f32 [, 216 f32 sigma]
inline constexpr std::uint16_t kWireVersion = 1;
inline constexpr std::uint8_t kWireFlagSigma = 0x01;
inline constexpr size_t kHandshakeSize = 8;

struct Handshake {
  std::uint16_t version = kWireVersion;
  std::uint8_t sensor_count = kSensorCount;
  std::uint8_t flags = 0;

  bool wants_sigma() const { return (flags & kWireFlagSigma) != 0; }
};

std::string encode_handshake(const Handshake& h);
// kProtocol on bad magic.
Handshake decode_handshake(std::string_view bytes);

struct WireFrame {
  std::uint64_t frame_index = 0;
  std::vector<float> values;  // sensor_count x 12

  static size_t byte_size(int sensor_count) { return 8 + 48 * static_cast<size_t>(sensor_count); }
  int sensor_count() const { return static_cast<int>(values.size() / 12); }
};

WireFrame make_wire_frame(std::uint64_t frame_index, const ImuFrame& readings);
std::string encode_wire_frame(const WireFrame& frame);
WireFrame decode_wire_frame(std::string_view bytes, int sensor_count);
// kProtocol when an orientation is not a rotation or a value is not finite.
RawSensorFrame to_raw_frame(const WireFrame& frame);

struct WirePose {
  std::uint64_t frame_index = 0;
  std::vector<float> rotations;  // 24 x 9, row-major per joint
  std::vector<float> sigma;      // empty unless requested

  static size_t byte_size(bool with_sigma) { return 8 + 4 * kPoseDim * (with_sigma ? 2 : 1); }
};

WirePose make_wire_pose(std::uint64_t frame_index, const Pose& pose, const VectorXd* sigma);
std::string encode_wire_pose(const WirePose& pose);
WirePose decode_wire_pose(std::string_view bytes, bool with_sigma);

struct ServerConfig {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  WindowConfig window;
};

// TCP pose server. One handler thread per connection; sessions share the
// immutable model and calibration and keep their own window state.
class PoseServer {
 public:
  using Logger = std::function<void(const std::string&)>;

  PoseServer(const Model& model, CalibrationState calibration, ServerConfig config,
             Logger logger = nullptr);
  ~PoseServer();
  PoseServer(const PoseServer&) = delete;
  PoseServer& operator=(const PoseServer&) = delete;

  // Binds and starts accepting. Throws kIo when the socket cannot be bound.
  void start();
  // Stops accepting, closes live sessions and joins every thread.
  void stop();

  std::uint16_t port() const { return port_; }
  std::int64_t sessions_started() const { return sessions_started_.load(); }

 private:
  struct Session {
    int fd = -1;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void run_session(Session& session);
  void log(const std::string& msg) const;
  void reap_finished();

  const Model* model_;
  CalibrationState calibration_;
  ServerConfig config_;
  Logger logger_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::int64_t> sessions_started_{0};
  std::thread acceptor_;
  std::mutex sessions_mutex_;
  std::list<Session> sessions_;
};

// Blocking client for the protocol above.
class StreamClient {
 public:
  StreamClient() = default;
  ~StreamClient();
  StreamClient(const StreamClient&) = delete;
  StreamClient& operator=(const StreamClient&) = delete;

  // Returns false when the server rejects the handshake.
  bool connect(const std::string& host, std::uint16_t port, const Handshake& handshake);
  int future_window() const { return future_; }

  void send(const WireFrame& frame);
  // Signals the end of the stream; poses already in flight still arrive.
  void finish_sending();
  // nullopt once the server closes the connection.
  std::optional<WirePose> receive();
  void close();

 private:
  int fd_ = -1;
  int future_ = 0;
  Handshake handshake_;
};

struct ReplayResult {
  std::vector<WirePose> poses;
  // Seconds from sending the input frame with the same index to receiving the pose.
  std::vector<double> latency_seconds;
};

// Streams every frame of `readings`, paced at pace_fps when positive, and
// collects the replies.
ReplayResult replay(const std::string& host, std::uint16_t port, const ImuSequence& readings,
                    bool want_sigma = false, double pace_fps = 0.0);

}  // namespace imupose
