#include "imupose/stream.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <deque>
#include <iostream>

#include "imupose/error.hpp"
#include "imupose/formats.hpp"

namespace imupose {
namespace {

constexpr std::string_view kWireMagic = "DIPW";
constexpr std::uint8_t kAccept = 1;
constexpr std::uint8_t kReject = 0;

// Reads until `n` bytes arrive or the peer closes. Returns the byte count.
size_t read_exact(int fd, char* buf, size_t n) {
  size_t got = 0;
  while (got < n) {
    const auto r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) break;
    if (r < 0) {
      if (errno == EINTR) continue;
      break;
    }
    got += static_cast<size_t>(r);
  }
  return got;
}

bool write_all(int fd, std::string_view data) {
  size_t sent = 0;
  while (sent < data.size()) {
    const auto r = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<size_t>(r);
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

std::string encode_handshake(const Handshake& h) {
  ByteWriter w;
  w.bytes(kWireMagic);
  w.u16(h.version);
  w.u8(h.sensor_count);
  w.u8(h.flags);
  return w.take();
}

Handshake decode_handshake(std::string_view bytes) {
  if (bytes.size() != kHandshakeSize) fail(ErrorKind::kProtocol, "handshake must be 8 bytes");
  ByteReader r(bytes);
  if (r.bytes(4) != kWireMagic) fail(ErrorKind::kProtocol, "bad handshake magic");
  Handshake h;
  h.version = r.u16();
  h.sensor_count = r.u8();
  h.flags = r.u8();
  return h;
}

WireFrame make_wire_frame(std::uint64_t frame_index, const ImuFrame& readings) {
  if (readings.orientations.size() != readings.accelerations.size()) {
    fail(ErrorKind::kInvalidArgument, "orientation and acceleration counts differ");
  }
  WireFrame f;
  f.frame_index = frame_index;
  f.values.reserve(12 * readings.orientations.size());
  for (size_t s = 0; s < readings.orientations.size(); ++s) {
    const auto& m = readings.orientations[s].matrix();
    for (int i = 0; i < 9; ++i) f.values.push_back(static_cast<float>(m(i / 3, i % 3)));
    for (int i = 0; i < 3; ++i) f.values.push_back(static_cast<float>(readings.accelerations[s](i)));
  }
  return f;
}

std::string encode_wire_frame(const WireFrame& frame) {
  if (frame.values.size() % 12 != 0) fail(ErrorKind::kInvalidArgument, "frame values must be 12 per sensor");
  ByteWriter w;
  w.u64(frame.frame_index);
  for (float v : frame.values) w.f32(v);
  return w.take();
}

WireFrame decode_wire_frame(std::string_view bytes, int sensor_count) {
  if (bytes.size() != WireFrame::byte_size(sensor_count)) {
    fail(ErrorKind::kProtocol, "frame has " + std::to_string(bytes.size()) + " bytes, expected " +
                                   std::to_string(WireFrame::byte_size(sensor_count)));
  }
  ByteReader r(bytes);
  WireFrame f;
  f.frame_index = r.u64();
  f.values.resize(12 * static_cast<size_t>(sensor_count));
  for (auto& v : f.values) v = r.f32();
  return f;
}

RawSensorFrame to_raw_frame(const WireFrame& frame) {
  RawSensorFrame raw;
  for (int s = 0; s < frame.sensor_count(); ++s) {
    const float* v = frame.values.data() + 12 * s;
    Mat3 m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = static_cast<double>(v[i]);
    const Vec3 a(v[9], v[10], v[11]);
    if (!m.allFinite() || !a.allFinite()) {
      fail(ErrorKind::kProtocol, "sensor " + std::to_string(s) + " sent non-finite values");
    }
    if (!Rotation::is_rotation(m)) {
      fail(ErrorKind::kProtocol, "sensor " + std::to_string(s) + " orientation is not a rotation");
    }
    raw.orientations.push_back(Rotation::trusted(m));
    raw.accelerations.push_back(a);
  }
  return raw;
}

WirePose make_wire_pose(std::uint64_t frame_index, const Pose& pose, const VectorXd* sigma) {
  WirePose p;
  p.frame_index = frame_index;
  p.rotations.reserve(kPoseDim);
  for (const auto& r : pose.joint_rotations) {
    for (int i = 0; i < 9; ++i) p.rotations.push_back(static_cast<float>(r(i / 3, i % 3)));
  }
  if (p.rotations.size() != static_cast<size_t>(kPoseDim)) {
    fail(ErrorKind::kInvalidArgument, "pose must have 24 joints");
  }
  if (sigma != nullptr) {
    if (sigma->size() != kPoseDim) fail(ErrorKind::kInvalidArgument, "sigma must have 216 entries");
    for (Eigen::Index i = 0; i < sigma->size(); ++i) p.sigma.push_back(static_cast<float>((*sigma)(i)));
  }
  return p;
}

std::string encode_wire_pose(const WirePose& pose) {
  ByteWriter w;
  w.u64(pose.frame_index);
  for (float v : pose.rotations) w.f32(v);
  for (float v : pose.sigma) w.f32(v);
  return w.take();
}

WirePose decode_wire_pose(std::string_view bytes, bool with_sigma) {
  if (bytes.size() != WirePose::byte_size(with_sigma)) fail(ErrorKind::kProtocol, "pose has the wrong size");
  ByteReader r(bytes);
  WirePose p;
  p.frame_index = r.u64();
  p.rotations.resize(kPoseDim);
  for (auto& v : p.rotations) v = r.f32();
  if (with_sigma) {
    p.sigma.resize(kPoseDim);
    for (auto& v : p.sigma) v = r.f32();
  }
  return p;
}

// Server

PoseServer::PoseServer(const Model& model, CalibrationState calibration, ServerConfig config,
                       Logger logger)
    : model_(&model),
      calibration_(std::move(calibration)),
      config_(std::move(config)),
      logger_(std::move(logger)) {
  config_.window.validate();
  if (config_.window.future > 255) fail(ErrorKind::kInvalidArgument, "future window must fit in one byte");
  if (calibration_.sensor_count() != model.config.sensor_count) {
    fail(ErrorKind::kInvalidArgument, "calibration has " + std::to_string(calibration_.sensor_count()) +
                                          " sensors, the model expects " +
                                          std::to_string(model.config.sensor_count));
  }
}

PoseServer::~PoseServer() { stop(); }

void PoseServer::log(const std::string& msg) const {
  if (logger_) {
    logger_(msg);
  } else {
    std::cerr << "serve: " << msg << '\n';
  }
}

void PoseServer::start() {
  if (listen_fd_ >= 0) fail(ErrorKind::kInvalidState, "server already started");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(config_.port);
  if (::inet_pton(AF_INET, config_.bind_address.c_str(), &addr.sin_addr) != 1) {
    fail(ErrorKind::kInvalidArgument, "bad bind address " + config_.bind_address);
  }
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) fail(ErrorKind::kIo, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd, 16) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    fail(ErrorKind::kIo, "cannot listen on " + config_.bind_address + ":" +
                             std::to_string(config_.port) + ": " + err);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  listen_fd_ = fd;
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void PoseServer::stop() {
  if (listen_fd_ < 0) return;
  stopping_ = true;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::lock_guard lock(sessions_mutex_);
  for (auto& s : sessions_) ::shutdown(s.fd, SHUT_RDWR);
  for (auto& s : sessions_) {
    if (s.thread.joinable()) s.thread.join();
    ::close(s.fd);
  }
  sessions_.clear();
}

void PoseServer::reap_finished() {
  std::lock_guard lock(sessions_mutex_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (it->done.load()) {
      it->thread.join();
      ::close(it->fd);
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

void PoseServer::accept_loop() {
  while (!stopping_) {
    reap_finished();
    pollfd p{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, 50);
    if (ready <= 0 || (p.revents & POLLIN) == 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    set_nodelay(fd);
    std::lock_guard lock(sessions_mutex_);
    auto& s = sessions_.emplace_back();
    s.fd = fd;
    ++sessions_started_;
    s.thread = std::thread([this, &s] { run_session(s); });
  }
}

void PoseServer::run_session(Session& session) {
  const int fd = session.fd;
  auto finish = [&] {
    ::shutdown(fd, SHUT_RDWR);
    session.done = true;
  };

  std::string hs(kHandshakeSize, '\0');
  if (read_exact(fd, hs.data(), hs.size()) != hs.size()) {
    log("connection closed during handshake");
    return finish();
  }
  Handshake h;
  try {
    h = decode_handshake(hs);
  } catch (const Error& e) {
    log(std::string("rejecting client: ") + e.what());
    write_all(fd, std::string(1, static_cast<char>(kReject)));
    return finish();
  }
  if (h.version != kWireVersion || h.sensor_count != model_->config.sensor_count) {
    log("rejecting client: version " + std::to_string(h.version) + ", " +
        std::to_string(h.sensor_count) + " sensors");
    write_all(fd, std::string(1, static_cast<char>(kReject)));
    return finish();
  }
  std::string reply{static_cast<char>(kAccept), static_cast<char>(config_.window.future)};
  if (!write_all(fd, reply)) return finish();

  InputPipeline pipeline(*model_, calibration_);
  OnlinePredictor predictor(*model_, config_.window);
  std::deque<std::uint64_t> pending;  // indices of frames not yet emitted, at most F + 1
  const bool sigma = h.wants_sigma();
  std::string buf(WireFrame::byte_size(h.sensor_count), '\0');
  while (true) {
    const auto got = read_exact(fd, buf.data(), buf.size());
    if (got == 0) break;
    if (got != buf.size()) {
      log("protocol error: truncated frame (" + std::to_string(got) + " of " +
          std::to_string(buf.size()) + " bytes)");
      break;
    }
    try {
      const auto frame = decode_wire_frame(buf, h.sensor_count);
      const auto raw = to_raw_frame(frame);
      pending.push_back(frame.frame_index);
      if (auto e = predictor.push(pipeline.process_raw(raw))) {
        const auto index = pending.front();
        pending.pop_front();
        const auto pose = make_wire_pose(index, e->pose, sigma ? &e->pose_sigma : nullptr);
        if (!write_all(fd, encode_wire_pose(pose))) break;
      }
    } catch (const Error& e) {
      log(std::string("protocol error: ") + e.what());
      break;
    }
  }
  finish();
}

// Client

StreamClient::~StreamClient() { close(); }

bool StreamClient::connect(const std::string& host, std::uint16_t port, const Handshake& handshake) {
  close();
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || res == nullptr) {
    fail(ErrorKind::kIo, "cannot resolve " + host);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0 || ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    const std::string err = std::strerror(errno);
    ::freeaddrinfo(res);
    if (fd >= 0) ::close(fd);
    fail(ErrorKind::kIo, "cannot connect to " + host + ":" + std::to_string(port) + ": " + err);
  }
  ::freeaddrinfo(res);
  set_nodelay(fd);
  fd_ = fd;
  handshake_ = handshake;
  if (!write_all(fd_, encode_handshake(handshake))) fail(ErrorKind::kIo, "handshake send failed");
  char status = 0;
  if (read_exact(fd_, &status, 1) != 1 || static_cast<std::uint8_t>(status) != kAccept) {
    close();
    return false;
  }
  char f = 0;
  if (read_exact(fd_, &f, 1) != 1) fail(ErrorKind::kProtocol, "server closed during handshake");
  future_ = static_cast<std::uint8_t>(f);
  return true;
}

void StreamClient::send(const WireFrame& frame) {
  if (fd_ < 0) fail(ErrorKind::kInvalidState, "not connected");
  if (frame.sensor_count() != handshake_.sensor_count) {
    fail(ErrorKind::kInvalidArgument, "frame sensor count differs from the handshake");
  }
  if (!write_all(fd_, encode_wire_frame(frame))) fail(ErrorKind::kIo, "connection closed by server");
}

void StreamClient::finish_sending() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

std::optional<WirePose> StreamClient::receive() {
  if (fd_ < 0) return std::nullopt;
  std::string buf(WirePose::byte_size(handshake_.wants_sigma()), '\0');
  const auto got = read_exact(fd_, buf.data(), buf.size());
  if (got == 0) return std::nullopt;
  if (got != buf.size()) fail(ErrorKind::kProtocol, "server sent a truncated pose");
  return decode_wire_pose(buf, handshake_.wants_sigma());
}

void StreamClient::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

ReplayResult replay(const std::string& host, std::uint16_t port, const ImuSequence& readings,
                    bool want_sigma, double pace_fps) {
  using Clock = std::chrono::steady_clock;
  StreamClient client;
  Handshake h;
  h.sensor_count = static_cast<std::uint8_t>(readings.sensor_count());
  h.flags = want_sigma ? kWireFlagSigma : 0;
  if (!client.connect(host, port, h)) fail(ErrorKind::kProtocol, "server rejected the handshake");

  std::vector<Clock::time_point> sent(readings.frames.size());
  std::vector<Clock::time_point> received;
  ReplayResult result;
  std::exception_ptr reader_error;
  std::thread reader([&] {
    try {
      while (auto p = client.receive()) {
        received.push_back(Clock::now());
        result.poses.push_back(std::move(*p));
      }
    } catch (...) {
      reader_error = std::current_exception();
    }
  });

  const auto start = Clock::now();
  try {
    for (size_t t = 0; t < readings.frames.size(); ++t) {
      if (pace_fps > 0.0) {
        std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(
                                                  std::chrono::duration<double>(t / pace_fps)));
      }
      sent[t] = Clock::now();
      client.send(make_wire_frame(t, readings.frames[t]));
    }
    client.finish_sending();
  } catch (...) {
    client.finish_sending();
    reader.join();
    throw;
  }
  reader.join();
  if (reader_error) std::rethrow_exception(reader_error);

  for (size_t i = 0; i < result.poses.size(); ++i) {
    const auto idx = result.poses[i].frame_index;
    const double lat = idx < sent.size()
                           ? std::chrono::duration<double>(received[i] - sent[idx]).count()
                           : std::nan("");
    result.latency_seconds.push_back(lat);
  }
  return result;
}

}  // namespace imupose
