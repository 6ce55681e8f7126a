// imupose: command-line front end for synthesis, calibration, training,
// evaluation, offline/online inference and the streaming pose server.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "imupose/calibration.hpp"
#include "imupose/error.hpp"
#include "imupose/evaluation.hpp"
#include "imupose/formats.hpp"
#include "imupose/inference.hpp"
#include "imupose/stream.hpp"
#include "imupose/training.hpp"

namespace fs = std::filesystem;
using namespace imupose;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& s : split_list(text)) {
    try {
      size_t used = 0;
      out.push_back(std::stoi(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidArgument, "'" + s + "' is not an integer");
    }
  }
  return out;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot create " + path.string());
  return out;
}

// Settings shared by the commands that read a config file.
struct Settings {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
};

Settings load_settings(const std::string& config_path) {
  Settings s;
  std::string path = config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("IMUPOSE_CONFIG")) path = env;
  }
  ConfigMap values;
  if (!path.empty()) values = load_config_file(path);
  apply_config(values, s.model, s.train, s.data);
  return s;
}

Dataset load_dataset(const fs::path& dir, const DataConfig& data) {
  return build_dataset(load_sequence_dir(dir), data.train_ratio, data.validation_ratio,
                       data.test_ratio, data.split_seed);
}

std::vector<int> select_split(const Dataset& ds, const std::string& name) {
  if (name == "train") return ds.split.train;
  if (name == "validation") return ds.split.validation;
  if (name == "test") return ds.split.test;
  if (name == "all") {
    std::vector<int> all(ds.sequences.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  fail(ErrorKind::kInvalidArgument, "unknown split '" + name + "'");
}

// Datasets for evaluation; "all" works for directories too small to split.
Dataset load_eval_dataset(const fs::path& dir, const DataConfig& data, const std::string& split) {
  if (split == "all") {
    Dataset ds;
    ds.sequences = load_sequence_dir(dir);
    return ds;
  }
  return load_dataset(dir, data);
}

void print_epoch(const EpochRecord& r) {
  std::cout << "epoch " << r.epoch << " train_nll " << r.train_nll << " val_nll " << r.val_nll
            << " lr " << r.lr << " (" << r.seconds << " s)\n"
            << std::flush;
}

void finish_training(const TrainResult& result, const fs::path& out, const std::string& report_path) {
  if (result.report.diverged) {
    fail(ErrorKind::kTrainingDiverged, result.report.diverged_reason);
  }
  save_model(out, result.model);
  if (!report_path.empty()) {
    auto f = open_output(report_path);
    write_report_csv(f, result.report);
  }
  std::cout << "best epoch " << result.report.best_epoch << " val_nll " << result.report.best_val_nll
            << ", wrote " << out.string() << '\n';
}

PoseSequence poses_to_sequence(const std::vector<Pose>& poses, std::uint32_t fps) {
  PoseSequence seq;
  seq.fps = fps;
  for (const auto& p : poses) seq.frames.push_back({p, Rotation(), Vec3::Zero()});
  return seq;
}

Pose pose_from_wire(const WirePose& w) {
  Pose p;
  for (int j = 0; j < kJointCount; ++j) {
    Mat3 m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = w.rotations[static_cast<size_t>(9 * j + i)];
    p.joint_rotations.push_back(Rotation::trusted(m));
  }
  return p;
}

void write_eval_outputs(const EvalReport& report, const std::string& out, const std::string& frames,
                        const std::string& histogram) {
  if (out.empty()) {
    write_summary_csv(std::cout, report);
  } else {
    auto f = open_output(out);
    write_summary_csv(f, report);
  }
  if (!frames.empty()) {
    auto f = open_output(frames);
    write_frames_csv(f, report);
  }
  if (!histogram.empty()) {
    auto f = open_output(histogram);
    write_histogram_csv(f, report);
  }
}

WindowConfig window_from(int past, int future) {
  WindowConfig w{past, future};
  w.validate();
  return w;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose estimation from six body-worn inertial sensors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "imupose 0.1.0");

  // synthesize
  auto* synth = app.add_subcommand("synthesize", "Generate procedural motions and their sensor readings");
  std::string motions = "static,arm_raise,leg_raise,squat,walk,root_turn";
  int variants = 5, frames = 600;
  std::uint32_t fps = 60;
  std::uint64_t seed = 0;
  std::string out, skeleton_path, sensors_path;
  synth->add_option("--motions", motions, "Comma-separated motion families")->capture_default_str();
  synth->add_option("--variants", variants, "Variants per family")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--frames", frames, "Frames per motion (>= 300)")->capture_default_str();
  synth->add_option("--fps", fps, "Frame rate")->capture_default_str();
  synth->add_option("--seed", seed, "Random seed")->capture_default_str();
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--skeleton", skeleton_path, "Skeleton definition file");
  synth->add_option("--sensors", sensors_path, "Sensor placement file");

  // calibrate
  auto* calib = app.add_subcommand("calibrate", "Compute a calibration from a still-stand recording");
  std::string still_path, alignment_path, composition = "right";
  bool identity = false;
  int sensor_count = kSensorCount;
  calib->add_option("--still", still_path, "Raw readings recorded while standing in the straight pose");
  calib->add_option("--alignment", alignment_path,
                    "Raw readings whose first frame holds the head sensor alignment (default: --still)");
  calib->add_flag("--identity", identity, "Write the identity calibration for pre-calibrated data");
  calib->add_option("--sensor-count", sensor_count, "Sensors for --identity")->capture_default_str();
  calib->add_option("--composition", composition, "Offset composition: right or left")
      ->check(CLI::IsMember({"right", "left"}))
      ->capture_default_str();
  calib->add_option("--out", out, "Output calibration file")->required();

  // fit-stats
  auto* stats = app.add_subcommand("fit-stats", "Fit standardization statistics on the training split");
  std::string config_path, data_dir;
  stats->add_option("--config", config_path, "Configuration file (default: $IMUPOSE_CONFIG)");
  stats->add_option("--data", data_dir, "Dataset directory")->required();
  stats->add_option("--out", out, "CSV output (block,index,mean,std)")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  std::string report_path;
  int epochs_override = -1;
  bool quiet = false;
  train_cmd->add_option("--config", config_path, "Configuration file (default: $IMUPOSE_CONFIG)");
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  train_cmd->add_option("--out", out, "Output checkpoint")->required();
  train_cmd->add_option("--report", report_path, "Training log CSV");
  train_cmd->add_option("--epochs", epochs_override, "Override max_epochs");
  train_cmd->add_flag("--quiet", quiet, "No per-epoch output");

  // finetune
  auto* finetune_cmd = app.add_subcommand("finetune", "Continue training a checkpoint on new data");
  std::string model_path;
  finetune_cmd->add_option("--model", model_path, "Pretrained checkpoint")->required();
  finetune_cmd->add_option("--config", config_path, "Configuration file (training keys only)");
  finetune_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  finetune_cmd->add_option("--out", out, "Output checkpoint")->required();
  finetune_cmd->add_option("--report", report_path, "Training log CSV");
  finetune_cmd->add_option("--epochs", epochs_override, "Override max_epochs");
  finetune_cmd->add_flag("--quiet", quiet, "No per-epoch output");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a prediction file");
  std::string mode_text = "offline", split_name = "test", frames_path, histogram_path;
  std::string pred_path, truth_path;
  bool trim_truth = false;
  double bin_width = 2.5;
  eval_cmd->add_option("--model", model_path, "Checkpoint");
  eval_cmd->add_option("--data", data_dir, "Dataset directory");
  eval_cmd->add_option("--config", config_path, "Configuration file for the split settings");
  eval_cmd->add_option("--mode", mode_text, "offline or online:P,F")->capture_default_str();
  eval_cmd->add_option("--split", split_name, "train, validation, test or all")->capture_default_str();
  eval_cmd->add_option("--pred", pred_path, "Predicted poses (instead of --model)");
  eval_cmd->add_option("--truth", truth_path, "Ground-truth poses for --pred");
  eval_cmd->add_flag("--trim-truth", trim_truth, "Drop the first and last truth frames (raw synthesized source)");
  eval_cmd->add_option("--out", out, "Summary CSV (default: stdout)");
  eval_cmd->add_option("--frames", frames_path, "Per-frame CSV");
  eval_cmd->add_option("--histogram", histogram_path, "Histogram CSV");
  eval_cmd->add_option("--bin-width", bin_width, "Histogram bin width in degrees")->capture_default_str();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Online error over a grid of past/future windows");
  std::string pasts = "0,5,10,20,40", futures = "0,1,3,5,10";
  std::string sweep_split = "validation";
  sweep_cmd->add_option("--model", model_path, "Checkpoint")->required();
  sweep_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  sweep_cmd->add_option("--config", config_path, "Configuration file for the split settings");
  sweep_cmd->add_option("--past", pasts, "Past frame counts")->capture_default_str();
  sweep_cmd->add_option("--future", futures, "Future frame counts")->capture_default_str();
  sweep_cmd->add_option("--split", sweep_split, "train, validation, test or all")->capture_default_str();
  sweep_cmd->add_option("--out", out, "Grid CSV (default: stdout)");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "Predict poses for a recording");
  std::string in_path, calibration_path;
  infer_cmd->add_option("--model", model_path, "Checkpoint")->required();
  infer_cmd->add_option("--in", in_path, "Readings (.dipi)")->required();
  infer_cmd->add_option("--out", out, "Predicted poses (.dips)")->required();
  infer_cmd->add_option("--mode", mode_text, "offline or online:P,F")->capture_default_str();
  infer_cmd->add_option("--calibration", calibration_path, "Treat readings as raw and apply this calibration");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Stream poses over TCP");
  int past = 20, future = 5;
  std::uint16_t port = 0;
  std::string bind = "127.0.0.1";
  serve_cmd->add_option("--model", model_path, "Checkpoint")->required();
  serve_cmd->add_option("--calibration", calibration_path, "Calibration file")->required();
  serve_cmd->add_option("--past", past, "Past frames")->capture_default_str();
  serve_cmd->add_option("--future", future, "Future frames")->capture_default_str();
  serve_cmd->add_option("--port", port, "Port (0 picks one)")->capture_default_str();
  serve_cmd->add_option("--bind", bind, "Bind address")->capture_default_str();

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "Stream a recording to a running server");
  std::string host = "127.0.0.1";
  double pace = 0.0;
  bool with_sigma = false;
  replay_cmd->add_option("--host", host, "Server host")->capture_default_str();
  replay_cmd->add_option("--port", port, "Server port")->required();
  replay_cmd->add_option("--in", in_path, "Readings (.dipi)")->required();
  replay_cmd->add_option("--out", out, "Received poses (.dips)")->required();
  replay_cmd->add_option("--pace", pace, "Send rate in frames per second (0: as fast as possible)");
  replay_cmd->add_flag("--sigma", with_sigma, "Request uncertainties");

  // throughput
  auto* tp_cmd = app.add_subcommand("throughput", "Measure end-to-end online inference speed");
  double seconds = 3.0;
  tp_cmd->add_option("--model", model_path, "Checkpoint")->required();
  tp_cmd->add_option("--past", past, "Past frames")->capture_default_str();
  tp_cmd->add_option("--future", future, "Future frames")->capture_default_str();
  tp_cmd->add_option("--seconds", seconds, "Measurement duration")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const KinematicTree tree = skeleton_path.empty() ? default_tree() : load_skeleton_file(skeleton_path);
      const auto sensors = sensors_path.empty() ? default_sensors() : load_sensor_file(sensors_path);
      std::vector<MotionRequest> catalog;
      for (const auto& family : split_list(motions)) {
        for (int v = 0; v < variants; ++v) catalog.push_back({family, frames, v, fps});
      }
      const auto sources = generate_procedural_motions(catalog, seed);
      std::vector<SequenceRecord> records;
      for (size_t i = 0; i < catalog.size(); ++i) {
        records.push_back(make_record(catalog[i].family + "_" + std::to_string(catalog[i].variant),
                                      sources[i], tree, sensors));
      }
      save_sequence_dir(out, records, sources);
      std::cout << "wrote " << records.size() << " sequences to " << out << '\n';
    } else if (calib->parsed()) {
      CalibrationState cal;
      if (identity) {
        if (sensor_count <= 0) fail(ErrorKind::kInvalidArgument, "sensor count must be positive");
        cal.bone_offsets.assign(static_cast<size_t>(sensor_count), Rotation());
        cal.gravity = Vec3::Zero();
      } else {
        if (still_path.empty()) fail(ErrorKind::kInvalidArgument, "calibrate needs --still or --identity");
        const auto still = load_imu_sequence(still_path);
        if (still.frames.empty()) fail(ErrorKind::kInvalidArgument, "still-stand recording is empty");
        const auto alignment = alignment_path.empty() ? still : load_imu_sequence(alignment_path);
        if (alignment.frames.empty() || alignment.sensor_count() <= kHeadSensor) {
          fail(ErrorKind::kInvalidArgument, "alignment recording has no head sensor");
        }
        std::vector<RawSensorFrame> raw;
        for (const auto& f : still.frames) raw.push_back({f.orientations, f.accelerations});
        const auto globals = forward_kinematics(default_tree(), Pose::identity(), Rotation(), Vec3::Zero());
        std::vector<Rotation> straight;
        for (const auto& s : default_sensors()) straight.push_back(globals[static_cast<size_t>(s.bone)].rotation);
        cal = calibrate_session(alignment.frames.front().orientations[kHeadSensor], raw, straight,
                                composition == "left" ? OffsetComposition::kLeftLiteral
                                                      : OffsetComposition::kRightInverse);
      }
      save_calibration(out, cal);
      std::cout << "wrote " << out << '\n';
    } else if (stats->parsed()) {
      const auto s = load_settings(config_path);
      const auto ds = load_dataset(data_dir, s.data);
      const auto st = fit_standardizer(features_for(ds, ds.split.train, s.model.layout()));
      auto f = open_output(out);
      f << "block,index,mean,std\n" << std::setprecision(17);
      auto dump = [&](const char* block, const AffineStats& a) {
        for (int i = 0; i < a.dim(); ++i) f << block << ',' << i << ',' << a.mean(i) << ',' << a.std(i) << '\n';
      };
      dump("input", st.input);
      dump("pose", st.target);
      dump("acc", st.acc);
    } else if (train_cmd->parsed()) {
      auto s = load_settings(config_path);
      if (epochs_override >= 0) s.train.max_epochs = epochs_override;
      const auto ds = load_dataset(data_dir, s.data);
      const auto result = train(s.model, s.train, ds, quiet ? EpochCallback{} : EpochCallback{print_epoch});
      finish_training(result, out, report_path);
    } else if (finetune_cmd->parsed()) {
      auto s = load_settings(config_path);
      if (epochs_override >= 0) s.train.max_epochs = epochs_override;
      const auto pretrained = load_model(model_path);
      const auto ds = load_dataset(data_dir, s.data);
      const auto result = finetune(pretrained, ds, s.train, quiet ? EpochCallback{} : EpochCallback{print_epoch});
      finish_training(result, out, report_path);
    } else if (eval_cmd->parsed()) {
      if (!pred_path.empty()) {
        if (truth_path.empty()) fail(ErrorKind::kInvalidArgument, "--pred needs --truth");
        const auto pred = load_pose_sequence(pred_path);
        auto truth = load_pose_sequence(truth_path);
        if (trim_truth) truth = trim_to_imu_alignment(truth);
        std::vector<std::vector<Pose>> p(1), t(1);
        for (const auto& f : pred.frames) p[0].push_back(f.pose);
        for (const auto& f : truth.frames) t[0].push_back(f.pose);
        write_eval_outputs(evaluate_poses(p, t, default_tree(), "file", bin_width), out, frames_path,
                           histogram_path);
      } else {
        if (model_path.empty() || data_dir.empty()) {
          fail(ErrorKind::kInvalidArgument, "eval needs --model and --data, or --pred and --truth");
        }
        const auto s = load_settings(config_path);
        const auto model = load_model(model_path);
        const auto ds = load_eval_dataset(data_dir, s.data, split_name);
        const auto mode = EvalMode::parse(mode_text);
        const auto report =
            evaluate(model, ds, select_split(ds, split_name), mode, default_tree(), bin_width);
        write_eval_outputs(report, out, frames_path, histogram_path);
      }
    } else if (sweep_cmd->parsed()) {
      const auto s = load_settings(config_path);
      const auto model = load_model(model_path);
      const auto ds = load_eval_dataset(data_dir, s.data, sweep_split);
      const auto cells = window_sweep(model, ds, select_split(ds, sweep_split), parse_int_list(pasts),
                                      parse_int_list(futures));
      if (out.empty()) {
        write_sweep_csv(std::cout, cells);
      } else {
        auto f = open_output(out);
        write_sweep_csv(f, cells);
      }
    } else if (infer_cmd->parsed()) {
      const auto model = load_model(model_path);
      const auto imu = load_imu_sequence(in_path);
      std::optional<CalibrationState> cal;
      if (!calibration_path.empty()) cal = load_calibration(calibration_path);
      const auto mode = EvalMode::parse(mode_text);
      const MatrixXd x = prepare_inputs(model, imu, cal);
      std::vector<Pose> poses;
      if (mode.online) {
        for (auto& e : predict_online(model, x, mode.window)) poses.push_back(std::move(e.pose));
      } else {
        poses = predict_offline(model, x);
      }
      save_pose_sequence(out, poses_to_sequence(poses, imu.fps));
      std::cout << "wrote " << poses.size() << " poses to " << out << '\n';
    } else if (serve_cmd->parsed()) {
      const auto model = load_model(model_path);
      ServerConfig cfg;
      cfg.bind_address = bind;
      cfg.port = port;
      cfg.window = window_from(past, future);
      PoseServer server(model, load_calibration(calibration_path), cfg);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.start();
      std::cout << "listening on " << bind << ":" << server.port() << std::endl;
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
    } else if (replay_cmd->parsed()) {
      const auto imu = load_imu_sequence(in_path);
      const auto result = replay(host, port, imu, with_sigma, pace);
      std::vector<Pose> poses;
      double latency = 0.0;
      for (size_t i = 0; i < result.poses.size(); ++i) {
        poses.push_back(pose_from_wire(result.poses[i]));
        latency += result.latency_seconds[i];
      }
      save_pose_sequence(out, poses_to_sequence(poses, imu.fps));
      std::cout << "received " << poses.size() << " poses";
      if (!poses.empty()) std::cout << ", mean latency " << 1000.0 * latency / static_cast<double>(poses.size()) << " ms";
      std::cout << '\n';
    } else if (tp_cmd->parsed()) {
      const auto model = load_model(model_path);
      const auto r = measure_throughput(model, window_from(past, future), seconds);
      std::cout << "fps " << r.fps << " frames " << r.frames << " seconds " << r.seconds
                << " latency_ms mean " << r.mean_latency_ms << " p50 " << r.p50_latency_ms << " p95 "
                << r.p95_latency_ms << " max " << r.max_latency_ms << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "imupose: " << to_string(e.kind()) << ": " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "imupose: error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
