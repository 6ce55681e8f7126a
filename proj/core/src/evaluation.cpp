#include "imupose/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>

#include "imupose/error.hpp"

namespace imupose {

double joint_angle_error(const Rotation& predicted, const Rotation& truth) {
  return geodesic_angle(predicted, truth) * 180.0 / std::numbers::pi;
}

std::vector<double> positional_error(const Pose& predicted, const Pose& truth,
                                     const KinematicTree& tree) {
  const auto a = forward_kinematics(tree, predicted, Rotation(), Vec3::Zero());
  const auto b = forward_kinematics(tree, truth, Rotation(), Vec3::Zero());
  std::vector<double> out(a.size());
  for (size_t j = 0; j < a.size(); ++j) out[j] = 100.0 * (a[j].position - b[j].position).norm();
  return out;
}

EvalMode EvalMode::parse(std::string_view text) {
  if (text == "offline") return {};
  constexpr std::string_view prefix = "online:";
  if (text.substr(0, prefix.size()) == prefix) {
    const auto rest = text.substr(prefix.size());
    const auto comma = rest.find(',');
    EvalMode mode;
    mode.online = true;
    if (comma != std::string_view::npos) {
      const auto p = rest.substr(0, comma);
      const auto f = rest.substr(comma + 1);
      const auto rp = std::from_chars(p.data(), p.data() + p.size(), mode.window.past);
      const auto rf = std::from_chars(f.data(), f.data() + f.size(), mode.window.future);
      if (rp.ec == std::errc() && rp.ptr == p.data() + p.size() && rf.ec == std::errc() &&
          rf.ptr == f.data() + f.size() && mode.window.past >= 0 && mode.window.future >= 0) {
        return mode;
      }
    }
  }
  fail(ErrorKind::kInvalidArgument, "mode must be 'offline' or 'online:P,F', got '" + std::string(text) + "'");
}

std::string EvalMode::describe() const {
  if (!online) return "offline";
  return "online(" + std::to_string(window.past) + "," + std::to_string(window.future) + ")";
}

std::int64_t Histogram::total() const {
  std::int64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

EvalReport evaluate_poses(const std::vector<std::vector<Pose>>& predictions,
                          const std::vector<std::vector<Pose>>& truths, const KinematicTree& tree,
                          std::string mode, double bin_width) {
  if (predictions.size() != truths.size()) {
    fail(ErrorKind::kInvalidArgument, "prediction and truth sequence counts differ");
  }
  if (!(bin_width > 0.0)) fail(ErrorKind::kInvalidArgument, "histogram bin width must be positive");
  EvalReport report;
  report.mode = std::move(mode);
  report.histogram.bin_width = bin_width;
  const auto regular_bins = static_cast<size_t>(std::ceil(report.histogram.range_max / bin_width));
  report.histogram.counts.assign(regular_bins + 1, 0);

  double sum_a = 0, sq_a = 0, sum_p = 0, sq_p = 0;
  std::vector<double> frame_means;
  for (size_t s = 0; s < predictions.size(); ++s) {
    if (predictions[s].size() > truths[s].size()) {
      fail(ErrorKind::kInvalidArgument, "more predictions than ground-truth frames");
    }
    for (size_t t = 0; t < predictions[s].size(); ++t) {
      const Pose& p = predictions[s][t];
      const Pose& g = truths[s][t];
      FrameErrors fe;
      fe.sequence = static_cast<int>(s);
      fe.frame = static_cast<int>(t);
      fe.position_cm = positional_error(p, g, tree);
      double frame_sum = 0.0;
      for (size_t j = 0; j < p.joint_rotations.size(); ++j) {
        const double a = joint_angle_error(p.joint_rotations[j], g.joint_rotations[j]);
        fe.angle_deg.push_back(a);
        sum_a += a;
        sq_a += a * a;
        sum_p += fe.position_cm[j];
        sq_p += fe.position_cm[j] * fe.position_cm[j];
        frame_sum += a;
        const auto bin = std::min(regular_bins, static_cast<size_t>(a / bin_width));
        ++report.histogram.counts[bin];
        ++report.joint_count;
      }
      frame_means.push_back(frame_sum / static_cast<double>(p.joint_rotations.size()));
      report.frames.push_back(std::move(fe));
    }
  }
  report.frame_count = static_cast<std::int64_t>(report.frames.size());
  if (report.joint_count == 0) fail(ErrorKind::kInvalidArgument, "nothing to evaluate");

  const auto n = static_cast<double>(report.joint_count);
  report.mean_angle = sum_a / n;
  report.std_angle = std::sqrt(std::max(0.0, sq_a / n - report.mean_angle * report.mean_angle));
  report.mean_position = sum_p / n;
  report.std_position = std::sqrt(std::max(0.0, sq_p / n - report.mean_position * report.mean_position));

  std::sort(frame_means.begin(), frame_means.end(), std::greater<>());
  const auto worst = std::max<size_t>(1, static_cast<size_t>(std::ceil(0.05 * static_cast<double>(frame_means.size()))));
  double worst_sum = 0.0;
  for (size_t i = 0; i < worst; ++i) worst_sum += frame_means[i];
  report.worst5_mean_angle = worst_sum / static_cast<double>(worst);
  return report;
}

EvalReport evaluate(const Model& model, const Dataset& dataset, const std::vector<int>& split,
                    const EvalMode& mode, const KinematicTree& tree, double bin_width) {
  if (split.empty()) fail(ErrorKind::kInvalidArgument, "evaluation split is empty");
  std::vector<std::vector<Pose>> predictions;
  std::vector<std::vector<Pose>> truths;
  for (int idx : split) {
    if (idx < 0 || idx >= static_cast<int>(dataset.sequences.size())) {
      fail(ErrorKind::kInvalidArgument, "split references a missing sequence");
    }
    const auto& rec = dataset.sequences[static_cast<size_t>(idx)];
    const MatrixXd x = prepare_inputs(model, rec.imu);
    if (mode.online) {
      auto& row = predictions.emplace_back();
      for (auto& e : predict_online(model, x, mode.window)) row.push_back(std::move(e.pose));
    } else {
      predictions.push_back(predict_offline(model, x));
    }
    auto& truth = truths.emplace_back();
    for (const auto& f : rec.poses.frames) truth.push_back(f.pose);
  }
  return evaluate_poses(predictions, truths, tree, mode.describe(), bin_width);
}

std::vector<SweepCell> window_sweep(const Model& model, const Dataset& dataset,
                                    const std::vector<int>& split, const std::vector<int>& pasts,
                                    const std::vector<int>& futures, const KinematicTree& tree) {
  if (pasts.empty() || futures.empty()) {
    fail(ErrorKind::kInvalidArgument, "sweep needs at least one past and one future value");
  }
  std::vector<SweepCell> cells;
  for (int p : pasts) {
    for (int f : futures) {
      EvalMode mode;
      mode.online = true;
      mode.window = {p, f};
      cells.push_back({p, f, evaluate(model, dataset, split, mode, tree).mean_angle});
    }
  }
  return cells;
}

void write_summary_csv(std::ostream& out, const EvalReport& r) {
  out << "mode,frames,mean_ang_deg,std_ang_deg,mean_pos_cm,std_pos_cm,worst5_mean_ang_deg\n";
  out << std::setprecision(10) << r.mode << ',' << r.frame_count << ',' << r.mean_angle << ','
      << r.std_angle << ',' << r.mean_position << ',' << r.std_position << ','
      << r.worst5_mean_angle << '\n';
}

void write_frames_csv(std::ostream& out, const EvalReport& r) {
  out << "sequence,frame,joint,ang_deg,pos_cm\n";
  out << std::setprecision(10);
  for (const auto& f : r.frames) {
    for (size_t j = 0; j < f.angle_deg.size(); ++j) {
      out << f.sequence << ',' << f.frame << ',' << j << ',' << f.angle_deg[j] << ','
          << f.position_cm[j] << '\n';
    }
  }
}

void write_histogram_csv(std::ostream& out, const EvalReport& r) {
  out << "bin_lo_deg,bin_hi_deg,count\n";
  const auto& h = r.histogram;
  for (size_t b = 0; b < h.counts.size(); ++b) {
    const double lo = static_cast<double>(b) * h.bin_width;
    out << lo << ',';
    if (b + 1 == h.counts.size()) {
      out << "inf";
    } else {
      out << std::min(lo + h.bin_width, h.range_max);
    }
    out << ',' << h.counts[b] << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  std::vector<int> futures;
  std::map<int, std::map<int, double>> grid;
  for (const auto& c : cells) {
    if (std::find(futures.begin(), futures.end(), c.future) == futures.end()) futures.push_back(c.future);
    grid[c.past][c.future] = c.mean_angle;
  }
  out << "past";
  for (int f : futures) out << ",future_" << f;
  out << '\n' << std::setprecision(10);
  for (const auto& [p, row] : grid) {
    out << p;
    for (int f : futures) out << ',' << row.at(f);
    out << '\n';
  }
}

}  // namespace imupose
