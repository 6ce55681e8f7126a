#include "imupose/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "imupose/error.hpp"

namespace imupose {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::kInvalidArgument, std::string("train config: ") + what);
  };
  require(initial_lr > 0, "initial_lr must be positive");
  require(decay_rate > 0 && decay_rate <= 1, "decay_rate must be in (0, 1]");
  require(decay_steps > 0, "decay_steps must be positive");
  require(clip_norm > 0, "clip_norm must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(max_epochs >= 0, "max_epochs must be non-negative");
  require(early_stop_patience > 0, "early_stop_patience must be positive");
  require(adam_beta1 > 0 && adam_beta1 < 1 && adam_beta2 > 0 && adam_beta2 < 1,
          "adam betas must be in (0, 1)");
  require(adam_epsilon > 0, "adam epsilon must be positive");
  require(window_frames >= 2, "window_frames must be at least 2");
  require(threads >= 1, "threads must be at least 1");
}

double lr_schedule(std::int64_t step, const TrainConfig& cfg) {
  return cfg.initial_lr * std::pow(cfg.decay_rate, static_cast<double>(step) / cfg.decay_steps);
}

double global_norm(const Params& grads) {
  double sq = 0.0;
  for (const auto& t : grads.tensors()) {
    for (Eigen::Index i = 0; i < t.size(); ++i) sq += t.data[i] * t.data[i];
  }
  return std::sqrt(sq);
}

double clip_by_global_norm(Params& grads, double clip_norm) {
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) fail(ErrorKind::kTrainingDiverged, "non-finite gradient");
  if (norm > clip_norm) {
    for (auto& t : grads.tensors()) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = t.data[i] * clip_norm / norm;
    }
  }
  return norm;
}

void adam_step(Params& params, const Params& grads, AdamState& state, double lr,
               const TrainConfig& cfg) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    fail(ErrorKind::kInvalidArgument, "adam: parameter structure mismatch");
  }
  ++state.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (size_t k = 0; k < p.size(); ++k) {
    if (p[k].size() != g[k].size()) fail(ErrorKind::kInvalidArgument, "adam: shape mismatch");
    for (Eigen::Index i = 0; i < p[k].size(); ++i) {
      const double gi = g[k].data[i];
      m[k].data[i] = b1 * m[k].data[i] + (1.0 - b1) * gi;
      v[k].data[i] = b2 * v[k].data[i] + (1.0 - b2) * gi * gi;
      const double m_hat = m[k].data[i] / c1;
      const double v_hat = v[k].data[i] / c2;
      p[k].data[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
    }
  }
}

TrainingSample standardize_sample(const SequenceFeatures& f, const Standardizer& s) {
  return {standardize_columns(f.inputs, s.input), standardize_columns(f.pose_targets, s.target),
          standardize_columns(f.acc_targets, s.acc)};
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,train_nll,val_nll,lr,seconds\n";
  out << std::setprecision(10);
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << e.train_nll << ',' << e.val_nll << ',' << e.lr << ',' << e.seconds
        << '\n';
  }
}

std::vector<std::pair<int, Eigen::Index>> make_windows(const std::vector<TrainingSample>& samples,
                                                       int window_frames) {
  std::vector<std::pair<int, Eigen::Index>> windows;
  const Eigen::Index len = window_frames;
  const Eigen::Index stride = std::max<Eigen::Index>(1, len / 2);
  for (size_t i = 0; i < samples.size(); ++i) {
    const Eigen::Index t_count = samples[i].inputs.cols();
    if (t_count <= len) {
      windows.emplace_back(static_cast<int>(i), 0);
      continue;
    }
    Eigen::Index start = 0;
    for (; start + len <= t_count; start += stride) windows.emplace_back(static_cast<int>(i), start);
    if (start - stride + len < t_count) windows.emplace_back(static_cast<int>(i), t_count - len);
  }
  return windows;
}

double evaluate_nll(const Model& model, const std::vector<TrainingSample>& samples) {
  double total = 0.0;
  double frames = 0.0;
  for (const auto& s : samples) {
    const auto cache = forward(model.params, model.config, s.inputs);
    const auto t_count = static_cast<double>(s.inputs.cols());
    total += nll_loss(cache.output, s.pose_targets, s.acc_targets, model.config) * t_count;
    frames += t_count;
  }
  if (frames == 0) fail(ErrorKind::kInvalidArgument, "no frames to evaluate");
  return total / frames;
}

namespace {

struct WindowJob {
  MatrixXd inputs;
  MatrixXd mask;
  MatrixXd pose_targets;
  MatrixXd acc_targets;
  double weight = 0.0;
  double loss = 0.0;
  Params grad;
};

void run_job(const Model& model, WindowJob& job) {
  const auto cache = forward(model.params, model.config, job.inputs, &job.mask);
  job.loss = nll_loss(cache.output, job.pose_targets, job.acc_targets, model.config);
  job.grad = backward(model.params, model.config, cache, job.pose_targets, job.acc_targets, job.weight);
}

void run_jobs(const Model& model, std::vector<WindowJob>& jobs, int threads) {
  if (threads <= 1 || jobs.size() <= 1) {
    for (auto& job : jobs) run_job(model, job);
    return;
  }
  // Each worker owns a strided subset; results are reduced in job order by
  // the caller, so the sum does not depend on scheduling.
  std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
  {
    std::vector<std::jthread> workers;
    for (int w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (size_t k = static_cast<size_t>(w); k < jobs.size(); k += static_cast<size_t>(threads)) {
            run_job(model, jobs[k]);
          }
        } catch (...) {
          errors[static_cast<size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TrainReport fit(Model& model, const std::vector<TrainingSample>& train,
                const std::vector<TrainingSample>& validation, const TrainConfig& cfg,
                const EpochCallback& on_epoch) {
  cfg.validate();
  model.config.validate();
  if (train.empty() || validation.empty()) {
    fail(ErrorKind::kInvalidArgument, "training needs nonempty train and validation splits");
  }
  const auto wall_start = std::chrono::steady_clock::now();
  TrainReport report;
  if (cfg.max_epochs == 0) return report;

  const auto windows = make_windows(train, cfg.window_frames);
  std::mt19937_64 rng(cfg.seed);
  AdamState adam = AdamState::zeros_like(model.config);
  Params best = model.params;
  report.best_val_nll = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<size_t> order(windows.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(rng() % i)]);
    }

    double epoch_loss = 0.0;
    double epoch_frames = 0.0;
    for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), b + static_cast<size_t>(cfg.batch_size));
      std::vector<WindowJob> jobs(end - b);
      double batch_frames = 0.0;
      for (size_t k = b; k < end; ++k) {
        const auto [seq, start] = windows[order[k]];
        const auto& s = train[static_cast<size_t>(seq)];
        const Eigen::Index len = std::min<Eigen::Index>(cfg.window_frames, s.inputs.cols());
        auto& job = jobs[k - b];
        job.inputs = s.inputs.middleCols(start, len);
        job.pose_targets = s.pose_targets.middleCols(start, len);
        job.acc_targets = s.acc_targets.middleCols(start, len);
        job.mask = apply_input_dropout(job.inputs, model.config.input_keep_prob, rng).mask;
        job.weight = static_cast<double>(len);
        batch_frames += static_cast<double>(len);
      }
      for (auto& job : jobs) job.weight /= batch_frames;
      run_jobs(model, jobs, cfg.threads);

      Params grad = std::move(jobs.front().grad);
      double batch_loss = jobs.front().loss * jobs.front().weight;
      for (size_t k = 1; k < jobs.size(); ++k) {
        grad += jobs[k].grad;
        batch_loss += jobs[k].loss * jobs[k].weight;
      }
      try {
        if (!std::isfinite(batch_loss)) fail(ErrorKind::kTrainingDiverged, "non-finite training loss");
        clip_by_global_norm(grad, cfg.clip_norm);
      } catch (const Error& e) {
        report.diverged = true;
        report.diverged_reason = e.what();
        break;
      }
      adam_step(model.params, grad, adam, lr_schedule(adam.step, cfg), cfg);
      epoch_loss += batch_loss * batch_frames;
      epoch_frames += batch_frames;
    }
    if (report.diverged) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_nll = epoch_loss / epoch_frames;
    rec.val_nll = evaluate_nll(model, validation);
    rec.lr = lr_schedule(adam.step, cfg);
    rec.seconds = seconds_since(epoch_start);
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!std::isfinite(rec.val_nll)) {
      report.diverged = true;
      report.diverged_reason = "non-finite validation loss";
      break;
    }
    if (rec.val_nll < report.best_val_nll) {
      report.best_val_nll = rec.val_nll;
      report.best_epoch = epoch;
      best = model.params;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  model.params = std::move(best);
  report.wall_seconds = seconds_since(wall_start);
  return report;
}

std::vector<SequenceFeatures> features_for(const Dataset& dataset, const std::vector<int>& indices,
                                           const InputLayout& layout) {
  std::vector<SequenceFeatures> out;
  out.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(dataset.sequences.size())) {
      fail(ErrorKind::kInvalidArgument, "split references a missing sequence");
    }
    const auto& rec = dataset.sequences[static_cast<size_t>(i)];
    out.push_back(build_features(rec.imu, &rec.poses, layout));
  }
  return out;
}

namespace {

std::vector<TrainingSample> standardize_all(const std::vector<SequenceFeatures>& features,
                                            const Standardizer& s) {
  std::vector<TrainingSample> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(standardize_sample(f, s));
  return out;
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& dataset,
                  const EpochCallback& on_epoch) {
  model_cfg.validate();
  if (dataset.split.train.empty() || dataset.split.validation.empty()) {
    fail(ErrorKind::kInvalidArgument, "training needs nonempty train and validation splits");
  }
  const auto layout = model_cfg.layout();
  const auto train_features = features_for(dataset, dataset.split.train, layout);
  const auto val_features = features_for(dataset, dataset.split.validation, layout);

  TrainResult result;
  result.model.config = model_cfg;
  result.model.standardizer = fit_standardizer(train_features);
  result.model.params = Params::initialize(model_cfg, cfg.seed);
  result.report = fit(result.model, standardize_all(train_features, result.model.standardizer),
                      standardize_all(val_features, result.model.standardizer), cfg, on_epoch);
  return result;
}

TrainResult finetune(const Model& pretrained, const Dataset& dataset, const TrainConfig& cfg,
                     const EpochCallback& on_epoch) {
  pretrained.config.validate();
  if (dataset.split.train.empty() || dataset.split.validation.empty()) {
    fail(ErrorKind::kInvalidArgument, "fine-tuning needs nonempty train and validation splits");
  }
  const auto layout = pretrained.config.layout();
  const auto train_features = features_for(dataset, dataset.split.train, layout);
  const auto val_features = features_for(dataset, dataset.split.validation, layout);
  for (const auto& f : train_features) {
    if (f.inputs.rows() != pretrained.standardizer.input.dim() ||
        f.pose_targets.rows() != pretrained.standardizer.target.dim()) {
      fail(ErrorKind::kInvalidArgument, "dataset dimensions do not match the checkpoint");
    }
  }
  TrainResult result;
  result.model = pretrained;
  result.report = fit(result.model, standardize_all(train_features, pretrained.standardizer),
                      standardize_all(val_features, pretrained.standardizer), cfg, on_epoch);
  return result;
}

// ---------------------------------------------------------------------------
// Configuration

ConfigMap parse_config(std::istream& in) {
  ConfigMap values;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kInvalidArgument, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return values;
}

ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config file " + path);
  return parse_config(in);
}

namespace {

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    fail(ErrorKind::kInvalidArgument, "config " + key + ": expected true/false");
  } else {
    in >> value;
    if (!in || !(in >> std::ws).eof()) {
      fail(ErrorKind::kInvalidArgument, "config " + key + ": cannot parse '" + text + "'");
    }
  }
  return value;
}

}  // namespace

void apply_config(const ConfigMap& values, ModelConfig& model, TrainConfig& train, DataConfig& data) {
  for (const auto& [key, text] : values) {
    if (key == "hidden_units") model.hidden_units = parse_value<int>(key, text);
    else if (key == "dense_units") model.dense_units = parse_value<int>(key, text);
    else if (key == "num_layers") model.num_layers = parse_value<int>(key, text);
    else if (key == "bidirectional") model.bidirectional = parse_value<bool>(key, text);
    else if (key == "input_keep_prob") model.input_keep_prob = parse_value<double>(key, text);
    else if (key == "use_acc_loss") model.use_acc_loss = parse_value<bool>(key, text);
    else if (key == "use_acc_inputs") model.use_acc_inputs = parse_value<bool>(key, text);
    else if (key == "scheme") model.scheme = parse_scheme(text);
    else if (key == "initial_lr") train.initial_lr = parse_value<double>(key, text);
    else if (key == "decay_rate") train.decay_rate = parse_value<double>(key, text);
    else if (key == "decay_steps") train.decay_steps = parse_value<double>(key, text);
    else if (key == "clip_norm") train.clip_norm = parse_value<double>(key, text);
    else if (key == "batch_size") train.batch_size = parse_value<int>(key, text);
    else if (key == "max_epochs") train.max_epochs = parse_value<int>(key, text);
    else if (key == "early_stop_patience") train.early_stop_patience = parse_value<int>(key, text);
    else if (key == "seed") train.seed = parse_value<std::uint64_t>(key, text);
    else if (key == "adam_beta1") train.adam_beta1 = parse_value<double>(key, text);
    else if (key == "adam_beta2") train.adam_beta2 = parse_value<double>(key, text);
    else if (key == "adam_epsilon") train.adam_epsilon = parse_value<double>(key, text);
    else if (key == "window_frames") train.window_frames = parse_value<int>(key, text);
    else if (key == "threads") train.threads = parse_value<int>(key, text);
    else if (key == "train_ratio") data.train_ratio = parse_value<double>(key, text);
    else if (key == "validation_ratio") data.validation_ratio = parse_value<double>(key, text);
    else if (key == "test_ratio") data.test_ratio = parse_value<double>(key, text);
    else if (key == "split_seed") data.split_seed = parse_value<std::uint64_t>(key, text);
    else fail(ErrorKind::kInvalidArgument, "unknown config key '" + key + "'");
  }
  if (values.contains("hidden_units") && !values.contains("dense_units")) {
    model.dense_units = model.hidden_units;
  }
  model.input_dim = model.layout().dim();
}

}  // namespace imupose
