#include <benchmark/benchmark.h>

#include <random>

#include "imupose/inference.hpp"
#include "imupose/kinematics.hpp"
#include "imupose/network.hpp"

using namespace imupose;

namespace {

Model bench_model(int hidden) {
  Model m;
  m.config = ModelConfig::toy(hidden);
  m.params = Params::initialize(m.config, 1);
  m.standardizer.input = {VectorXd::Zero(m.config.input_dim), VectorXd::Ones(m.config.input_dim)};
  m.standardizer.target = {VectorXd::Zero(kPoseDim), VectorXd::Ones(kPoseDim)};
  m.standardizer.acc = {VectorXd::Zero(kAccDim), VectorXd::Ones(kAccDim)};
  return m;
}

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.4);
  Pose p;
  for (int j = 0; j < kJointCount; ++j) {
    p.joint_rotations.push_back(Rotation::about_x(n(rng)) * Rotation::about_y(n(rng)) * Rotation::about_z(n(rng)));
  }
  return p;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
  const Model m = bench_model(static_cast<int>(state.range(0)));
  const Eigen::Index t = state.range(1);
  const MatrixXd x = MatrixXd::Random(m.config.input_dim, t);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m.params, m.config, x));
  state.SetItemsProcessed(state.iterations() * t);
}
BENCHMARK(BM_Forward)->Args({32, 26})->Args({32, 300})->Args({128, 300});

static void BM_ForwardBackward(benchmark::State& state) {
  const Model m = bench_model(static_cast<int>(state.range(0)));
  const MatrixXd x = MatrixXd::Random(m.config.input_dim, 300);
  const MatrixXd pose = MatrixXd::Random(kPoseDim, 300);
  const MatrixXd acc = MatrixXd::Random(kAccDim, 300);
  for (auto _ : state) {
    const auto cache = forward(m.params, m.config, x);
    benchmark::DoNotOptimize(backward(m.params, m.config, cache, pose, acc));
  }
  state.SetItemsProcessed(state.iterations() * 300);
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(128);

static void BM_OnlineStep(benchmark::State& state) {
  const Model m = bench_model(32);
  OnlinePredictor p(m, {static_cast<int>(state.range(0)), static_cast<int>(state.range(1))});
  const VectorXd frame = VectorXd::Random(m.config.input_dim);
  for (auto _ : state) benchmark::DoNotOptimize(p.push(frame));
}
BENCHMARK(BM_OnlineStep)->Args({20, 5})->Args({50, 5})->Args({20, 0});

static void BM_OutputsToPose(benchmark::State& state) {
  const Model m = bench_model(8);
  const VectorXd mu = VectorXd::Random(kPoseDim);
  for (auto _ : state) benchmark::DoNotOptimize(outputs_to_pose(mu, m.standardizer));
}
BENCHMARK(BM_OutputsToPose);

static void BM_ForwardKinematics(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Pose p = random_pose(rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward_kinematics(default_tree(), p, Rotation(), Vec3::Zero()));
}
BENCHMARK(BM_ForwardKinematics);
BENCHMARK_MAIN();
