// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "suitein/common/error.hpp"
#include "suitein/evaluator/evaluator.hpp"
#include "suitein/synthgen/synthgen.hpp"

using namespace suitein;
using evaluator::Trajectory;
using Eigen::Vector2d;

namespace {

Trajectory line(double t_end, double h, const std::function<Vector2d(double)>& f) {
  Trajectory tr;
  const auto n = static_cast<std::size_t>(std::llround(t_end / h));
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * h;
    tr.t.push_back(t);
    tr.p.push_back(f(t));
  }
  return tr;
}

// Phone stream at `rate` with Gaussian bumps in |a| at the given times.
dataio::ImuStream step_stream(const std::vector<double>& steps, double duration, double rate, double noise,
                              std::uint64_t seed, const std::function<double(double)>& yaw_rate) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise);
  dataio::ImuStream s;
  for (std::size_t k = 0; static_cast<double>(k) / rate <= duration; ++k) {
    const double t = static_cast<double>(k) / rate;
    double az = 0.0;
    for (double c : steps) az += 2.0 * std::exp(-0.5 * (t - c) * (t - c) / (0.05 * 0.05));
    dataio::ImuSample x;
    x.t = t;
    x.accel = Eigen::Vector3d(n(rng), n(rng), az + n(rng));
    x.gyro = Eigen::Vector3d(0.0, 0.0, yaw_rate(t));
    s.push_back(x);
  }
  return s;
}

double path_length(const Trajectory& tr) {
  double s = 0.0;
  for (std::size_t i = 1; i < tr.size(); ++i) s += (tr.p[i] - tr.p[i - 1]).norm();
  return s;
}

}  // namespace

// -------------------------------------------------------------- integration

TEST(IntegrateTrajectory, ConstantAndZeroVelocity) {
  std::vector<double> starts;
  for (int i = 0; i < 10; ++i) starts.push_back(i);
  const std::vector<Vector2d> v(10, Vector2d(1.0, 0.0));
  const auto tr = evaluator::integrate_trajectory(v, starts, 10.0, Vector2d::Zero());
  EXPECT_EQ(tr.p.back(), Vector2d(10.0, 0.0));
  EXPECT_EQ(tr.t.back(), 10.0);

  const std::vector<Vector2d> z(10, Vector2d::Zero());
  const Vector2d y0(3.0, -2.0);
  for (const auto& p : evaluator::integrate_trajectory(z, starts, 10.0, y0).p) EXPECT_EQ(p, y0);
}

TEST(IntegrateTrajectory, PiecewiseByHand) {
  // 2 s at (1, 0), 0.5 s at (0, 2), last window 1.5 s at (-1, 1)
  const std::vector<Vector2d> v{{1.0, 0.0}, {0.0, 2.0}, {-1.0, 1.0}};
  const std::vector<double> starts{0.0, 2.0, 2.5};
  const auto tr = evaluator::integrate_trajectory(v, starts, 4.0, Vector2d(1.0, 1.0));
  EXPECT_DOUBLE_EQ(tr.p.back().x(), 1.0 + 2.0 - 1.5);
  EXPECT_DOUBLE_EQ(tr.p.back().y(), 1.0 + 1.0 + 1.5);
  const std::vector<double> bad{0.0, 2.5, 2.0};
  EXPECT_THROW(evaluator::integrate_trajectory(v, bad, 4.0, Vector2d::Zero()), DataError);
}

TEST(IntegrateTrajectory, WindowLabelsTrackTruthWithinStrideError) {
  auto script = synthgen::preset(dataio::WalkingMode::STW, 31, 40.0);
  const auto g = synthgen::generate(script, 3);
  const auto seq = dataio::ingest_streams(g.manifest, g.devices, g.truth, {});
  std::vector<Vector2d> v;
  std::vector<double> starts;
  double vmax = 0.0;
  for (const auto& w : seq.windows) {
    v.emplace_back(w.v_label[0], w.v_label[1]);
    starts.push_back(w.t_start);
    vmax = std::max(vmax, v.back().norm());
  }
  const double end = seq.windows.back().t_start + seq.windows.back().duration;
  const Vector2d y0 = dataio::interpolate_position(seq.truth, starts.front()).head<2>();
  const auto tr = evaluator::integrate_trajectory(v, starts, end, y0);
  const Vector2d truth_end = dataio::interpolate_position(seq.truth, end).head<2>();
  const double stride_s = 10.0 / 25.0;
  EXPECT_LE((tr.p.back() - truth_end).norm(), vmax * stride_s);
}

// ----------------------------------------------------------------- metrics

TEST(Ate, ClosedFormCases) {
  const auto truth = line(10.0, 0.1, [](double t) { return Vector2d(t, 0.5 * t); });
  EXPECT_EQ(evaluator::ate(truth, truth), 0.0);

  const Vector2d d(0.3, -0.4);
  const auto shifted = line(10.0, 0.1, [&](double t) -> Vector2d { return Vector2d(t, 0.5 * t) + d; });
  EXPECT_NEAR(evaluator::ate(shifted, truth), 0.5, 1e-12);

  // (t, 0) against (t, 0.5 t) on t_k = k h, k = 0..n:
  // mean(0.25 t^2) = 0.25 h^2 n (2n + 1) / 6
  const auto flat = line(10.0, 0.1, [](double t) { return Vector2d(t, 0.0); });
  const double h = 0.1, n = 100.0;
  EXPECT_NEAR(evaluator::ate(flat, truth), std::sqrt(0.25 * h * h * n * (2 * n + 1) / 6.0), 1e-9);

  // common translation leaves ATE unchanged
  auto flat2 = flat, truth2 = truth;
  for (auto& p : flat2.p) p += Vector2d(100.0, -7.0);
  for (auto& p : truth2.p) p += Vector2d(100.0, -7.0);
  EXPECT_NEAR(evaluator::ate(flat2, truth2), evaluator::ate(flat, truth), 1e-9);

  Trajectory late;
  late.t = {20.0, 21.0};
  late.p = {Vector2d::Zero(), Vector2d::Zero()};
  EXPECT_THROW(evaluator::ate(late, truth), DataError);
}

TEST(Rte, ClosedFormCases) {
  const auto truth = line(100.0, 0.1, [](double t) { return Vector2d(std::sin(t), 0.2 * t); });
  EXPECT_EQ(evaluator::rte(truth, truth, 10.0).value, 0.0);

  const auto shifted = line(100.0, 0.1, [](double t) { return Vector2d(std::sin(t) + 4.0, 0.2 * t - 1.0); });
  EXPECT_NEAR(evaluator::rte(shifted, truth, 10.0).value, 0.0, 1e-12);

  // drift r along x: every interval of M = tau / h steps has RMS
  // r h sqrt(M (2M + 1) / 6)
  const double r = 0.05, h = 0.1, tau = 10.0, M = 100.0;
  const auto drift = line(100.0, 0.1, [&](double t) { return Vector2d(std::sin(t) + r * t, 0.2 * t); });
  const auto res = evaluator::rte(drift, truth, tau);
  EXPECT_NEAR(res.value, r * h * std::sqrt(M * (2 * M + 1) / 6.0), 1e-9);
  EXPECT_EQ(res.intervals, 901u);
  EXPECT_FALSE(res.truncated);

  const auto short_res = evaluator::rte(drift, truth, 500.0);
  EXPECT_TRUE(short_res.truncated);
  EXPECT_EQ(short_res.intervals, 1u);
}

TEST(ErrorCdf, StepsAndOracle) {
  const auto truth = line(3.0, 1.0, [](double) { return Vector2d::Zero(); });
  const auto same = evaluator::error_cdf(truth, truth);
  ASSERT_EQ(same.size(), 1u);
  EXPECT_EQ(same[0], std::make_pair(0.0, 1.0));

  const auto pred = line(3.0, 1.0, [](double t) { return Vector2d(t + 1.0, 0.0); });
  const auto cdf = evaluator::error_cdf(pred, truth);
  const std::vector<std::pair<double, double>> expect{{1, 0.25}, {2, 0.5}, {3, 0.75}, {4, 1.0}};
  EXPECT_EQ(cdf, expect);

  // random errors against sort-and-rank
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const auto noisy = line(50.0, 0.5, [&](double) { return Vector2d(u(rng), u(rng)); });
  const auto zero = line(50.0, 0.5, [](double) { return Vector2d::Zero(); });
  const auto got = evaluator::error_cdf(noisy, zero);
  std::vector<double> e;
  for (const auto& p : noisy.p) e.push_back(p.norm());
  std::sort(e.begin(), e.end());
  ASSERT_EQ(got.size(), e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    EXPECT_EQ(got[i].first, e[i]);
    EXPECT_NEAR(got[i].second, static_cast<double>(i + 1) / static_cast<double>(e.size()), 1e-15);
    if (i) EXPECT_GE(got[i].second, got[i - 1].second);
  }
  EXPECT_EQ(got.back().second, 1.0);
}

// --------------------------------------------------------------------- PDR

TEST(Pdr, FiftyStepsStraight) {
  std::vector<double> steps;
  for (int i = 0; i < 50; ++i) steps.push_back(2.0 + 0.55 * i);
  const auto s = step_stream(steps, 32.0, 100.0, 0.05, 1, [](double) { return 0.0; });
  const auto r = evaluator::pdr_baseline(s);
  EXPECT_EQ(r.step_times.size(), 50u);
  EXPECT_NEAR(path_length(r.trajectory), 33.5, 1e-9);
  EXPECT_NEAR(r.trajectory.p.back().y(), 0.0, 1e-12);
}

TEST(Pdr, StationaryNoiseHasNoSteps) {
  const auto s = step_stream({}, 30.0, 100.0, 0.05, 2, [](double) { return 0.0; });
  const auto r = evaluator::pdr_baseline(s);
  EXPECT_TRUE(r.step_times.empty());
  EXPECT_EQ(path_length(r.trajectory), 0.0);
}

TEST(Pdr, NinetyDegreeTurnGivesLShape) {
  // 10 steps east, a quarter turn over [8, 9] s between steps, 10 steps north
  std::vector<double> steps;
  for (int i = 0; i < 10; ++i) steps.push_back(2.0 + 0.55 * i);
  for (int i = 0; i < 10; ++i) steps.push_back(9.5 + 0.55 * i);
  const auto s = step_stream(steps, 16.0, 100.0, 0.0, 3,
                             [](double t) { return t >= 8.0 && t < 9.0 ? std::numbers::pi / 2 : 0.0; });
  const auto r = evaluator::pdr_baseline(s);
  ASSERT_EQ(r.step_times.size(), 20u);
  EXPECT_NEAR(r.trajectory.p.back().x(), 6.7, 0.01);
  EXPECT_NEAR(r.trajectory.p.back().y(), 6.7, 0.01);
}

TEST(Pdr, ShortOrIrregularStreamIsRejected) {
  const auto s = step_stream({}, 0.5, 100.0, 0.0, 4, [](double) { return 0.0; });
  EXPECT_THROW(evaluator::pdr_baseline(s), DataError);
  auto irregular = step_stream({}, 5.0, 100.0, 0.0, 4, [](double) { return 0.0; });
  irregular[10].t += 0.004;
  EXPECT_THROW(evaluator::pdr_baseline(irregular), DataError);
}

// ------------------------------------------------------------------ report

TEST(MetricsReport, CsvAndBreakdown) {
  const auto truth = line(10.0, 1.0, [](double t) { return Vector2d(t, 0.0); });
  const auto off = line(10.0, 1.0, [](double t) { return Vector2d(t, 2.0); });
  evaluator::MetricsReport rep;
  rep.rte_interval = 5.0;
  rep.add("a", "STW", "model", off, truth);
  rep.add("a", "STW", "zero", truth, truth);
  EXPECT_DOUBLE_EQ(rep.mean_ate("model"), 2.0);
  EXPECT_EQ(rep.mean_ate("zero"), 0.0);
  EXPECT_TRUE(std::isnan(rep.mean_ate("pdr")));
  const auto csv = rep.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sequence_id,mode,method,ate,rte,rte_truncated");
  EXPECT_NE(csv.find("a,STW,model,2,0,false"), std::string::npos);
  EXPECT_NE(rep.to_yaml().find("by_mode:"), std::string::npos);
  EXPECT_EQ(evaluator::cdf_csv({{1.0, 0.5}, {2.0, 1.0}}), "error_m,probability\n1,0.5\n2,1\n");
}
