#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "massl/errors.hpp"
#include "massl/optim.hpp"
#include "massl/rng.hpp"
#include "oracles.hpp"

using namespace massl;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoError;
}

ArchConfig tiny_arch() {
  ArchConfig a;
  a.input_dim = 3;
  a.backbone_widths = {4};
  a.head_hidden = 4;
  a.output_dim = 2;
  return a;
}

ParamGrads filled(const ModelParams& p, double value) {
  ParamGrads g = zeros_like(p);
  for (auto& l : g.layers) {
    l.weight.setConstant(value);
    l.bias.setConstant(value);
  }
  return g;
}

}  // namespace

TEST_CASE("adamw with zero gradients") {
  auto p = init_params(tiny_arch(), 1);
  auto state = make_adamw_state(p);
  const Vec before = p.flatten();
  adamw_step(p, zeros_like(p), state, 1e-3, 0.0);
  CHECK(p.flatten() == before);
  CHECK(state.first_moment[0].weight.isZero(0.0));
  CHECK(state.step == 1);
  state.first_moment[0].weight.setConstant(0.5);
  state.second_moment[0].weight.setConstant(0.5);
  adamw_step(p, zeros_like(p), state, 1e-3, 0.0);
  CHECK(state.first_moment[0].weight(0, 0) == doctest::Approx(0.45));
  CHECK(state.second_moment[0].weight(0, 0) == doctest::Approx(0.4995));

  auto q = init_params(tiny_arch(), 1);
  for (auto& l : q.layers) l.bias.setConstant(0.3);
  auto qs = make_adamw_state(q);
  const auto w0 = q.layers[1].weight;
  adamw_step(q, zeros_like(q), qs, 0.1, 0.4);
  CHECK((q.layers[1].weight - w0 * (1.0 - 0.1 * 0.4)).cwiseAbs().maxCoeff() <= 1e-15);
  // biases are not decayed
  CHECK((q.layers[1].bias.array() == 0.3).all());
}

TEST_CASE("scalar trajectories match a hand-stepped oracle") {
  Rng rng(4);
  for (double wd : {0.0, 0.05}) {
    std::vector<double> param{0.7}, m{0.0}, v{0.0};
    oracle::ScalarAdamW ref{0.7};
    double worst = 0.0;
    for (std::uint64_t t = 1; t <= 100; ++t) {
      const double g = standard_normal(rng);
      const double lr = 1e-2 * (1.0 + 0.5 * std::sin(static_cast<double>(t)));
      std::vector<double> grad{g};
      adamw_update(param, grad, m, v, t, lr, wd, AdamWHyper{});
      ref.step(g, lr, wd);
      worst = std::max(worst, std::abs(param[0] - ref.p));
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("adamw_step equals the flat kernel per tensor") {
  auto p = init_params(tiny_arch(), 2);
  auto state = make_adamw_state(p);
  auto g = filled(p, 0.1);
  g.layers[0].weight(1, 2) = -0.4;
  auto flat_p = p.layers[0].weight;
  Mat m = Mat::Zero(flat_p.rows(), flat_p.cols()), v = m;
  for (int step = 1; step <= 3; ++step) {
    adamw_step(p, g, state, 1e-2, 0.1);
    adamw_update({flat_p.data(), static_cast<std::size_t>(flat_p.size())},
                 {g.layers[0].weight.data(), static_cast<std::size_t>(flat_p.size())},
                 {m.data(), static_cast<std::size_t>(m.size())}, {v.data(), static_cast<std::size_t>(v.size())},
                 static_cast<std::uint64_t>(step), 1e-2, 0.1, AdamWHyper{});
  }
  CHECK(p.layers[0].weight == flat_p);
}

TEST_CASE("adamw errors and teacher isolation") {
  auto student = init_params(tiny_arch(), 3);
  auto teacher = student;
  auto state = make_adamw_state(student);
  const Vec t0 = teacher.flatten();
  adamw_step(student, filled(student, 0.2), state, 1e-2, 0.04);
  CHECK(teacher.flatten() == t0);
  CHECK(student.flatten() != t0);

  auto bad = filled(student, 0.0);
  bad.layers[2].bias[0] = std::numeric_limits<double>::quiet_NaN();
  const Vec before = student.flatten();
  CHECK(kind_of([&] { adamw_step(student, bad, state, 1e-2, 0.0); }) == ErrorKind::NonFiniteGrad);
  CHECK(student.flatten() == before);

  ArchConfig other = tiny_arch();
  other.head_hidden = 5;
  auto wrong = zeros_like(init_params(other, 0));
  CHECK(kind_of([&] { adamw_step(student, wrong, state, 1e-2, 0.0); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  ScheduleSpec lr{ScheduleKind::CosineDecay, 1e-3, 1e-6, 1};
  CHECK(eval_schedule(lr, 0, 7800) == 1e-3);
  CHECK(eval_schedule(lr, 7800, 7800) == 1e-6);
  CHECK(eval_schedule(lr, 3900, 7800) == doctest::Approx((1e-3 + 1e-6) / 2).epsilon(1e-14));
  ScheduleSpec wd{ScheduleKind::CosineDecay, 0.04, 0.4, 1};
  CHECK(eval_schedule(wd, 0, 100) == 0.04);
  CHECK(eval_schedule(wd, 100, 100) == 0.4);
  const double t = 37;
  CHECK(eval_schedule(wd, t, 100) ==
        doctest::Approx(0.4 + (0.04 - 0.4) * (1 + std::cos(std::numbers::pi * t / 100)) / 2).epsilon(1e-15));
  CHECK(kind_of([&] { eval_schedule(lr, 7801, 7800); }) == ErrorKind::OutOfRangeStep);
  CHECK(kind_of([&] { eval_schedule(lr, -1, 7800); }) == ErrorKind::OutOfRangeStep);
}

TEST_CASE("schedules are monotone between their endpoints") {
  for (auto spec : {ScheduleSpec{ScheduleKind::CosineDecay, 1e-3, 1e-6, 1},
                    ScheduleSpec{ScheduleKind::CosineDecay, 0.04, 0.4, 1},
                    ScheduleSpec{ScheduleKind::CosineDecay, 0.996, 1.0, 1},
                    ScheduleSpec{ScheduleKind::LinearWarmup, 0.04, 0.07, 30}}) {
    const double T = 200;
    const double dir = spec.end > spec.start ? 1.0 : -1.0;
    double prev = eval_schedule(spec, 0, T);
    CHECK(prev == spec.start);
    for (int t = 1; t <= 200; ++t) {
      const double cur = eval_schedule(spec, t, T);
      CHECK(dir * (cur - prev) >= 0.0);
      prev = cur;
    }
    CHECK(prev == spec.end);
  }
  ScheduleSpec c{ScheduleKind::Constant, 0.5, 0.9, 1};
  CHECK(eval_schedule(c, 3, 10) == 0.5);
}

TEST_CASE("teacher temperature warmup") {
  CHECK(teacher_temperature(0, 30, 0.04, 0.07) == 0.04);
  CHECK(teacher_temperature(15, 30, 0.04, 0.07) == doctest::Approx(0.055).epsilon(1e-14));
  for (int e = 30; e < 300; e += 7) CHECK(teacher_temperature(e, 30, 0.04, 0.07) == 0.07);
}

TEST_CASE("schedule kind names") {
  for (auto k : {ScheduleKind::CosineDecay, ScheduleKind::LinearWarmup, ScheduleKind::Constant}) {
    CHECK(parse_schedule_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_schedule_kind("step"), Error);
}
