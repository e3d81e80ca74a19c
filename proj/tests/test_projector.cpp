#include <doctest.h>

#include <cmath>

#include "eegcap/projector.hpp"
#include "helpers.hpp"

using namespace eegcap;

TEST_SUITE("projector") {

TEST_CASE("identity weights pass the input through") {
  Projector p(3, 3, 0);
  auto w = p.params().find("proj.w");
  w->v.assign(9, 0.0);
  w->v[0] = w->v[4] = w->v[8] = 1.0;
  p.params().find("proj.b")->v.assign(3, 0.0);
  const std::vector<double> h = {0.25, -1.5, 3.0};
  CHECK(p.project(h) == h);
}

TEST_CASE("zero weights return the bias for any input") {
  Projector p(4, 2, 0);
  p.params().find("proj.w")->v.assign(8, 0.0);
  p.params().find("proj.b")->v = {5.0, -2.0};
  CHECK(p.project({1, 2, 3, 4}) == std::vector<double>{5.0, -2.0});
  CHECK(p.project({0, 0, 0, 0}) == std::vector<double>{5.0, -2.0});
}

TEST_CASE("random 3x2 projection matches hand matrix-vector arithmetic") {
  Projector p(2, 3, 9);
  const auto& w = p.params().find("proj.w")->v;  // row-major [3,2]
  auto& b = p.params().find("proj.b")->v;
  b = {0.1, -0.2, 0.3};
  const std::vector<double> h = {1.5, -0.5};
  auto out = p.project(h);
  for (int r = 0; r < 3; ++r) {
    const double expect = w[static_cast<size_t>(r) * 2] * h[0] +
                          w[static_cast<size_t>(r) * 2 + 1] * h[1] + b[static_cast<size_t>(r)];
    CHECK(std::fabs(out[static_cast<size_t>(r)] - expect) < 1e-12);
  }
}

TEST_CASE("init is deterministic, bias starts at zero") {
  Projector a(16, 8, 123);
  Projector b(16, 8, 123);
  CHECK(a.params().find("proj.w")->v == b.params().find("proj.w")->v);
  for (double v : a.params().find("proj.b")->v) CHECK(v == 0.0);
  Projector c(16, 8, 124);
  CHECK(a.params().find("proj.w")->v != c.params().find("proj.w")->v);
}

TEST_CASE("init weight spread is within 10% of sqrt(2/(D+E)) at 512x512") {
  Projector p(512, 512, 3);
  const auto& w = p.params().find("proj.w")->v;
  double ss = 0.0;
  for (double v : w) ss += v * v;
  const double std = std::sqrt(ss / w.size());
  const double target = std::sqrt(2.0 / 1024.0);
  CHECK(std > 0.9 * target);
  CHECK(std < 1.1 * target);
}

TEST_CASE("projection is affine-linear to 1e-9") {
  Projector p(6, 4, 5);
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto h1 = rng.normal_vec(6);
    auto h2 = rng.normal_vec(6);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    std::vector<double> mix(6);
    for (int i = 0; i < 6; ++i) mix[static_cast<size_t>(i)] =
        a * h1[static_cast<size_t>(i)] + b * h2[static_cast<size_t>(i)];
    auto lhs = p.project(mix);
    auto p1 = p.project(h1);
    auto p2 = p.project(h2);
    const auto& bias = p.params().find("proj.b")->v;
    for (int i = 0; i < 4; ++i) {
      const double rhs = a * p1[static_cast<size_t>(i)] + b * p2[static_cast<size_t>(i)] +
                         (1.0 - a - b) * bias[static_cast<size_t>(i)];
      CHECK(std::fabs(lhs[static_cast<size_t>(i)] - rhs) < 1e-9);
    }
  }
}

TEST_CASE("graph projection agrees with the plain-vector path") {
  Projector p(5, 3, 8);
  Rng rng(9);
  auto h = rng.normal_vec(5);
  auto node = p.project_node(h);
  auto plain = p.project(h);
  for (int i = 0; i < 3; ++i) CHECK(node->v[static_cast<size_t>(i)] == plain[static_cast<size_t>(i)]);
}

TEST_CASE("dimension mismatches raise ShapeMismatch") {
  Projector p(4, 2, 0);
  CHECK_THROWS_AS(p.project({1.0, 2.0}), Error);
  CHECK_THROWS_AS(Projector(0, 2, 0), Error);
}

TEST_CASE("projector checkpoints carry the stage tag") {
  testutil::TempDir tmp("proj_ckpt");
  Projector p(8, 6, 11);
  p.to_checkpoint(2, 11).save(tmp.path / "p2.ckpt");
  auto ck = Checkpoint::load(tmp.path / "p2.ckpt");
  CHECK(ck.header.at("stage").get<int>() == 2);
  CHECK(ck.header.at("kind").get<std::string>() == "projector");
  auto back = Projector::from_checkpoint(ck);
  CHECK(back.in_dim() == 8);
  CHECK(back.out_dim() == 6);
  CHECK(live_param_checksum(back.params()) == live_param_checksum(p.params()));
}

}  // TEST_SUITE
