#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fiberlab/deeponet.hpp"
#include "fiberlab/parallel.hpp"
#include "fiberlab/rng.hpp"

#include <atomic>
#include <stdexcept>
#include <vector>

using namespace fiberlab;

TEST_CASE("parallel_for visits every index once") {
  set_worker_threads(4);
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(1000, [&](std::int64_t i) { ++hits[static_cast<std::size_t>(i)]; });
  for (const auto& h : hits) CHECK(h.load() == 1);
  parallel_for(0, [](std::int64_t) { FAIL("no tasks expected"); });
}

TEST_CASE("the lowest failing index wins") {
  for (int threads : {1, 3}) {
    set_worker_threads(threads);
    try {
      parallel_for(50, [](std::int64_t i) {
        if (i == 7 || i == 31) throw std::runtime_error(std::to_string(i));
      });
      FAIL("expected a throw");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "7");
    }
  }
}

TEST_CASE("worker cap is clamped") {
  set_worker_threads(0);
  CHECK(worker_threads() == 1);
  set_worker_threads(5);
  CHECK(worker_threads() == 5);
}

TEST_CASE("operator inference is identical for any worker count") {
  OperatorArchitecture arch;
  arch.trunk_hidden = {16, 16};
  arch.branch_hidden = {16};
  arch.q_embed = 8;
  arch.input_dim_m = 32;
  CoordScales scales;
  scales.t_scale_s = 32.0 / (2 * 14e9);
  const auto params = init_operator(arch, scales, 3);

  const TimeGrid g{2, 14e9, 16};
  std::vector<Frame> frames;
  Rng rng = make_rng(9);
  for (int f = 0; f < 150; ++f) {
    Frame fr{ComplexSignal(g), f};
    for (Eigen::Index j = 0; j < 32; ++j) fr.samples.samples[j] = {1e-2 * standard_normal(rng), 1e-2 * standard_normal(rng)};
    frames.push_back(fr);
  }
  const auto pts = frame_sample_points(g, 40.0);
  set_worker_threads(1);
  const auto a = forward_batch(params, frames, pts);
  set_worker_threads(4);
  const auto b = forward_batch(params, frames, pts);
  CHECK(a.s_i == b.s_i);
  CHECK(a.s_q == b.s_q);
  // a single frame agrees with its row of the batch
  const auto one = forward(params, frames[100], pts);
  CHECK((one.s_i - a.s_i.row(100).transpose()).cwiseAbs().maxCoeff() < 1e-15);
}
