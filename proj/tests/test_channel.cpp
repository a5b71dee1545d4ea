#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "hbf/channel.hpp"
#include "hbf/errors.hpp"
#include "support.hpp"

using namespace hbf;
using hbf::testing::small_scenario;

namespace {

constexpr double kPi = std::numbers::pi;

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("array_response closed forms") {
  const auto a = array_response(0.0, 4);
  for (int n = 0; n < 4; ++n) CHECK(std::abs(a[n] - cd(0.5, 0)) < 1e-15);

  const auto b = array_response(kPi / 2, 2);
  CHECK(std::abs(b[0] - cd(1 / std::sqrt(2.0), 0)) < 1e-15);
  CHECK(std::abs(b[1] - cd(-1 / std::sqrt(2.0), 0)) < 1e-15);
}

TEST_CASE("array_response matches per-element evaluation") {
  const double phi = 0.3;
  const auto a = array_response(phi, 8);
  CHECK(std::abs(a.norm() - 1.0) < 1e-14);
  for (int n = 0; n < 8; ++n) {
    const double arg = kPi * n * std::sin(phi);
    const cd ref(std::cos(arg) / std::sqrt(8.0), std::sin(arg) / std::sqrt(8.0));
    CHECK(std::abs(a[n] - ref) < 1e-14);
  }
}

TEST_CASE("gen_paths ranges, determinism and weak-path power") {
  auto sc = small_scenario(2, 2, 16, 4);
  sc.num_paths = 1;
  Rng r1(7);
  const auto single = gen_paths(sc, r1);
  REQUIRE(single.size() == 1);
  CHECK(single.gains[0] == 1.0);

  sc.num_paths = 5;
  Rng a(11), b(11);
  const auto p = gen_paths(sc, a), q = gen_paths(sc, b);
  CHECK(p.aods == q.aods);
  CHECK(p.gains == q.gains);
  CHECK(p.phases == q.phases);
  CHECK(p.delays == q.delays);

  Rng rng(3);
  double acc = 0;
  long n = 0;
  while (n < 100000) {
    const auto s = gen_paths(sc, rng);
    for (std::size_t l = 0; l < s.size(); ++l) {
      CHECK(s.aods[l] > -kPi / 2);
      CHECK(s.aods[l] < kPi / 2);
      CHECK(s.gains[l] >= 0);
      CHECK(s.delays[l] >= 0);
      CHECK(s.delays[l] <= 100e-9);
      if (l == 0) continue;
      acc += s.gains[l] * s.gains[l];
      ++n;
    }
  }
  CHECK(std::abs(acc / static_cast<double>(n) - 0.1) < 0.01);
}

TEST_CASE("synth_channel closed forms and summation oracle") {
  PathSet boresight{{0.0}, {1.0}, {0.0}, {0.0}};
  const auto h = synth_channel(boresight, 4, 100e6);
  for (int n = 0; n < 4; ++n) CHECK(std::abs(h[n] - cd(1, 0)) < 1e-15);

  PathSet dead{{0.1, -0.4}, {0.0, 0.0}, {1.0, 2.0}, {1e-9, 2e-9}};
  CHECK(synth_channel(dead, 8, 1e8).norm() == 0.0);

  Rng rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    PathSet p;
    for (int l = 0; l < 3; ++l) {
      p.aods.push_back((u(rng) - 0.5) * kPi * 0.99);
      p.gains.push_back(u(rng));
      p.phases.push_back(2 * kPi * u(rng));
      p.delays.push_back(100e-9 * u(rng));
    }
    const int N = 6;
    const double B = 100e6;
    const auto got = synth_channel(p, N, B);
    for (int n = 0; n < N; ++n) {
      double re = 0, im = 0;
      for (int l = 0; l < 3; ++l) {
        const double arg = p.phases[l] + 2 * kPi * p.delays[l] * B + kPi * n * std::sin(p.aods[l]);
        re += p.gains[l] * std::cos(arg) / std::sqrt(double(N));
        im += p.gains[l] * std::sin(arg) / std::sqrt(double(N));
      }
      const cd ref = std::sqrt(double(N) / 3.0) * cd(re, im);
      CHECK(std::abs(got[n] - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
    }
    CHECK(got.squaredNorm() > 0);
  }
}

TEST_CASE("synth_channel is linear in disjoint path sets") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  PathSet a, b, both;
  for (int l = 0; l < 5; ++l) {
    PathSet& dst = l < 2 ? a : b;
    const double aod = (u(rng) - 0.5) * 3, g = u(rng), th = 6 * u(rng), tau = 1e-7 * u(rng);
    for (PathSet* p : {&dst, &both}) {
      p->aods.push_back(aod);
      p->gains.push_back(g);
      p->phases.push_back(th);
      p->delays.push_back(tau);
    }
  }
  const int N = 8;
  // Undo the sqrt(N / N_c) factor of each call before adding.
  const Eigen::VectorXcd sum = synth_channel(a, N, 1e8) / std::sqrt(N / 2.0) + synth_channel(b, N, 1e8) / std::sqrt(N / 3.0);
  const Eigen::VectorXcd whole = synth_channel(both, N, 1e8) / std::sqrt(N / 5.0);
  CHECK((sum - whole).norm() < 1e-12);
}

TEST_CASE("extract_partial gathers and rejects bad indices") {
  Eigen::VectorXcd h(4);
  h << cd(1, 0), cd(0, 2), cd(3, 0), cd(4, 0);
  const auto p = extract_partial(h, {1, 3});
  CHECK(p.size() == 2);
  CHECK(p[0] == cd(0, 2));
  CHECK(p[1] == cd(4, 0));
  CHECK(extract_partial(h, {0, 2})[1] == cd(3, 0));
  CHECK(extract_partial(h, {0, 1, 2, 3}) == h);
  CHECK_THROWS_AS(extract_partial(h, {0, 4}), DimensionError);
  CHECK_THROWS_AS(extract_partial(h, {-1}), DimensionError);
  // Re-extracting with identity indices is the identity.
  CHECK(extract_partial(p, {0, 1}) == p);
}

TEST_CASE("apply_phase_error keeps magnitudes and has the requested spread") {
  Rng rng(1);
  const Eigen::VectorXcd h = hbf::testing::random_complex(6, 1, rng);
  CHECK(apply_phase_error(h, 0.0, rng) == h);
  const auto r = apply_phase_error(h, 5.0, rng);
  for (int i = 0; i < h.size(); ++i) CHECK(std::abs(std::abs(r[i]) - std::abs(h[i])) < 1e-12);

  Eigen::VectorXcd one(1);
  one[0] = 1.0;
  double s = 0, s2 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double deg = std::arg(apply_phase_error(one, 5.0, rng)[0]) * 180 / kPi;
    s += deg;
    s2 += deg * deg;
  }
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  CHECK(sd >= 4.8);
  CHECK(sd <= 5.2);
}

TEST_CASE("with_phase_error touches partial CSI only") {
  const auto sc = small_scenario(2, 2, 8, 4);
  const auto s = gen_sample(sc, 3);
  Rng rng(2);
  const auto zero = with_phase_error(s, 0.0, rng);
  for (std::size_t i = 0; i < s.mm_partial.size(); ++i) CHECK(zero.mm_partial[i] == s.mm_partial[i]);
  const auto noisy = with_phase_error(s, 5.0, rng);
  for (std::size_t i = 0; i < s.mm_full.size(); ++i) CHECK(noisy.mm_full[i] == s.mm_full[i]);
  CHECK(noisy.sub6 == s.sub6);
  CHECK(noisy.mm_partial[0] != s.mm_partial[0]);
}

TEST_CASE("gen_dataset determinism, conformance and active indices") {
  auto sc = small_scenario(2, 2, 16, 4);
  CHECK(uniform_active_indices(16, 4) == std::vector<int>{0, 4, 8, 12});
  CHECK(uniform_active_indices(16, 0).empty());

  const auto one = gen_dataset(sc, 1, 4);
  REQUIRE(one.samples.size() == 1);
  check_conforms(one.samples[0], sc);
  CHECK(one.samples[0].active_idx == std::vector<int>{0, 4, 8, 12});

  const auto a = gen_dataset(sc, 5, 4), b = gen_dataset(sc, 5, 4), c = gen_dataset(sc, 5, 4, Split::test);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.samples[i].sub6 == b.samples[i].sub6);
    for (std::size_t j = 0; j < a.samples[i].mm_full.size(); ++j) {
      CHECK(a.samples[i].mm_full[j] == b.samples[i].mm_full[j]);
      // Partial CSI is a gather of the full channel.
      const auto& s = a.samples[i];
      for (std::size_t t = 0; t < s.active_idx.size(); ++t)
        CHECK(s.mm_partial[j][static_cast<Eigen::Index>(t)] == s.mm_full[j][s.active_idx[t]]);
    }
  }
  CHECK(a.samples[0].sub6 != c.samples[0].sub6);
}

TEST_CASE("sub-6GHz and mmWave share the dominant direction") {
  auto sc = small_scenario(1, 1, 32, 4);
  sc.num_paths = 1;
  sc.sub6_antennas = 16;
  const int grid = 4000;
  auto peak = [&](const Eigen::VectorXcd& h) {
    int best = 0;
    double bv = -1;
    for (int g = 0; g < grid; ++g) {
      const double phi = -kPi / 2 + kPi * (g + 0.5) / grid;
      const double v = std::abs(array_response(phi, static_cast<int>(h.size())).dot(h));
      if (v > bv) bv = v, best = g;
    }
    return best;
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = gen_sample(sc, seed);
    const Eigen::VectorXcd sub6 = s.sub6.row(0).transpose();
    CHECK(std::abs(peak(sub6) - peak(s.full(0, 0))) <= 1);
  }
}

TEST_CASE("scenario validation lists every violation") {
  auto sc = small_scenario(2, 2, 16, 4, Structure::partially);
  CHECK(sc.violations().empty());
  sc.active_antennas = 20;
  sc.noise_power = 0;
  sc.max_power = {1.0, -1.0};
  sc.mm_antennas = 15;
  const auto v = sc.violations();
  CHECK(v.size() >= 4);
  CHECK_THROWS_AS(sc.validate(), ValidationError);
}

TEST_CASE("dataset files round trip and are deterministic") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "hbf_test_channel";
  fs::create_directories(dir);
  const auto sc = small_scenario(2, 2, 8, 4);
  const auto d = gen_dataset(sc, 3, 8, Split::test);
  write_dataset(d, (dir / "a").string());
  const auto other = dir / "again";
  fs::create_directories(other);
  write_dataset(gen_dataset(sc, 3, 8, Split::test), (other / "a").string());
  CHECK(slurp((dir / "a.bin").string()) == slurp((other / "a.bin").string()));
  CHECK(slurp((dir / "a.json").string()) == slurp((other / "a.json").string()));

  const auto r = read_dataset((dir / "a").string());
  CHECK(r.split == Split::test);
  CHECK(r.scenario.ues_per_bs == sc.ues_per_bs);
  REQUIRE(r.samples.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r.samples[i].sub6 == d.samples[i].sub6);
    CHECK(r.samples[i].active_idx == d.samples[i].active_idx);
    for (std::size_t j = 0; j < d.samples[i].mm_full.size(); ++j) {
      CHECK(r.samples[i].mm_full[j] == d.samples[i].mm_full[j]);
      CHECK(r.samples[i].mm_partial[j] == d.samples[i].mm_partial[j]);
    }
  }
  fs::remove_all(dir);
}
