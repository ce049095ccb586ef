#include <catch_amalgamated.hpp>

#include <algorithm>

#include "afpilot/afpilot.hpp"

using namespace afpilot;

namespace {

SlotGrid random_slot(const FrameGeometry& g, int symbols, std::uint64_t seed) {
  Rng rng(seed);
  SlotGrid s;
  s.n = g.n;
  s.cp = g.cp;
  for (int k = 0; k < symbols; ++k) s.blocks.push_back({SymbolRole::data, complex_noise(g.n, 1.0, rng), std::nullopt});
  return s;
}

}  // namespace

TEST_CASE("path sampling statistics") {
  const int draws = 100000;
  std::vector<double> power(3, 0.0);
  Rng rng(17);
  double nu_max_seen = 0.0;
  for (int i = 0; i < draws; ++i) {
    const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, rng);
    REQUIRE(ps.size() == 3);
    for (std::size_t p = 0; p < 3; ++p) {
      power[p] += std::norm(ps.paths[p].gain);
      nu_max_seen = std::max(nu_max_seen, std::abs(ps.paths[p].doppler));
      REQUIRE(ps.paths[p].delay == kDefaultDelays[p]);
    }
  }
  double total = 0.0;
  for (auto& p : power) total += p /= draws;
  CHECK(std::abs(total - 1.0) < 0.02);
  const double lin1 = std::pow(10.0, -4.675 / 10.0), lin2 = std::pow(10.0, -6.482 / 10.0);
  CHECK(std::abs(power[1] / power[0] / lin1 - 1.0) < 0.02);
  CHECK(std::abs(power[2] / power[0] / lin2 - 1.0) < 0.02);
  CHECK(nu_max_seen <= 0.1);
  CHECK(nu_max_seen > 0.099);
}

TEST_CASE("flat single tap is unit-power Rayleigh") {
  const std::vector<double> pdp{0.0};
  const std::vector<int> delays{0};
  Rng rng(5);
  const int draws = 100000;
  std::vector<double> mag(draws);
  double power = 0.0;
  for (int i = 0; i < draws; ++i) {
    const PathSet ps = sample_paths(pdp, delays, 0.0, rng);
    REQUIRE(ps.paths[0].doppler == 0.0);
    mag[i] = std::abs(ps.paths[0].gain);
    power += mag[i] * mag[i];
  }
  CHECK(std::abs(power / draws - 1.0) < 0.02);
  // Kolmogorov-Smirnov against F(r) = 1 - exp(-r^2), 1% critical value
  std::sort(mag.begin(), mag.end());
  double d = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double f = 1.0 - std::exp(-mag[i] * mag[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / draws), std::abs(f - static_cast<double>(i + 1) / draws)});
  }
  CHECK(d < 1.628 / std::sqrt(static_cast<double>(draws)));
}

TEST_CASE("sampling argument checks") {
  const std::vector<double> pdp{0.0, -3.0};
  const std::vector<int> one{0};
  CHECK_THROWS_AS(sample_paths(pdp, one, 0.1, 1ULL), ConfigError);
  const std::vector<int> two{0, 1};
  CHECK_THROWS_AS(sample_paths(pdp, two, 0.6, 1ULL), ConfigError);
}

TEST_CASE("time varying gain") {
  const FrameGeometry g;
  const Path stat{Complex(0.3, -0.4), 0, 0.0};
  for (int k = 0; k < 12; ++k) CHECK(std::abs(time_varying_gain(stat, k, g) - stat.gain) < 1e-15);

  Rng rng(2);
  std::uniform_real_distribution<double> uni(-0.4, 0.4);
  for (int t = 0; t < 50; ++t) {
    const Path p{Complex(0.6, 0.8), static_cast<int>(t % 4), uni(rng)};
    const Complex expected = cis(-kTwoPi * p.doppler * (g.n + g.cp) / g.n);
    for (int k = 0; k < 11; ++k) {
      const Complex a = time_varying_gain(p, k, g), b = time_varying_gain(p, k + 1, g);
      REQUIRE(std::abs(b / a - expected) < 1e-12);
      REQUIRE(std::abs(std::abs(a) - 1.0) < 1e-12);
    }
  }
  // first post-CP sample of symbol 2 is (2 + 1) 16 + 2 64 = 176
  CHECK(g.symbol_start(2) == 176);
}

TEST_CASE("identity channel passes the slot through") {
  const FrameGeometry g;
  const SlotGrid tx = add_cp(random_slot(g, 3, 1));
  const PathSet id{{Path{Complex(1.0, 0.0), 0, 0.0}}};
  const SlotGrid rx = apply_channel(tx, id, g);
  for (std::size_t b = 0; b < 3; ++b) CHECK((rx.blocks[b].samples - tx.blocks[b].samples).norm() == 0.0);
}

TEST_CASE("sample-level channel equals the per-symbol matrix model") {
  const FrameGeometry g;
  const AfdmBasis fft(ChirpParams{0.0, 0.0, g.n});
  for (std::uint64_t s = 0; s < 10; ++s) {
    const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, s);
    const SlotGrid tx = random_slot(g, g.symbols, 100 + s);
    const SlotGrid rx = remove_cp(apply_channel(add_cp(tx), ps, g));
    for (int k = 0; k < g.symbols; ++k) {
      const CVector lhs = fft.fft(rx.blocks[static_cast<std::size_t>(k)].samples);
      const CVector rhs = build_fd_channel(ps, k, g).h * fft.fft(tx.blocks[static_cast<std::size_t>(k)].samples);
      REQUIRE((lhs - rhs).norm() / rhs.norm() < 1e-10);
    }
  }
}

TEST_CASE("consecutive slots stay phase continuous") {
  const FrameGeometry g;
  const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, 8ULL);
  const SlotGrid both = random_slot(g, 24, 4);
  SlotGrid second = both;
  second.blocks.erase(second.blocks.begin(), second.blocks.begin() + 12);
  const SlotGrid long_run = remove_cp(apply_channel(add_cp(both), ps, g));
  const SlotGrid slot2 = remove_cp(apply_channel(add_cp(second), ps, g, 12));
  for (int k = 0; k < 12; ++k)
    REQUIRE((slot2.blocks[static_cast<std::size_t>(k)].samples - long_run.blocks[static_cast<std::size_t>(12 + k)].samples).norm() <
            1e-10);
}

TEST_CASE("delay beyond the cyclic prefix is rejected") {
  const FrameGeometry g;
  const PathSet ps{{Path{Complex(1.0, 0.0), 17, 0.0}}};
  CHECK_THROWS_AS(apply_channel(add_cp(random_slot(g, 1, 1)), ps, g), ShapeError);
  CHECK_THROWS_AS(apply_channel(random_slot(g, 1, 1), ps, g), ShapeError);
}

TEST_CASE("noise-free energy bookkeeping") {
  const FrameGeometry g;
  Rng rng(21);
  double in = 0.0, out = 0.0;
  for (int t = 0; t < 2000; ++t) {
    const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, rng);
    const SlotGrid tx = random_slot(g, 1, rng());
    const SlotGrid rx = remove_cp(apply_channel(add_cp(tx), ps, g));
    in += tx.blocks[0].samples.squaredNorm();
    out += rx.blocks[0].samples.squaredNorm();
  }
  CHECK(std::abs(out / in - 1.0) < 0.05);
}

TEST_CASE("awgn variance and determinism") {
  const FrameGeometry g;
  SlotGrid zero;
  zero.n = g.n;
  zero.cp = g.cp;
  for (int b = 0; b < 15625; ++b) zero.blocks.push_back({SymbolRole::data, CVector::Zero(g.n), std::nullopt});
  const NoiseSpec noise{10.0, 77};
  CHECK(noise.variance() == Catch::Approx(0.1).epsilon(1e-15));
  const SlotGrid a = add_awgn(zero, noise);
  const SlotGrid b = add_awgn(zero, noise);
  double power = 0.0;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    power += a.blocks[i].samples.squaredNorm();
    REQUIRE(a.blocks[i].samples == b.blocks[i].samples);
  }
  CHECK(std::abs(power / 1e6 / 0.1 - 1.0) < 0.01);

  const SlotGrid clean = add_awgn(zero, NoiseSpec{});
  CHECK(clean.blocks[0].samples == zero.blocks[0].samples);
}
