#include <catch_amalgamated.hpp>

#include "afpilot/afpilot.hpp"

using namespace afpilot;

namespace {

const FrameGeometry kGeom;
const AfdmBasis& basis() {
  static const AfdmBasis b(ChirpParams{c1_rule(0, 1, 64), 0.0, 64});
  return b;
}

PilotSeries pilot_series(const PathSet& ps, double snr_db = std::numeric_limits<double>::infinity(),
                         std::uint64_t noise_seed = 0) {
  const SlotGrid tx = add_cp(build_slot(std::vector<std::uint8_t>{}, kGeom, RatioConfig{12, 0}, basis()));
  const SlotGrid rx = remove_cp(add_awgn(apply_channel(tx, ps, kGeom), NoiseSpec{snr_db, noise_seed}));
  PilotSeries s;
  for (const auto& b : rx.blocks) s.entries.push_back(basis().daft(b.samples));
  return s;
}

std::vector<double> dopplers(const PathSet& ps) {
  std::vector<double> d;
  for (const auto& p : ps.paths) d.push_back(p.doppler);
  return d;
}

}  // namespace

TEST_CASE("exact coefficients for small orders") {
  const double nu0 = 0.07, nu1 = -0.03;
  const double t0 = symbol_phase_step(nu0, kGeom), t1 = symbol_phase_step(nu1, kGeom);
  const std::vector<double> one{nu0};
  const ArModel m1 = exact_ar_coeffs(one, kGeom);
  REQUIRE(m1.order() == 1);
  CHECK(std::abs(m1.coeffs[0] - cis(-t0)) < 1e-15);

  const std::vector<double> two{nu0, nu1};
  const ArModel m2 = exact_ar_coeffs(two, kGeom);
  REQUIRE(m2.order() == 2);
  CHECK(std::abs(m2.coeffs[1] - (cis(-t0) + cis(-t1))) < 1e-14);
  CHECK(std::abs(m2.coeffs[0] + cis(-(t0 + t1))) < 1e-14);

  // scalar sequence a e^{-j t0 k} + b e^{-j t1 k}
  std::vector<Complex> seq;
  for (int k = 0; k < 12; ++k) seq.push_back(Complex(0.3, 0.1) * cis(-t0 * k) + Complex(-0.7, 0.2) * cis(-t1 * k));
  for (int k = 0; k + 2 < 12; ++k)
    REQUIRE(std::abs(seq[k + 2] - m2.coeffs[0] * seq[k] - m2.coeffs[1] * seq[k + 1]) < 1e-12);

  const std::vector<double> dup{0.05, 0.05};
  CHECK_THROWS_AS(exact_ar_coeffs(dup, kGeom), NumericalError);
  // 0.8 advances one full turn per symbol
  const std::vector<double> alias{0.0, 0.8};
  CHECK_THROWS_AS(exact_ar_coeffs(alias, kGeom), NumericalError);
  CHECK_THROWS_AS(exact_ar_coeffs(std::vector<double>{}, kGeom), ShapeError);
}

TEST_CASE("pilot series obey the exact recurrence") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, s);
    const ArModel m = exact_ar_coeffs(dopplers(ps), kGeom);
    REQUIRE(ar_residual(pilot_series(ps), m) < 1e-8);
    REQUIRE(stability_check(m).max_modulus == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("residual edge cases") {
  PilotSeries constant;
  for (int k = 0; k < 5; ++k) constant.entries.push_back(CVector::Constant(4, Complex(1.0, -2.0)));
  CHECK(ar_residual(constant, ArModel{{Complex(1.0, 0.0)}}) == 0.0);
  PilotSeries short_series;
  short_series.entries.push_back(CVector::Ones(4));
  CHECK_THROWS_AS(ar_residual(short_series, ArModel{{Complex(1.0, 0.0)}}), ShapeError);

  const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, 31ULL);
  const auto nus = dopplers(ps);
  const ArModel wrong = exact_ar_coeffs(std::span(nus).first(2), kGeom);
  CHECK(ar_residual(pilot_series(ps), wrong) > 1e-3);
}

TEST_CASE("LS fit recovers the exact coefficients") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, 500 + s);
    const ArModel exact = exact_ar_coeffs(dopplers(ps), kGeom);
    const PilotSeries series = pilot_series(ps);
    PilotSeries head;
    head.entries.assign(series.entries.begin(), series.entries.begin() + 4);
    const ArModel fit = ls_ar_fit(head, 3);
    for (int j = 0; j < 3; ++j) REQUIRE(std::abs(fit.coeffs[j] - exact.coeffs[j]) < 1e-6);
  }
}

TEST_CASE("LS fit scalar ratio and rejection") {
  PilotSeries s;
  CVector y = CVector::LinSpaced(6, 1.0, 2.0).cast<Complex>();
  for (int k = 0; k < 4; ++k) {
    s.entries.push_back(y);
    y *= Complex(0.0, 0.5);
  }
  const ArModel m = ls_ar_fit(s, 1);
  CHECK(std::abs(m.coeffs[0] - Complex(0.0, 0.5)) < 1e-12);

  PilotSeries two;
  two.entries.assign(s.entries.begin(), s.entries.begin() + 2);
  CHECK_THROWS_AS(ls_ar_fit(two, 3), ShapeError);
  PilotSeries three;
  three.entries.assign(s.entries.begin(), s.entries.begin() + 3);
  CHECK_THROWS_AS(ls_ar_fit(three, 3), ShapeError);
  CHECK_THROWS_AS(ls_ar_fit(s, 0), ShapeError);

  // a static series has rank one: an order-2 fit is rank deficient
  PilotSeries flat;
  for (int k = 0; k < 6; ++k) flat.entries.push_back(CVector::Ones(8));
  CHECK_THROWS_AS(ls_ar_fit(flat, 2), NumericalError);
}

TEST_CASE("prediction") {
  const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, 77ULL);
  const ArModel m = exact_ar_coeffs(dopplers(ps), kGeom);
  const PilotSeries series = pilot_series(ps);
  const auto pred = ar_predict(std::span(series.entries).subspan(1, 3), m, 8);
  REQUIRE(pred.size() == 8);
  for (int i = 0; i < 8; ++i)
    REQUIRE((pred[static_cast<std::size_t>(i)] - series[static_cast<std::size_t>(4 + i)]).norm() /
                series[static_cast<std::size_t>(4 + i)].norm() <
            1e-6);
  CHECK(ar_predict(std::span(series.entries).first(3), m, 0).empty());
  CHECK_THROWS_AS(ar_predict(std::span(series.entries).first(2), m, 1), ShapeError);

  const double theta = 0.4;
  const ArModel first{{cis(-theta)}};
  const std::vector<CVector> hist{CVector::Constant(3, Complex(2.0, 1.0))};
  const auto geo = ar_predict(hist, first, 5);
  for (int i = 0; i < 5; ++i)
    REQUIRE((geo[static_cast<std::size_t>(i)] - cis(-theta * (i + 1)) * hist[0]).norm() < 1e-12);
}

TEST_CASE("stability report") {
  const auto unstable = stability_check(ArModel{{Complex(1.5, 0.0)}});
  CHECK_FALSE(unstable.stable);
  CHECK(unstable.max_modulus == Catch::Approx(1.5));
  const auto j = to_json(unstable);
  CHECK(j["stable"] == false);
  CHECK(j["roots"].size() == 1);
  CHECK_THROWS_AS(stability_check(ArModel{}), ShapeError);
}

TEST_CASE("noisy LS fits can leave the unit circle") {
  int unstable = 0;
  double worst_err = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, 900 + s);
    const PilotSeries series = pilot_series(ps, 20.0, 7000 + s);
    PilotSeries head;
    head.entries.assign(series.entries.begin(), series.entries.begin() + 4);
    const ArModel fit = ls_ar_fit(head, 3);
    const auto rep = stability_check(fit);
    REQUIRE(rep.roots.size() == 3);
    unstable += rep.stable ? 0 : 1;
    const ArModel exact = exact_ar_coeffs(dopplers(ps), kGeom);
    for (int j = 0; j < 3; ++j) worst_err = std::max(worst_err, std::abs(fit.coeffs[j] - exact.coeffs[j]));
  }
  INFO("unstable fits: " << unstable << "/100, worst coefficient error " << worst_err);
  CHECK(unstable >= 1);
}

TEST_CASE("channel matrices share the recurrence in both domains") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, 1300 + s);
    const ArModel m = exact_ar_coeffs(dopplers(ps), kGeom);
    std::vector<ChannelSnapshot> fd, afd;
    for (int k = 0; k < 12; ++k) {
      fd.push_back(build_fd_channel(ps, k, kGeom, basis()));
      afd.push_back(build_afd_channel(ps, k, kGeom, basis()));
    }
    const double rf = channel_ar_check(fd, m), ra = channel_ar_check(afd, m);
    REQUIRE(rf < 1e-8);
    REQUIRE(ra < 1e-8);
    REQUIRE(std::abs(rf - ra) < 1e-10);
  }
  const PathSet stat{{Path{Complex(0.5, 0.1), 1, 0.0}}};
  std::vector<ChannelSnapshot> snaps;
  for (int k = 0; k < 3; ++k) snaps.push_back(build_fd_channel(stat, k, kGeom, basis()));
  CHECK(channel_ar_check(snaps, ArModel{{Complex(1.0, 0.0)}}) == 0.0);
  CHECK_THROWS_AS(channel_ar_check(std::span(snaps).first(1), ArModel{{Complex(1.0, 0.0)}}), ShapeError);
}

TEST_CASE("prediction error grows with the horizon under perturbed coefficients") {
  double err[8] = {};
  for (std::uint64_t s = 0; s < 50; ++s) {
    const PathSet ps = sample_paths(kDefaultPdpDb, kDefaultDelays, 0.1, 2000 + s);
    ArModel m = exact_ar_coeffs(dopplers(ps), kGeom);
    for (auto& c : m.coeffs) c *= Complex(1.0 + 1e-3, 1e-3);
    const PilotSeries series = pilot_series(ps);
    const auto pred = ar_predict(std::span(series.entries).subspan(1, 3), m, 8);
    for (int i = 0; i < 8; ++i)
      err[i] += (pred[static_cast<std::size_t>(i)] - series[static_cast<std::size_t>(4 + i)]).squaredNorm();
  }
  for (int i = 1; i < 8; ++i) CHECK(err[i] >= err[i - 1]);
}
