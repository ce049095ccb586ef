#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <span>

#include "afpilot/framing.hpp"
#include "afpilot/rng.hpp"

namespace afpilot {

/// Power-delay profile of the three-tap LEO channel (dB) and its delay placement.
inline const std::vector<double> kDefaultPdpDb{0.0, -4.675, -6.482};
inline const std::vector<int> kDefaultDelays{0, 1, 3};

struct NoiseSpec {
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;

  /// Per-sample noise variance under unit-power signalling.
  double variance() const { return std::isinf(snr_db) && snr_db > 0 ? 0.0 : std::pow(10.0, -snr_db / 10.0); }
};

/// Rayleigh taps with PDP-normalized variances, i.i.d. uniform Doppler on
/// [-doppler_max, doppler_max], delays taken verbatim from the profile.
inline PathSet sample_paths(std::span<const double> pdp_db, std::span<const int> delays, double doppler_max,
                            Rng& rng) {
  if (pdp_db.size() != delays.size()) throw ConfigError("sample_paths: PDP and delay lists differ in length");
  if (pdp_db.empty()) throw ConfigError("sample_paths: at least one path is required");
  if (!(doppler_max >= 0.0) || doppler_max > 0.5) throw ConfigError("sample_paths: doppler_max must lie in [0, 0.5]");

  double total = 0.0;
  for (double p : pdp_db) total += std::pow(10.0, p / 10.0);

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(-doppler_max, doppler_max);
  PathSet set;
  for (std::size_t i = 0; i < pdp_db.size(); ++i) {
    if (delays[i] < 0) throw ConfigError("sample_paths: negative delay");
    const double sigma = std::sqrt(std::pow(10.0, pdp_db[i] / 10.0) / total / 2.0);
    const double re = gauss(rng), im = gauss(rng);
    const double nu = doppler_max > 0.0 ? uni(rng) : 0.0;
    set.paths.push_back({Complex(sigma * re, sigma * im), delays[i], nu});
  }
  return set;
}

inline PathSet sample_paths(std::span<const double> pdp_db, std::span<const int> delays, double doppler_max,
                            std::uint64_t seed) {
  Rng rng(seed);
  return sample_paths(pdp_db, delays, doppler_max, rng);
}

/// Sample-level channel on a CP-attached slot:
///   y[t] = sum_i h_i exp(-j2pi (fc/fs) l_i) exp(-j2pi nu_i t / N) x[t - l_i],
/// t counted from the first CP sample of symbol `first_symbol` of a continuous
/// stream (so consecutive slots stay phase continuous). Samples before the slot
/// start are taken as zero; they only reach the first CP.
inline SlotGrid apply_channel(const SlotGrid& slot, const PathSet& paths, const FrameGeometry& geom,
                              long long first_symbol = 0) {
  if (!slot.cp_attached) throw ShapeError("apply_channel: slot must carry its cyclic prefix");
  if (slot.n != geom.n || slot.cp != geom.cp) throw ShapeError("apply_channel: slot geometry mismatch");
  for (const auto& p : paths.paths)
    if (p.delay < 0 || p.delay > geom.cp) throw ShapeError("apply_channel: path delay exceeds the cyclic prefix");

  const int block = geom.block_length();
  const Eigen::Index total = static_cast<Eigen::Index>(slot.blocks.size()) * block;
  CVector x(total);
  for (std::size_t b = 0; b < slot.blocks.size(); ++b) x.segment(b * block, block) = slot.blocks[b].samples;

  const long long t0 = first_symbol * block;
  CVector y = CVector::Zero(total);
  for (const auto& p : paths.paths) {
    const Complex static_gain = p.gain * cis(-kTwoPi * (geom.carrier / geom.sample_rate()) * p.delay);
    for (Eigen::Index t = p.delay; t < total; ++t) {
      const double phase = -kTwoPi * p.doppler * static_cast<double>(t0 + t) / geom.n;
      y(t) += static_gain * cis(phase) * x(t - p.delay);
    }
  }

  SlotGrid out = slot;
  for (std::size_t b = 0; b < out.blocks.size(); ++b) out.blocks[b].samples = y.segment(b * block, block);
  return out;
}

/// Adds i.i.d. circular complex Gaussian noise of variance sigma^2 per sample.
inline SlotGrid add_awgn(SlotGrid slot, const NoiseSpec& noise) {
  const double var = noise.variance();
  if (var == 0.0) return slot;
  Rng rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(var / 2.0));
  for (auto& b : slot.blocks)
    for (Eigen::Index i = 0; i < b.samples.size(); ++i) {
      const double re = gauss(rng), im = gauss(rng);
      b.samples(i) += Complex(re, im);
    }
  return slot;
}

/// Complex Gaussian vector of variance `var` per entry drawn from `rng`.
inline CVector complex_noise(Eigen::Index n, double var, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(var / 2.0));
  CVector w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = gauss(rng), im = gauss(rng);
    w(i) = Complex(re, im);
  }
  return w;
}

}  // namespace afpilot
