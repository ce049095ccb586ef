#pragma once

#include <algorithm>
#include <vector>

#include "afpilot/types.hpp"

namespace afpilot {

/// OFDM numerology of one slot. Defaults are the LEO downlink setup
/// (N = 64, 30 kHz spacing, 2 GHz carrier, 12 symbols per slot).
struct FrameGeometry {
  int n = 64;                          // subcarriers / samples per symbol
  int cp = 16;                         // cyclic prefix length in samples
  double subcarrier_spacing = 30.0e3;  // Hz
  double carrier = 2.0e9;              // Hz
  int symbols = 12;                    // OFDM symbols per slot

  double sample_rate() const { return n * subcarrier_spacing; }
  double sample_period() const { return 1.0 / sample_rate(); }
  int block_length() const { return n + cp; }

  /// Absolute sample index (from the first CP sample of symbol 0) of the
  /// first post-CP sample of symbol k: (k + 1) L + N k.
  long long symbol_start(long long k) const { return (k + 1) * cp + k * n; }

  void validate() const {
    if (n < 2) throw ConfigError("geometry: n must be >= 2");
    if (cp < 0) throw ConfigError("geometry: cp must be >= 0");
    if (symbols < 1) throw ConfigError("geometry: symbols must be >= 1");
    if (!(subcarrier_spacing > 0.0) || !(carrier >= 0.0))
      throw ConfigError("geometry: spacing must be positive and carrier non-negative");
  }
};

/// One propagation path. Doppler is normalized to the subcarrier spacing, so
/// the per-sample digital frequency is doppler / N.
struct Path {
  Complex gain{1.0, 0.0};
  int delay = 0;
  double doppler = 0.0;
};

struct PathSet {
  std::vector<Path> paths;

  std::size_t size() const { return paths.size(); }
  bool empty() const { return paths.empty(); }
  int max_delay() const {
    int m = 0;
    for (const auto& p : paths) m = std::max(m, p.delay);
    return m;
  }
};

/// h_i exp(-j2pi (fc/fs) l_i) exp(-j2pi nu_i [(k+1)L + Nk] / N)
inline Complex time_varying_gain(const Path& path, long long k, const FrameGeometry& geom) {
  const double carrier_phase = -kTwoPi * (geom.carrier / geom.sample_rate()) * path.delay;
  const double doppler_phase =
      -kTwoPi * path.doppler * static_cast<double>(geom.symbol_start(k)) / geom.n;
  return path.gain * cis(carrier_phase) * cis(doppler_phase);
}

/// Per-symbol phase advance of a path: theta = 2 pi nu (N + L) / N.
inline double symbol_phase_step(double doppler, const FrameGeometry& geom) {
  return kTwoPi * doppler * geom.block_length() / geom.n;
}

}  // namespace afpilot
