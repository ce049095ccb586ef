#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "afpilot/transforms.hpp"

namespace afpilot {

enum class SymbolRole { pilot, data };

inline const char* to_string(SymbolRole r) { return r == SymbolRole::pilot ? "pilot" : "data"; }

struct SymbolBlock {
  SymbolRole role = SymbolRole::data;
  CVector samples;                 // N samples, or N + L with the CP attached
  std::optional<CVector> payload;  // frequency-domain constellation points (data only)
};

/// One slot: pilot blocks first, then data blocks.
struct SlotGrid {
  std::vector<SymbolBlock> blocks;
  int n = 0;
  int cp = 0;
  bool cp_attached = false;

  std::size_t size() const { return blocks.size(); }
  int pilot_count() const {
    int c = 0;
    for (const auto& b : blocks) c += b.role == SymbolRole::pilot;
    return c;
  }
};

struct RatioConfig {
  int pilot_count = 4;
  int data_count = 8;

  int total() const { return pilot_count + data_count; }
  void validate(const FrameGeometry& geom) const {
    if (pilot_count < 1) throw ConfigError("ratio: at least one pilot symbol is required");
    if (data_count < 0) throw ConfigError("ratio: data count must be non-negative");
    if (total() != geom.symbols) throw ConfigError("ratio: pilot_count + data_count must equal the slot length");
  }
};

enum class Modulation { qpsk };

inline int bits_per_symbol(Modulation) { return 2; }

/// x_p[n] = exp(+j 2 pi c1 n^2): constant modulus, so 0 dB PAPR.
inline CVector make_pilot_symbol(const ChirpParams& chirps) {
  CVector x(chirps.n);
  for (int k = 0; k < chirps.n; ++k) x(k) = cis(kTwoPi * chirps.c1 * static_cast<double>(k) * k);
  return x;
}

/// Peak-to-average power ratio in dB.
inline double papr_db(const CVector& x) {
  const double peak = x.cwiseAbs2().maxCoeff();
  const double mean = x.cwiseAbs2().mean();
  return 10.0 * std::log10(peak / mean);
}

/// Gray QPSK: bit pair (b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2), so 00 -> (1 + j)/sqrt(2).
inline CVector map_bits(std::span<const std::uint8_t> bits, Modulation scheme = Modulation::qpsk) {
  const auto bps = static_cast<std::size_t>(bits_per_symbol(scheme));
  if (bits.size() % bps != 0) throw ShapeError("map_bits: bit count not divisible by bits per symbol");
  const double a = 1.0 / std::sqrt(2.0);
  CVector out(static_cast<Eigen::Index>(bits.size() / bps));
  for (Eigen::Index s = 0; s < out.size(); ++s) {
    const auto b0 = bits[2 * s], b1 = bits[2 * s + 1];
    out(s) = Complex(b0 ? -a : a, b1 ? -a : a);
  }
  return out;
}

/// Minimum-distance hard decision. A coordinate exactly on the decision
/// boundary (== 0) decides bit 0, the lexicographically smallest pattern.
inline std::vector<std::uint8_t> demap(const CVector& symbols, Modulation = Modulation::qpsk) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(2 * symbols.size()));
  for (Eigen::Index s = 0; s < symbols.size(); ++s) {
    bits[2 * s] = symbols(s).real() < 0.0;
    bits[2 * s + 1] = symbols(s).imag() < 0.0;
  }
  return bits;
}

/// Slot layout: ratio.pilot_count copies of the chirp pilot, then data blocks
/// carrying IDFT(map_bits(...)). CP is not attached.
inline SlotGrid build_slot(std::span<const std::uint8_t> bits, const FrameGeometry& geom, const RatioConfig& ratio,
                           const AfdmBasis& basis, Modulation scheme = Modulation::qpsk) {
  ratio.validate(geom);
  const auto per_block = static_cast<std::size_t>(geom.n * bits_per_symbol(scheme));
  if (bits.size() != per_block * static_cast<std::size_t>(ratio.data_count))
    throw ShapeError("build_slot: bit count must equal data_count * N * bits_per_symbol");

  SlotGrid slot;
  slot.n = geom.n;
  slot.cp = geom.cp;
  const CVector pilot = make_pilot_symbol(basis.chirps());
  for (int i = 0; i < ratio.pilot_count; ++i) slot.blocks.push_back({SymbolRole::pilot, pilot, std::nullopt});
  for (int d = 0; d < ratio.data_count; ++d) {
    CVector points = map_bits(bits.subspan(d * per_block, per_block), scheme);
    CVector time = basis.ifft(points);
    slot.blocks.push_back({SymbolRole::data, std::move(time), std::move(points)});
  }
  return slot;
}

inline SlotGrid build_slot(std::span<const std::uint8_t> bits, const FrameGeometry& geom, const RatioConfig& ratio,
                           const ChirpParams& chirps, Modulation scheme = Modulation::qpsk) {
  return build_slot(bits, geom, ratio, AfdmBasis(chirps), scheme);
}

inline SlotGrid add_cp(SlotGrid slot) {
  if (slot.cp_attached) throw ShapeError("add_cp: cyclic prefix already attached");
  for (auto& b : slot.blocks) {
    if (b.samples.size() != slot.n) throw ShapeError("add_cp: block length differs from N");
    CVector with(slot.n + slot.cp);
    with.head(slot.cp) = b.samples.tail(slot.cp);
    with.tail(slot.n) = b.samples;
    b.samples = std::move(with);
  }
  slot.cp_attached = true;
  return slot;
}

inline SlotGrid remove_cp(SlotGrid slot) {
  if (!slot.cp_attached) throw ShapeError("remove_cp: no cyclic prefix attached");
  for (auto& b : slot.blocks) {
    if (b.samples.size() != slot.n + slot.cp) throw ShapeError("remove_cp: block length differs from N + L");
    CVector stripped = b.samples.tail(slot.n);
    b.samples = std::move(stripped);
  }
  slot.cp_attached = false;
  return slot;
}

/// Received AF-domain pilot: the forward DAFT of a CP-free time-domain block.
inline CVector afd_receive_pilot(const CVector& block, const AfdmBasis& basis) {
  if (block.size() != basis.n()) throw ShapeError("afd_receive_pilot: block length differs from N");
  return basis.daft(block);
}

/// Golden-test dump: block,role,sample,re,im
inline void write_slot_csv(std::ostream& os, const SlotGrid& slot) {
  os << "block,role,sample,re,im\n" << std::setprecision(17);
  for (std::size_t b = 0; b < slot.blocks.size(); ++b) {
    const auto& blk = slot.blocks[b];
    for (Eigen::Index i = 0; i < blk.samples.size(); ++i)
      os << b << ',' << to_string(blk.role) << ',' << i << ',' << blk.samples(i).real() << ','
         << blk.samples(i).imag() << '\n';
  }
}

}  // namespace afpilot
