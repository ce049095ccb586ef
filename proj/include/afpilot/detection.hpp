#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "afpilot/framing.hpp"

namespace afpilot {

enum class EqualizerMethod { mmse, zf };

struct EqualizerConfig {
  EqualizerMethod method = EqualizerMethod::mmse;
  double noise_variance = 0.0;
  double max_condition = 1e12;  // zf refuses worse-conditioned channels
};

/// mmse: (H^H H + sigma^2 I)^{-1} H^H y over the full matrix, so ICI is
/// equalized too. zf (and mmse with sigma^2 == 0): least-squares pseudo-inverse.
inline CVector equalize(const CVector& received_fd, const ChannelSnapshot& h, const EqualizerConfig& cfg) {
  if (h.domain != Domain::tf) throw ShapeError("equalize: channel must be a TF-domain snapshot");
  if (h.h.rows() != received_fd.size() || h.h.cols() != received_fd.size())
    throw ShapeError("equalize: dimension mismatch");
  if (cfg.noise_variance < 0.0) throw ConfigError("equalize: negative noise variance");
  if (cfg.method == EqualizerMethod::mmse && cfg.noise_variance > 0.0) {
    CMatrix gram = h.h.adjoint() * h.h;
    gram.diagonal().array() += cfg.noise_variance;
    return gram.llt().solve(h.h.adjoint() * received_fd);
  }
  Eigen::JacobiSVD<CMatrix> svd(h.h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) == 0.0 || sv(0) / sv(sv.size() - 1) > cfg.max_condition)
    throw NumericalError("equalize: channel matrix is singular or ill-conditioned for zero forcing");
  return svd.solve(received_fd);
}

struct BerRecord {
  std::string scheme;
  double snr_db = 0.0;
  int pilot_count = 0;
  int data_count = 0;
  long long slots = 0;
  long long bits = 0;
  long long errors = 0;
  std::uint64_t seed = 0;

  double ber() const { return bits > 0 ? static_cast<double>(errors) / static_cast<double>(bits) : 0.0; }

  void merge(const BerRecord& other) {
    slots += other.slots;
    bits += other.bits;
    errors += other.errors;
  }
};

/// Adds the sent/decided comparison to the record.
inline BerRecord& tally(std::span<const std::uint8_t> sent, std::span<const std::uint8_t> decided, BerRecord& rec) {
  if (sent.size() != decided.size()) throw ShapeError("tally: bit streams differ in length");
  long long errs = 0;
  for (std::size_t i = 0; i < sent.size(); ++i) errs += (sent[i] != 0) != (decided[i] != 0);
  rec.bits += static_cast<long long>(sent.size());
  rec.errors += errs;
  return rec;
}

}  // namespace afpilot
