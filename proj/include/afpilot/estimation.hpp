#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "afpilot/channel.hpp"

namespace afpilot {

struct EstimatedPath {
  Complex gain;      // h~ at the reference symbol
  int delay = 0;
  double doppler = 0.0;
};

enum class CsiProvenance { af_parametric, tf_ls_interp, af_virtual_pilot, tf_virtual_pilot, perfect };

/// Per-symbol TF-domain channel matrices.
struct CsiEstimate {
  std::vector<ChannelSnapshot> snapshots;
  CsiProvenance provenance = CsiProvenance::perfect;

  const ChannelSnapshot& at(long long symbol) const {
    for (const auto& s : snapshots)
      if (s.symbol == symbol) return s;
    throw ShapeError("CsiEstimate: no snapshot for requested symbol");
  }
};

struct DelayDopplerGrid {
  int max_delay = 3;
  double max_doppler = 0.25;
  double doppler_step = 0.025;

  std::vector<double> dopplers() const {
    if (!(doppler_step > 0.0) || max_doppler < 0.0) return {};
    const int half = static_cast<int>(std::floor(max_doppler / doppler_step + 1e-9));
    std::vector<double> out;
    for (int i = -half; i <= half; ++i) out.push_back(i * doppler_step);
    return out;
  }
};

struct AfEstimatorConfig {
  DelayDopplerGrid grid;
  int max_paths = 6;
  double stop_threshold = 1e-3;  // residual-energy ratio
  bool refine = true;            // one parabolic step on the Doppler peak
  int polish_rounds = 2;         // local Doppler re-search passes after each pick
};

/// One successive-cancellation step, for structured diagnostics.
struct EstimatorTrace {
  int iteration = 0;
  int delay = 0;
  double doppler = 0.0;
  double correlation = 0.0;
  double residual_ratio = 0.0;
};

using TraceSink = std::function<void(const EstimatorTrace&)>;

/// Greedy matched filter with successive cancellation over a delay-Doppler
/// grid. Each iteration picks the cell maximizing |<r, s>| / ||s|| where
/// s = H(l, nu) x_p,AF, refines nu parabolically, then re-fits all gains
/// jointly by least squares, so the residual energy never increases.
class AfPathEstimator {
 public:
  AfPathEstimator(const AfdmBasis& basis, const CVector& pilot_afd_ref, AfEstimatorConfig cfg)
      : basis_(basis), cfg_(cfg), pilot_time_(basis.idaft(pilot_afd_ref)) {
    if (pilot_afd_ref.size() != basis.n()) throw ShapeError("AfPathEstimator: pilot length differs from N");
    if (!pilot_afd_ref.allFinite()) throw NumericalError("AfPathEstimator: non-finite pilot");
    dopplers_ = cfg_.grid.dopplers();
    if (dopplers_.empty() || cfg_.grid.max_delay < 0 || cfg_.grid.max_delay >= basis.n())
      throw ConfigError("AfPathEstimator: empty delay-Doppler grid");
    if (cfg_.max_paths < 1) throw ConfigError("AfPathEstimator: max_paths must be >= 1");
    for (int l = 0; l <= cfg_.grid.max_delay; ++l)
      for (double nu : dopplers_) {
        CVector s = signature(l, nu);
        const double nrm = s.norm();
        bank_.push_back({l, nu, std::move(s), nrm});
      }
  }

  const AfEstimatorConfig& config() const { return cfg_; }
  const AfdmBasis& basis() const { return basis_; }

  /// Noise-free AF response of a unit-gain path: DAFT(Gamma_l Delta_{nu/N} Pi^l x_p).
  CVector signature(int delay, double doppler) const {
    const int n = basis_.n();
    const bool gamma = !basis_.chirps().gamma_is_identity();
    CVector g = gamma ? gamma_matrix(basis_.chirps().c1, delay, n).diagonal_entries() : CVector();
    CVector t(n);
    for (int s = 0; s < n; ++s) {
      Complex v = pilot_time_((s - delay + n) % n) * cis(-kTwoPi * doppler * s / n);
      t(s) = gamma ? v * g(s) : v;
    }
    return basis_.daft(t);
  }

  std::vector<EstimatedPath> estimate(const CVector& y, const TraceSink& trace = {}) const {
    if (y.size() != basis_.n()) throw ShapeError("af_estimate_paths: observation length differs from N");
    if (!y.allFinite()) throw NumericalError("af_estimate_paths: non-finite observation");

    std::vector<EstimatedPath> found;
    const double energy = y.squaredNorm();
    if (energy == 0.0) return found;

    std::vector<CVector> atoms;
    CVector residual = y;
    CVector gains;
    const int cells_per_delay = static_cast<int>(dopplers_.size());
    for (int it = 0; it < cfg_.max_paths; ++it) {
      if (residual.squaredNorm() / energy < cfg_.stop_threshold) break;

      std::vector<double> score(bank_.size());
      std::size_t best = 0;
      for (std::size_t c = 0; c < bank_.size(); ++c) {
        score[c] = bank_[c].norm > 0 ? std::abs(bank_[c].atom.dot(residual)) / bank_[c].norm : 0.0;
        if (score[c] > score[best]) best = c;
      }
      int delay = bank_[best].delay;
      double nu = bank_[best].doppler;
      const int col = static_cast<int>(best) % cells_per_delay;
      if (cfg_.refine && col > 0 && col + 1 < cells_per_delay) {
        const double a = score[best - 1], b = score[best], c = score[best + 1];
        const double denom = a - 2.0 * b + c;
        if (denom < 0.0) {
          const double offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
          nu += offset * cfg_.grid.doppler_step;
        }
      }
      atoms.push_back(signature(delay, nu));
      found.push_back({Complex{}, delay, nu});
      gains = joint_fit(atoms, y, residual);
      for (int round = 0; round < cfg_.polish_rounds; ++round) polish(found, atoms, gains, residual, y);
      if (trace) trace({it, delay, found.back().doppler, score[best], residual.squaredNorm() / energy});
    }
    for (std::size_t j = 0; j < found.size(); ++j) found[j].gain = gains(static_cast<Eigen::Index>(j));
    return found;
  }

  /// LS gains of y on the atoms; writes the residual.
  static CVector joint_fit(const std::vector<CVector>& atoms, const CVector& y, CVector& residual) {
    CMatrix dict(y.size(), static_cast<Eigen::Index>(atoms.size()));
    for (std::size_t j = 0; j < atoms.size(); ++j) dict.col(static_cast<Eigen::Index>(j)) = atoms[j];
    CVector g = dict.colPivHouseholderQr().solve(y);
    residual = y - dict * g;
    return g;
  }

  /// One pass of per-path Doppler refinement: each path is re-searched on a
  /// shrinking local grid against the residual with the other paths removed.
  /// A move is kept only if the joint LS residual does not grow.
  void polish(std::vector<EstimatedPath>& found, std::vector<CVector>& atoms, CVector& gains, CVector& residual,
              const CVector& y) const {
    const double lim = cfg_.grid.max_doppler;
    for (std::size_t j = 0; j < found.size(); ++j) {
      const CVector own = residual + gains(static_cast<Eigen::Index>(j)) * atoms[j];
      auto score = [&](double nu) {
        const CVector s = signature(found[j].delay, nu);
        return std::abs(s.dot(own)) / s.norm();
      };
      const double start = found[j].doppler;
      double nu = start, best = score(nu);
      double step = 0.5 * cfg_.grid.doppler_step;
      for (int level = 0; level < 4; ++level, step *= 0.25) {
        for (int u = -4; u <= 4; ++u) {
          const double cand = std::clamp(found[j].doppler + u * step, -lim, lim);
          const double v = score(cand);
          if (v > best) best = v, nu = cand;
        }
        found[j].doppler = nu;
      }
      const CVector before = residual;
      const CVector old_atom = atoms[j];
      const CVector old_gains = gains;
      atoms[j] = signature(found[j].delay, nu);
      gains = joint_fit(atoms, y, residual);
      if (residual.squaredNorm() > before.squaredNorm()) {
        atoms[j] = old_atom;
        gains = old_gains;
        residual = before;
        found[j].doppler = start;
      }
    }
  }

  /// Joint least-squares gains at `k_ref` for fixed (delay, Doppler) support
  /// across several pilot observations, with h~ propagated per symbol.
  CVector fit_gains(std::span<const EstimatedPath> support, std::span<const CVector> observations,
                    std::span<const long long> symbols, long long k_ref, const FrameGeometry& geom) const {
    const Eigen::Index n = basis_.n();
    const auto rows = static_cast<Eigen::Index>(observations.size()) * n;
    CMatrix a(rows, static_cast<Eigen::Index>(support.size()));
    CVector b(rows);
    for (std::size_t o = 0; o < observations.size(); ++o) {
      b.segment(o * n, n) = observations[o];
      for (std::size_t j = 0; j < support.size(); ++j) {
        const double step = symbol_phase_step(support[j].doppler, geom);
        a.block(o * n, j, n, 1) =
            signature(support[j].delay, support[j].doppler) * cis(-step * static_cast<double>(symbols[o] - k_ref));
      }
    }
    return a.colPivHouseholderQr().solve(b);
  }

 private:
  struct Cell {
    int delay;
    double doppler;
    CVector atom;
    double norm;
  };

  AfdmBasis basis_;
  AfEstimatorConfig cfg_;
  CVector pilot_time_;
  std::vector<double> dopplers_;
  std::vector<Cell> bank_;
};

inline std::vector<EstimatedPath> af_estimate_paths(const CVector& y_afd, const CVector& pilot_afd_ref,
                                                    const AfdmBasis& basis, const AfEstimatorConfig& cfg,
                                                    const TraceSink& trace = {}) {
  return AfPathEstimator(basis, pilot_afd_ref, cfg).estimate(y_afd, trace);
}

/// Multi-pilot estimate referenced to symbol k_ref: paths are estimated per
/// pilot, clustered by delay and Doppler proximity, kept when seen on at least
/// half the pilots, given the median Doppler, then gains are re-fit by LS over
/// all pilot observations.
inline std::vector<EstimatedPath> af_estimate_slot_paths(const AfPathEstimator& est,
                                                         std::span<const CVector> pilots_afd,
                                                         std::span<const long long> symbols, long long k_ref,
                                                         const FrameGeometry& geom, const TraceSink& trace = {}) {
  if (pilots_afd.size() != symbols.size() || pilots_afd.empty())
    throw ShapeError("af_estimate_slot_paths: need one symbol index per pilot observation");

  struct Detection {
    std::size_t pilot;
    EstimatedPath path;
  };
  std::vector<Detection> all;
  for (std::size_t p = 0; p < pilots_afd.size(); ++p)
    for (const auto& e : est.estimate(pilots_afd[p], trace)) all.push_back({p, e});
  std::stable_sort(all.begin(), all.end(),
                   [](const Detection& a, const Detection& b) { return std::abs(a.path.gain) > std::abs(b.path.gain); });

  struct Cluster {
    int delay;
    double anchor;
    std::vector<double> dopplers;
    std::vector<bool> seen;
  };
  std::vector<Cluster> clusters;
  const double tol = 2.0 * est.config().grid.doppler_step;
  for (const auto& d : all) {
    auto it = std::find_if(clusters.begin(), clusters.end(), [&](const Cluster& c) {
      return c.delay == d.path.delay && !c.seen[d.pilot] && std::abs(c.anchor - d.path.doppler) <= tol;
    });
    if (it == clusters.end()) {
      clusters.push_back({d.path.delay, d.path.doppler, {}, std::vector<bool>(pilots_afd.size(), false)});
      it = std::prev(clusters.end());
    }
    it->dopplers.push_back(d.path.doppler);
    it->seen[d.pilot] = true;
  }

  const std::size_t quorum = (pilots_afd.size() + 1) / 2;
  std::vector<EstimatedPath> support;
  for (auto& c : clusters) {
    if (c.dopplers.size() < quorum) continue;
    auto mid = c.dopplers.begin() + static_cast<std::ptrdiff_t>(c.dopplers.size() / 2);
    std::nth_element(c.dopplers.begin(), mid, c.dopplers.end());
    double median = *mid;
    if (c.dopplers.size() % 2 == 0) {
      const double lower = *std::max_element(c.dopplers.begin(), mid);
      median = 0.5 * (median + lower);
    }
    support.push_back({Complex{}, c.delay, median});
    if (static_cast<int>(support.size()) == est.config().max_paths) break;
  }
  if (support.empty()) return support;

  const CVector gains = est.fit_gains(support, pilots_afd, symbols, k_ref, geom);
  for (std::size_t j = 0; j < support.size(); ++j) support[j].gain = gains(static_cast<Eigen::Index>(j));
  return support;
}

/// Propagates each path gain from k_ref with exp(-j 2 pi nu (N + L)(k - k_ref) / N),
/// builds H_AFD,k and maps it to the TF domain through T^H H T.
inline CsiEstimate reconstruct_csi(std::span<const EstimatedPath> paths, long long k_ref,
                                   std::span<const long long> targets, const FrameGeometry& geom,
                                   const AfdmBasis& basis) {
  if (paths.empty()) throw ShapeError("reconstruct_csi: empty path list");
  const int n = geom.n;
  const CMatrix& t = basis.transform();
  CsiEstimate out;
  out.provenance = CsiProvenance::af_parametric;
  for (long long k : targets) {
    CMatrix g = CMatrix::Zero(n, n);
    for (const auto& p : paths) {
      if (p.delay < 0 || p.delay >= n) throw ShapeError("reconstruct_csi: delay out of range");
      const Complex gain = p.gain * cis(-symbol_phase_step(p.doppler, geom) * static_cast<double>(k - k_ref));
      for (int s = 0; s < n; ++s) g(s, (s - p.delay + n) % n) += gain * cis(-kTwoPi * p.doppler * s / n);
    }
    const ChannelSnapshot afd{Domain::af, k, basis.to_affine(g), false};
    out.snapshots.push_back(fd_from_afd(afd, t));
  }
  return out;
}

/// One-tap LS: H[m, m] = Y[m] / X[m], zero off-diagonal.
inline ChannelSnapshot tf_ls_estimate(const CVector& received_fd, const CVector& pilot_fd, long long symbol = 0) {
  if (received_fd.size() != pilot_fd.size()) throw ShapeError("tf_ls_estimate: length mismatch");
  for (Eigen::Index m = 0; m < pilot_fd.size(); ++m)
    if (pilot_fd(m) == Complex{}) throw ShapeError("tf_ls_estimate: pilot has a zero subcarrier");
  CVector diag = received_fd.cwiseQuotient(pilot_fd);
  return {Domain::tf, symbol, diag.asDiagonal(), false};
}

/// Entrywise linear interpolation in the symbol index between the bracketing
/// estimates; outside the pilot span the nearest estimate is held.
inline CsiEstimate interpolate_csi(std::span<const ChannelSnapshot> estimates, std::span<const long long> targets,
                                   CsiProvenance provenance = CsiProvenance::tf_ls_interp) {
  if (estimates.empty()) throw ShapeError("interpolate_csi: no pilot estimates");
  std::vector<const ChannelSnapshot*> sorted;
  for (const auto& e : estimates) sorted.push_back(&e);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->symbol < b->symbol; });

  CsiEstimate out;
  out.provenance = provenance;
  for (long long k : targets) {
    ChannelSnapshot s{Domain::tf, k, {}, false};
    if (k <= sorted.front()->symbol) {
      s.h = sorted.front()->h;
    } else if (k >= sorted.back()->symbol) {
      s.h = sorted.back()->h;
    } else {
      std::size_t hi = 1;
      while (sorted[hi]->symbol < k) ++hi;
      const auto* a = sorted[hi - 1];
      const auto* b = sorted[hi];
      const double w = static_cast<double>(k - a->symbol) / static_cast<double>(b->symbol - a->symbol);
      s.h = (1.0 - w) * a->h + w * b->h;
    }
    out.snapshots.push_back(std::move(s));
  }
  return out;
}

/// CP-correlation Doppler estimate in Hz:
///   f = angle(sum_k sum_{n in CP(k)} y[n] conj(y[n + N])) / (2 pi N t_s),
/// signed like the channel Doppler, so exp(+j 2 pi f n t_s) removes it.
inline double cp_doppler_estimate(const SlotGrid& slot, const FrameGeometry& geom) {
  if (!slot.cp_attached) throw ShapeError("cp_doppler_estimate: slot must carry its cyclic prefix");
  if (geom.cp < 1) throw ShapeError("cp_doppler_estimate: CP length must be >= 1");
  Complex acc{};
  double energy = 0.0;
  for (const auto& b : slot.blocks) {
    for (int i = 0; i < geom.cp; ++i) {
      acc += b.samples(i) * std::conj(b.samples(i + geom.n));
      energy += std::norm(b.samples(i));
    }
  }
  if (energy == 0.0) throw NumericalError("cp_doppler_estimate: zero-energy input");
  return std::arg(acc) / (kTwoPi * geom.n * geom.sample_period());
}

/// Multiplies slot sample t (absolute, counted from the first CP sample) by exp(+j 2 pi f t t_s).
inline SlotGrid cp_doppler_compensate(SlotGrid slot, double f_hz, const FrameGeometry& geom) {
  if (!std::isfinite(f_hz)) throw NumericalError("cp_doppler_compensate: non-finite frequency");
  const int block = geom.block_length();
  const int offset = slot.cp_attached ? 0 : geom.cp;
  for (std::size_t b = 0; b < slot.blocks.size(); ++b) {
    auto& s = slot.blocks[b].samples;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double t = static_cast<double>(static_cast<long long>(b) * block + offset + i);
      s(i) *= cis(kTwoPi * f_hz * t * geom.sample_period());
    }
  }
  return slot;
}

}  // namespace afpilot
