#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <utility>

#include "afpilot/geometry.hpp"

namespace afpilot {

enum class MatrixKind { dft, chirp_diagonal, doppler_diagonal, cyclic_permutation, gamma_diagonal, general };

/// N x N matrix with compact storage for the diagonal and permutation kinds.
/// Oracles and products go through materialize().
class StructuredMatrix {
 public:
  static StructuredMatrix diagonal(MatrixKind kind, CVector diag) {
    StructuredMatrix m;
    m.kind_ = kind;
    m.size_ = diag.size();
    m.diag_ = std::move(diag);
    return m;
  }

  static StructuredMatrix permutation(int shift, Eigen::Index n) {
    StructuredMatrix m;
    m.kind_ = MatrixKind::cyclic_permutation;
    m.size_ = n;
    m.shift_ = shift;
    return m;
  }

  static StructuredMatrix dense(MatrixKind kind, CMatrix entries) {
    StructuredMatrix m;
    m.kind_ = kind;
    m.size_ = entries.rows();
    m.dense_ = std::move(entries);
    return m;
  }

  MatrixKind kind() const { return kind_; }
  Eigen::Index size() const { return size_; }
  bool is_diagonal() const {
    return kind_ == MatrixKind::chirp_diagonal || kind_ == MatrixKind::doppler_diagonal ||
           kind_ == MatrixKind::gamma_diagonal;
  }
  const CVector& diagonal_entries() const { return diag_; }
  int shift() const { return shift_; }

  CMatrix materialize() const {
    if (is_diagonal()) return diag_.asDiagonal();
    if (kind_ == MatrixKind::cyclic_permutation) {
      CMatrix p = CMatrix::Zero(size_, size_);
      for (Eigen::Index n = 0; n < size_; ++n) p(n, (n - shift_ + size_) % size_) = 1.0;
      return p;
    }
    return dense_;
  }

  CVector apply(const CVector& x) const {
    if (x.size() != size_) throw ShapeError("StructuredMatrix::apply: length mismatch");
    if (is_diagonal()) return diag_.cwiseProduct(x);
    if (kind_ == MatrixKind::cyclic_permutation) {
      CVector y(size_);
      for (Eigen::Index n = 0; n < size_; ++n) y(n) = x((n - shift_ + size_) % size_);
      return y;
    }
    return dense_ * x;
  }

 private:
  MatrixKind kind_ = MatrixKind::general;
  Eigen::Index size_ = 0;
  CVector diag_;
  CMatrix dense_;
  int shift_ = 0;
};

/// Chirp parameters of the affine Fourier transform.
struct ChirpParams {
  double c1 = 0.0;
  double c2 = 0.0;
  int n = 64;

  /// True when 2 N c1 is an integer and N is even, i.e. every Gamma_i is I.
  bool gamma_is_identity() const {
    const double twice = 2.0 * n * c1;
    return n % 2 == 0 && std::abs(twice - std::round(twice)) < 1e-9;
  }
};

inline StructuredMatrix dft_matrix(int n) {
  if (n < 2) throw ShapeError("dft_matrix: N must be >= 2");
  CMatrix f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k) {
      // reduce m*k mod N first so the phase argument stays small
      const long long mk = (static_cast<long long>(m) * k) % n;
      f(m, k) = scale * cis(-kTwoPi * static_cast<double>(mk) / n);
    }
  return StructuredMatrix::dense(MatrixKind::dft, std::move(f));
}

/// Lambda_c = diag(exp(-j 2 pi c n^2)).
inline StructuredMatrix chirp_matrix(double c, int n) {
  if (!std::isfinite(c)) throw ShapeError("chirp_matrix: non-finite chirp rate");
  CVector d(n);
  for (int k = 0; k < n; ++k) d(k) = cis(-kTwoPi * c * static_cast<double>(k) * k);
  return StructuredMatrix::diagonal(MatrixKind::chirp_diagonal, std::move(d));
}

/// Delta_f = diag(exp(-j 2 pi f n)), f in cycles per sample.
inline StructuredMatrix doppler_matrix(double f, int n) {
  if (!(std::abs(f) < 0.5)) throw ShapeError("doppler_matrix: |f| must be < 0.5 (aliased Doppler)");
  CVector d(n);
  for (int k = 0; k < n; ++k) d(k) = cis(-kTwoPi * f * k);
  return StructuredMatrix::diagonal(MatrixKind::doppler_diagonal, std::move(d));
}

/// (Pi^l x)[n] = x[(n - l) mod N]
inline StructuredMatrix cyclic_shift_matrix(int l, int n) {
  if (l < 0 || l >= n) throw ShapeError("cyclic_shift_matrix: shift must lie in [0, N)");
  return StructuredMatrix::permutation(l, n);
}

inline StructuredMatrix gamma_matrix(double c1, int l, int n) {
  if (l < 0 || l >= n) throw ShapeError("gamma_matrix: delay must lie in [0, N)");
  CVector d = CVector::Ones(n);
  const double nn = n;
  for (int k = 0; k < l; ++k) {
    const double turns = c1 * (nn * nn - 2.0 * nn * (l - k));
    d(k) = cis(-kTwoPi * (turns - std::floor(turns)));
  }
  return StructuredMatrix::diagonal(MatrixKind::gamma_diagonal, std::move(d));
}

/// c1 = (2 (alpha_max + k_v) + 1) / (2N).
inline double c1_rule(int alpha_max, int k_v, int n) {
  if (n % 2 != 0) throw ConfigError("c1_rule: N must be even");
  if (alpha_max < 0 || k_v < 0) throw ConfigError("c1_rule: alpha_max and k_v must be non-negative");
  return (2.0 * (alpha_max + k_v) + 1.0) / (2.0 * n);
}

/// Snapshot of a per-symbol channel matrix in a tagged domain.
struct ChannelSnapshot {
  Domain domain = Domain::tf;
  long long symbol = 0;
  CMatrix h;
  // Set when the AF matrix had to carry explicit Gamma_i factors.
  bool explicit_gamma = false;
};

/// Precomputed F, Lambda_c1, Lambda_c2 and T = Lambda_c2 F Lambda_c1 F^H for
/// one chirp configuration. All per-symbol work in the simulator goes through this.
class AfdmBasis {
 public:
  explicit AfdmBasis(const ChirpParams& chirps)
      : chirps_(chirps),
        f_(dft_matrix(chirps.n).materialize()),
        lambda1_(chirp_matrix(chirps.c1, chirps.n).diagonal_entries()),
        lambda2_(chirp_matrix(chirps.c2, chirps.n).diagonal_entries()) {
    CMatrix t = lambda2_.asDiagonal() * f_;
    t = t * lambda1_.asDiagonal();
    t_ = t * f_.adjoint();
  }

  const ChirpParams& chirps() const { return chirps_; }
  int n() const { return chirps_.n; }
  const CMatrix& dft() const { return f_; }
  const CVector& lambda_c1() const { return lambda1_; }
  const CVector& lambda_c2() const { return lambda2_; }
  const CMatrix& transform() const { return t_; }

  CVector fft(const CVector& x) const { return f_ * x; }
  CVector ifft(const CVector& x) const { return f_.adjoint() * x; }

  /// Forward DAFT: Lambda_c2 F Lambda_c1 x.
  CVector daft(const CVector& x) const {
    return lambda2_.cwiseProduct(f_ * lambda1_.cwiseProduct(x));
  }
  /// Inverse DAFT: Lambda_c1^H F^H Lambda_c2^H x.
  CVector idaft(const CVector& x) const {
    return lambda1_.conjugate().cwiseProduct(f_.adjoint() * lambda2_.conjugate().cwiseProduct(x));
  }

  /// F G F^H for a time-domain (post-CP) channel matrix G.
  CMatrix to_frequency(const CMatrix& g) const { return f_ * g * f_.adjoint(); }

  /// Lambda_c2 F Lambda_c1 G Lambda_c1^H F^H Lambda_c2^H.
  CMatrix to_affine(const CMatrix& g) const {
    CMatrix inner = lambda1_.asDiagonal() * g * lambda1_.conjugate().asDiagonal();
    CMatrix outer = f_ * inner * f_.adjoint();
    return lambda2_.asDiagonal() * outer * lambda2_.conjugate().asDiagonal();
  }

 private:
  ChirpParams chirps_;
  CMatrix f_;
  CVector lambda1_;
  CVector lambda2_;
  CMatrix t_;
};

inline StructuredMatrix transform_T(const ChirpParams& chirps) {
  return StructuredMatrix::dense(MatrixKind::general, AfdmBasis(chirps).transform());
}

namespace detail {

inline void check_paths(const PathSet& paths, const FrameGeometry& geom) {
  for (const auto& p : paths.paths) {
    if (p.delay < 0 || p.delay > geom.cp)
      throw ShapeError("channel: path delay exceeds the cyclic prefix");
    if (p.delay >= geom.n) throw ShapeError("channel: path delay must be < N");
    if (!(std::abs(p.doppler) < geom.n / 2.0))
      throw ShapeError("channel: |doppler| must be < N/2");
  }
}

}  // namespace detail

/// Time-domain post-CP channel matrix of symbol k: sum_i h~_{i,k} Delta_{f_i} Pi^{l_i}.
/// Entry (n, n - l mod N) collects the path that maps input sample n - l to output n.
inline CMatrix time_domain_channel(const PathSet& paths, long long k, const FrameGeometry& geom) {
  detail::check_paths(paths, geom);
  const int n = geom.n;
  CMatrix g = CMatrix::Zero(n, n);
  for (const auto& p : paths.paths) {
    const Complex gain = time_varying_gain(p, k, geom);
    for (int s = 0; s < n; ++s)
      g(s, (s - p.delay + n) % n) += gain * cis(-kTwoPi * p.doppler * s / n);
  }
  return g;
}

/// H_FD,k = sum_i h~_{i,k} F Delta_{f_i} Pi^{l_i} F^H with f_i = nu_i / N.
inline ChannelSnapshot build_fd_channel(const PathSet& paths, long long k, const FrameGeometry& geom,
                                        const AfdmBasis& basis) {
  return {Domain::tf, k, basis.to_frequency(time_domain_channel(paths, k, geom)), false};
}

inline ChannelSnapshot build_fd_channel(const PathSet& paths, long long k, const FrameGeometry& geom) {
  return build_fd_channel(paths, k, geom, AfdmBasis(ChirpParams{0.0, 0.0, geom.n}));
}

/// AF-domain channel matrix. Uses the Gamma-free form when 2 N c1 is an
/// integer and N is even; otherwise carries explicit Gamma_i per path and
/// sets explicit_gamma on the result.
inline ChannelSnapshot build_afd_channel(const PathSet& paths, long long k, const FrameGeometry& geom,
                                         const AfdmBasis& basis) {
  if (basis.n() != geom.n) throw ShapeError("build_afd_channel: chirp N differs from geometry N");
  if (basis.chirps().gamma_is_identity())
    return {Domain::af, k, basis.to_affine(time_domain_channel(paths, k, geom)), false};

  detail::check_paths(paths, geom);
  const int n = geom.n;
  CMatrix g = CMatrix::Zero(n, n);
  for (const auto& p : paths.paths) {
    const Complex gain = time_varying_gain(p, k, geom);
    const CVector gamma = gamma_matrix(basis.chirps().c1, p.delay, n).diagonal_entries();
    for (int s = 0; s < n; ++s)
      g(s, (s - p.delay + n) % n) += gain * gamma(s) * cis(-kTwoPi * p.doppler * s / n);
  }
  return {Domain::af, k, basis.to_affine(g), true};
}

inline ChannelSnapshot build_afd_channel(const PathSet& paths, long long k, const FrameGeometry& geom,
                                         const ChirpParams& chirps) {
  return build_afd_channel(paths, k, geom, AfdmBasis(chirps));
}

/// T^H H_AFD T
inline ChannelSnapshot fd_from_afd(const ChannelSnapshot& afd, const CMatrix& t) {
  if (afd.domain != Domain::af) throw ShapeError("fd_from_afd: snapshot is not in the AF domain");
  if (afd.h.rows() != t.rows()) throw ShapeError("fd_from_afd: dimension mismatch");
  return {Domain::tf, afd.symbol, t.adjoint() * afd.h * t, afd.explicit_gamma};
}

/// T H_FD T^H
inline ChannelSnapshot afd_from_fd(const ChannelSnapshot& fd, const CMatrix& t) {
  if (fd.domain != Domain::tf) throw ShapeError("afd_from_fd: snapshot is not in the TF domain");
  if (fd.h.rows() != t.rows()) throw ShapeError("afd_from_fd: dimension mismatch");
  return {Domain::af, fd.symbol, t * fd.h * t.adjoint(), fd.explicit_gamma};
}

/// Debug dump: header line, then one row per matrix row with re,im interleaved.
inline void write_snapshot_csv(std::ostream& os, const ChannelSnapshot& s) {
  os << "# domain=" << to_string(s.domain) << " symbol=" << s.symbol << " rows=" << s.h.rows()
     << " cols=" << s.h.cols() << '\n';
  os << std::setprecision(17);
  for (Eigen::Index r = 0; r < s.h.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.h.cols(); ++c) {
      if (c) os << ',';
      os << s.h(r, c).real() << ',' << s.h(r, c).imag();
    }
    os << '\n';
  }
}

}  // namespace afpilot
