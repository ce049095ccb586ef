#pragma once

#include <span>
#include <vector>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "afpilot/geometry.hpp"
#include "afpilot/transforms.hpp"

namespace afpilot {

/// Ordered received-pilot vectors y_k, k = first, first + 1, ...
struct PilotSeries {
  std::vector<CVector> entries;
  long long first = 0;
  Domain domain = Domain::af;

  std::size_t size() const { return entries.size(); }
  const CVector& operator[](std::size_t i) const { return entries[i]; }
};

/// y_{k+P} = sum_j gamma_j y_{k+j}
struct ArModel {
  std::vector<Complex> coeffs;  // gamma_0 .. gamma_{P-1}

  int order() const { return static_cast<int>(coeffs.size()); }
};

struct StabilityReport {
  std::vector<Complex> roots;
  double max_modulus = 0.0;
  bool stable = true;
};

inline constexpr double kStabilityTolerance = 1e-9;

/// Expands prod_i (z - exp(-j theta_i)) = z^P + beta_{P-1} z^{P-1} + ... + beta_0
/// and returns gamma_j = -beta_j, with theta_i = 2 pi nu_i (N + L) / N.
inline ArModel exact_ar_coeffs(std::span<const double> dopplers, const FrameGeometry& geom) {
  if (dopplers.empty()) throw ShapeError("exact_ar_coeffs: at least one Doppler is required");
  std::vector<Complex> roots;
  for (double nu : dopplers) {
    const Complex r = cis(-symbol_phase_step(nu, geom));
    for (const auto& other : roots)
      if (std::abs(r - other) < 1e-9)
        throw NumericalError("exact_ar_coeffs: repeated characteristic root (theta equal mod 2 pi)");
    roots.push_back(r);
  }
  // poly[j] is the coefficient of z^j; start from the constant 1.
  std::vector<Complex> poly{Complex(1.0, 0.0)};
  for (const auto& r : roots) {
    std::vector<Complex> next(poly.size() + 1, Complex{});
    for (std::size_t j = 0; j < poly.size(); ++j) {
      next[j + 1] += poly[j];
      next[j] -= r * poly[j];
    }
    poly = std::move(next);
  }
  ArModel model;
  for (std::size_t j = 0; j + 1 < poly.size(); ++j) model.coeffs.push_back(-poly[j]);
  return model;
}

/// max_k ||y_{k+P} - sum_j gamma_j y_{k+j}|| / ||y_{k+P}||
inline double ar_residual(const PilotSeries& series, const ArModel& model) {
  const auto p = static_cast<std::size_t>(model.order());
  if (p == 0 || series.size() < p + 1) throw ShapeError("ar_residual: series shorter than order + 1");
  double worst = 0.0;
  for (std::size_t k = 0; k + p < series.size(); ++k) {
    CVector pred = CVector::Zero(series[k].size());
    for (std::size_t j = 0; j < p; ++j) pred += model.coeffs[j] * series[k + j];
    const double ref = series[k + p].norm();
    const double err = (series[k + p] - pred).norm();
    worst = std::max(worst, ref > 0.0 ? err / ref : err);
  }
  return worst;
}

/// Least-squares AR fit of the given order. Every length-(order + 1) window of
/// the history contributes N equations; with exactly order + 1 entries this is
/// gamma = (Y^H Y)^{-1} Y^H y_{k+P}, Y = [y_k ... y_{k+P-1}].
inline ArModel ls_ar_fit(const PilotSeries& history, int order) {
  if (order < 1) throw ShapeError("ls_ar_fit: order must be >= 1");
  const auto p = static_cast<std::size_t>(order);
  if (history.size() < p + 1)
    throw ShapeError("ls_ar_fit: history must hold at least order + 1 observations");
  const Eigen::Index n = history[0].size();
  const auto windows = static_cast<Eigen::Index>(history.size() - p);
  CMatrix y(windows * n, order);
  CVector target(windows * n);
  for (Eigen::Index w = 0; w < windows; ++w) {
    for (std::size_t j = 0; j < p; ++j) y.block(w * n, j, n, 1) = history[w + j];
    target.segment(w * n, n) = history[w + p];
  }
  Eigen::ColPivHouseholderQR<CMatrix> qr(y);
  if (qr.rank() < order) throw NumericalError("ls_ar_fit: regressor matrix is rank deficient");
  const CVector gamma = qr.solve(target);
  ArModel model;
  for (Eigen::Index j = 0; j < order; ++j) model.coeffs.push_back(gamma(j));
  return model;
}

/// Iterates the recurrence `horizon` steps past the last P history entries,
/// feeding predictions back.
inline std::vector<CVector> ar_predict(std::span<const CVector> history, const ArModel& model, int horizon) {
  const auto p = static_cast<std::size_t>(model.order());
  if (history.size() != p) throw ShapeError("ar_predict: history length must equal the model order");
  std::vector<CVector> window(history.begin(), history.end());
  std::vector<CVector> out;
  for (int m = 0; m < horizon; ++m) {
    CVector next = CVector::Zero(window.front().size());
    for (std::size_t j = 0; j < p; ++j) next += model.coeffs[j] * window[window.size() - p + j];
    window.push_back(next);
    out.push_back(std::move(next));
  }
  return out;
}

/// Roots of z^P - sum_j gamma_j z^j from the companion matrix.
inline StabilityReport stability_check(const ArModel& model) {
  const int p = model.order();
  if (p < 1) throw ShapeError("stability_check: empty model");
  CMatrix companion = CMatrix::Zero(p, p);
  for (int j = 0; j < p; ++j) companion(0, j) = model.coeffs[static_cast<std::size_t>(p - 1 - j)];
  for (int i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
  Eigen::ComplexEigenSolver<CMatrix> solver(companion, false);
  if (solver.info() != Eigen::Success) throw NumericalError("stability_check: root finder did not converge");
  StabilityReport rep;
  for (int i = 0; i < p; ++i) {
    rep.roots.push_back(solver.eigenvalues()(i));
    rep.max_modulus = std::max(rep.max_modulus, std::abs(solver.eigenvalues()(i)));
  }
  rep.stable = rep.max_modulus <= 1.0 + kStabilityTolerance;
  return rep;
}

/// Recurrence residual on channel matrices: max_k ||H_{k+P} - sum_j gamma_j H_{k+j}||_F / ||H_{k+P}||_F.
inline double channel_ar_check(std::span<const ChannelSnapshot> snapshots, const ArModel& model) {
  const auto p = static_cast<std::size_t>(model.order());
  if (p == 0 || snapshots.size() < p + 1) throw ShapeError("channel_ar_check: need at least order + 1 snapshots");
  double worst = 0.0;
  for (std::size_t k = 0; k + p < snapshots.size(); ++k) {
    const CMatrix& target = snapshots[k + p].h;
    CMatrix pred = CMatrix::Zero(target.rows(), target.cols());
    for (std::size_t j = 0; j < p; ++j) {
      if (snapshots[k + j].h.rows() != target.rows()) throw ShapeError("channel_ar_check: dimension mismatch");
      pred += model.coeffs[j] * snapshots[k + j].h;
    }
    worst = std::max(worst, relative_error(pred, target));
  }
  return worst;
}

inline nlohmann::json to_json(const StabilityReport& rep) {
  nlohmann::json roots = nlohmann::json::array();
  for (const auto& r : rep.roots) roots.push_back({{"re", r.real()}, {"im", r.imag()}, {"modulus", std::abs(r)}});
  return {{"roots", roots}, {"max_modulus", rep.max_modulus}, {"stable", rep.stable}};
}

inline nlohmann::json to_json(const ArModel& model) {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& g : model.coeffs) c.push_back({{"re", g.real()}, {"im", g.imag()}});
  return {{"order", model.order()}, {"coefficients", c}};
}

}  // namespace afpilot
