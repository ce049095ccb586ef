#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "afpilot/ar.hpp"
#include "afpilot/channel.hpp"
#include "afpilot/config.hpp"
#include "afpilot/detection.hpp"
#include "afpilot/estimation.hpp"
#include "afpilot/framing.hpp"
#include "afpilot/lstm.hpp"

namespace afpilot {

/// Runs fn(begin, end) over `count` items split into contiguous chunks, one
/// per worker. Results must not depend on the split.
inline void parallel_chunks(long long count, int workers, const std::function<void(long long, long long, int)>& fn) {
  workers = std::max(1, workers);
  if (workers == 1 || count <= 1) {
    fn(0, count, 0);
    return;
  }
  const long long chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const long long b = w * chunk, e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e, w] {
      try {
        fn(b, e, w);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct SlotRealization {
  PathSet paths;
  std::vector<std::uint8_t> bits;  // data_count * N * 2
  SlotGrid rx;                     // received, CP attached
  double noise_variance = 0.0;
};

/// Per-data-symbol received FD vectors and the CSI used to equalize them.
struct DataCsi {
  std::vector<CVector> received;
  std::vector<ChannelSnapshot> channel;
};

struct PredictorSet {
  std::optional<PredictorParams> af;
  std::optional<PredictorParams> tf;
};

/// Immutable per-configuration state shared by all slots.
class LinkSimulator {
 public:
  explicit LinkSimulator(const ExperimentConfig& cfg, PredictorSet models = {})
      : cfg_(cfg),
        basis_(cfg.chirps()),
        pilot_time_(make_pilot_symbol(basis_.chirps())),
        pilot_fd_(basis_.fft(pilot_time_)),
        pilot_af_(basis_.daft(pilot_time_)),
        estimator_(basis_, pilot_af_, cfg.estimator),
        models_(std::move(models)) {
    cfg_.validate();
    if (models_.af) check_model(*models_.af, Domain::af);
    if (models_.tf) check_model(*models_.tf, Domain::tf);
  }

  const ExperimentConfig& config() const { return cfg_; }
  const AfdmBasis& basis() const { return basis_; }
  const AfPathEstimator& estimator() const { return estimator_; }
  const CVector& pilot_fd() const { return pilot_fd_; }
  const CVector& pilot_af() const { return pilot_af_; }
  const PredictorSet& models() const { return models_; }

  /// Draws bits, paths and noise from one slot seed. Scheme-independent, so
  /// every scheme sees the same realization.
  SlotRealization realize(std::uint64_t slot_seed, double snr_db) const {
    const auto& g = cfg_.geometry;
    Rng rng(slot_seed);
    SlotRealization r;
    r.bits.resize(static_cast<std::size_t>(cfg_.ratio.data_count) * g.n * 2);
    for (std::size_t i = 0; i < r.bits.size(); i += 64) {
      const std::uint64_t word = rng();
      for (std::size_t b = 0; b < 64 && i + b < r.bits.size(); ++b) r.bits[i + b] = (word >> b) & 1U;
    }
    r.paths = sample_paths(cfg_.channel.pdp_db, cfg_.channel.delays, cfg_.channel.doppler_max, rng);
    const NoiseSpec noise{snr_db, rng()};
    r.noise_variance = noise.variance();
    const SlotGrid tx = add_cp(build_slot(r.bits, g, cfg_.ratio, basis_));
    r.rx = add_awgn(apply_channel(tx, r.paths, g), noise);
    return r;
  }

  DataCsi estimate(const SlotRealization& r, Scheme scheme) const {
    const int q = cfg_.ratio.pilot_count, m = cfg_.ratio.data_count;
    const auto& g = cfg_.geometry;
    std::vector<long long> pilot_idx(static_cast<std::size_t>(q)), data_idx(static_cast<std::size_t>(m));
    for (int k = 0; k < q; ++k) pilot_idx[static_cast<std::size_t>(k)] = k;
    for (int k = 0; k < m; ++k) data_idx[static_cast<std::size_t>(k)] = q + k;

    const bool compensate = scheme == Scheme::tf_interp || scheme == Scheme::af_interp;
    SlotGrid rx = compensate ? cp_doppler_compensate(r.rx, cp_doppler_estimate(r.rx, g), g) : r.rx;
    rx = remove_cp(std::move(rx));

    DataCsi out;
    for (long long k : data_idx) out.received.push_back(basis_.fft(rx.blocks[static_cast<std::size_t>(k)].samples));

    switch (scheme) {
      case Scheme::perfect:
        for (long long k : data_idx) out.channel.push_back(build_fd_channel(r.paths, k, g, basis_));
        break;
      case Scheme::tf_interp: {
        std::vector<ChannelSnapshot> est;
        for (long long k : pilot_idx)
          est.push_back(tf_ls_estimate(basis_.fft(rx.blocks[static_cast<std::size_t>(k)].samples), pilot_fd_, k));
        out.channel = interpolate_csi(est, data_idx).snapshots;
        break;
      }
      case Scheme::af_interp: {
        const auto pilots = pilot_observations(rx, Domain::af);
        const auto paths = af_estimate_slot_paths(estimator_, pilots, pilot_idx, q - 1, g);
        if (paths.empty()) {
          for (long long k : data_idx) out.channel.push_back(zero_snapshot(k));
          break;
        }
        const auto at_pilots = reconstruct_csi(paths, q - 1, pilot_idx, g, basis_);
        out.channel = interpolate_csi(at_pilots.snapshots, data_idx, CsiProvenance::af_parametric).snapshots;
        break;
      }
      case Scheme::tf_lstm: {
        const auto& model = require(models_.tf, "tf-lstm");
        const auto virt = predict_virtual_pilots(model, pilot_observations(rx, Domain::tf));
        for (std::size_t i = 0; i < virt.size(); ++i) out.channel.push_back(tf_ls_estimate(virt[i], pilot_fd_, data_idx[i]));
        break;
      }
      case Scheme::af_lstm: {
        const auto& model = require(models_.af, "af-lstm");
        const auto pilots = pilot_observations(rx, Domain::af);
        const auto virt = predict_virtual_pilots(model, pilots);
        std::vector<EstimatedPath> support;
        if (cfg_.virtual_support == VirtualSupport::pilot)
          support = af_estimate_slot_paths(estimator_, pilots, pilot_idx, q - 1, g);
        for (std::size_t i = 0; i < virt.size(); ++i) {
          const long long k = data_idx[i];
          std::vector<EstimatedPath> paths = support;
          if (paths.empty()) {
            paths = estimator_.estimate(virt[i]);
          } else {
            const std::vector<CVector> obs{virt[i]};
            const std::vector<long long> sym{k};
            const CVector gains = estimator_.fit_gains(paths, obs, sym, k, g);
            for (std::size_t j = 0; j < paths.size(); ++j) paths[j].gain = gains(static_cast<Eigen::Index>(j));
          }
          if (paths.empty()) {
            out.channel.push_back(zero_snapshot(k));
            continue;
          }
          const std::vector<long long> target{k};
          out.channel.push_back(reconstruct_csi(paths, k, target, g, basis_).snapshots.front());
        }
        break;
      }
    }
    return out;
  }

  /// Estimates, equalizes and demaps every data symbol of the slot.
  void run_slot(const SlotRealization& r, Scheme scheme, BerRecord& rec) const {
    const DataCsi csi = estimate(r, scheme);
    const EqualizerConfig eq{cfg_.equalizer, r.noise_variance};
    const auto per_block = static_cast<std::size_t>(cfg_.geometry.n) * 2;
    for (std::size_t d = 0; d < csi.received.size(); ++d) {
      const auto decided = demap(equalize(csi.received[d], csi.channel[d], eq));
      tally(std::span(r.bits).subspan(d * per_block, per_block), decided, rec);
    }
    ++rec.slots;
  }

  /// DAFT (af) or FFT (tf) of the CP-free pilot blocks.
  std::vector<CVector> pilot_observations(const SlotGrid& rx, Domain domain) const {
    if (rx.cp_attached) throw ShapeError("pilot_observations: expected a CP-free slot");
    std::vector<CVector> out;
    for (const auto& b : rx.blocks)
      if (b.role == SymbolRole::pilot) out.push_back(domain == Domain::af ? basis_.daft(b.samples) : basis_.fft(b.samples));
    return out;
  }

 private:
  ChannelSnapshot zero_snapshot(long long k) const {
    return {Domain::tf, k, CMatrix::Zero(cfg_.geometry.n, cfg_.geometry.n), false};
  }

  static const PredictorParams& require(const std::optional<PredictorParams>& m, const char* scheme) {
    if (!m) throw ConfigError(std::string("scheme ") + scheme + " needs a trained model");
    return *m;
  }

  void check_model(const PredictorParams& p, Domain expect) const {
    p.validate();
    if (p.meta.domain != expect)
      throw ShapeError(std::string("model domain is ") + to_string(p.meta.domain) + ", expected " + to_string(expect));
    if (p.meta.q != cfg_.ratio.pilot_count || p.meta.m != cfg_.ratio.data_count || p.meta.n != cfg_.geometry.n)
      throw ShapeError("model (Q, M, N) = (" + std::to_string(p.meta.q) + ", " + std::to_string(p.meta.m) + ", " +
                       std::to_string(p.meta.n) + ") does not match the configured slot");
  }

  ExperimentConfig cfg_;
  AfdmBasis basis_;
  CVector pilot_time_;
  CVector pilot_fd_;
  CVector pilot_af_;
  AfPathEstimator estimator_;
  PredictorSet models_;
};

// ---------------------------------------------------------------------------
// Training data

/// Q noisy observed pilots and M target pilots per example, from an all-pilot
/// slot of Q + M symbols with no Doppler compensation. Rejects Q < P.
inline TrainingSet generate_training_set(const ExperimentConfig& cfg, Domain domain, int count, bool clean_targets,
                                         std::uint64_t seed, int workers = 1) {
  cfg.validate();
  if (count < 1) throw ConfigError("gen-dataset: count must be >= 1");
  const int q = cfg.ratio.pilot_count, m = cfg.ratio.data_count;
  if (q < cfg.channel.path_count())
    throw ConfigError("gen-dataset: Q = " + std::to_string(q) + " observed pilots is fewer than the " +
                      std::to_string(cfg.channel.path_count()) + " channel paths");
  if (m < 1) throw ConfigError("gen-dataset: at least one target symbol is required");

  const auto& g = cfg.geometry;
  const AfdmBasis basis(cfg.chirps());
  const RatioConfig all_pilot{q + m, 0};
  const SlotGrid tx = add_cp(build_slot(std::vector<std::uint8_t>{}, g, all_pilot, basis));
  const double snr_lo = cfg.predictor.train_snr_db, snr_hi = std::max(snr_lo, cfg.predictor.train_snr_max_db);

  TrainingSet set;
  set.q = q;
  set.m = m;
  set.n = g.n;
  set.domain = domain;
  set.snr_db = snr_lo;
  set.seed = seed;
  set.clean_targets = clean_targets;
  set.examples.resize(static_cast<std::size_t>(count));

  auto transform = [&](const CVector& x) { return domain == Domain::af ? basis.daft(x) : basis.fft(x); };
  parallel_chunks(count, workers, [&](long long b, long long e, int) {
    for (long long i = b; i < e; ++i) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      const PathSet paths = sample_paths(cfg.channel.pdp_db, cfg.channel.delays, cfg.channel.doppler_max, rng);
      double snr = snr_lo;
      if (snr_hi > snr_lo) snr = std::uniform_real_distribution<double>(snr_lo, snr_hi)(rng);
      const NoiseSpec noise{snr, rng()};
      const SlotGrid clean = apply_channel(tx, paths, g);
      const SlotGrid noisy = remove_cp(add_awgn(clean, noise));
      const SlotGrid clean_free = clean_targets ? remove_cp(clean) : noisy;
      auto& ex = set.examples[static_cast<std::size_t>(i)];
      for (int k = 0; k < q; ++k) ex.inputs.push_back(transform(noisy.blocks[static_cast<std::size_t>(k)].samples));
      for (int k = q; k < q + m; ++k) ex.targets.push_back(transform(clean_free.blocks[static_cast<std::size_t>(k)].samples));
    }
  });
  return set;
}

/// Virtual-pilot NMSE (dB) of the trained predictor and three baselines.
struct PredictorEvaluation {
  double lstm_db = 0.0;
  double ar_ls_db = 0.0;
  double linear_db = 0.0;
  double hold_db = 0.0;
  int examples = 0;
};

inline double to_db(double x) { return 10.0 * std::log10(x); }

/// AR-LS fits order P on the Q observations; linear extrapolation continues
/// the last two; hold repeats the last.
inline PredictorEvaluation evaluate_predictor(const PredictorParams& model, const TrainingSet& data, int ar_order) {
  if (data.q != model.meta.q || data.m != model.meta.m || data.n != model.meta.n || data.domain != model.meta.domain)
    throw ShapeError("eval-predictor: dataset and model disagree on (Q, M, N, domain)");
  double ref = 0.0, e_lstm = 0.0, e_ar = 0.0, e_lin = 0.0, e_hold = 0.0;
  for (const auto& ex : data.examples) {
    const auto pred = predict_virtual_pilots(model, ex.inputs);
    std::vector<CVector> ar;
    const int order = std::min(ar_order, data.q - 1);
    if (order >= 1) {
      PilotSeries series{ex.inputs, 0, data.domain};
      try {
        const ArModel fit = ls_ar_fit(series, order);
        ar = ar_predict(std::span(ex.inputs).last(static_cast<std::size_t>(order)), fit, data.m);
      } catch (const NumericalError&) {
        ar.clear();
      }
    }
    const CVector& last = ex.inputs.back();
    const CVector slope = data.q >= 2 ? CVector(last - ex.inputs[ex.inputs.size() - 2]) : CVector(CVector::Zero(last.size()));
    for (int i = 0; i < data.m; ++i) {
      const CVector& t = ex.targets[static_cast<std::size_t>(i)];
      ref += t.squaredNorm();
      e_lstm += (pred[static_cast<std::size_t>(i)] - t).squaredNorm();
      e_ar += ar.empty() ? (last - t).squaredNorm() : (ar[static_cast<std::size_t>(i)] - t).squaredNorm();
      e_lin += (last + static_cast<double>(i + 1) * slope - t).squaredNorm();
      e_hold += (last - t).squaredNorm();
    }
  }
  if (ref == 0.0) throw NumericalError("eval-predictor: zero-energy targets");
  return {to_db(e_lstm / ref), to_db(e_ar / ref), to_db(e_lin / ref), to_db(e_hold / ref),
          static_cast<int>(data.examples.size())};
}

inline TrainConfig train_config(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.shape = {cfg.predictor.layers, cfg.predictor.hidden};
  t.learning_rate = cfg.predictor.learning_rate;
  t.batch = cfg.predictor.batch;
  t.epochs = cfg.predictor.epochs;
  t.seed = cfg.predictor.seed;
  return t;
}

}  // namespace afpilot
