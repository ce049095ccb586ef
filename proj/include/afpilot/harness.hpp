#pragma once

#include <bit>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afpilot/simulation.hpp"

namespace afpilot {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kCsvHeader = "scheme,snr_db,pilot_count,data_count,slots,bits,errors,ber,seed,fingerprint";

struct SweepResult {
  std::vector<BerRecord> records;
  std::string fingerprint;
  std::string tool_version = kToolVersion;
};

struct RunOptions {
  int workers = 1;
  std::function<void(const std::string&)> progress;
};

/// Cell seed of one SNR point; independent of the scheme set and grid order.
inline std::uint64_t cell_seed(std::uint64_t master, double snr_db) {
  return derive_seed(master, std::bit_cast<std::uint64_t>(snr_db));
}

inline PredictorSet load_predictors(const ExperimentConfig& cfg) {
  PredictorSet set;
  auto needs = [&](Scheme s) { return std::find(cfg.schemes.begin(), cfg.schemes.end(), s) != cfg.schemes.end(); };
  if (needs(Scheme::af_lstm)) {
    if (cfg.af_model.empty()) throw ConfigError("af-lstm requires model.af");
    set.af = load_model(cfg.af_model);
  }
  if (needs(Scheme::tf_lstm)) {
    if (cfg.tf_model.empty()) throw ConfigError("tf-lstm requires model.tf");
    set.tf = load_model(cfg.tf_model);
  }
  return set;
}

namespace detail {

/// One SNR cell for every configured scheme; slots split across workers,
/// partial tallies merged in worker order.
inline std::vector<BerRecord> run_cell(const LinkSimulator& sim, double snr_db, const RunOptions& opt) {
  const auto& cfg = sim.config();
  const std::uint64_t seed = cell_seed(cfg.seed, snr_db);
  const int workers = std::max(1, opt.workers);
  std::vector<std::vector<BerRecord>> partial(static_cast<std::size_t>(workers));
  for (auto& p : partial) {
    for (Scheme s : cfg.schemes)
      p.push_back({to_string(s), snr_db, cfg.ratio.pilot_count, cfg.ratio.data_count, 0, 0, 0, seed});
  }
  parallel_chunks(cfg.slots, workers, [&](long long b, long long e, int w) {
    auto& recs = partial[static_cast<std::size_t>(w)];
    for (long long slot = b; slot < e; ++slot) {
      const SlotRealization r = sim.realize(derive_seed(seed, static_cast<std::uint64_t>(slot)), snr_db);
      for (std::size_t i = 0; i < cfg.schemes.size(); ++i) sim.run_slot(r, cfg.schemes[i], recs[i]);
    }
  });
  std::vector<BerRecord> out = partial.front();
  for (std::size_t w = 1; w < partial.size(); ++w)
    for (std::size_t i = 0; i < out.size(); ++i) out[i].merge(partial[w][i]);
  return out;
}

}  // namespace detail

/// Schemes x SNR grid. Records are ordered by SNR, then by scheme as configured.
inline SweepResult run_sweep(const ExperimentConfig& cfg, const PredictorSet& models, const RunOptions& opt = {}) {
  cfg.validate();
  if (cfg.schemes.empty() || cfg.snr_db.empty()) throw ConfigError("sweep: scheme set and SNR grid must be non-empty");
  if (cfg.slots < 1) throw ConfigError("sweep: slot count must be >= 1");
  const LinkSimulator sim(cfg, models);
  SweepResult res;
  res.fingerprint = fingerprint(cfg);
  for (double snr : cfg.snr_db) {
    for (auto& r : detail::run_cell(sim, snr, opt)) {
      if (opt.progress) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-9s snr=%5.1f dB  ber=%.3e  (%lld/%lld)", r.scheme.c_str(), r.snr_db, r.ber(),
                      r.errors, r.bits);
        opt.progress(buf);
      }
      res.records.push_back(std::move(r));
    }
  }
  return res;
}

inline SweepResult run_sweep(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  return run_sweep(cfg, load_predictors(cfg), opt);
}

inline BerRecord run_scheme(const ExperimentConfig& cfg, Scheme scheme, double snr_db, const PredictorSet& models,
                            const RunOptions& opt = {}) {
  ExperimentConfig one = cfg;
  one.schemes = {scheme};
  one.snr_db = {snr_db};
  return run_sweep(one, models, opt).records.front();
}

struct RatioRun {
  RatioConfig ratio;
  PredictorSet models;
};

/// One sweep per ratio; every ratio needs Q >= P and, for predictor schemes,
/// models matching its (Q, M).
inline SweepResult run_ratio_sweep(const ExperimentConfig& cfg, const std::vector<RatioRun>& runs,
                                   const RunOptions& opt = {}) {
  if (runs.empty()) throw ConfigError("ratio-sweep: no ratios given");
  SweepResult res;
  std::string canon = canonicalize(cfg);
  for (const auto& run : runs) {
    if (run.ratio.pilot_count < cfg.channel.path_count())
      throw ConfigError("ratio-sweep: " + std::to_string(run.ratio.pilot_count) + ":" +
                        std::to_string(run.ratio.data_count) + " has fewer pilots than the " +
                        std::to_string(cfg.channel.path_count()) + " channel paths");
    canon += "ratio = " + std::to_string(run.ratio.pilot_count) + ":" + std::to_string(run.ratio.data_count) + "\n";
  }
  for (const auto& run : runs) {
    ExperimentConfig c = cfg;
    c.ratio = run.ratio;
    auto part = run_sweep(c, run.models, opt);
    for (auto& r : part.records) res.records.push_back(std::move(r));
  }
  res.fingerprint = fnv1a_hex(canon);
  return res;
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

inline void write_csv(std::ostream& os, const SweepResult& res) {
  os << kCsvHeader << '\n';
  for (const auto& r : res.records) {
    os << r.scheme << ',' << format_double(r.snr_db) << ',' << r.pilot_count << ',' << r.data_count << ',' << r.slots
       << ',' << r.bits << ',' << r.errors << ',' << format_double(r.ber()) << ',' << r.seed << ',' << res.fingerprint
       << '\n';
  }
}

/// Parses a sweep CSV. All rows must share one fingerprint.
inline SweepResult read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw ShapeError("csv: missing or unexpected header");
  SweepResult res;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw ShapeError("csv line " + std::to_string(lineno) + ": expected 10 fields");
    if (res.fingerprint.empty()) res.fingerprint = f[9];
    else if (f[9] != res.fingerprint)
      throw ConfigError("csv line " + std::to_string(lineno) + ": records from different configurations (" + f[9] +
                        " vs " + res.fingerprint + ")");
    BerRecord r;
    r.scheme = f[0];
    r.snr_db = std::stod(f[1]);
    r.pilot_count = std::stoi(f[2]);
    r.data_count = std::stoi(f[3]);
    r.slots = std::stoll(f[4]);
    r.bits = std::stoll(f[5]);
    r.errors = std::stoll(f[6]);
    r.seed = std::stoull(f[8]);
    if (r.errors < 0 || r.errors > r.bits) throw ShapeError("csv line " + std::to_string(lineno) + ": errors exceed bits");
    res.records.push_back(std::move(r));
  }
  return res;
}

/// Appends records to an existing result, refusing a different fingerprint.
inline void append_records(SweepResult& into, const SweepResult& from) {
  if (!into.fingerprint.empty() && into.fingerprint != from.fingerprint)
    throw ConfigError("cannot mix records from configurations " + into.fingerprint + " and " + from.fingerprint);
  if (into.fingerprint.empty()) into.fingerprint = from.fingerprint;
  into.records.insert(into.records.end(), from.records.begin(), from.records.end());
}

inline nlohmann::json to_json(const BerRecord& r) {
  return {{"scheme", r.scheme}, {"snr_db", r.snr_db}, {"pilot_count", r.pilot_count}, {"data_count", r.data_count},
          {"slots", r.slots},   {"bits", r.bits},     {"errors", r.errors},           {"ber", r.ber()},
          {"seed", r.seed}};
}

inline nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  std::stringstream ss(canonicalize(cfg));
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

inline nlohmann::json to_json(const SweepResult& res, const ExperimentConfig& cfg) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : res.records) recs.push_back(to_json(r));
  return {{"tool_version", res.tool_version}, {"fingerprint", res.fingerprint}, {"config", config_json(cfg)},
          {"records", recs}};
}

// ---------------------------------------------------------------------------
// Channel inspection

/// One realization: path table, per-symbol channel norms, transform
/// equivalence residual, AR residuals and root stability.
inline nlohmann::json inspect_channel(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto& g = cfg.geometry;
  const AfdmBasis basis(cfg.chirps());
  const PathSet paths = sample_paths(cfg.channel.pdp_db, cfg.channel.delays, cfg.channel.doppler_max, seed);

  nlohmann::json table = nlohmann::json::array();
  for (const auto& p : paths.paths)
    table.push_back({{"delay", p.delay}, {"doppler", p.doppler}, {"gain_re", p.gain.real()}, {"gain_im", p.gain.imag()},
                     {"gain_abs", std::abs(p.gain)}});

  std::vector<ChannelSnapshot> fd, afd;
  nlohmann::json norms = nlohmann::json::array();
  double transform_residual = 0.0;
  for (int k = 0; k < g.symbols; ++k) {
    fd.push_back(build_fd_channel(paths, k, g, basis));
    afd.push_back(build_afd_channel(paths, k, g, basis));
    transform_residual = std::max(transform_residual, relative_error(fd_from_afd(afd.back(), basis.transform()).h, fd.back().h));
    norms.push_back({{"symbol", k}, {"fd_frobenius", fd.back().h.norm()}, {"afd_frobenius", afd.back().h.norm()}});
  }

  // Paths sharing a Doppler share a root, so the AR order is the number of distinct values.
  std::vector<double> distinct;
  for (const auto& p : paths.paths) {
    const Complex r = cis(-symbol_phase_step(p.doppler, g));
    const bool seen = std::any_of(distinct.begin(), distinct.end(),
                                  [&](double d) { return std::abs(cis(-symbol_phase_step(d, g)) - r) < 1e-9; });
    if (!seen) distinct.push_back(p.doppler);
  }
  const ArModel model = exact_ar_coeffs(distinct, g);

  const RatioConfig all_pilot{g.symbols, 0};
  const SlotGrid rx = remove_cp(apply_channel(add_cp(build_slot(std::vector<std::uint8_t>{}, g, all_pilot, basis)), paths, g));
  PilotSeries series;
  for (const auto& b : rx.blocks) series.entries.push_back(basis.daft(b.samples));

  nlohmann::json report;
  report["seed"] = seed;
  report["tool_version"] = kToolVersion;
  report["c1"] = basis.chirps().c1;
  report["c2"] = basis.chirps().c2;
  report["gamma_identity"] = basis.chirps().gamma_is_identity();
  report["paths"] = table;
  report["symbols"] = norms;
  report["transform_residual"] = transform_residual;
  report["ar_model"] = to_json(model);
  report["ar_residual_pilots"] = model.order() < static_cast<int>(series.size()) ? ar_residual(series, model) : 0.0;
  report["ar_residual_fd"] = channel_ar_check(fd, model);
  report["ar_residual_afd"] = channel_ar_check(afd, model);
  report["stability"] = to_json(stability_check(model));
  return report;
}

}  // namespace afpilot
