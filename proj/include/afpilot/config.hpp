#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "afpilot/detection.hpp"
#include "afpilot/estimation.hpp"

namespace afpilot {

enum class Scheme { tf_interp, af_interp, tf_lstm, af_lstm, perfect };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::tf_interp: return "tf-interp";
    case Scheme::af_interp: return "af-interp";
    case Scheme::tf_lstm: return "tf-lstm";
    case Scheme::af_lstm: return "af-lstm";
    case Scheme::perfect: return "perfect";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& s) {
  for (Scheme c : {Scheme::tf_interp, Scheme::af_interp, Scheme::tf_lstm, Scheme::af_lstm, Scheme::perfect})
    if (s == to_string(c)) return c;
  throw ConfigError("unknown scheme '" + s + "'");
}

inline bool uses_predictor(Scheme s) { return s == Scheme::tf_lstm || s == Scheme::af_lstm; }

/// How the AF virtual-pilot pipeline estimates each data symbol's channel.
enum class VirtualSupport {
  per_symbol,  // independent matched-filter estimate on every virtual pilot
  pilot,       // (delay, Doppler) support from the real pilots, gains fit on the virtual pilot
};

struct ChannelConfig {
  std::vector<double> pdp_db = kDefaultPdpDb;
  std::vector<int> delays = kDefaultDelays;
  double doppler_max = 0.1;

  int path_count() const { return static_cast<int>(pdp_db.size()); }
};

struct ChirpConfig {
  int alpha_max = 0;
  int k_v = 1;
  double c2 = 0.0;

  ChirpParams params(int n) const { return {c1_rule(alpha_max, k_v, n), c2, n}; }
};

struct PredictorConfig {
  int layers = 2;
  int hidden = 128;
  int epochs = 60;
  int batch = 64;
  double learning_rate = 1e-3;
  double train_snr_db = 30.0;
  double train_snr_max_db = 30.0;  // > train_snr_db draws SNR uniformly per example
  int examples = 60000;
  std::uint64_t seed = 7;
  bool clean_targets = true;
};

struct ExperimentConfig {
  FrameGeometry geometry;
  ChannelConfig channel;
  RatioConfig ratio;
  ChirpConfig chirp;
  AfEstimatorConfig estimator;
  VirtualSupport virtual_support = VirtualSupport::pilot;
  EqualizerMethod equalizer = EqualizerMethod::mmse;
  std::vector<Scheme> schemes{Scheme::tf_interp, Scheme::af_interp, Scheme::tf_lstm, Scheme::af_lstm, Scheme::perfect};
  std::vector<double> snr_db{0, 5, 10, 15, 20, 25, 30};
  long long slots = 1000;
  std::uint64_t seed = 1;
  std::string af_model;
  std::string tf_model;
  PredictorConfig predictor;

  ChirpParams chirps() const { return chirp.params(geometry.n); }

  void validate() const {
    geometry.validate();
    ratio.validate(geometry);
    if (channel.pdp_db.size() != channel.delays.size() || channel.pdp_db.empty())
      throw ConfigError("channel: pdp_db and delays must be non-empty and of equal length");
    for (int d : channel.delays)
      if (d < 0 || d > geometry.cp) throw ConfigError("channel: delays must lie within the cyclic prefix");
    if (!(channel.doppler_max >= 0.0 && channel.doppler_max <= 0.5)) throw ConfigError("channel: doppler_max must lie in [0, 0.5]");
    if (geometry.n % 2 != 0) throw ConfigError("geometry: n must be even");
    if (estimator.grid.max_delay < 0 || estimator.grid.max_delay >= geometry.n || !(estimator.grid.doppler_step > 0.0))
      throw ConfigError("estimator: invalid delay-Doppler grid");
    if (estimator.max_paths < 1) throw ConfigError("estimator: max_paths must be >= 1");
    if (slots < 0) throw ConfigError("sweep: slots must be >= 0");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto u = std::stoull(v, &pos);
    if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::string fmt_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

}  // namespace detail

/// Applies one dotted key. Unknown keys are rejected.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  auto i = [&] { return static_cast<int>(to_int(key, value)); };
  auto d = [&] { return to_double(key, value); };
  if (key == "geometry.n") c.geometry.n = i();
  else if (key == "geometry.cp") c.geometry.cp = i();
  else if (key == "geometry.subcarrier_spacing") c.geometry.subcarrier_spacing = d();
  else if (key == "geometry.carrier") c.geometry.carrier = d();
  else if (key == "geometry.symbols") c.geometry.symbols = i();
  else if (key == "channel.pdp_db") {
    c.channel.pdp_db.clear();
    for (const auto& s : split_list(value)) c.channel.pdp_db.push_back(to_double(key, s));
  } else if (key == "channel.delays") {
    c.channel.delays.clear();
    for (const auto& s : split_list(value)) c.channel.delays.push_back(static_cast<int>(to_int(key, s)));
  } else if (key == "channel.doppler_max") c.channel.doppler_max = d();
  else if (key == "ratio.pilots") c.ratio.pilot_count = i();
  else if (key == "ratio.data") c.ratio.data_count = i();
  else if (key == "chirp.alpha_max") c.chirp.alpha_max = i();
  else if (key == "chirp.k_v") c.chirp.k_v = i();
  else if (key == "chirp.c2") c.chirp.c2 = d();
  else if (key == "estimator.delay_max") c.estimator.grid.max_delay = i();
  else if (key == "estimator.doppler_max") c.estimator.grid.max_doppler = d();
  else if (key == "estimator.doppler_step") c.estimator.grid.doppler_step = d();
  else if (key == "estimator.max_paths") c.estimator.max_paths = i();
  else if (key == "estimator.stop_threshold") c.estimator.stop_threshold = d();
  else if (key == "estimator.refine") c.estimator.refine = to_bool(key, value);
  else if (key == "estimator.polish_rounds") c.estimator.polish_rounds = i();
  else if (key == "estimator.virtual_support") {
    if (value == "per-symbol") c.virtual_support = VirtualSupport::per_symbol;
    else if (value == "pilot") c.virtual_support = VirtualSupport::pilot;
    else throw ConfigError("config: estimator.virtual_support must be 'per-symbol' or 'pilot'");
  } else if (key == "equalizer.method") {
    if (value == "mmse") c.equalizer = EqualizerMethod::mmse;
    else if (value == "zf") c.equalizer = EqualizerMethod::zf;
    else throw ConfigError("config: equalizer.method must be 'mmse' or 'zf'");
  } else if (key == "sweep.schemes") {
    c.schemes.clear();
    for (const auto& s : split_list(value)) c.schemes.push_back(parse_scheme(s));
  } else if (key == "sweep.snr_db") {
    c.snr_db.clear();
    for (const auto& s : split_list(value)) c.snr_db.push_back(to_double(key, s));
  } else if (key == "sweep.slots") c.slots = to_int(key, value);
  else if (key == "sweep.seed") c.seed = to_u64(key, value);
  else if (key == "model.af") c.af_model = value;
  else if (key == "model.tf") c.tf_model = value;
  else if (key == "predictor.layers") c.predictor.layers = i();
  else if (key == "predictor.hidden") c.predictor.hidden = i();
  else if (key == "predictor.epochs") c.predictor.epochs = i();
  else if (key == "predictor.batch") c.predictor.batch = i();
  else if (key == "predictor.learning_rate") c.predictor.learning_rate = d();
  else if (key == "predictor.train_snr_db") c.predictor.train_snr_db = d();
  else if (key == "predictor.train_snr_max_db") c.predictor.train_snr_max_db = d();
  else if (key == "predictor.examples") c.predictor.examples = i();
  else if (key == "predictor.seed") c.predictor.seed = to_u64(key, value);
  else if (key == "predictor.clean_targets") c.predictor.clean_targets = to_bool(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

/// Parses `key = value` lines. `[section]` headers prefix the following keys
/// with `section.`; `#` and `;` start comments.
inline ExperimentConfig parse_config(std::istream& is, ExperimentConfig base = {}) {
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    apply_setting(base, key, detail::trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  return parse_config(is);
}

/// Sorted `key = value` lines from the typed config; identical settings give
/// identical text regardless of file order or number formatting.
inline std::string canonicalize(const ExperimentConfig& c) {
  using detail::fmt_double;
  auto join_d = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
    return s;
  };
  std::map<std::string, std::string> kv;
  kv["geometry.n"] = std::to_string(c.geometry.n);
  kv["geometry.cp"] = std::to_string(c.geometry.cp);
  kv["geometry.subcarrier_spacing"] = fmt_double(c.geometry.subcarrier_spacing);
  kv["geometry.carrier"] = fmt_double(c.geometry.carrier);
  kv["geometry.symbols"] = std::to_string(c.geometry.symbols);
  kv["channel.pdp_db"] = join_d(c.channel.pdp_db);
  std::string delays;
  for (std::size_t i = 0; i < c.channel.delays.size(); ++i) delays += (i ? "," : "") + std::to_string(c.channel.delays[i]);
  kv["channel.delays"] = delays;
  kv["channel.doppler_max"] = fmt_double(c.channel.doppler_max);
  kv["ratio.pilots"] = std::to_string(c.ratio.pilot_count);
  kv["ratio.data"] = std::to_string(c.ratio.data_count);
  kv["chirp.alpha_max"] = std::to_string(c.chirp.alpha_max);
  kv["chirp.k_v"] = std::to_string(c.chirp.k_v);
  kv["chirp.c2"] = fmt_double(c.chirp.c2);
  kv["estimator.delay_max"] = std::to_string(c.estimator.grid.max_delay);
  kv["estimator.doppler_max"] = fmt_double(c.estimator.grid.max_doppler);
  kv["estimator.doppler_step"] = fmt_double(c.estimator.grid.doppler_step);
  kv["estimator.max_paths"] = std::to_string(c.estimator.max_paths);
  kv["estimator.stop_threshold"] = fmt_double(c.estimator.stop_threshold);
  kv["estimator.refine"] = c.estimator.refine ? "true" : "false";
  kv["estimator.polish_rounds"] = std::to_string(c.estimator.polish_rounds);
  kv["estimator.virtual_support"] = c.virtual_support == VirtualSupport::pilot ? "pilot" : "per-symbol";
  kv["equalizer.method"] = c.equalizer == EqualizerMethod::mmse ? "mmse" : "zf";
  std::string schemes;
  for (std::size_t i = 0; i < c.schemes.size(); ++i) schemes += std::string(i ? "," : "") + to_string(c.schemes[i]);
  kv["sweep.schemes"] = schemes;
  kv["sweep.snr_db"] = join_d(c.snr_db);
  kv["sweep.slots"] = std::to_string(c.slots);
  kv["sweep.seed"] = std::to_string(c.seed);
  kv["model.af"] = c.af_model;
  kv["model.tf"] = c.tf_model;
  kv["predictor.layers"] = std::to_string(c.predictor.layers);
  kv["predictor.hidden"] = std::to_string(c.predictor.hidden);
  kv["predictor.epochs"] = std::to_string(c.predictor.epochs);
  kv["predictor.batch"] = std::to_string(c.predictor.batch);
  kv["predictor.learning_rate"] = fmt_double(c.predictor.learning_rate);
  kv["predictor.train_snr_db"] = fmt_double(c.predictor.train_snr_db);
  kv["predictor.train_snr_max_db"] = fmt_double(c.predictor.train_snr_max_db);
  kv["predictor.examples"] = std::to_string(c.predictor.examples);
  kv["predictor.seed"] = std::to_string(c.predictor.seed);
  kv["predictor.clean_targets"] = c.predictor.clean_targets ? "true" : "false";
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

/// FNV-1a 64 of `text`, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string fingerprint(const ExperimentConfig& c) { return fnv1a_hex(canonicalize(c)); }

}  // namespace afpilot
