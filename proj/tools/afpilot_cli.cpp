#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "afpilot/afpilot.hpp"

namespace fs = std::filesystem;
using namespace afpilot;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int workers = 1;
  bool verbose = false;
};

ExperimentConfig load(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

fs::path out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out);
  return fs::path(g.out) / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + p.string());
  os << text;
  if (!os) throw ConfigError("write failed: " + p.string());
}

RatioConfig parse_ratio(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("ratio '" + s + "' must look like P:D");
  try {
    return {std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ConfigError("ratio '" + s + "' must look like P:D");
  }
}

std::string model_name(Domain d, const RatioConfig& r) {
  return std::string(to_string(d)) + "_" + std::to_string(r.pilot_count) + "x" + std::to_string(r.data_count) + ".afpm";
}

Domain parse_domain(const std::string& s) {
  if (s == "af") return Domain::af;
  if (s == "tf") return Domain::tf;
  throw ConfigError("domain must be 'af' or 'tf'");
}

RunOptions run_options(const Globals& g) {
  RunOptions opt;
  opt.workers = g.workers;
  if (g.verbose) opt.progress = [](const std::string& line) { std::cerr << line << '\n'; };
  return opt;
}

void emit(const Globals& g, const std::string& stem, const SweepResult& res, const ExperimentConfig& cfg) {
  std::ostringstream csv;
  write_csv(csv, res);
  write_text(out_path(g, stem + ".csv"), csv.str());
  write_text(out_path(g, stem + ".json"), to_json(res, cfg).dump(2) + "\n");
  std::cout << csv.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AF-domain pilot OFDM link simulator"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed (overrides sweep.seed)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--verbose", g.verbose, "Progress and diagnostics on stderr");

  auto* sweep = app.add_subcommand("sweep", "BER versus SNR for the configured schemes");

  auto* ratio = app.add_subcommand("ratio-sweep", "BER per pilot/data ratio");
  std::vector<std::string> ratios{"4:8", "6:6"};
  std::string model_dir = ".";
  ratio->add_option("--ratios", ratios, "Ratios as P:D")->delimiter(',');
  ratio->add_option("--model-dir", model_dir, "Directory with <domain>_<P>x<D>.afpm models");

  auto* gen = app.add_subcommand("gen-dataset", "Write a predictor training set");
  std::optional<int> count;
  std::string domain = "af";
  bool noisy_targets = false;
  std::string dataset_file;
  gen->add_option("--count", count, "Number of examples (default predictor.examples)")->check(CLI::PositiveNumber);
  gen->add_option("--domain", domain, "af or tf");
  gen->add_flag("--noisy-targets", noisy_targets, "Use noisy instead of clean target pilots");
  gen->add_option("--file", dataset_file, "Output file (default <out>/<domain>_<P>x<D>.afpd)");
  std::string ratio_override;
  gen->add_option("--ratio", ratio_override, "Override the pilot/data ratio, as P:D");

  auto* tr = app.add_subcommand("train", "Train a virtual-pilot predictor");
  std::string train_data, model_file;
  std::optional<int> epochs;
  tr->add_option("--dataset", train_data, "Training set (generated from the config if omitted)");
  tr->add_option("--domain", domain, "af or tf, when generating");
  tr->add_option("--count", count, "Examples when generating (default predictor.examples)")->check(CLI::PositiveNumber);
  tr->add_option("--epochs", epochs, "Override predictor.epochs");
  tr->add_option("--model", model_file, "Output model (default <out>/<domain>_<P>x<D>.afpm)");
  tr->add_option("--ratio", ratio_override, "Override the pilot/data ratio when generating, as P:D");

  auto* ev = app.add_subcommand("eval-predictor", "Virtual-pilot NMSE against AR-LS, linear and hold baselines");
  std::string eval_model;
  int eval_count = 500;
  ev->add_option("--model", eval_model, "Model file")->required();
  ev->add_option("--count", eval_count, "Held-out examples")->check(CLI::PositiveNumber);

  auto* insp = app.add_subcommand("inspect-channel", "Diagnostic report for one channel realization");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = load(g);
    if (!ratio_override.empty()) {
      cfg.ratio = parse_ratio(ratio_override);
      cfg.validate();
    }
    if (*sweep) {
      emit(g, "sweep", run_sweep(cfg, run_options(g)), cfg);
    } else if (*ratio) {
      std::vector<RatioRun> runs;
      for (const auto& r : ratios) {
        RatioRun run{parse_ratio(r), {}};
        ExperimentConfig c = cfg;
        c.ratio = run.ratio;
        c.af_model = (fs::path(model_dir) / model_name(Domain::af, run.ratio)).string();
        c.tf_model = (fs::path(model_dir) / model_name(Domain::tf, run.ratio)).string();
        c.validate();
        if (run.ratio.pilot_count >= cfg.channel.path_count()) run.models = load_predictors(c);
        runs.push_back(std::move(run));
      }
      emit(g, "ratio_sweep", run_ratio_sweep(cfg, runs, run_options(g)), cfg);
    } else if (*gen) {
      const Domain d = parse_domain(domain);
      const auto seed = g.seed.value_or(cfg.predictor.seed);
      const auto set = generate_training_set(cfg, d, count.value_or(cfg.predictor.examples), !noisy_targets, seed, g.workers);
      const fs::path p = dataset_file.empty()
                             ? out_path(g, std::string(to_string(d)) + "_" + std::to_string(set.q) + "x" +
                                               std::to_string(set.m) + ".afpd")
                             : fs::path(dataset_file);
      std::ofstream os(p, std::ios::binary);
      if (!os) throw ConfigError("cannot write " + p.string());
      save_dataset(os, set);
      std::cout << p.string() << '\n';
    } else if (*tr) {
      TrainingSet data;
      if (train_data.empty()) {
        data = generate_training_set(cfg, parse_domain(domain), count.value_or(cfg.predictor.examples), cfg.predictor.clean_targets,
                                     g.seed.value_or(cfg.predictor.seed), g.workers);
      } else {
        std::ifstream is(train_data, std::ios::binary);
        if (!is) throw ConfigError("cannot open " + train_data);
        data = load_dataset(is);
      }
      if (data.q < cfg.channel.path_count())
        throw ConfigError("train: Q = " + std::to_string(data.q) + " is fewer than the channel path count");
      TrainConfig tc = train_config(cfg);
      if (epochs) tc.epochs = *epochs;
      auto on_epoch = [&](int e, double loss) {
        if (g.verbose) std::cerr << "epoch " << e + 1 << "/" << tc.epochs << "  loss " << loss << '\n';
      };
      PredictorParams model = train<float>(tc, data, on_epoch);
      model.meta.train_snr_db = cfg.predictor.train_snr_db;
      const fs::path p = model_file.empty() ? out_path(g, model_name(data.domain, {data.q, data.m})) : fs::path(model_file);
      save_model(p.string(), model);
      std::cout << p.string() << '\n';
    } else if (*ev) {
      const PredictorParams model = load_model(eval_model);
      ExperimentConfig c = cfg;
      c.ratio = {model.meta.q, model.meta.m};
      if (c.ratio.total() != c.geometry.symbols) c.geometry.symbols = c.ratio.total();
      const auto test = generate_training_set(c, model.meta.domain, eval_count, true,
                                              derive_seed(g.seed.value_or(cfg.seed), 0xe7a1), g.workers);
      const auto r = evaluate_predictor(model, test, c.channel.path_count());
      const nlohmann::json j{{"model", eval_model},         {"domain", to_string(model.meta.domain)},
                             {"examples", r.examples},      {"snr_db", c.predictor.train_snr_db},
                             {"nmse_db_lstm", r.lstm_db},   {"nmse_db_ar_ls", r.ar_ls_db},
                             {"nmse_db_linear", r.linear_db}, {"nmse_db_hold", r.hold_db}};
      write_text(out_path(g, "eval_predictor.json"), j.dump(2) + "\n");
      std::cout << j.dump(2) << '\n';
    } else if (*insp) {
      const auto report = inspect_channel(cfg, g.seed.value_or(cfg.seed));
      write_text(out_path(g, "inspect_channel.json"), report.dump(2) + "\n");
      std::cout << report.dump(2) << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "model/shape mismatch: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
