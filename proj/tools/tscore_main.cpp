#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "tscore/data.hpp"
#include "tscore/errors.hpp"
#include "tscore/grid.hpp"
#include "tscore/harness.hpp"
#include "tscore/model_io.hpp"
#include "tscore/scoring.hpp"
#include "tscore/training.hpp"

namespace {

using namespace tscore;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct SeedFlag {
  std::uint64_t value = 0;
  CLI::Option* opt = nullptr;

  void attach(CLI::App* app) {
    opt = app->add_option("--seed", value, "Master seed (falls back to $TSCORE_SEED)");
  }
  std::optional<std::uint64_t> resolve() const {
    if (opt && opt->count() > 0) return value;
    if (const char* env = std::getenv("TSCORE_SEED"); env && *env) {
      std::uint64_t v = 0;
      const std::string_view s(env);
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw UsageError("TSCORE_SEED is not an unsigned integer: '" + std::string(s) + "'");
      return v;
    }
    return std::nullopt;
  }
  std::uint64_t get() const { return resolve().value_or(0); }
};

struct ScoreFlags {
  std::string noise = "beta";
  bool refine = false;
  std::size_t refine_steps = RefineOptions{}.steps;
  std::size_t refine_restarts = RefineOptions{}.restarts;

  void attach(CLI::App* app) {
    app->add_option("--noise", noise, "Residual variance for the proposed score")
        ->check(CLI::IsMember({"beta", "residual"}));
    app->add_flag("--refine", refine, "Refine the latent point by minimising |f(z) - x|^2");
    app->add_option("--refine-steps", refine_steps, "Gradient steps per refinement start");
    app->add_option("--refine-restarts", refine_restarts, "Refinement starts (first is g(x))");
  }
  ScoreOptions options(std::uint64_t seed) const {
    ScoreOptions o;
    o.noise = noise == "residual" ? NoiseVariance::residual : NoiseVariance::beta;
    o.refine = refine;
    o.refine_options.steps = refine_steps;
    o.refine_options.restarts = refine_restarts;
    o.refine_seed = derive_seed(seed, {20});
    return o;
  }
};

std::vector<ScoreKind> kinds_arg(const std::string& s) {
  try {
    return parse_score_kinds(s);
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
}

TrainConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

void print_summary(std::span<const SummaryRow> rows) {
  for (const auto& r : rows)
    std::cout << r.dataset << ' ' << to_string(r.regime) << ' ' << token(r.kind)
              << " splits=" << r.splits << " mean=" << fmt(r.mean) << " median=" << fmt(r.median)
              << " min=" << fmt(r.min) << " max=" << fmt(r.max) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Manifold-aware anomaly scores for Wasserstein autoencoders"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a labelled CSV (labels are ignored)");
  std::string train_data, train_config, train_out;
  std::optional<std::size_t> train_steps;
  SeedFlag train_seed;
  train_cmd->add_option("--data", train_data, "Input CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", train_config, "Training config (JSON)")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Model file to write")->required();
  train_cmd->add_option("--steps", train_steps, "Override the number of ADAM steps");
  train_seed.attach(train_cmd);

  // score
  auto* score_cmd = app.add_subcommand("score", "Score every row of a CSV with a trained model");
  std::string score_model, score_data, score_out, score_kinds = "re,pz,proposed";
  SeedFlag score_seed;
  ScoreFlags score_flags;
  score_cmd->add_option("--model", score_model, "Model file")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--data", score_data, "Input CSV")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--kinds", score_kinds, "Comma-separated score kinds: re,pz,proposed,proposed_enc");
  score_cmd->add_option("--out", score_out, "Output CSV (input columns plus score_<kind>)")->required();
  score_flags.attach(score_cmd);
  score_seed.attach(score_cmd);

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Grid search over configs and splits");
  std::string exp_data, exp_grid, exp_out, exp_summary, exp_models, exp_kinds = "re,proposed",
                                                              exp_regimes = "supervised,unsupervised";
  std::size_t exp_splits = 5, exp_jobs = 0;
  SeedFlag exp_seed;
  ScoreFlags exp_flags;
  exp_cmd->add_option("--data", exp_data, "Input CSV")->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--grid", exp_grid, "Grid file (JSON); omitted = the full default grid")
      ->check(CLI::ExistingFile);
  exp_cmd->add_option("--splits", exp_splits, "Number of train/test splits")->check(CLI::PositiveNumber);
  exp_cmd->add_option("--out", exp_out, "Results file (JSON lines, appended, resumable)")->required();
  exp_cmd->add_option("--summary", exp_summary, "Summary CSV");
  exp_cmd->add_option("--models", exp_models, "Directory for trained models");
  exp_cmd->add_option("--kinds", exp_kinds, "Comma-separated score kinds");
  exp_cmd->add_option("--regimes", exp_regimes, "Comma-separated selection regimes");
  exp_cmd->add_option("--jobs", exp_jobs, "Worker threads (0 = logical cores)");
  exp_flags.attach(exp_cmd);
  exp_seed.attach(exp_cmd);

  // toy-figure
  auto* toy_cmd = app.add_subcommand("toy-figure", "Train the parabola toy model and write the score grid");
  std::string toy_out, toy_model, toy_kinds = "re,pz,proposed";
  ToyOptions toy;
  GridSpec toy_grid;
  std::size_t toy_resolution = 100;
  SeedFlag toy_seed;
  ScoreFlags toy_flags;
  toy_cmd->add_option("--out", toy_out, "Grid CSV")->required();
  toy_cmd->add_option("--model", toy_model, "Also save the trained model here");
  toy_cmd->add_option("--samples", toy.samples, "Training samples")->check(CLI::PositiveNumber);
  toy_cmd->add_option("--steps", toy.steps, "ADAM steps");
  toy_cmd->add_option("--beta", toy.beta, "MMD weight")->check(CLI::PositiveNumber);
  toy_cmd->add_option("--kernel-width", toy.kernel_width, "IMQ kernel width c")->check(CLI::PositiveNumber);
  toy_cmd->add_option("--resolution", toy_resolution, "Grid points per axis")->check(CLI::PositiveNumber);
  toy_cmd->add_option("--kinds", toy_kinds, "Comma-separated score kinds");
  toy_flags.attach(toy_cmd);
  toy_seed.attach(toy_cmd);

  // latent-sweep
  auto* sweep_cmd = app.add_subcommand("latent-sweep", "AUC per latent dimension");
  std::string sweep_data, sweep_out, sweep_config, sweep_k = "1..8", sweep_kinds = "proposed,re";
  std::size_t sweep_splits = 5, sweep_jobs = 0;
  SeedFlag sweep_seed;
  ScoreFlags sweep_flags;
  sweep_cmd->add_option("--data", sweep_data, "Input CSV")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--k", sweep_k, "Latent dimensions, 'a..b' or 'a,b,c'");
  sweep_cmd->add_option("--out", sweep_out, "Sweep CSV")->required();
  sweep_cmd->add_option("--config", sweep_config, "Base training config (JSON)")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--splits", sweep_splits, "Number of train/test splits")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--kinds", sweep_kinds, "Comma-separated score kinds");
  sweep_cmd->add_option("--jobs", sweep_jobs, "Worker threads (0 = logical cores)");
  sweep_flags.attach(sweep_cmd);
  sweep_seed.attach(sweep_cmd);

  // fetch-data
  auto* fetch_cmd = app.add_subcommand("fetch-data", "Convert the UCI breast-cancer file or write the synthetic stand-in");
  std::string fetch_out, fetch_raw;
  bool fetch_synthetic = false;
  std::size_t fetch_normals = 458, fetch_anomalies = 241;
  SeedFlag fetch_seed;
  fetch_cmd->add_option("--out", fetch_out, "Output CSV")->required();
  auto* raw_opt = fetch_cmd->add_option("--raw", fetch_raw, "Downloaded breast-cancer-wisconsin.data")
                      ->check(CLI::ExistingFile);
  auto* syn_opt = fetch_cmd->add_flag("--synthetic", fetch_synthetic, "Write the 8-dimensional synthetic stand-in");
  raw_opt->excludes(syn_opt);
  fetch_cmd->add_option("--normals", fetch_normals, "Synthetic normal rows");
  fetch_cmd->add_option("--anomalies", fetch_anomalies, "Synthetic anomalous rows");
  fetch_seed.attach(fetch_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      TrainConfig cfg = train_config.empty() ? TrainConfig{} : read_config(train_config);
      if (auto s = train_seed.resolve()) cfg.seed = *s;
      if (train_steps) cfg.steps = *train_steps;
      const Dataset ds = load_csv(train_data);
      const Normalizer norm = Normalizer::fit(ds);
      TrainedModel m = train(cfg, norm.apply(ds.features));
      m.input_scaling = norm;
      save_model(m, train_out);
      std::cout << "final_loss=" << fmt(m.final_loss) << " residual_variance=" << fmt(m.residual_variance)
                << '\n';
    } else if (score_cmd->parsed()) {
      const auto kinds = kinds_arg(score_kinds);
      const TrainedModel m = load_model(score_model);
      Dataset ds = load_csv(score_data);
      if (ds.dim() != m.data_dim())
        throw InvalidInput("dimension mismatch: model expects " + std::to_string(m.data_dim()) +
                           " features, data has " + std::to_string(ds.dim()));
      const Matrix s = score_batch(m, m.input_scaling.apply(ds.features), kinds,
                                   score_flags.options(score_seed.get()));
      std::ofstream out(score_out);
      if (!out) throw std::runtime_error("cannot write '" + score_out + "'");
      for (const auto& n : ds.feature_names) out << n << ',';
      out << "label";
      for (ScoreKind k : kinds) out << ',' << score_column(k);
      out << '\n';
      for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < ds.dim(); ++c) out << fmt(ds.features(r, c)) << ',';
        out << ds.labels[r];
        for (std::size_t k = 0; k < kinds.size(); ++k) out << ',' << fmt(s(r, k));
        out << '\n';
      }
    } else if (exp_cmd->parsed()) {
      ExperimentOptions o;
      o.kinds = kinds_arg(exp_kinds);
      o.regimes.clear();
      for (std::size_t start = 0; start <= exp_regimes.size();) {
        const auto end = std::min(exp_regimes.find(',', start), exp_regimes.size());
        try {
          o.regimes.push_back(parse_regime(std::string_view(exp_regimes).substr(start, end - start)));
        } catch (const InvalidInput& e) {
          throw UsageError(e.what());
        }
        start = end + 1;
      }
      o.splits = exp_splits;
      o.jobs = exp_jobs;
      o.master_seed = exp_seed.get();
      o.score_options = exp_flags.options(o.master_seed);
      o.out_path = exp_out;
      o.summary_path = exp_summary;
      o.model_dir = exp_models;
      const HyperGrid grid = exp_grid.empty() ? HyperGrid{} : load_grid(exp_grid);
      const Dataset ds = load_csv(exp_data);
      const auto result = run_experiment(ds, grid, o);
      std::cout << "configs=" << result.configs.size() << " records=" << result.records.size()
                << " trained=" << result.trained_units << '\n';
      print_summary(result.summary);
    } else if (toy_cmd->parsed()) {
      const auto kinds = kinds_arg(toy_kinds);
      toy.seed = toy_seed.get();
      const TrainedModel m = train_toy(toy);
      if (!toy_model.empty()) save_model(m, toy_model);
      toy_grid.x1_steps = toy_grid.x2_steps = toy_resolution;
      write_grid_csv(grid_eval(m, kinds, toy_grid, toy_flags.options(toy.seed)), toy_out);
      std::cout << "final_loss=" << fmt(m.final_loss) << " residual_variance=" << fmt(m.residual_variance)
                << " latent_sd=" << fmt(kToyLatentSd) << " noise_variance=" << fmt(kToyNoiseVariance) << '\n';
    } else if (sweep_cmd->parsed()) {
      std::vector<std::size_t> ks;
      try {
        ks = parse_index_range(sweep_k);
      } catch (const InvalidInput& e) {
        throw UsageError(e.what());
      }
      SweepOptions o;
      o.kinds = kinds_arg(sweep_kinds);
      o.splits = sweep_splits;
      o.jobs = sweep_jobs;
      o.master_seed = sweep_seed.get();
      o.score_options = sweep_flags.options(o.master_seed);
      const TrainConfig base = sweep_config.empty() ? TrainConfig{} : read_config(sweep_config);
      const Dataset ds = load_csv(sweep_data);
      write_sweep_csv(latent_sweep(ds, base, ks, o), sweep_out);
    } else if (fetch_cmd->parsed()) {
      if (fetch_raw.empty() && !fetch_synthetic)
        throw UsageError("fetch-data needs --raw FILE or --synthetic (see tools/fetch_uci.sh)");
      const Dataset ds = fetch_synthetic
                             ? synthetic_standin(fetch_seed.get(), fetch_normals, fetch_anomalies)
                             : convert_uci_breast_cancer(fetch_raw);
      save_csv(ds, fetch_out);
      std::cout << ds.name << ": " << ds.size() << " rows, " << ds.dim() << " features, "
                << ds.anomaly_count() << " anomalies\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
