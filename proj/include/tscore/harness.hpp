#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tscore/data.hpp"
#include "tscore/scoring.hpp"
#include "tscore/training.hpp"

namespace tscore {

/// Area under the ROC curve with label 1 (anomaly) as the positive class and
/// LOW scores expected for anomalies: P(s_anomaly < s_normal) + P(tie) / 2.
/// Computed from tie-averaged ranks in exact integer arithmetic.
/// Throws UndefinedAuc when only one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct HyperGrid {
  std::vector<std::size_t> hidden_widths{32, 64};
  std::vector<std::size_t> latent_dims{2, 4, 9};
  std::vector<std::size_t> mixture_sizes{1, 4, 16};
  std::vector<double> kernel_widths{0.001, 0.01, 0.1, 1.0};
  std::vector<double> betas{0.01, 0.1, 1.0, 10.0};
  PriorKind prior_kind = PriorKind::vmf_mixture;
  /// Everything not swept (steps, batch size, learning rate, ...).
  TrainConfig base;
};

/// Keys: hidden_widths, latent_dims, mixture_sizes, kernel_widths, betas,
/// prior, base (a training-config object). Missing keys keep the defaults.
HyperGrid grid_from_json(const nlohmann::json& j);
nlohmann::json grid_to_json(const HyperGrid& g);
HyperGrid load_grid(const std::filesystem::path& path);

/// Cartesian product in the order hidden width, latent dim, mixture size,
/// kernel width, beta (outermost first). Latent dims above `data_dim` are
/// dropped, as are latent dims below 2 for vMF priors. Throws ConfigError when
/// nothing is left.
std::vector<TrainConfig> expand_grid(const HyperGrid& g, std::size_t data_dim);

enum class Regime { supervised, unsupervised };
std::string_view to_string(Regime r);
Regime parse_regime(std::string_view s);

/// One (dataset, split, config, score kind) evaluation.
struct EvalRecord {
  std::string dataset;
  std::size_t split = 0;
  std::uint64_t split_seed = 0;
  std::size_t config_index = 0;
  TrainConfig config;
  ScoreKind kind = ScoreKind::proposed_decoder;
  std::optional<double> train_auc;
  std::optional<double> test_auc;
  /// Unsupervised criterion on the training set: mean |x - f(g(x))|^2 for the
  /// reconstruction kind (lower is better), mean log-score otherwise.
  std::optional<double> selection_metric;
  bool failed = false;
  std::string error;
  double wall_time = 0.0;
};

inline constexpr int kRecordSchemaVersion = 1;

nlohmann::ordered_json record_to_json(const EvalRecord& r);
EvalRecord record_from_json(const nlohmann::json& j);

/// Index (into `records`) of the chosen record among those of `kind`, or
/// nullopt when none qualifies. Failed records and missing metrics are
/// skipped; ties go to the lowest config_index.
std::optional<std::size_t> select_model(std::span<const EvalRecord> records, ScoreKind kind,
                                        Regime regime);

struct ExperimentOptions {
  std::size_t splits = 5;
  std::vector<ScoreKind> kinds{ScoreKind::reconstruction_error, ScoreKind::proposed_decoder};
  std::vector<Regime> regimes{Regime::supervised, Regime::unsupervised};
  std::uint64_t master_seed = 0;
  std::size_t jobs = 0;  // 0 = all logical cores
  SplitSpec split_template;
  ScoreOptions score_options;
  std::filesystem::path out_path;      // JSON-lines results; empty = in memory only
  std::filesystem::path summary_path;  // CSV summary; empty = none
  std::filesystem::path model_dir;     // persisted models; empty = none
};

struct Selection {
  std::size_t split = 0;
  ScoreKind kind = ScoreKind::proposed_decoder;
  Regime regime = Regime::supervised;
  std::size_t config_index = 0;
  std::optional<double> test_auc;
};

struct SummaryRow {
  std::string dataset;
  Regime regime = Regime::supervised;
  ScoreKind kind = ScoreKind::proposed_decoder;
  std::size_t splits = 0;
  double mean = 0.0, median = 0.0, min = 0.0, max = 0.0;
};

struct ExperimentResult {
  std::vector<TrainConfig> configs;
  std::vector<EvalRecord> records;
  std::vector<Selection> selections;
  std::vector<SummaryRow> summary;
  std::size_t trained_units = 0;  // (config, split) pairs trained in this call
};

std::uint64_t split_seed(std::uint64_t master, std::size_t split);
std::uint64_t training_seed(std::uint64_t master, std::size_t split);
std::filesystem::path model_file(const std::filesystem::path& dir, std::size_t config_index,
                                 std::size_t split);

/// Trains every config on every split, scores all kinds from one model per
/// (config, split), appends records to out_path in a fixed order, and applies
/// each selection regime. Units already present in out_path are not retrained.
ExperimentResult run_experiment(const Dataset& ds, const HyperGrid& grid,
                                const ExperimentOptions& opts);

std::vector<EvalRecord> read_records(const std::filesystem::path& path);
std::vector<SummaryRow> summarize(const std::string& dataset, std::span<const Selection> selections);
void write_summary_csv(std::span<const SummaryRow> rows, const std::filesystem::path& path);

struct SweepRow {
  std::size_t latent_dim = 0;
  std::size_t split = 0;
  ScoreKind kind = ScoreKind::proposed_decoder;
  std::optional<double> train_auc;
  std::optional<double> test_auc;
  bool failed = false;
};

struct SweepOptions {
  std::size_t splits = 5;
  std::vector<ScoreKind> kinds{ScoreKind::proposed_decoder, ScoreKind::reconstruction_error};
  std::uint64_t master_seed = 0;
  std::size_t jobs = 0;
  SplitSpec split_template;
  ScoreOptions score_options;
};

/// Trains `base` with each latent dimension in `latent_dims` on every split.
/// Rows are ordered by latent dim, then split, then kind.
std::vector<SweepRow> latent_sweep(const Dataset& ds, const TrainConfig& base,
                                   std::span<const std::size_t> latent_dims,
                                   const SweepOptions& opts);

/// Header: latent_dim,split,score_kind,train_auc,test_auc,failed
void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);

/// "a..b" or "a,b,c".
std::vector<std::size_t> parse_index_range(std::string_view s);

}  // namespace tscore
