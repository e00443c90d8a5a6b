#include "tscore/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tscore/errors.hpp"
#include "tscore/model_io.hpp"

namespace tscore {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::size_t resolve_jobs(std::size_t jobs, std::size_t units) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(jobs, units));
}

// Runs work(u) for u in [0, units) on a bounded pool and hands results to
// done(u, result) on the calling thread in increasing u order.
template <class Result, class Work, class Done>
void run_ordered(std::size_t units, std::size_t jobs, Work work, Done done) {
  if (units == 0) return;
  jobs = resolve_jobs(jobs, units);
  if (jobs == 1) {
    for (std::size_t u = 0; u < units; ++u) done(u, work(u));
    return;
  }
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::size_t, Result> ready;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;

  auto worker = [&] {
#ifdef _OPENMP
    omp_set_num_threads(1);
#endif
    while (!stop) {
      const std::size_t u = next++;
      if (u >= units) break;
      try {
        Result r = work(u);
        std::lock_guard lk(mu);
        ready.emplace(u, std::move(r));
      } catch (...) {
        std::lock_guard lk(mu);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
      cv.notify_all();
    }
  };

  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    try {
      for (std::size_t u = 0; u < units; ++u) {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return ready.contains(u) || failure; });
        if (failure) break;
        Result r = std::move(ready.at(u));
        ready.erase(u);
        lk.unlock();
        done(u, r);
      }
    } catch (...) {
      stop = true;
      throw;
    }
    stop = true;
  }
  if (failure) std::rethrow_exception(failure);
}

struct UnitSpec {
  const Split* split = nullptr;
  std::size_t split_index = 0;
  std::uint64_t split_seed = 0;
  std::size_t config_index = 0;
  TrainConfig config;
};

// Truncates a results file after its last newline.
void drop_partial_last_line(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.empty() || text.back() == '\n') return;
  const auto keep = text.rfind('\n');
  std::filesystem::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
}

std::optional<double> safe_auc(std::span<const double> scores, std::span<const int> labels) {
  try {
    return auc(scores, labels);
  } catch (const UndefinedAuc&) {
    return std::nullopt;
  }
}

std::vector<EvalRecord> evaluate_unit(const std::string& dataset, const UnitSpec& u,
                                      std::span<const ScoreKind> kinds, const ScoreOptions& sopts,
                                      const std::filesystem::path& model_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<EvalRecord> records;
  for (ScoreKind k : kinds) {
    EvalRecord r;
    r.dataset = dataset;
    r.split = u.split_index;
    r.split_seed = u.split_seed;
    r.config_index = u.config_index;
    r.config = u.config;
    r.kind = k;
    records.push_back(std::move(r));
  }
  auto fail = [&](const std::string& why) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (auto& r : records) {
      r.failed = true;
      r.error = why;
      r.wall_time = secs;
    }
    return records;
  };

  const Split& sp = *u.split;
  const Normalizer norm = Normalizer::fit(sp.train);
  const Matrix x_train = norm.apply(sp.train.features);
  const Matrix x_test = norm.apply(sp.test.features);

  TrainedModel model;
  try {
    model = train(u.config, x_train);
  } catch (const TrainingDiverged& e) {
    return fail(e.what());
  } catch (const InvalidInput& e) {
    return fail(e.what());
  }
  model.input_scaling = norm;
  if (!model_dir.empty()) save_model(model, model_file(model_dir, u.config_index, u.split_index));

  const Matrix s_train = score_batch(model, x_train, kinds, sopts);
  const Matrix s_test = score_batch(model, x_test, kinds, sopts);
  const Matrix recon = model.reconstruct(x_train);
  const double mean_residual =
      squared_distance(x_train.values(), recon.values()) / static_cast<double>(x_train.rows());

  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const Vector tr = s_train.column(k), te = s_test.column(k);
    auto& r = records[k];
    r.train_auc = safe_auc(tr, sp.train.labels);
    r.test_auc = safe_auc(te, sp.test.labels);
    double metric = mean_residual;
    if (kinds[k] != ScoreKind::reconstruction_error)
      metric = std::accumulate(tr.begin(), tr.end(), 0.0) / static_cast<double>(tr.size());
    if (std::isfinite(metric)) r.selection_metric = metric;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto& r : records) r.wall_time = secs;
  return records;
}

std::vector<Split> make_splits(const Dataset& ds, std::size_t n, std::uint64_t master,
                               const SplitSpec& tmpl) {
  std::vector<Split> out;
  for (std::size_t j = 0; j < n; ++j) {
    SplitSpec s = tmpl;
    s.seed = split_seed(master, j);
    out.push_back(split(ds, s));
  }
  return out;
}

template <class T>
std::vector<T> json_list(const json& j, const char* key, std::vector<T> fallback) {
  if (!j.contains(key)) return fallback;
  auto v = j.at(key).get<std::vector<T>>();
  if (v.empty()) throw ConfigError(std::string("grid: '") + key + "' must not be empty");
  return v;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidInput("auc: scores and labels differ in length");
  std::int64_t n_anom = 0, n_norm = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) ++n_anom;
    else if (labels[i] == 0) ++n_norm;
    else throw InvalidInput("auc: labels must be 0 or 1");
    if (std::isnan(scores[i])) throw InvalidInput("auc: NaN score");
  }
  if (n_anom == 0 || n_norm == 0) throw UndefinedAuc("auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Doubled tie-averaged ranks keep everything integral.
  std::int64_t rank_sum2 = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start + 1;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) ++end;
    const auto rank2 = static_cast<std::int64_t>(start + 1 + end);
    for (std::size_t t = start; t < end; ++t)
      if (labels[order[t]] == 0) rank_sum2 += rank2;
    start = end;
  }
  const std::int64_t u2 = rank_sum2 - n_norm * (n_norm + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_norm) * static_cast<double>(n_anom));
}

HyperGrid grid_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("grid must be a JSON object");
  static const std::set<std::string> known{"hidden_widths", "latent_dims", "mixture_sizes",
                                           "kernel_widths", "betas", "prior", "base"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown grid key '" + key + "'");
  HyperGrid g;
  try {
    g.hidden_widths = json_list(j, "hidden_widths", g.hidden_widths);
    g.latent_dims = json_list(j, "latent_dims", g.latent_dims);
    g.mixture_sizes = json_list(j, "mixture_sizes", g.mixture_sizes);
    g.kernel_widths = json_list(j, "kernel_widths", g.kernel_widths);
    g.betas = json_list(j, "betas", g.betas);
    if (j.contains("prior")) g.prior_kind = parse_prior_kind(j.at("prior").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  if (j.contains("base")) g.base = config_from_json(j.at("base"));
  g.base.prior_kind = g.prior_kind;
  return g;
}

json grid_to_json(const HyperGrid& g) {
  return json{{"hidden_widths", g.hidden_widths}, {"latent_dims", g.latent_dims},
              {"mixture_sizes", g.mixture_sizes}, {"kernel_widths", g.kernel_widths},
              {"betas", g.betas}, {"prior", std::string(to_string(g.prior_kind))},
              {"base", config_to_json(g.base)}};
}

HyperGrid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid file '" + path.string() + "'");
  try {
    return grid_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("grid file '" + path.string() + "': " + e.what());
  }
}

std::vector<TrainConfig> expand_grid(const HyperGrid& g, std::size_t data_dim) {
  std::vector<TrainConfig> out;
  for (std::size_t h : g.hidden_widths)
    for (std::size_t k : g.latent_dims) {
      if (k > data_dim || k == 0) continue;
      if (g.prior_kind == PriorKind::vmf_mixture && k < 2) continue;
      for (std::size_t m : g.mixture_sizes)
        for (double c : g.kernel_widths)
          for (double b : g.betas) {
            TrainConfig cfg = g.base;
            cfg.hidden_width = h;
            cfg.latent_dim = k;
            cfg.mixture_components = m;
            cfg.prior_kind = g.prior_kind;
            cfg.kernel_width = c;
            cfg.beta = b;
            out.push_back(cfg);
          }
    }
  if (out.empty()) throw ConfigError("grid is empty after filtering latent dimensions");
  return out;
}

std::string_view to_string(Regime r) { return r == Regime::supervised ? "supervised" : "unsupervised"; }

Regime parse_regime(std::string_view s) {
  if (s == "supervised") return Regime::supervised;
  if (s == "unsupervised") return Regime::unsupervised;
  throw InvalidInput("unknown selection regime '" + std::string(s) + "'");
}

ordered_json record_to_json(const EvalRecord& r) {
  ordered_json j;
  j["v"] = kRecordSchemaVersion;
  j["dataset"] = r.dataset;
  j["split"] = r.split;
  j["split_seed"] = r.split_seed;
  j["config_index"] = r.config_index;
  j["config"] = config_to_json(r.config);
  j["score_kind"] = std::string(token(r.kind));
  j["train_auc"] = optional_json(r.train_auc);
  j["test_auc"] = optional_json(r.test_auc);
  j["selection_metric"] = optional_json(r.selection_metric);
  j["failed"] = r.failed;
  if (r.failed) j["error"] = r.error;
  j["wall_time"] = r.wall_time;
  return j;
}

EvalRecord record_from_json(const json& j) {
  if (j.value("v", 0) != kRecordSchemaVersion) throw InvalidInput("record: unsupported schema version");
  EvalRecord r;
  r.dataset = j.at("dataset").get<std::string>();
  r.split = j.at("split").get<std::size_t>();
  r.split_seed = j.at("split_seed").get<std::uint64_t>();
  r.config_index = j.at("config_index").get<std::size_t>();
  r.config = config_from_json(j.at("config"));
  r.kind = parse_score_kind(j.at("score_kind").get<std::string>());
  r.train_auc = optional_from(j, "train_auc");
  r.test_auc = optional_from(j, "test_auc");
  r.selection_metric = optional_from(j, "selection_metric");
  r.failed = j.value("failed", false);
  r.error = j.value("error", std::string());
  r.wall_time = j.value("wall_time", 0.0);
  return r;
}

std::optional<std::size_t> select_model(std::span<const EvalRecord> records, ScoreKind kind,
                                        Regime regime) {
  std::optional<std::size_t> best;
  double best_value = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.kind != kind || r.failed) continue;
    std::optional<double> metric;
    if (regime == Regime::supervised) {
      metric = r.train_auc;
    } else if (r.selection_metric) {
      // Residual is minimised; log-likelihoods are maximised.
      metric = kind == ScoreKind::reconstruction_error ? -*r.selection_metric : *r.selection_metric;
    }
    if (!metric) continue;
    const bool better = !best || *metric > best_value ||
                        (*metric == best_value && r.config_index < records[*best].config_index);
    if (better) {
      best = i;
      best_value = *metric;
    }
  }
  return best;
}

std::uint64_t split_seed(std::uint64_t master, std::size_t split) {
  return derive_seed(master, {0x5b117, split});
}

std::uint64_t training_seed(std::uint64_t master, std::size_t split) {
  return derive_seed(master, {0x7a1, split});
}

std::filesystem::path model_file(const std::filesystem::path& dir, std::size_t config_index,
                                 std::size_t split) {
  return dir / ("config" + std::to_string(config_index) + "_split" + std::to_string(split) + ".model");
}

std::vector<EvalRecord> read_records(const std::filesystem::path& path) {
  std::vector<EvalRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(row, 0, std::string("bad result record: ") + e.what());
    }
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::string& dataset, std::span<const Selection> selections) {
  std::vector<SummaryRow> out;
  std::vector<std::pair<Regime, ScoreKind>> groups;
  for (const auto& s : selections)
    if (std::find(groups.begin(), groups.end(), std::pair{s.regime, s.kind}) == groups.end())
      groups.emplace_back(s.regime, s.kind);
  for (const auto& [regime, kind] : groups) {
    Vector v;
    for (const auto& s : selections)
      if (s.regime == regime && s.kind == kind && s.test_auc) v.push_back(*s.test_auc);
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    SummaryRow row;
    row.dataset = dataset;
    row.regime = regime;
    row.kind = kind;
    row.splits = v.size();
    row.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    const std::size_t h = v.size() / 2;
    row.median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
    row.min = v.front();
    row.max = v.back();
    out.push_back(row);
  }
  return out;
}

void write_summary_csv(std::span<const SummaryRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "dataset,regime,score_kind,splits,mean_auc,median_auc,min_auc,max_auc\n";
  for (const auto& r : rows)
    out << r.dataset << ',' << to_string(r.regime) << ',' << token(r.kind) << ',' << r.splits << ','
        << format_double(r.mean) << ',' << format_double(r.median) << ',' << format_double(r.min)
        << ',' << format_double(r.max) << '\n';
}

ExperimentResult run_experiment(const Dataset& ds, const HyperGrid& grid,
                                const ExperimentOptions& opts) {
  ds.validate();
  if (opts.splits == 0) throw InvalidInput("experiment: need at least one split");
  if (opts.kinds.empty()) throw InvalidInput("experiment: no score kinds requested");

  ExperimentResult result;
  result.configs = expand_grid(grid, ds.dim());
  const auto splits = make_splits(ds, opts.splits, opts.master_seed, opts.split_template);
  const std::size_t n_cfg = result.configs.size();

  auto config_for = [&](std::size_t i, std::size_t j) {
    TrainConfig c = result.configs[i];
    c.seed = training_seed(opts.master_seed, j);
    return c;
  };

  // Resume: keep records of fully evaluated (config, split) units.
  std::map<std::pair<std::size_t, std::size_t>, std::set<ScoreKind>> done_kinds;
  std::vector<EvalRecord> previous;
  if (!opts.out_path.empty() && std::filesystem::exists(opts.out_path)) {
    drop_partial_last_line(opts.out_path);
    for (auto& r : read_records(opts.out_path)) {
      if (r.dataset != ds.name) continue;
      if (r.config_index >= n_cfg || r.split >= opts.splits ||
          config_to_json(r.config) != config_to_json(config_for(r.config_index, r.split)))
        throw ConfigError("results file '" + opts.out_path.string() +
                          "' was produced by a different grid or seed");
      done_kinds[{r.config_index, r.split}].insert(r.kind);
      previous.push_back(std::move(r));
    }
  }
  auto complete = [&](std::size_t i, std::size_t j) {
    auto it = done_kinds.find({i, j});
    if (it == done_kinds.end()) return false;
    return std::all_of(opts.kinds.begin(), opts.kinds.end(),
                       [&](ScoreKind k) { return it->second.contains(k); });
  };

  std::vector<UnitSpec> units;
  for (std::size_t i = 0; i < n_cfg; ++i)
    for (std::size_t j = 0; j < opts.splits; ++j) {
      if (complete(i, j)) continue;
      units.push_back(UnitSpec{&splits[j], j, split_seed(opts.master_seed, j), i, config_for(i, j)});
    }

  // Records of incomplete units and repeated records are dropped from the file.
  std::set<std::tuple<std::size_t, std::size_t, ScoreKind>> kept;
  std::vector<EvalRecord> retained;
  for (auto& r : previous)
    if (complete(r.config_index, r.split) && kept.emplace(r.config_index, r.split, r.kind).second)
      retained.push_back(std::move(r));
  if (retained.size() != previous.size()) {
    std::ofstream rewrite(opts.out_path, std::ios::trunc);
    for (const auto& r : retained) rewrite << record_to_json(r).dump() << '\n';
    if (!rewrite) throw std::runtime_error("cannot write '" + opts.out_path.string() + "'");
  }
  for (auto& r : retained)
    if (std::find(opts.kinds.begin(), opts.kinds.end(), r.kind) != opts.kinds.end())
      result.records.push_back(std::move(r));

  if (!opts.model_dir.empty()) std::filesystem::create_directories(opts.model_dir);
  std::ofstream out;
  if (!opts.out_path.empty()) {
    out.open(opts.out_path, std::ios::app);
    if (!out) throw std::runtime_error("cannot write '" + opts.out_path.string() + "'");
  }

  run_ordered<std::vector<EvalRecord>>(
      units.size(), opts.jobs,
      [&](std::size_t u) { return evaluate_unit(ds.name, units[u], opts.kinds, opts.score_options, opts.model_dir); },
      [&](std::size_t, const std::vector<EvalRecord>& recs) {
        for (const auto& r : recs) {
          if (out.is_open()) out << record_to_json(r).dump() << '\n';
          result.records.push_back(r);
        }
        if (out.is_open()) out.flush();
      });
  result.trained_units = units.size();

  for (Regime regime : opts.regimes)
    for (ScoreKind kind : opts.kinds)
      for (std::size_t j = 0; j < opts.splits; ++j) {
        std::vector<EvalRecord> of_split;
        for (const auto& r : result.records)
          if (r.split == j) of_split.push_back(r);
        const auto pick = select_model(of_split, kind, regime);
        if (!pick) continue;
        result.selections.push_back(
            Selection{j, kind, regime, of_split[*pick].config_index, of_split[*pick].test_auc});
      }
  result.summary = summarize(ds.name, result.selections);
  if (!opts.summary_path.empty()) write_summary_csv(result.summary, opts.summary_path);
  return result;
}

std::vector<SweepRow> latent_sweep(const Dataset& ds, const TrainConfig& base,
                                   std::span<const std::size_t> latent_dims, const SweepOptions& opts) {
  ds.validate();
  if (latent_dims.empty()) throw InvalidInput("latent sweep: no latent dimensions");
  for (std::size_t k : latent_dims)
    if (k == 0 || k > ds.dim())
      throw InvalidInput("latent sweep: latent dimension " + std::to_string(k) + " outside [1, " +
                         std::to_string(ds.dim()) + "]");
  const auto splits = make_splits(ds, opts.splits, opts.master_seed, opts.split_template);
  std::vector<UnitSpec> units;
  for (std::size_t ki = 0; ki < latent_dims.size(); ++ki)
    for (std::size_t j = 0; j < opts.splits; ++j) {
      TrainConfig c = base;
      c.latent_dim = latent_dims[ki];
      c.seed = training_seed(opts.master_seed, j);
      units.push_back(UnitSpec{&splits[j], j, split_seed(opts.master_seed, j), ki, c});
    }
  std::vector<SweepRow> rows;
  run_ordered<std::vector<EvalRecord>>(
      units.size(), opts.jobs,
      [&](std::size_t u) { return evaluate_unit(ds.name, units[u], opts.kinds, opts.score_options, {}); },
      [&](std::size_t u, const std::vector<EvalRecord>& recs) {
        for (const auto& r : recs)
          rows.push_back(SweepRow{units[u].config.latent_dim, r.split, r.kind, r.train_auc, r.test_auc, r.failed});
      });
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "latent_dim,split,score_kind,train_auc,test_auc,failed\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows)
    out << r.latent_dim << ',' << r.split << ',' << token(r.kind) << ',' << opt(r.train_auc) << ','
        << opt(r.test_auc) << ',' << (r.failed ? 1 : 0) << '\n';
}

std::vector<std::size_t> parse_index_range(std::string_view s) {
  auto parse_one = [&](std::string_view t) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
      throw InvalidInput("bad integer '" + std::string(t) + "' in range '" + std::string(s) + "'");
    return v;
  };
  std::vector<std::size_t> out;
  if (const auto dots = s.find(".."); dots != std::string_view::npos) {
    const std::size_t lo = parse_one(s.substr(0, dots)), hi = parse_one(s.substr(dots + 2));
    if (lo > hi) throw InvalidInput("empty range '" + std::string(s) + "'");
    for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(',', start), s.size());
    out.push_back(parse_one(s.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

}  // namespace tscore
