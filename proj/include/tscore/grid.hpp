#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "tscore/scoring.hpp"

namespace tscore {

struct GridSpec {
  double x1_min = -0.2, x1_max = 1.2;
  double x2_min = -0.2, x2_max = 1.2;
  std::size_t x1_steps = 100;
  std::size_t x2_steps = 100;
};

struct GridTable {
  std::vector<ScoreKind> kinds;
  Matrix points;  // raw-space (x1, x2), x2 outer, x1 inner
  Matrix scores;  // one column per kind
};

/// Evaluates the requested scores on a regular grid over the raw input plane.
/// Points are passed through the model's input scaling before scoring.
/// Throws InvalidInput unless the model has two inputs.
GridTable grid_eval(const TrainedModel& model, std::span<const ScoreKind> kinds,
                    const GridSpec& spec, const ScoreOptions& opts = {});

/// Header: x1,x2,score_<kind>...
void write_grid_csv(const GridTable& table, const std::filesystem::path& path);

/// Parabola toy: k = 1, one-component Gaussian prior, beta equal to the
/// generating noise variance. Data are used unscaled.
struct ToyOptions {
  std::size_t samples = 2000;
  std::size_t steps = 10000;
  double beta = 0.01;
  double kernel_width = 1.0;
  std::uint64_t seed = 0;
};

TrainConfig toy_config(const ToyOptions& opts);
TrainedModel train_toy(const ToyOptions& opts);

}  // namespace tscore
