#include "tscore/grid.hpp"

#include <charconv>
#include <fstream>

#include "tscore/errors.hpp"

namespace tscore {

namespace {

double axis_point(double lo, double hi, std::size_t i, std::size_t n) {
  if (n == 1) return lo;
  if (i + 1 == n) return hi;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace

GridTable grid_eval(const TrainedModel& model, std::span<const ScoreKind> kinds,
                    const GridSpec& spec, const ScoreOptions& opts) {
  if (model.data_dim() != 2) throw InvalidInput("grid_eval: model must have exactly two inputs");
  if (spec.x1_steps == 0 || spec.x2_steps == 0) throw InvalidInput("grid_eval: empty grid");
  GridTable t;
  t.kinds.assign(kinds.begin(), kinds.end());
  t.points = Matrix(spec.x1_steps * spec.x2_steps, 2);
  std::size_t r = 0;
  for (std::size_t j = 0; j < spec.x2_steps; ++j)
    for (std::size_t i = 0; i < spec.x1_steps; ++i, ++r) {
      t.points(r, 0) = axis_point(spec.x1_min, spec.x1_max, i, spec.x1_steps);
      t.points(r, 1) = axis_point(spec.x2_min, spec.x2_max, j, spec.x2_steps);
    }
  t.scores = score_batch(model, model.input_scaling.apply(t.points), kinds, opts);
  return t;
}

void write_grid_csv(const GridTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "x1,x2";
  for (ScoreKind k : table.kinds) out << ',' << score_column(k);
  out << '\n';
  char buf[64];
  auto put = [&](double v) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, ptr - buf);
  };
  for (std::size_t r = 0; r < table.points.rows(); ++r) {
    put(table.points(r, 0));
    out << ',';
    put(table.points(r, 1));
    for (std::size_t k = 0; k < table.kinds.size(); ++k) {
      out << ',';
      put(table.scores(r, k));
    }
    out << '\n';
  }
}

TrainConfig toy_config(const ToyOptions& opts) {
  TrainConfig c;
  c.latent_dim = 1;
  c.mixture_components = 1;
  c.prior_kind = PriorKind::gaussian_mixture;
  c.beta = opts.beta;
  c.kernel_width = opts.kernel_width;
  c.steps = opts.steps;
  c.seed = derive_seed(opts.seed, {11});
  return c;
}

TrainedModel train_toy(const ToyOptions& opts) {
  const Dataset data = toy_generate(opts.samples, derive_seed(opts.seed, {10}));
  TrainedModel m = train(toy_config(opts), data.features);
  m.input_scaling = Normalizer::identity(2);
  return m;
}

}  // namespace tscore
