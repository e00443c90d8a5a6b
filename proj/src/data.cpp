#include "tscore/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "tscore/errors.hpp"
#include "tscore/random.hpp"

namespace tscore {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::size_t Dataset::anomaly_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

void Dataset::validate() const {
  if (labels.size() != features.rows()) throw InvalidInput("dataset: label count differs from rows");
  if (features.cols() == 0) throw InvalidInput("dataset: no feature columns");
  if (!feature_names.empty() && feature_names.size() != features.cols())
    throw InvalidInput("dataset: feature name count differs from columns");
  for (int l : labels)
    if (l != 0 && l != 1) throw InvalidInput("dataset: labels must be 0 or 1");
  if (anomaly_count() == labels.size()) throw InvalidInput("dataset: no normal samples");
  if (!features.all_finite()) throw InvalidInput("dataset: non-finite feature value");
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset out;
  out.name = ds.name;
  out.feature_names = ds.feature_names;
  out.features = select_rows(ds.features, rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(ds.labels.at(r));
  return out;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, 0, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw ParseError(1, 0, "empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split_line(line);
  std::size_t label_col = header.size();
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string h = trim(header[c]);
    if (h == "label" && label_col == header.size())
      label_col = c;
    else
      names.push_back(h);
  }
  if (label_col == header.size()) throw ParseError(1, 0, "missing 'label' column");
  if (names.empty()) throw ParseError(1, 0, "no feature columns besides 'label'");

  Dataset ds;
  ds.name = path.stem().string();
  ds.feature_names = names;
  Vector values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError(row, std::min(cells.size(), header.size()) + 1,
                       "expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_double(trim(cells[c]), v))
        throw ParseError(row, c + 1, "non-numeric cell '" + trim(cells[c]) + "'");
      if (c == label_col) {
        if (v != 0.0 && v != 1.0) throw ParseError(row, c + 1, "label must be 0 or 1");
        ds.labels.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
  }
  if (ds.labels.empty()) throw ParseError(row, 0, "no data rows");
  ds.features = Matrix(ds.labels.size(), names.size());
  std::copy(values.begin(), values.end(), ds.features.values().begin());
  if (ds.anomaly_count() == ds.labels.size()) throw ParseError(row, 0, "no normal samples");
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  for (std::size_t c = 0; c < ds.dim(); ++c)
    out << (c < ds.feature_names.size() ? ds.feature_names[c] : "x" + std::to_string(c + 1)) << ',';
  out << "label\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (double v : ds.features.row(r)) out << format_double(v) << ',';
    out << ds.labels[r] << '\n';
  }
}

Normalizer::Normalizer(Vector mean, Vector scale) : mean_(std::move(mean)), scale_(std::move(scale)) {
  if (mean_.size() != scale_.size()) throw InvalidInput("normalizer: mean/scale size mismatch");
  for (double s : scale_)
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidInput("normalizer: scale must be positive");
}

Normalizer Normalizer::identity(std::size_t dim) { return Normalizer(Vector(dim, 0.0), Vector(dim, 1.0)); }

Normalizer Normalizer::fit(const Dataset& train) {
  const std::size_t d = train.dim();
  Vector mean(d, 0.0), var(d, 0.0);
  std::size_t n = 0;
  for (std::size_t r = 0; r < train.size(); ++r) {
    if (train.labels[r] != 0) continue;
    ++n;
    for (std::size_t c = 0; c < d; ++c) mean[c] += train.features(r, c);
  }
  if (n == 0) throw InvalidInput("normalizer: training set has no normal rows");
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < train.size(); ++r) {
    if (train.labels[r] != 0) continue;
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = train.features(r, c) - mean[c];
      var[c] += dv * dv;
    }
  }
  Vector scale(d);
  for (std::size_t c = 0; c < d; ++c) {
    const double sd = std::sqrt(var[c] / static_cast<double>(n));
    scale[c] = sd <= 1e-12 * std::max(1.0, std::abs(mean[c])) ? 1.0 : sd;
  }
  return Normalizer(std::move(mean), std::move(scale));
}

Matrix Normalizer::apply(const Matrix& x) const {
  if (x.cols() != dim()) throw InvalidInput("normalizer: dimension mismatch");
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = (out(r, c) - mean_[c]) / scale_[c];
  return out;
}

Vector Normalizer::apply(std::span<const double> x) const {
  if (x.size() != dim()) throw InvalidInput("normalizer: dimension mismatch");
  Vector out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) out[c] = (x[c] - mean_[c]) / scale_[c];
  return out;
}

Matrix Normalizer::invert(const Matrix& x) const {
  if (x.cols() != dim()) throw InvalidInput("normalizer: dimension mismatch");
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = out(r, c) * scale_[c] + mean_[c];
  return out;
}

Dataset Normalizer::apply(const Dataset& ds) const {
  Dataset out = ds;
  out.features = apply(ds.features);
  return out;
}

std::pair<Normalizer, Dataset> normalize(const Dataset& train) {
  if (train.size() < 2) throw InvalidInput("normalize: need at least two rows");
  Normalizer n = Normalizer::fit(train);
  Dataset t = n.apply(train);
  return {std::move(n), std::move(t)};
}

Split split(const Dataset& ds, const SplitSpec& spec) {
  ds.validate();
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) ||
      !(spec.max_train_contamination > 0.0 && spec.max_train_contamination < 1.0))
    throw InvalidInput("split: fractions must lie in (0, 1)");
  std::vector<std::size_t> normals, anomalies;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.labels[i] == 0 ? normals : anomalies).push_back(i);

  Rng rng(spec.seed);
  std::shuffle(normals.begin(), normals.end(), rng);
  std::shuffle(anomalies.begin(), anomalies.end(), rng);

  const auto train_normals =
      static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(normals.size())));
  // a / (normals + a) <= rate  <=>  a <= rate * normals / (1 - rate)
  const double rate = spec.max_train_contamination;
  const auto cap = static_cast<std::size_t>(
      std::floor(rate * static_cast<double>(train_normals) / (1.0 - rate) + 1e-9));
  const std::size_t train_anomalies = std::min(cap, anomalies.size());

  Split s;
  s.train_index.assign(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(train_normals));
  s.train_index.insert(s.train_index.end(), anomalies.begin(),
                       anomalies.begin() + static_cast<std::ptrdiff_t>(train_anomalies));
  s.test_index.assign(normals.begin() + static_cast<std::ptrdiff_t>(train_normals), normals.end());
  s.test_index.insert(s.test_index.end(),
                      anomalies.begin() + static_cast<std::ptrdiff_t>(train_anomalies), anomalies.end());
  std::sort(s.train_index.begin(), s.train_index.end());
  std::sort(s.test_index.begin(), s.test_index.end());
  s.train = subset(ds, s.train_index);
  s.test = subset(ds, s.test_index);
  s.test_all_normal = s.test.anomaly_count() == 0;
  return s;
}

Dataset toy_generate(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidInput("toy_generate: n must be positive");
  Rng rng(seed);
  std::normal_distribution<double> latent(kToyLatentMean, kToyLatentSd);
  std::normal_distribution<double> noise(0.0, std::sqrt(kToyNoiseVariance));
  Dataset ds;
  ds.name = "toy-parabola";
  ds.feature_names = {"x1", "x2"};
  ds.features = Matrix(n, 2);
  ds.labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = latent(rng);
    const double e1 = noise(rng);
    const double e2 = noise(rng);
    ds.features(i, 0) = z * z + e1;
    ds.features(i, 1) = z + e2;
  }
  return ds;
}

Dataset synthetic_standin(std::uint64_t seed, std::size_t normals, std::size_t anomalies) {
  constexpr std::size_t latent = 4, dim = 8;
  // The generator map is fixed; only the samples depend on `seed`.
  Rng shape_rng(0x5eed5a17ull);
  std::normal_distribution<double> normal;
  Matrix w(latent, latent), a(dim, latent), q(dim, latent);
  Vector b(latent), offset(dim);
  for (double& v : w.values()) v = 0.8 * normal(shape_rng);
  for (double& v : a.values()) v = normal(shape_rng);
  for (double& v : q.values()) v = 0.25 * normal(shape_rng);
  for (double& v : b) v = normal(shape_rng);
  for (double& v : offset) v = 2.0 * normal(shape_rng);

  // Orthonormal basis of the complement of span(a), for off-manifold steps.
  std::vector<Vector> normal_dirs;
  {
    std::vector<Vector> basis;
    for (std::size_t j = 0; j < latent; ++j) basis.push_back(a.column(j));
    for (std::size_t e = 0; e < dim; ++e) {
      Vector v(dim, 0.0);
      v[e] = 1.0;
      basis.push_back(v);
    }
    std::vector<Vector> ortho;
    for (auto& v : basis) {
      for (const auto& o : ortho) {
        const double p = dot(v, o);
        for (std::size_t i = 0; i < dim; ++i) v[i] -= p * o[i];
      }
      const double n = std::sqrt(squared_norm(v));
      if (n < 1e-8) continue;
      for (double& x : v) x /= n;
      ortho.push_back(v);
      if (ortho.size() == dim) break;
    }
    normal_dirs.assign(ortho.begin() + latent, ortho.end());
  }

  auto generate = [&](std::span<const double> u, std::span<double> x) {
    Vector h(latent);
    for (std::size_t i = 0; i < latent; ++i) h[i] = u[i] + 0.5 * std::sin(dot(w.row(i), u) + b[i]);
    for (std::size_t i = 0; i < dim; ++i) {
      x[i] = offset[i] + dot(a.row(i), h);
      for (std::size_t j = 0; j < latent; ++j) x[i] += q(i, j) * (h[j] * h[j] - 1.0);
    }
  };

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.name = "synthetic-breast-cancer";
  for (std::size_t i = 0; i < dim; ++i) ds.feature_names.push_back("f" + std::to_string(i + 1));
  ds.features = Matrix(normals + anomalies, dim);
  ds.labels.assign(normals + anomalies, 0);
  Vector u(latent);
  const double noise_sd = 0.05;
  for (std::size_t r = 0; r < normals; ++r) {
    for (double& v : u) v = normal(rng);
    generate(u, ds.features.row(r));
    for (double& v : ds.features.row(r)) v += noise_sd * normal(rng);
  }
  for (std::size_t r = normals; r < normals + anomalies; ++r) {
    ds.labels[r] = 1;
    for (double& v : u) v = normal(rng);
    auto x = ds.features.row(r);
    if ((r - normals) % 2 == 0) {
      // Latent tail: radius 4..5.5, on the manifold.
      const double radius = 4.0 + 1.5 * unit(rng);
      const double n = std::sqrt(squared_norm(u));
      for (double& v : u) v *= radius / n;
      generate(u, x);
      for (double& v : x) v += noise_sd * normal(rng);
    } else {
      // Off the manifold: a typical point moved along a normal direction.
      generate(u, x);
      Vector step(dim, 0.0);
      for (const auto& d : normal_dirs) {
        const double c = normal(rng);
        for (std::size_t i = 0; i < dim; ++i) step[i] += c * d[i];
      }
      const double len = (2.5 + 1.5 * unit(rng)) / std::sqrt(squared_norm(step));
      for (std::size_t i = 0; i < dim; ++i) x[i] += len * step[i] + noise_sd * normal(rng);
    }
  }
  return ds;
}

Dataset convert_uci_breast_cancer(const std::filesystem::path& raw) {
  std::ifstream in(raw);
  if (!in) throw ParseError(0, 0, "cannot open '" + raw.string() + "'");
  Dataset ds;
  ds.name = "breast-cancer-wisconsin";
  ds.feature_names = {"clump_thickness", "cell_size_uniformity", "cell_shape_uniformity",
                      "marginal_adhesion", "single_epithelial_cell_size", "bare_nuclei",
                      "bland_chromatin", "normal_nucleoli", "mitoses"};
  Vector values;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 11) throw ParseError(row, 0, "expected 11 fields");
    if (std::any_of(cells.begin(), cells.end(), [](const std::string& c) { return trim(c) == "?"; }))
      continue;
    Vector rowv;
    for (std::size_t c = 1; c <= 9; ++c) {
      double v = 0.0;
      if (!parse_double(trim(cells[c]), v)) throw ParseError(row, c + 1, "non-numeric attribute");
      rowv.push_back(v);
    }
    double cls = 0.0;
    if (!parse_double(trim(cells[10]), cls) || (cls != 2.0 && cls != 4.0))
      throw ParseError(row, 11, "class must be 2 or 4");
    values.insert(values.end(), rowv.begin(), rowv.end());
    ds.labels.push_back(cls == 4.0 ? 1 : 0);
  }
  if (ds.labels.empty()) throw ParseError(row, 0, "no data rows");
  ds.features = Matrix(ds.labels.size(), 9);
  std::copy(values.begin(), values.end(), ds.features.values().begin());
  return ds;
}

}  // namespace tscore
