#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tscore/linalg.hpp"

namespace tscore {

/// Labelled samples; label 0 = normal, 1 = anomaly.
struct Dataset {
  std::string name;
  Matrix features;
  std::vector<int> labels;
  std::vector<std::string> feature_names;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  std::size_t anomaly_count() const;
  /// Throws InvalidInput when the invariants do not hold.
  void validate() const;
};

Dataset subset(const Dataset& ds, std::span<const std::size_t> rows);

/// Reads a UTF-8, comma-separated file with a header row and a `label`
/// column holding 0/1. Every other column becomes a feature, in file order.
/// Throws ParseError with a 1-based row/column location.
Dataset load_csv(const std::filesystem::path& path);

/// Writes features and label with shortest round-trip formatting.
void save_csv(const Dataset& ds, const std::filesystem::path& path);

/// Per-feature standardisation.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(Vector mean, Vector scale);

  static Normalizer identity(std::size_t dim);
  /// Fit on the normal rows of `train` only; zero-variance features keep scale 1.
  static Normalizer fit(const Dataset& train);

  std::size_t dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }

  Matrix apply(const Matrix& x) const;
  Vector apply(std::span<const double> x) const;
  Matrix invert(const Matrix& x) const;
  Dataset apply(const Dataset& ds) const;

  friend bool operator==(const Normalizer&, const Normalizer&) = default;

 private:
  Vector mean_;
  Vector scale_;
};

std::pair<Normalizer, Dataset> normalize(const Dataset& train);

struct SplitSpec {
  double train_fraction = 0.8;
  double max_train_contamination = 0.1;
  std::uint64_t seed = 0;
};

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> test_index;
  bool test_all_normal = false;
};

/// floor(train_fraction * normals) normals go to train; anomalies join the
/// train set while they stay within max_train_contamination of it. Index
/// lists are sorted ascending.
Split split(const Dataset& ds, const SplitSpec& spec);

/// Parabola toy: x = (z^2, z) + e, z ~ N(0.5, sd 0.15), e ~ N(0, 0.01 I).
inline constexpr double kToyLatentMean = 0.5;
inline constexpr double kToyLatentSd = 0.15;
inline constexpr double kToyNoiseVariance = 0.01;
Dataset toy_generate(std::size_t n, std::uint64_t seed);

/// Offline stand-in for the 8-feature breast-cancer data: normals on a smooth
/// 4-dimensional manifold, anomalies either off the manifold or in the tails
/// of its latent distribution.
Dataset synthetic_standin(std::uint64_t seed, std::size_t normals = 458, std::size_t anomalies = 241);

/// Converts the raw UCI breast-cancer-wisconsin.data layout
/// (id, 9 integer attributes with '?' for missing, class 2/4) into a Dataset.
/// Rows with missing values are dropped.
Dataset convert_uci_breast_cancer(const std::filesystem::path& raw);

}  // namespace tscore
