#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lpk/numkit.hpp"

namespace lpk {

enum class TaskKind { Regression, Classification };
enum class HermiteLink { He1, He2, He3 };

/// How a synthetic dataset was produced, kept so stability experiments can
/// resample replacement points from the same distribution.
struct GeneratorInfo {
  enum class Kind { None, GaussianLinear, SingleIndex, TwoCluster };
  Kind kind = Kind::None;
  int d = 0;
  double noise = 0.0;
  double separation = 0.0;
  HermiteLink link = HermiteLink::He1;
};

struct Dataset {
  Matrix X;  // n x d
  Matrix Y;  // n x k
  std::string source;
  TaskKind task = TaskKind::Regression;
  std::vector<double> label_alphabet;       // classification only
  std::vector<double> generator_direction;  // theta* / hidden regression direction
  GeneratorInfo generator;
  std::string normalization;

  long n() const { return X.rows(); }
  int d() const { return static_cast<int>(X.cols()); }
  int k() const { return static_cast<int>(Y.cols()); }

  void validate() const;
};

Dataset gen_gaussian_linear(long n, int d, double noise, Rng& rng);
Dataset gen_single_index(long n, int d, HermiteLink link, double noise, Rng& rng);
Dataset gen_two_cluster(long n, int d, double separation, Rng& rng);

double hermite_link(HermiteLink link, double z);
int information_exponent(HermiteLink link);

/// Draw one fresh point from the dataset's generator distribution.
std::pair<std::vector<double>, std::vector<double>> draw_point(const Dataset& data, Rng& rng);

struct CsvSchema {
  int d = 0;
  int k = 1;
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);
void save_csv(const Dataset& data, const std::string& path);

/// IDX container ingestion (big-endian; image magic 2051, label magic 2049).
/// Pixels are scaled to [0,1] by /255. With a class filter the two kept digits
/// map to {-1,+1} in filter order.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       const std::pair<int, int>* class_filter = nullptr, long max_n = -1);

/// Resample the labels of exactly floor(p*n) uniformly chosen rows from the
/// label alphabet (a resampled label may coincide with the original).
Dataset corrupt_labels(const Dataset& data, double fraction, Rng& rng);

/// Scale every feature row to unit norm; recorded in the normalization field
/// so downstream Lipschitz estimates stay interpretable.
Dataset normalize_rows(const Dataset& data);

}  // namespace lpk
