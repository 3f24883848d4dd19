#include "lpk/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lpk {

void Dataset::validate() const {
  if (n() < 1) throw DimensionError("dataset: n must be >= 1");
  if (Y.rows() != X.rows()) throw DimensionError("dataset: X/Y row counts differ");
  if (!X.all_finite() || !Y.all_finite()) throw NumericError("dataset: non-finite entries");
  if (task == TaskKind::Classification && k() == 1) {
    for (long i = 0; i < n(); ++i) {
      const double y = Y(i, 0);
      if (y != -1.0 && y != 1.0)
        throw DomainError("dataset: binary classification labels must be in {-1,+1}");
    }
  }
}

Dataset gen_gaussian_linear(long n, int d, double noise, Rng& rng) {
  if (n < 1 || d < 1) throw DomainError("gen_gaussian_linear: n, d must be >= 1");
  if (noise < 0) throw DomainError("gen_gaussian_linear: noise must be >= 0");
  Dataset out;
  out.X = Matrix(n, d);
  out.Y = Matrix(n, 1);
  out.generator_direction = rng.sphere(static_cast<size_t>(d));
  for (long i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int j = 0; j < d; ++j) {
      const double x = rng.gaussian();
      out.X(i, j) = x;
      dot += out.generator_direction[static_cast<size_t>(j)] * x;
    }
    out.Y(i, 0) = dot + noise * rng.gaussian();
  }
  out.source = "gaussian-linear";
  out.task = TaskKind::Regression;
  out.generator = {GeneratorInfo::Kind::GaussianLinear, d, noise, 0.0, HermiteLink::He1};
  return out;
}

double hermite_link(HermiteLink link, double z) {
  switch (link) {
    case HermiteLink::He1:
      return z;
    case HermiteLink::He2:
      return z * z - 1.0;
    case HermiteLink::He3:
      return z * z * z - 3.0 * z;
  }
  throw DomainError("hermite_link: unknown link");
}

int information_exponent(HermiteLink link) {
  switch (link) {
    case HermiteLink::He1:
      return 1;
    case HermiteLink::He2:
      return 2;
    case HermiteLink::He3:
      return 3;
  }
  throw DomainError("information_exponent: unknown link");
}

Dataset gen_single_index(long n, int d, HermiteLink link, double noise, Rng& rng) {
  if (d < 2) throw DomainError("gen_single_index: d must be >= 2");
  if (n < 1) throw DomainError("gen_single_index: n must be >= 1");
  Dataset out;
  out.X = Matrix(n, d);
  out.Y = Matrix(n, 1);
  out.generator_direction = rng.sphere(static_cast<size_t>(d));
  for (long i = 0; i < n; ++i) {
    double proj = 0.0;
    for (int j = 0; j < d; ++j) {
      const double x = rng.gaussian();
      out.X(i, j) = x;
      proj += out.generator_direction[static_cast<size_t>(j)] * x;
    }
    out.Y(i, 0) = hermite_link(link, proj) + noise * rng.gaussian();
  }
  out.source = "single-index";
  out.task = TaskKind::Regression;
  out.generator = {GeneratorInfo::Kind::SingleIndex, d, noise, 0.0, link};
  return out;
}

Dataset gen_two_cluster(long n, int d, double separation, Rng& rng) {
  if (n < 2 || n % 2 != 0) throw DomainError("gen_two_cluster: n must be even and >= 2");
  if (d < 1) throw DomainError("gen_two_cluster: d must be >= 1");
  Dataset out;
  out.X = Matrix(n, d);
  out.Y = Matrix(n, 1);
  const double offset = separation / 2.0;
  for (long i = 0; i < n; ++i) {
    const double label = (i < n / 2) ? 1.0 : -1.0;
    for (int j = 0; j < d; ++j) out.X(i, j) = rng.gaussian() + (j == 0 ? label * offset : 0.0);
    out.Y(i, 0) = label;
  }
  out.source = "two-cluster";
  out.task = TaskKind::Classification;
  out.label_alphabet = {-1.0, 1.0};
  out.generator = {GeneratorInfo::Kind::TwoCluster, d, 0.0, separation, HermiteLink::He1};
  return out;
}

std::pair<std::vector<double>, std::vector<double>> draw_point(const Dataset& data, Rng& rng) {
  const auto& g = data.generator;
  std::vector<double> x(static_cast<size_t>(data.d()));
  std::vector<double> y(1, 0.0);
  switch (g.kind) {
    case GeneratorInfo::Kind::GaussianLinear: {
      double dot = 0.0;
      for (int j = 0; j < g.d; ++j) {
        x[static_cast<size_t>(j)] = rng.gaussian();
        dot += data.generator_direction[static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
      }
      y[0] = dot + g.noise * rng.gaussian();
      return {x, y};
    }
    case GeneratorInfo::Kind::SingleIndex: {
      double proj = 0.0;
      for (int j = 0; j < g.d; ++j) {
        x[static_cast<size_t>(j)] = rng.gaussian();
        proj += data.generator_direction[static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
      }
      y[0] = hermite_link(g.link, proj) + g.noise * rng.gaussian();
      return {x, y};
    }
    case GeneratorInfo::Kind::TwoCluster: {
      const double label = rng.rademacher() > 0 ? 1.0 : -1.0;
      for (int j = 0; j < g.d; ++j)
        x[static_cast<size_t>(j)] = rng.gaussian() + (j == 0 ? label * g.separation / 2.0 : 0.0);
      y[0] = label;
      return {x, y};
    }
    case GeneratorInfo::Kind::None:
      break;
  }
  // no generator: resample an existing row
  const long i = static_cast<long>(rng.below(static_cast<uint64_t>(data.n())));
  for (int j = 0; j < data.d(); ++j) x[static_cast<size_t>(j)] = data.X(i, j);
  y.assign(data.Y.row(i).begin(), data.Y.row(i).end());
  return {x, y};
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  if (schema.d < 1 || schema.k < 1) throw ConfigError("load_csv: schema dims must be positive");
  std::ifstream in(path);
  if (!in) throw FormatError("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw FormatError("load_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::string expected;
  for (int j = 0; j < schema.d; ++j) expected += "x" + std::to_string(j) + ",";
  for (int j = 0; j < schema.k; ++j) expected += "y" + std::to_string(j) + (j + 1 < schema.k ? "," : "");
  if (line != expected)
    throw FormatError("load_csv: header mismatch at line 1, expected '" + expected + "'");

  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw FormatError("load_csv: non-numeric cell '" + cell + "' at line " + std::to_string(line_no));
      }
    }
    if (static_cast<int>(row.size()) != schema.d + schema.k)
      throw FormatError("load_csv: ragged row at line " + std::to_string(line_no) + " (" +
                        std::to_string(row.size()) + " cells)");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("load_csv: no data rows in " + path);

  Dataset out;
  out.X = Matrix(static_cast<long>(rows.size()), schema.d);
  out.Y = Matrix(static_cast<long>(rows.size()), schema.k);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < schema.d; ++j) out.X(static_cast<long>(i), j) = rows[i][static_cast<size_t>(j)];
    for (int j = 0; j < schema.k; ++j)
      out.Y(static_cast<long>(i), j) = rows[i][static_cast<size_t>(schema.d + j)];
  }
  out.source = path;
  out.validate();
  return out;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("save_csv: cannot open " + path);
  for (int j = 0; j < data.d(); ++j) out << "x" << j << ",";
  for (int j = 0; j < data.k(); ++j) out << "y" << j << (j + 1 < data.k() ? "," : "");
  out << "\n";
  out.precision(17);
  for (long i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.d(); ++j) out << data.X(i, j) << ",";
    for (int j = 0; j < data.k(); ++j) out << data.Y(i, j) << (j + 1 < data.k() ? "," : "");
    out << "\n";
  }
}

namespace {

uint32_t read_be32(std::ifstream& in, const std::string& path, long offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in)
    throw FormatError("idx: truncated header in " + path + " at byte " + std::to_string(offset));
  return (static_cast<uint32_t>(buf[0]) << 24) | (static_cast<uint32_t>(buf[1]) << 16) |
         (static_cast<uint32_t>(buf[2]) << 8) | static_cast<uint32_t>(buf[3]);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       const std::pair<int, int>* class_filter, long max_n) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("idx: cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError("idx: cannot open " + labels_path);

  const uint32_t img_magic = read_be32(img, images_path, 0);
  if (img_magic != 2051)
    throw FormatError("idx: bad image magic " + std::to_string(img_magic) + " at byte 0 in " +
                      images_path);
  const uint32_t count = read_be32(img, images_path, 4);
  const uint32_t rows = read_be32(img, images_path, 8);
  const uint32_t cols = read_be32(img, images_path, 12);

  const uint32_t lab_magic = read_be32(lab, labels_path, 0);
  if (lab_magic != 2049)
    throw FormatError("idx: bad label magic " + std::to_string(lab_magic) + " at byte 0 in " +
                      labels_path);
  const uint32_t lab_count = read_be32(lab, labels_path, 4);
  if (lab_count != count)
    throw FormatError("idx: image/label counts differ (" + std::to_string(count) + " vs " +
                      std::to_string(lab_count) + ")");

  const size_t pixels = static_cast<size_t>(rows) * cols;
  std::vector<unsigned char> image(pixels);
  std::vector<unsigned char> labels(count);
  lab.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count));
  if (!lab)
    throw FormatError("idx: truncated label payload in " + labels_path + " at byte " +
                      std::to_string(8 + lab.gcount()));

  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (uint32_t i = 0; i < count; ++i) {
    img.read(reinterpret_cast<char*>(image.data()), static_cast<std::streamsize>(pixels));
    if (!img)
      throw FormatError("idx: truncated image payload in " + images_path + " at byte " +
                        std::to_string(16 + static_cast<long>(i) * static_cast<long>(pixels) +
                                       img.gcount()));
    const int digit = labels[i];
    double y;
    if (class_filter) {
      if (digit == class_filter->first)
        y = -1.0;
      else if (digit == class_filter->second)
        y = 1.0;
      else
        continue;
    } else {
      y = digit;
    }
    std::vector<double> row(pixels);
    for (size_t px = 0; px < pixels; ++px) row[px] = image[px] / 255.0;
    xs.push_back(std::move(row));
    ys.push_back(y);
    if (max_n > 0 && static_cast<long>(xs.size()) >= max_n) break;
  }
  if (xs.empty()) throw FormatError("idx: no samples retained from " + images_path);

  Dataset out;
  out.X = Matrix(static_cast<long>(xs.size()), static_cast<int>(pixels));
  out.Y = Matrix(static_cast<long>(xs.size()), 1);
  for (size_t i = 0; i < xs.size(); ++i) {
    std::copy(xs[i].begin(), xs[i].end(), out.X.row(static_cast<long>(i)).begin());
    out.Y(static_cast<long>(i), 0) = ys[i];
  }
  out.source = images_path;
  out.normalization = "/255";
  if (class_filter) {
    out.task = TaskKind::Classification;
    out.label_alphabet = {-1.0, 1.0};
  }
  out.validate();
  return out;
}

Dataset normalize_rows(const Dataset& data) {
  Dataset out = data;
  for (long i = 0; i < out.n(); ++i) {
    const double nr = norm(out.X.row(i));
    if (nr == 0.0) throw NumericError("normalize_rows: zero feature row " + std::to_string(i));
    for (int j = 0; j < out.d(); ++j) out.X(i, j) /= nr;
  }
  out.normalization = out.normalization.empty() ? "unit-row" : out.normalization + ",unit-row";
  return out;
}

Dataset corrupt_labels(const Dataset& data, double fraction, Rng& rng) {
  if (fraction < 0.0 || fraction > 1.0) throw DomainError("corrupt_labels: fraction must be in [0,1]");
  if (data.task != TaskKind::Classification || data.label_alphabet.empty())
    throw ConfigError("corrupt_labels: classification labels required");
  Dataset out = data;
  const long count = static_cast<long>(std::floor(fraction * static_cast<double>(data.n())));
  const std::vector<int> order = rng.perm(static_cast<int>(data.n()));
  for (long i = 0; i < count; ++i) {
    const long row = order[static_cast<size_t>(i)];
    const size_t pick = rng.below(data.label_alphabet.size());
    out.Y(row, 0) = data.label_alphabet[pick];
  }
  return out;
}

}  // namespace lpk
