#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lpk/data.hpp"
#include "lpk/model.hpp"

using namespace lpk;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_idx_pair(const std::string& img_path, const std::string& lab_path, int count,
                    int rows, int cols, const std::vector<unsigned char>& pixels,
                    const std::vector<unsigned char>& labels, uint32_t img_magic = 2051,
                    uint32_t lab_magic = 2049, bool truncate_images = false) {
  auto be32 = [](std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<char*>(b), 4);
  };
  std::ofstream img(img_path, std::ios::binary);
  be32(img, img_magic);
  be32(img, static_cast<uint32_t>(count));
  be32(img, static_cast<uint32_t>(rows));
  be32(img, static_cast<uint32_t>(cols));
  const size_t n_bytes = truncate_images ? pixels.size() / 2 : pixels.size();
  img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(n_bytes));
  img.close();
  std::ofstream lab(lab_path, std::ios::binary);
  be32(lab, lab_magic);
  be32(lab, static_cast<uint32_t>(count));
  lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

}  // namespace

TEST_CASE("gaussian linear generator") {
  Rng r1(3), r2(3);
  const Dataset a = gen_gaussian_linear(200, 6, 0.0, r1);
  const Dataset b = gen_gaussian_linear(200, 6, 0.0, r2);
  for (long i = 0; i < a.n(); ++i)
    for (int j = 0; j < a.d(); ++j) CHECK(a.X(i, j) == b.X(i, j));

  // noiseless targets are exactly linear in the hidden direction
  for (long i = 0; i < a.n(); ++i) {
    double f = 0.0;
    for (int j = 0; j < a.d(); ++j) f += a.generator_direction[static_cast<size_t>(j)] * a.X(i, j);
    CHECK(a.Y(i, 0) == doctest::Approx(f).epsilon(1e-12));
  }
}

TEST_CASE("gaussian linear second moment") {
  Rng rng(11);
  const double sigma = 0.5;
  const long n = 10000;
  const Dataset d = gen_gaussian_linear(n, 4, sigma, rng);
  double sq = 0.0;
  for (long i = 0; i < n; ++i) sq += d.Y(i, 0) * d.Y(i, 0);
  const double mean_sq = sq / static_cast<double>(n);
  const double expect = 1.0 + sigma * sigma;
  // var(y^2) = 2 (1+sigma^2)^2 for gaussian y
  const double band = 3.0 * std::sqrt(2.0 * expect * expect / static_cast<double>(n));
  CHECK(std::abs(mean_sq - expect) <= band);
}

TEST_CASE("single index links and moments") {
  CHECK(hermite_link(HermiteLink::He1, 1.5) == 1.5);
  CHECK(hermite_link(HermiteLink::He2, 2.0) == 3.0);
  CHECK(hermite_link(HermiteLink::He3, 2.0) == 2.0);
  CHECK(information_exponent(HermiteLink::He2) == 2);

  Rng rng(13);
  const Dataset lin = gen_single_index(50, 3, HermiteLink::He1, 0.0, rng);
  for (long i = 0; i < lin.n(); ++i) {
    double proj = 0.0;
    for (int j = 0; j < 3; ++j) proj += lin.generator_direction[static_cast<size_t>(j)] * lin.X(i, j);
    CHECK(lin.Y(i, 0) == doctest::Approx(proj).epsilon(1e-12));
  }

  // He2 orthogonality to constants: E[y] = 0
  const long n = 10000;
  Rng rng2(17);
  const Dataset he2 = gen_single_index(n, 5, HermiteLink::He2, 0.0, rng2);
  double mean = 0.0;
  for (long i = 0; i < n; ++i) mean += he2.Y(i, 0);
  mean /= static_cast<double>(n);
  CHECK(std::abs(mean) <= 3.0 * std::sqrt(2.0 / static_cast<double>(n)));

  // He3 has no linear correlation with the projection
  Rng rng3(19);
  const Dataset he3 = gen_single_index(n, 5, HermiteLink::He3, 0.0, rng3);
  double corr = 0.0;
  for (long i = 0; i < n; ++i) {
    double proj = 0.0;
    for (int j = 0; j < 5; ++j) proj += he3.generator_direction[static_cast<size_t>(j)] * he3.X(i, j);
    corr += he3.Y(i, 0) * proj;
  }
  corr /= static_cast<double>(n);
  CHECK(std::abs(corr) <= 3.0 * std::sqrt(42.0 / static_cast<double>(n)));

  CHECK_THROWS_AS(gen_single_index(10, 1, HermiteLink::He1, 0.0, rng3), DomainError);
}

TEST_CASE("two cluster balance, determinism and separability") {
  Rng r1(23), r2(23);
  const Dataset a = gen_two_cluster(1000, 4, 10.0, r1);
  const Dataset b = gen_two_cluster(1000, 4, 10.0, r2);
  long pos = 0;
  for (long i = 0; i < a.n(); ++i) pos += a.Y(i, 0) > 0 ? 1 : 0;
  CHECK(pos == 500);
  CHECK(a.X(999, 3) == b.X(999, 3));
  CHECK_THROWS_AS(gen_two_cluster(7, 2, 1.0, r1), DomainError);

  // logistic-fit oracle: a linear probe separates at separation 10
  ModelSpec spec;
  spec.kind = ModelKind::Linear;
  spec.input_dim = 4;
  const LossSpec loss{LossKind::Logistic, 0.0};
  ParamVector w(4, 0.0);
  std::vector<int> all(static_cast<size_t>(a.n()));
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  for (int step = 0; step < 200; ++step) {
    const ParamVector g = batch_grad(spec, loss, w, a, all);
    for (size_t t = 0; t < w.size(); ++t) w[t] -= 0.5 * g[t];
  }
  long correct = 0;
  for (long i = 0; i < a.n(); ++i) {
    const double f = dot(w, a.X.row(i));
    if ((f > 0) == (a.Y(i, 0) > 0)) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(a.n()) >= 0.99);
}

TEST_CASE("csv round trip") {
  const std::string path = temp_path("lpk_test_roundtrip.csv");
  Dataset d;
  d.X = Matrix(2, 2);
  d.Y = Matrix(2, 1);
  d.X(0, 0) = 1.25;
  d.X(0, 1) = -2.5;
  d.X(1, 0) = 0.0;
  d.X(1, 1) = 3.75;
  d.Y(0, 0) = 1.0;
  d.Y(1, 0) = -1.0;
  save_csv(d, path);
  const Dataset back = load_csv(path, {2, 1});
  for (long i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) CHECK(back.X(i, j) == d.X(i, j));
    CHECK(back.Y(i, 0) == d.Y(i, 0));
  }
  std::remove(path.c_str());
}

TEST_CASE("csv larger round trip preserves every cell") {
  const std::string p1 = temp_path("lpk_test_big1.csv");
  const std::string p2 = temp_path("lpk_test_big2.csv");
  Rng rng(29);
  Dataset d = gen_gaussian_linear(1000, 3, 0.2, rng);
  save_csv(d, p1);
  const Dataset once = load_csv(p1, {3, 1});
  save_csv(once, p2);
  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("csv error reporting") {
  const std::string path = temp_path("lpk_test_bad.csv");
  {
    std::ofstream f(path);
  }
  CHECK_THROWS_AS(load_csv(path, {2, 1}), FormatError);
  {
    std::ofstream f(path);
    f << "x0,x1,y0\n1.0,2.0,3.0\n4.0,oops,6.0\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path, {2, 1}), doctest::Contains("line 3"), FormatError);
  {
    std::ofstream f(path);
    f << "x0,x1,y0\n1.0,2.0\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path, {2, 1}), doctest::Contains("ragged"), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("idx loader parses and validates") {
  const std::string img = temp_path("lpk_test_images.idx");
  const std::string lab = temp_path("lpk_test_labels.idx");
  std::vector<unsigned char> pixels;
  std::vector<unsigned char> labels;
  for (int i = 0; i < 6; ++i) {
    labels.push_back(static_cast<unsigned char>(i % 2 == 0 ? 3 : 5));
    for (int px = 0; px < 4; ++px) pixels.push_back(static_cast<unsigned char>(i * 40 + px));
  }
  write_idx_pair(img, lab, 6, 2, 2, pixels, labels);

  const Dataset all = load_mnist_idx(img, lab);
  CHECK(all.n() == 6);
  CHECK(all.d() == 4);
  for (long i = 0; i < all.n(); ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(all.X(i, j) >= 0.0);
      CHECK(all.X(i, j) <= 1.0);
    }
  CHECK(all.Y(0, 0) == 3.0);

  const std::pair<int, int> filter{3, 5};
  const Dataset bin = load_mnist_idx(img, lab, &filter);
  CHECK(bin.n() == 6);
  CHECK(bin.Y(0, 0) == -1.0);
  CHECK(bin.Y(1, 0) == 1.0);
  const Dataset capped = load_mnist_idx(img, lab, &filter, 3);
  CHECK(capped.n() == 3);

  write_idx_pair(img, lab, 6, 2, 2, pixels, labels, 1234);
  CHECK_THROWS_WITH_AS(load_mnist_idx(img, lab), doctest::Contains("magic"), FormatError);
  write_idx_pair(img, lab, 6, 2, 2, pixels, labels, 2051, 2049, true);
  CHECK_THROWS_WITH_AS(load_mnist_idx(img, lab), doctest::Contains("truncated"), FormatError);
  std::remove(img.c_str());
  std::remove(lab.c_str());
}

TEST_CASE("corrupt_labels") {
  Rng rng(37);
  const Dataset clean = gen_two_cluster(400, 3, 4.0, rng);

  Rng c0(1);
  const Dataset same = corrupt_labels(clean, 0.0, c0);
  for (long i = 0; i < clean.n(); ++i) CHECK(same.Y(i, 0) == clean.Y(i, 0));

  Rng c1(2), c2(2);
  const Dataset n1 = corrupt_labels(clean, 0.3, c1);
  const Dataset n2 = corrupt_labels(clean, 0.3, c2);
  long flipped = 0;
  for (long i = 0; i < clean.n(); ++i) {
    CHECK(n1.Y(i, 0) == n2.Y(i, 0));
    for (int j = 0; j < clean.d(); ++j) CHECK(n1.X(i, j) == clean.X(i, j));
    if (n1.Y(i, 0) != clean.Y(i, 0)) ++flipped;
  }
  // resampling may keep the old label, so flips <= floor(p n)
  CHECK(flipped <= 120);
  CHECK(flipped > 0);

  // p = 1: agreement rate near 1/|alphabet|
  Rng c3(3);
  const Dataset full = corrupt_labels(clean, 1.0, c3);
  long agree = 0;
  for (long i = 0; i < clean.n(); ++i) agree += full.Y(i, 0) == clean.Y(i, 0) ? 1 : 0;
  const double rate = static_cast<double>(agree) / static_cast<double>(clean.n());
  const double band = 3.0 * std::sqrt(0.25 / static_cast<double>(clean.n()));
  CHECK(std::abs(rate - 0.5) <= band);

  Dataset reg = clean;
  reg.task = TaskKind::Regression;
  Rng c4(4);
  CHECK_THROWS_AS(corrupt_labels(reg, 0.5, c4), ConfigError);
}

TEST_CASE("draw_point resamples from the generator family") {
  Rng rng(41);
  const Dataset d = gen_two_cluster(10, 3, 6.0, rng);
  Rng probe(43);
  const auto [x, y] = draw_point(d, probe);
  CHECK(x.size() == 3);
  CHECK((y[0] == 1.0 || y[0] == -1.0));
  CHECK(std::abs(x[0] - y[0] * 3.0) < 6.0);  // near its cluster center with high probability
}
