#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lpk/data.hpp"
#include "lpk/numkit.hpp"

namespace lpk {

enum class ModelKind { Linear, FeatureMap, Mlp2 };
enum class Activation { Softplus, Relu };
enum class OutputScaling { Standard, NtkSqrtWidth };

struct ModelSpec {
  ModelKind kind = ModelKind::Linear;
  int input_dim = 0;
  int output_dim = 1;

  // mlp2: f(x) = s * c^T act(A x + b), s = 1 or 1/sqrt(width); no output bias
  int width = 0;
  Activation activation = Activation::Softplus;
  OutputScaling scaling = OutputScaling::Standard;
  bool train_hidden = true;  // A and b
  bool train_output = true;  // c

  // feature-map: f(x) = w^T phi(x) with a registered phi
  std::string feature_id;
  int feature_dim = 0;

  long param_count() const;
  void validate() const;
};

enum class LossKind { Square, Logistic, RegularizedSquare };

struct LossSpec {
  LossKind kind = LossKind::Square;
  double ridge = 0.0;
  void validate() const;
};

using ParamVector = std::vector<double>;

using FeatureFn = std::function<std::vector<double>(std::span<const double>)>;
void register_feature_map(const std::string& id, FeatureFn fn);
const FeatureFn& feature_map(const std::string& id);  // built-ins: identity, affine

struct InitOptions {
  bool zero = false;
};

/// Gaussian init with per-layer std 1/sqrt(fan-in) in standard mode, std 1 in
/// ntk mode (the 1/sqrt(width) lives in the output scaling there).
ParamVector init_params(const ModelSpec& spec, Rng& rng, InitOptions opts = {});

double per_sample_loss(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
                       std::span<const double> x, std::span<const double> y);
ParamVector per_sample_grad(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
                            std::span<const double> x, std::span<const double> y);

/// Mean of per-sample gradients over `indices` (ascending index order).
ParamVector batch_grad(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
                       const Dataset& data, std::span<const int> indices);

/// Empirical tangent Gram: Theta[i][j] = <grad_w f(w,x_i), grad_w f(w,x_j)>.
/// Output dimension 1 only.
Matrix ntk_gram(const ModelSpec& spec, const ParamVector& w, const Matrix& X);

/// Max relative error between the analytic gradient and central differences
/// (step 1e-5), over all coordinates.
double grad_check(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
                  std::span<const double> x, std::span<const double> y);

/// Batched forward/backward state over a fixed sample matrix. One instance is
/// reused across integration steps; set_params refreshes every cache.
class Evaluator {
 public:
  Evaluator(const ModelSpec& spec, const LossSpec& loss, const Matrix& X, const Matrix& Y);
  ~Evaluator();
  Evaluator(const Evaluator&) = delete;
  Evaluator& operator=(const Evaluator&) = delete;
  Evaluator(Evaluator&&) noexcept;
  Evaluator& operator=(Evaluator&&) noexcept;

  void set_params(std::span<const double> w);

  long n() const;
  long p() const;

  double mean_loss_all() const;
  double mean_loss(std::span<const int> indices) const;
  double loss_of(long i) const;

  /// Mean gradient over `indices`; `out` has length p.
  void mean_grad(std::span<const int> indices, std::span<double> out) const;

  double grad_norm_sq(long i) const;           // ||grad_w l(w, z_i)||^2
  double grad_inner(long i, long j) const;     // <grad_i, grad_j>
  void grad_of(long i, std::span<double> out) const;

  double ntk_entry(long i, long j) const;      // <grad_w f_i, grad_w f_j>
  double output_of(long i) const;
  double dloss_of(long i) const;               // dl/df at sample i (k = 1)

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lpk
