#include "lpk/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

namespace lpk {

namespace {

using EigenRowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMat>;
using MutMap = Eigen::Map<EigenRowMat>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

ConstMap map_of(const Matrix& m) { return ConstMap(m.data(), m.rows(), m.cols()); }
MutMap map_of(Matrix& m) { return MutMap(m.data(), m.rows(), m.cols()); }

std::map<std::string, FeatureFn>& feature_registry() {
  static std::map<std::string, FeatureFn> reg = {
      {"identity",
       [](std::span<const double> x) { return std::vector<double>(x.begin(), x.end()); }},
      {"affine",
       [](std::span<const double> x) {
         std::vector<double> out(x.begin(), x.end());
         out.push_back(1.0);
         return out;
       }},
  };
  return reg;
}

std::mutex& feature_mutex() {
  static std::mutex m;
  return m;
}

double softplus(double u) { return u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }
double logistic_sigma(double u) { return u > 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u)); }

}  // namespace

void register_feature_map(const std::string& id, FeatureFn fn) {
  std::lock_guard<std::mutex> lock(feature_mutex());
  feature_registry()[id] = std::move(fn);
}

const FeatureFn& feature_map(const std::string& id) {
  std::lock_guard<std::mutex> lock(feature_mutex());
  auto it = feature_registry().find(id);
  if (it == feature_registry().end()) throw ConfigError("feature map not registered: " + id);
  return it->second;
}

long ModelSpec::param_count() const {
  switch (kind) {
    case ModelKind::Linear:
      return static_cast<long>(output_dim) * input_dim;
    case ModelKind::FeatureMap:
      return feature_dim;
    case ModelKind::Mlp2:
      return static_cast<long>(width) * (input_dim + 2);
  }
  throw ConfigError("param_count: unknown model kind");
}

void ModelSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("model: dims must be positive");
  if (kind == ModelKind::Mlp2) {
    if (width < 1) throw ConfigError("mlp2: width must be positive");
    if (output_dim != 1) throw ConfigError("mlp2: only scalar output supported");
    if (!train_hidden && !train_output) throw ConfigError("mlp2: all layers frozen");
  }
  if (kind == ModelKind::FeatureMap) {
    if (output_dim != 1) throw ConfigError("feature-map: only scalar output supported");
    if (feature_dim < 1) throw ConfigError("feature-map: feature_dim must be positive");
    const auto& fn = feature_map(feature_id);
    std::vector<double> probe(static_cast<size_t>(input_dim), 0.0);
    if (static_cast<int>(fn(probe).size()) != feature_dim)
      throw ConfigError("feature-map: feature_dim does not match registered function output");
  }
}

void LossSpec::validate() const {
  if (ridge < 0) throw ConfigError("loss: ridge weight must be >= 0");
  if (kind != LossKind::RegularizedSquare && ridge != 0.0)
    throw ConfigError("loss: ridge weight only valid for regularized-square");
}

ParamVector init_params(const ModelSpec& spec, Rng& rng, InitOptions opts) {
  spec.validate();
  const long p = spec.param_count();
  ParamVector w(static_cast<size_t>(p), 0.0);
  if (opts.zero) return w;

  if (spec.kind == ModelKind::Mlp2) {
    const bool ntk = spec.scaling == OutputScaling::NtkSqrtWidth;
    const double std1 = ntk ? 1.0 : 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
    const double std2 = ntk ? 1.0 : 1.0 / std::sqrt(static_cast<double>(spec.width));
    const long nd = static_cast<long>(spec.width) * spec.input_dim;
    for (long i = 0; i < nd + spec.width; ++i) w[static_cast<size_t>(i)] = std1 * rng.gaussian();
    for (long i = nd + spec.width; i < p; ++i) w[static_cast<size_t>(i)] = std2 * rng.gaussian();
    return w;
  }
  const double fan_in = spec.kind == ModelKind::FeatureMap ? spec.feature_dim : spec.input_dim;
  const double std = 1.0 / std::sqrt(fan_in);
  for (auto& v : w) v = std * rng.gaussian();
  return w;
}

// ---------------------------------------------------------------------------
// Evaluator

struct Evaluator::Impl {
  ModelSpec spec;
  LossSpec loss;
  Matrix X, Y;
  long n = 0, p = 0;
  int d = 0, k = 0;
  double scale = 1.0;  // mlp2 output scaling
  double ridge = 0.0;

  Matrix Feat;           // linear/feature-map effective inputs (n x pf)
  const Matrix* feat = nullptr;

  std::vector<double> w;
  std::vector<double> x_norm_sq;  // mlp2: raw input norms

  // per set_params state
  Matrix U, H, Hp, G;    // mlp2 (G rows = c .* Hp_i)
  Matrix Uk;             // linear k>1 outputs (n x k)
  std::vector<double> f, losses, dloss;
  std::vector<double> h_norm_sq, g_norm_sq, f_dot_w;
  double w_train_norm_sq = 0.0;

  mutable Matrix scratch_rows;   // subset gather buffers
  mutable Matrix scratch_feat;

  Impl(const ModelSpec& s, const LossSpec& l, const Matrix& x, const Matrix& y)
      : spec(s), loss(l), X(x), Y(y) {
    spec.validate();
    loss.validate();
    n = X.rows();
    d = static_cast<int>(X.cols());
    k = static_cast<int>(Y.cols());
    if (d != spec.input_dim) throw DimensionError("evaluator: input dim mismatch");
    if (k != spec.output_dim) throw DimensionError("evaluator: output dim mismatch");
    if (loss.kind == LossKind::Logistic) {
      if (k != 1) throw ConfigError("logistic loss: output dim must be 1");
      for (long i = 0; i < n; ++i)
        if (Y(i, 0) != -1.0 && Y(i, 0) != 1.0)
          throw DomainError("logistic loss: labels must be in {-1,+1}");
    }
    p = spec.param_count();
    ridge = loss.kind == LossKind::RegularizedSquare ? loss.ridge : 0.0;

    if (spec.kind == ModelKind::Mlp2) {
      scale = spec.scaling == OutputScaling::NtkSqrtWidth
                  ? 1.0 / std::sqrt(static_cast<double>(spec.width))
                  : 1.0;
      x_norm_sq.resize(static_cast<size_t>(n));
      for (long i = 0; i < n; ++i) x_norm_sq[static_cast<size_t>(i)] = norm_sq(X.row(i));
      U = Matrix(n, spec.width);
      H = Matrix(n, spec.width);
      Hp = Matrix(n, spec.width);
      G = Matrix(n, spec.width);
      h_norm_sq.resize(static_cast<size_t>(n));
      g_norm_sq.resize(static_cast<size_t>(n));
      f_dot_w.resize(static_cast<size_t>(n));
    } else if (spec.kind == ModelKind::FeatureMap) {
      const auto& fn = feature_map(spec.feature_id);
      Feat = Matrix(n, spec.feature_dim);
      for (long i = 0; i < n; ++i) {
        auto row = fn(X.row(i));
        if (static_cast<int>(row.size()) != spec.feature_dim)
          throw DimensionError("feature map output dim mismatch");
        std::copy(row.begin(), row.end(), Feat.row(i).begin());
      }
      feat = &Feat;
    } else {
      feat = &X;
    }
    if (k > 1) Uk = Matrix(n, k);
    f.resize(static_cast<size_t>(n));
    losses.resize(static_cast<size_t>(n));
    dloss.resize(static_cast<size_t>(n));
  }

  bool scalar_path() const { return k == 1; }

  void set_params(std::span<const double> params) {
    if (static_cast<long>(params.size()) != p) throw DimensionError("set_params: length mismatch");
    w.assign(params.begin(), params.end());

    if (spec.kind == ModelKind::Mlp2) {
      forward_mlp2();
    } else if (k == 1) {
      // f = Feat w
      MutVec(f.data(), n).noalias() = map_of(*feat) * ConstVec(w.data(), p);
      if (!std::all_of(f.begin(), f.end(), [](double v) { return std::isfinite(v); }))
        throw NumericError("forward: non-finite output (layer 1)");
    } else {
      ConstMap W(w.data(), k, d);
      map_of(Uk).noalias() = map_of(X) * W.transpose();
      if (!Uk.all_finite()) throw NumericError("forward: non-finite output (layer 1)");
    }

    w_train_norm_sq = 0.0;
    if (ridge > 0) {
      if (spec.kind == ModelKind::Mlp2) {
        const long nd = static_cast<long>(spec.width) * d;
        if (spec.train_hidden)
          w_train_norm_sq += norm_sq({w.data(), static_cast<size_t>(nd + spec.width)});
        if (spec.train_output)
          w_train_norm_sq +=
              norm_sq({w.data() + nd + spec.width, static_cast<size_t>(spec.width)});
      } else {
        w_train_norm_sq = norm_sq({w.data(), w.size()});
      }
    }

    compute_losses();
  }

  void forward_mlp2() {
    const long N = spec.width;
    const long nd = N * d;
    ConstMap A(w.data(), N, d);
    ConstVec b(w.data() + nd, N);
    ConstVec c(w.data() + nd + N, N);

    map_of(U).noalias() = map_of(X) * A.transpose();
    map_of(U).rowwise() += b.transpose();

    const bool softplus_act = spec.activation == Activation::Softplus;
    for (long i = 0; i < n; ++i) {
      const double* u = U.row(i).data();
      double* h = H.row(i).data();
      double* hp = Hp.row(i).data();
      double* g = G.row(i).data();
      double hs = 0.0, gs = 0.0, fo = 0.0, fw = 0.0;
      for (long j = 0; j < N; ++j) {
        const double uj = u[j];
        double hj, hpj;
        if (softplus_act) {
          hj = softplus(uj);
          hpj = logistic_sigma(uj);
        } else {
          hj = uj > 0 ? uj : 0.0;
          hpj = uj > 0 ? 1.0 : 0.0;
        }
        h[j] = hj;
        hp[j] = hpj;
        const double cj = c(j);
        const double gj = cj * hpj;
        g[j] = gj;
        hs += hj * hj;
        gs += gj * gj;
        fo += cj * hj;
        fw += gj * uj;  // G_i . (A x_i + b)
      }
      f[static_cast<size_t>(i)] = scale * fo;
      h_norm_sq[static_cast<size_t>(i)] = hs;
      g_norm_sq[static_cast<size_t>(i)] = gs;
      double fdw = 0.0;
      if (spec.train_output) fdw += scale * fo;
      if (spec.train_hidden) fdw += scale * fw;
      f_dot_w[static_cast<size_t>(i)] = fdw;
    }
    if (!std::all_of(f.begin(), f.end(), [](double v) { return std::isfinite(v); })) {
      if (!U.all_finite()) throw NumericError("mlp2 forward: non-finite value (layer 1)");
      throw NumericError("mlp2 forward: non-finite value (layer 2)");
    }
  }

  void compute_losses() {
    const double ridge_val = 0.5 * ridge * norm_sq({w.data(), w.size()});
    if (k == 1) {
      for (long i = 0; i < n; ++i) {
        const double fi = f[static_cast<size_t>(i)];
        const double yi = Y(i, 0);
        double li, dli;
        switch (loss.kind) {
          case LossKind::Square:
          case LossKind::RegularizedSquare: {
            const double r = fi - yi;
            li = 0.5 * r * r;
            dli = r;
            break;
          }
          case LossKind::Logistic: {
            const double m = -yi * fi;
            li = m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
            dli = -yi * logistic_sigma(m);
            break;
          }
          default:
            throw ConfigError("unknown loss");
        }
        losses[static_cast<size_t>(i)] = li + (loss.kind == LossKind::RegularizedSquare ? ridge_val : 0.0);
        dloss[static_cast<size_t>(i)] = dli;
      }
    } else {
      for (long i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) {
          const double r = Uk(i, j) - Y(i, j);
          s += r * r;
        }
        losses[static_cast<size_t>(i)] =
            0.5 * s + (loss.kind == LossKind::RegularizedSquare ? ridge_val : 0.0);
      }
    }
  }

  double ntk_entry(long i, long j) const {
    if (spec.kind == ModelKind::Mlp2) {
      double v = 0.0;
      if (spec.train_output) {
        if (i == j)
          v += h_norm_sq[static_cast<size_t>(i)];
        else
          v += dot(H.row(i), H.row(j));
      }
      if (spec.train_hidden) {
        const double gg = (i == j) ? g_norm_sq[static_cast<size_t>(i)] : dot(G.row(i), G.row(j));
        const double xx = (i == j) ? x_norm_sq[static_cast<size_t>(i)] : dot(X.row(i), X.row(j));
        v += gg * (xx + 1.0);
      }
      return scale * scale * v;
    }
    return (i == j) ? norm_sq(feat->row(i)) : dot(feat->row(i), feat->row(j));
  }

  double grad_inner(long i, long j) const {
    const double di = dloss[static_cast<size_t>(i)];
    const double dj = dloss[static_cast<size_t>(j)];
    double v = di * dj * ntk_entry(i, j);
    if (ridge > 0) {
      v += ridge * (di * fdw(i) + dj * fdw(j)) + ridge * ridge * w_train_norm_sq;
    }
    return v;
  }

  double fdw(long i) const {
    if (spec.kind == ModelKind::Mlp2) return f_dot_w[static_cast<size_t>(i)];
    return f[static_cast<size_t>(i)];  // linear: <grad f_i, w> = f_i
  }

  void grad_of(long i, std::span<double> out) const {
    if (static_cast<long>(out.size()) != p) throw DimensionError("grad_of: length mismatch");
    if (k != 1) throw ConfigError("grad_of: scalar output only");
    const double dl = dloss[static_cast<size_t>(i)];
    if (spec.kind == ModelKind::Mlp2) {
      const long N = spec.width;
      const long nd = N * d;
      std::fill(out.begin(), out.end(), 0.0);
      if (spec.train_hidden) {
        auto g = G.row(i);
        auto x = X.row(i);
        for (long jj = 0; jj < N; ++jj) {
          const double coef = scale * dl * g[static_cast<size_t>(jj)];
          double* row = out.data() + jj * d;
          for (int t = 0; t < d; ++t) row[t] = coef * x[static_cast<size_t>(t)];
          out[static_cast<size_t>(nd + jj)] = coef;
        }
      }
      if (spec.train_output) {
        auto h = H.row(i);
        for (long jj = 0; jj < N; ++jj)
          out[static_cast<size_t>(nd + N + jj)] = scale * dl * h[static_cast<size_t>(jj)];
      }
    } else {
      auto row = feat->row(i);
      for (long t = 0; t < p; ++t) out[static_cast<size_t>(t)] = dl * row[static_cast<size_t>(t)];
    }
    if (ridge > 0) add_ridge_grad(out, 1.0);
  }

  void add_ridge_grad(std::span<double> out, double weight) const {
    if (spec.kind == ModelKind::Mlp2) {
      const long nd = static_cast<long>(spec.width) * d;
      if (spec.train_hidden)
        for (long t = 0; t < nd + spec.width; ++t)
          out[static_cast<size_t>(t)] += weight * ridge * w[static_cast<size_t>(t)];
      if (spec.train_output)
        for (long t = nd + spec.width; t < p; ++t)
          out[static_cast<size_t>(t)] += weight * ridge * w[static_cast<size_t>(t)];
    } else {
      for (long t = 0; t < p; ++t)
        out[static_cast<size_t>(t)] += weight * ridge * w[static_cast<size_t>(t)];
    }
  }

  void mean_grad(std::span<const int> idx, std::span<double> out) const {
    if (idx.empty()) throw DomainError("mean_grad: empty index set");
    if (static_cast<long>(out.size()) != p) throw DimensionError("mean_grad: length mismatch");
    for (int i : idx)
      if (i < 0 || i >= n) throw DomainError("mean_grad: index out of range");
    const double wgt = 1.0 / static_cast<double>(idx.size());
    std::fill(out.begin(), out.end(), 0.0);

    if (k != 1) {
      // small-scale generic path
      for (int i : idx) {
        for (int j = 0; j < k; ++j) {
          const double r = Uk(i, j) - Y(i, j);
          double* row = out.data() + static_cast<long>(j) * d;
          auto x = X.row(i);
          for (int t = 0; t < d; ++t) row[t] += wgt * r * x[static_cast<size_t>(t)];
        }
      }
      if (ridge > 0) add_ridge_grad(out, 1.0);
      return;
    }

    if (spec.kind == ModelKind::Mlp2) {
      const long N = spec.width;
      const long nd = N * d;
      const long m = static_cast<long>(idx.size());
      const bool full = (m == n);

      if (scratch_rows.rows() != m || scratch_rows.cols() != N) scratch_rows = Matrix(m, N);
      // rows: dl_i * G_i
      for (long r = 0; r < m; ++r) {
        const long i = full ? r : idx[static_cast<size_t>(r)];
        const double dl = dloss[static_cast<size_t>(i)];
        const double* g = G.row(i).data();
        double* dst = scratch_rows.row(r).data();
        for (long jj = 0; jj < N; ++jj) dst[jj] = dl * g[jj];
      }
      if (spec.train_hidden) {
        if (!full) {
          scratch_feat = Matrix(m, d);
          for (long r = 0; r < m; ++r) {
            auto src = X.row(idx[static_cast<size_t>(r)]);
            std::copy(src.begin(), src.end(), scratch_feat.row(r).begin());
          }
        }
        MutMap outA(out.data(), N, d);
        const ConstMap x_rows = full ? ConstMap(X.data(), X.rows(), X.cols())
                                     : ConstMap(scratch_feat.data(), m, d);
        outA.noalias() = (scale * wgt) * map_of(scratch_rows).transpose() * x_rows;
        MutVec outb(out.data() + nd, N);
        outb.noalias() = (scale * wgt) * map_of(scratch_rows).colwise().sum().transpose();
      }
      if (spec.train_output) {
        MutVec outc(out.data() + nd + N, N);
        Eigen::VectorXd dl_vec(m);
        for (long r = 0; r < m; ++r) {
          const long i = full ? r : idx[static_cast<size_t>(r)];
          dl_vec(r) = dloss[static_cast<size_t>(i)];
        }
        if (full)
          outc.noalias() = (scale * wgt) * map_of(H).transpose() * dl_vec;
        else {
          scratch_feat = Matrix(m, N);
          for (long r = 0; r < m; ++r) {
            auto src = H.row(idx[static_cast<size_t>(r)]);
            std::copy(src.begin(), src.end(), scratch_feat.row(r).begin());
          }
          outc.noalias() = (scale * wgt) * map_of(scratch_feat).transpose() * dl_vec;
        }
      }
      if (ridge > 0) add_ridge_grad(out, 1.0);
      return;
    }

    // linear / feature-map scalar path
    const long m = static_cast<long>(idx.size());
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(n);
    for (long r = 0; r < m; ++r) {
      const long i = idx[static_cast<size_t>(r)];
      coef(i) += wgt * dloss[static_cast<size_t>(i)];
    }
    MutVec(out.data(), p).noalias() = map_of(*feat).transpose() * coef;
    if (ridge > 0) add_ridge_grad(out, 1.0);
  }
};

Evaluator::Evaluator(const ModelSpec& spec, const LossSpec& loss, const Matrix& X, const Matrix& Y)
    : impl_(std::make_unique<Impl>(spec, loss, X, Y)) {}
Evaluator::~Evaluator() = default;
Evaluator::Evaluator(Evaluator&&) noexcept = default;
Evaluator& Evaluator::operator=(Evaluator&&) noexcept = default;

void Evaluator::set_params(std::span<const double> w) { impl_->set_params(w); }
long Evaluator::n() const { return impl_->n; }
long Evaluator::p() const { return impl_->p; }

double Evaluator::mean_loss_all() const {
  double s = 0.0;
  for (double v : impl_->losses) s += v;
  return s / static_cast<double>(impl_->n);
}

double Evaluator::mean_loss(std::span<const int> indices) const {
  if (indices.empty()) throw DomainError("mean_loss: empty index set");
  double s = 0.0;
  for (int i : indices) s += impl_->losses[static_cast<size_t>(i)];
  return s / static_cast<double>(indices.size());
}

double Evaluator::loss_of(long i) const { return impl_->losses[static_cast<size_t>(i)]; }

void Evaluator::mean_grad(std::span<const int> indices, std::span<double> out) const {
  impl_->mean_grad(indices, out);
}

double Evaluator::grad_norm_sq(long i) const { return impl_->grad_inner(i, i); }
double Evaluator::grad_inner(long i, long j) const { return impl_->grad_inner(i, j); }
void Evaluator::grad_of(long i, std::span<double> out) const { impl_->grad_of(i, out); }
double Evaluator::ntk_entry(long i, long j) const { return impl_->ntk_entry(i, j); }

double Evaluator::output_of(long i) const {
  return impl_->k == 1 ? impl_->f[static_cast<size_t>(i)] : impl_->Uk(i, 0);
}
double Evaluator::dloss_of(long i) const { return impl_->dloss[static_cast<size_t>(i)]; }

// ---------------------------------------------------------------------------
// Free functions

namespace {

Evaluator single_point_eval(const ModelSpec& spec, const LossSpec& loss, std::span<const double> x,
                            std::span<const double> y) {
  Matrix X(1, static_cast<long>(x.size()));
  std::copy(x.begin(), x.end(), X.row(0).begin());
  Matrix Y(1, static_cast<long>(y.size()));
  std::copy(y.begin(), y.end(), Y.row(0).begin());
  return Evaluator(spec, loss, X, Y);
}

}  // namespace

double per_sample_loss(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
                       std::span<const double> x, std::span<const double> y) {
  Evaluator ev = single_point_eval(spec, loss, x, y);
  ev.set_params(w);
  return ev.loss_of(0);
}

ParamVector per_sample_grad(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
                            std::span<const double> x, std::span<const double> y) {
  Evaluator ev = single_point_eval(spec, loss, x, y);
  ev.set_params(w);
  ParamVector out(static_cast<size_t>(ev.p()));
  const int idx0 = 0;
  if (spec.output_dim == 1)
    ev.grad_of(0, out);
  else
    ev.mean_grad({&idx0, 1}, out);
  return out;
}

ParamVector batch_grad(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
                       const Dataset& data, std::span<const int> indices) {
  if (indices.empty()) throw DomainError("batch_grad: empty index set");
  Evaluator ev(spec, loss, data.X, data.Y);
  ev.set_params(w);
  ParamVector out(static_cast<size_t>(ev.p()));
  ev.mean_grad(indices, out);
  return out;
}

Matrix ntk_gram(const ModelSpec& spec, const ParamVector& w, const Matrix& X) {
  if (spec.output_dim != 1) throw ConfigError("ntk_gram: unsupported for output dim > 1");
  Matrix Y(X.rows(), 1);
  Evaluator ev(spec, LossSpec{LossKind::Square, 0.0}, X, Y);
  ev.set_params(w);
  const long n = X.rows();
  Matrix out(n, n);
  for (long i = 0; i < n; ++i) {
    out(i, i) = ev.ntk_entry(i, i);
    for (long j = i + 1; j < n; ++j) {
      const double v = ev.ntk_entry(i, j);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

double grad_check(const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
                  std::span<const double> x, std::span<const double> y) {
  const ParamVector analytic = per_sample_grad(spec, loss, w, x, y);
  const double h = 1e-5;
  double worst = 0.0;
  ParamVector probe = w;
  for (size_t i = 0; i < w.size(); ++i) {
    probe[i] = w[i] + h;
    const double up = per_sample_loss(spec, loss, probe, x, y);
    probe[i] = w[i] - h;
    const double dn = per_sample_loss(spec, loss, probe, x, y);
    probe[i] = w[i];
    const double numeric = (up - dn) / (2.0 * h);
    const double rel = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace lpk
