#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "lpk/bounds.hpp"
#include "lpk/data.hpp"
#include "lpk/experiment.hpp"
#include "lpk/flow.hpp"
#include "lpk/model.hpp"
#include "lpk/numkit.hpp"
#include "lpk/pathkernel.hpp"
#include "lpk/stability.hpp"

namespace py = pybind11;
using namespace lpk;

namespace {

Matrix matrix_from_buffer(py::buffer buf) {
  const py::buffer_info info = buf.request();
  if (info.ndim != 2) throw DimensionError("expected a 2-d array");
  if (info.format != py::format_descriptor<double>::format())
    throw DimensionError("expected a float64 array");
  Matrix out(static_cast<long>(info.shape[0]), static_cast<long>(info.shape[1]));
  const char* src = static_cast<const char*>(info.ptr);
  for (long i = 0; i < out.rows(); ++i)
    for (long j = 0; j < out.cols(); ++j)
      out(i, j) = *reinterpret_cast<const double*>(src + i * info.strides[0] + j * info.strides[1]);
  return out;
}

}  // namespace

PYBIND11_MODULE(_lpk, m) {
  m.doc() = "loss path kernel library: gradient-flow training, path-kernel "
            "accumulation and generalization-bound evaluation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Matrix>(m, "Matrix", py::buffer_protocol())
      .def(py::init(&matrix_from_buffer))
      .def(py::init<long, long>())
      .def_property_readonly("rows", &Matrix::rows)
      .def_property_readonly("cols", &Matrix::cols)
      .def("__getitem__",
           [](const Matrix& mat, std::pair<long, long> idx) {
             if (idx.first < 0 || idx.first >= mat.rows() || idx.second < 0 ||
                 idx.second >= mat.cols())
               throw py::index_error();
             return mat(idx.first, idx.second);
           })
      .def_buffer([](Matrix& mat) {
        return py::buffer_info(mat.data(), sizeof(double),
                               py::format_descriptor<double>::format(), 2,
                               {mat.rows(), mat.cols()},
                               {static_cast<py::ssize_t>(sizeof(double) * mat.cols()),
                                static_cast<py::ssize_t>(sizeof(double))});
      });

  py::class_<Rng>(m, "Rng")
      .def(py::init<uint64_t, uint64_t>(), py::arg("seed"), py::arg("stream") = 0)
      .def("stream", &Rng::stream)
      .def("uniform", &Rng::uniform)
      .def("gaussian", &Rng::gaussian)
      .def("rademacher", &Rng::rademacher)
      .def("gaussian_vec", &Rng::gaussian_vec)
      .def("rademacher_vec", &Rng::rademacher_vec)
      .def("sphere", &Rng::sphere)
      .def("perm", &Rng::perm);

  py::class_<SymEig>(m, "SymEig")
      .def_readonly("values", &SymEig::values)
      .def_readonly("vectors", &SymEig::vectors);
  m.def("sym_eig", &sym_eig);
  m.def("sym_expm_action",
        [](const SymEig& eig, double t, const std::vector<double>& v) {
          return sym_expm_action(eig, t, v);
        });
  m.def("gram", &gram);

  py::enum_<TaskKind>(m, "TaskKind")
      .value("Regression", TaskKind::Regression)
      .value("Classification", TaskKind::Classification);
  py::enum_<HermiteLink>(m, "HermiteLink")
      .value("He1", HermiteLink::He1)
      .value("He2", HermiteLink::He2)
      .value("He3", HermiteLink::He3);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("X", &Dataset::X)
      .def_readwrite("Y", &Dataset::Y)
      .def_readwrite("task", &Dataset::task)
      .def_readonly("generator_direction", &Dataset::generator_direction)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("d", &Dataset::d);

  m.def("gen_gaussian_linear", &gen_gaussian_linear);
  m.def("gen_single_index", &gen_single_index);
  m.def("gen_two_cluster", &gen_two_cluster);
  m.def("load_csv",
        [](const std::string& path, int d, int k) { return load_csv(path, {d, k}); },
        py::arg("path"), py::arg("d"), py::arg("k") = 1);
  m.def("save_csv", &save_csv);
  m.def("load_mnist_idx",
        [](const std::string& images, const std::string& labels,
           std::optional<std::pair<int, int>> filter, long max_n) {
          return load_mnist_idx(images, labels, filter ? &*filter : nullptr, max_n);
        },
        py::arg("images"), py::arg("labels"), py::arg("class_filter") = std::nullopt,
        py::arg("max_n") = -1);
  m.def("corrupt_labels", &corrupt_labels);

  py::enum_<ModelKind>(m, "ModelKind")
      .value("Linear", ModelKind::Linear)
      .value("FeatureMap", ModelKind::FeatureMap)
      .value("Mlp2", ModelKind::Mlp2);
  py::enum_<Activation>(m, "Activation")
      .value("Softplus", Activation::Softplus)
      .value("Relu", Activation::Relu);
  py::enum_<OutputScaling>(m, "OutputScaling")
      .value("Standard", OutputScaling::Standard)
      .value("NtkSqrtWidth", OutputScaling::NtkSqrtWidth);
  py::enum_<LossKind>(m, "LossKind")
      .value("Square", LossKind::Square)
      .value("Logistic", LossKind::Logistic)
      .value("RegularizedSquare", LossKind::RegularizedSquare);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init<>())
      .def_readwrite("kind", &ModelSpec::kind)
      .def_readwrite("input_dim", &ModelSpec::input_dim)
      .def_readwrite("output_dim", &ModelSpec::output_dim)
      .def_readwrite("width", &ModelSpec::width)
      .def_readwrite("activation", &ModelSpec::activation)
      .def_readwrite("scaling", &ModelSpec::scaling)
      .def_readwrite("train_hidden", &ModelSpec::train_hidden)
      .def_readwrite("train_output", &ModelSpec::train_output)
      .def_readwrite("feature_id", &ModelSpec::feature_id)
      .def_readwrite("feature_dim", &ModelSpec::feature_dim)
      .def("param_count", &ModelSpec::param_count)
      .def("validate", &ModelSpec::validate);

  py::class_<LossSpec>(m, "LossSpec")
      .def(py::init<>())
      .def(py::init([](LossKind kind, double ridge) {
             LossSpec spec;
             spec.kind = kind;
             spec.ridge = ridge;
             return spec;
           }),
           py::arg("kind"), py::arg("ridge") = 0.0)
      .def_readwrite("kind", &LossSpec::kind)
      .def_readwrite("ridge", &LossSpec::ridge);

  m.def("init_params",
        [](const ModelSpec& spec, Rng& rng, bool zero) {
          return init_params(spec, rng, {zero});
        },
        py::arg("spec"), py::arg("rng"), py::arg("zero") = false);
  m.def("per_sample_loss",
        [](const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
           const std::vector<double>& x, const std::vector<double>& y) {
          return per_sample_loss(spec, loss, w, x, y);
        });
  m.def("per_sample_grad",
        [](const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
           const std::vector<double>& x, const std::vector<double>& y) {
          return per_sample_grad(spec, loss, w, x, y);
        });
  m.def("batch_grad",
        [](const ModelSpec& spec, const LossSpec& loss, const ParamVector& w, const Dataset& data,
           const std::vector<int>& idx) { return batch_grad(spec, loss, w, data, idx); });
  m.def("ntk_gram", &ntk_gram);
  m.def("grad_check",
        [](const ModelSpec& spec, const LossSpec& loss, const ParamVector& w,
           const std::vector<double>& x, const std::vector<double>& y) {
          return grad_check(spec, loss, w, x, y);
        });

  py::enum_<FlowMode>(m, "FlowMode").value("Gf", FlowMode::Gf).value("Sgf", FlowMode::Sgf);
  py::class_<RecordOptions>(m, "RecordOptions")
      .def(py::init<>())
      .def_readwrite("full_gram", &RecordOptions::full_gram)
      .def_readwrite("param_snapshots", &RecordOptions::param_snapshots);
  py::class_<FlowConfig>(m, "FlowConfig")
      .def(py::init<>())
      .def_readwrite("eta", &FlowConfig::eta)
      .def_readwrite("total_time", &FlowConfig::total_time)
      .def_readwrite("mode", &FlowConfig::mode)
      .def_readwrite("batch_size", &FlowConfig::batch_size)
      .def_readwrite("checkpoint_stride", &FlowConfig::checkpoint_stride)
      .def_readwrite("snapshot_stride", &FlowConfig::snapshot_stride)
      .def_readwrite("record", &FlowConfig::record);

  py::class_<BatchSchedule>(m, "BatchSchedule").def_readonly("sets", &BatchSchedule::sets);
  m.def("make_schedule", &make_schedule);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("step", &Checkpoint::step)
      .def_readonly("time", &Checkpoint::time)
      .def_readonly("train_loss", &Checkpoint::train_loss)
      .def_readonly("cum_diag_sum", &Checkpoint::cum_diag_sum)
      .def_readonly("eval_loss", &Checkpoint::eval_loss)
      .def_readonly("has_eval", &Checkpoint::has_eval);
  py::class_<TrajectoryRecord>(m, "TrajectoryRecord")
      .def_readonly("eta", &TrajectoryRecord::eta)
      .def_readonly("steps", &TrajectoryRecord::steps)
      .def_readonly("total_time", &TrajectoryRecord::total_time)
      .def_readonly("train_loss", &TrajectoryRecord::train_loss)
      .def_readonly("diag", &TrajectoryRecord::diag)
      .def_readonly("total_sum", &TrajectoryRecord::total_sum)
      .def_readonly("final_params", &TrajectoryRecord::final_params)
      .def_readonly("checkpoints", &TrajectoryRecord::checkpoints)
      .def_readonly("probe_km", &TrajectoryRecord::probe_km)
      .def_readonly("diverged", &TrajectoryRecord::diverged)
      .def_readonly("divergence_step", &TrajectoryRecord::divergence_step)
      .def_readonly("warnings", &TrajectoryRecord::warnings)
      .def("loss_drop", &TrajectoryRecord::loss_drop)
      .def("diag_sum", &TrajectoryRecord::diag_sum);

  m.def("integrate_gf",
        [](const ModelSpec& spec, const LossSpec& loss, const ParamVector& w0, const Dataset& data,
           const FlowConfig& cfg, const Dataset* probes, const Dataset* eval_set) {
          return integrate_gf(spec, loss, w0, data, cfg, probes, eval_set);
        },
        py::arg("spec"), py::arg("loss"), py::arg("w0"), py::arg("data"), py::arg("config"),
        py::arg("probes") = nullptr, py::arg("eval_set") = nullptr);
  m.def("integrate_sgf",
        [](const ModelSpec& spec, const LossSpec& loss, const ParamVector& w0, const Dataset& data,
           const FlowConfig& cfg, const BatchSchedule& schedule, const Dataset* probes,
           const Dataset* eval_set) {
          return integrate_sgf(spec, loss, w0, data, cfg, schedule, probes, eval_set);
        },
        py::arg("spec"), py::arg("loss"), py::arg("w0"), py::arg("data"), py::arg("config"),
        py::arg("schedule"), py::arg("probes") = nullptr, py::arg("eval_set") = nullptr);
  m.def("sphere_step",
        [](const std::vector<double>& theta, const std::vector<double>& g, double eta) {
          return sphere_step(theta, g, eta);
        });

  py::class_<SingleIndexConfig>(m, "SingleIndexConfig")
      .def(py::init<>())
      .def_readwrite("width", &SingleIndexConfig::width)
      .def_readwrite("tau", &SingleIndexConfig::tau)
      .def_readwrite("lambda_", &SingleIndexConfig::lambda)
      .def_readwrite("rho", &SingleIndexConfig::rho)
      .def_readwrite("sparse_support", &SingleIndexConfig::sparse_support)
      .def_readwrite("warm_time", &SingleIndexConfig::warm_time)
      .def_readwrite("total_time", &SingleIndexConfig::total_time)
      .def_readwrite("eta", &SingleIndexConfig::eta);
  py::class_<TwoStageRecord>(m, "TwoStageRecord")
      .def_readonly("theta", &TwoStageRecord::theta)
      .def_readonly("c", &TwoStageRecord::c)
      .def_readonly("times", &TwoStageRecord::times)
      .def_readonly("overlap", &TwoStageRecord::overlap)
      .def_readonly("train_loss", &TwoStageRecord::train_loss)
      .def_readonly("diag", &TwoStageRecord::diag)
      .def_readonly("loss_drop", &TwoStageRecord::loss_drop);
  m.def("integrate_two_stage",
        [](const Dataset& data, const std::vector<double>& theta_star,
           const SingleIndexConfig& cfg, Rng& rng) {
          return integrate_two_stage(data, theta_star, cfg, rng);
        });

  py::enum_<GramMode>(m, "GramMode")
      .value("DiagOnly", GramMode::DiagOnly)
      .value("Full", GramMode::Full);
  py::class_<LpkGram>(m, "LpkGram")
      .def_readonly("n", &LpkGram::n)
      .def_readonly("diag", &LpkGram::diag)
      .def_readonly("full", &LpkGram::full)
      .def_readonly("total_sum", &LpkGram::total_sum)
      .def_readonly("loss_drop", &LpkGram::loss_drop)
      .def_readonly("negative_drop_warning", &LpkGram::negative_drop_warning)
      .def("diag_sum", &LpkGram::diag_sum);
  py::class_<IntervalGrams>(m, "IntervalGrams")
      .def_readonly("batches", &IntervalGrams::batches)
      .def_readonly("diag", &IntervalGrams::diag)
      .def_readonly("batch_blocks", &IntervalGrams::batch_blocks)
      .def("intervals", &IntervalGrams::intervals);
  m.def("accumulate", &accumulate);
  m.def("accumulate_intervals", &accumulate_intervals);
  m.def("gamma_gf", &gamma_gf);
  m.def("gamma_sgf", &gamma_sgf);
  m.def("gamma_sgf_cumulative", &gamma_sgf_cumulative);
  m.def("km_residual", &km_residual);
  m.def("eval_at",
        [](const TrajectoryRecord& traj, const ModelSpec& spec, const LossSpec& loss,
           const std::vector<double>& x1, const std::vector<double>& y1,
           const std::vector<double>& x2, const std::vector<double>& y2) {
          return eval_at(traj, spec, loss, x1, y1, x2, y2);
        });
  m.def("gram_sum_residual", &gram_sum_residual);
  m.def("gamma_trace", &gamma_trace);

  py::enum_<Regime>(m, "Regime")
      .value("StronglyConvex", Regime::StronglyConvex)
      .value("Convex", Regime::Convex)
      .value("NonConvex", Regime::NonConvex);
  py::class_<ConstantEstimates>(m, "ConstantEstimates")
      .def(py::init<>())
      .def_readwrite("lipschitz", &ConstantEstimates::lipschitz)
      .def_readwrite("smoothness", &ConstantEstimates::smoothness)
      .def_readwrite("strong_convexity", &ConstantEstimates::strong_convexity)
      .def_readwrite("has_smoothness", &ConstantEstimates::has_smoothness)
      .def_readwrite("has_strong_convexity", &ConstantEstimates::has_strong_convexity);
  m.def("estimate_constants",
        [](const TrajectoryRecord& traj, const ModelSpec& spec, const LossSpec& loss,
           const Dataset& data, Rng& rng, int probes, std::optional<double> sc) {
          return estimate_constants(traj, spec, loss, data, rng, probes, sc);
        },
        py::arg("traj"), py::arg("spec"), py::arg("loss"), py::arg("data"), py::arg("rng"),
        py::arg("probes") = 32, py::arg("strong_convexity") = std::nullopt);
  py::class_<EpsilonResult>(m, "EpsilonResult")
      .def_readonly("value", &EpsilonResult::value)
      .def_readonly("chain_branch", &EpsilonResult::chain_branch)
      .def_readonly("sqrt_branch", &EpsilonResult::sqrt_branch)
      .def_readonly("overflow_fallback", &EpsilonResult::overflow_fallback);
  m.def("epsilon_term", &epsilon_term);
  py::class_<BoundReport>(m, "BoundReport")
      .def_readonly("gamma", &BoundReport::gamma)
      .def_readonly("epsilon", &BoundReport::epsilon)
      .def_readonly("slack", &BoundReport::slack)
      .def_readonly("total", &BoundReport::total)
      .def_readonly("gap", &BoundReport::gap)
      .def_readonly("has_gap", &BoundReport::has_gap)
      .def_readonly("warnings", &BoundReport::warnings);
  m.def("full_gf_bound",
        [](double gamma, const EpsilonResult& eps, Regime regime, const ConstantEstimates& c,
           long n, double delta, std::optional<double> gap) {
          return full_gf_bound(gamma, eps, regime, c, n, delta, gap);
        },
        py::arg("gamma"), py::arg("epsilon"), py::arg("regime"), py::arg("constants"),
        py::arg("n"), py::arg("delta"), py::arg("gap") = std::nullopt);
  m.def("bound_report_json", &bound_report_json);
  m.def("ntk_corollary_bound", &ntk_corollary_bound);
  py::class_<KrrClosedForm>(m, "KrrClosedForm")
      .def_readonly("w_star", &KrrClosedForm::w_star)
      .def_readonly("w_final", &KrrClosedForm::w_final)
      .def_readonly("loss_drop", &KrrClosedForm::loss_drop)
      .def_readonly("mean_grad_sq_integral", &KrrClosedForm::mean_grad_sq_integral)
      .def_readonly("per_sample_sq_integral", &KrrClosedForm::per_sample_sq_integral)
      .def_readonly("total_gram_sum", &KrrClosedForm::total_gram_sum)
      .def_readonly("gamma_closed", &KrrClosedForm::gamma_closed)
      .def_readonly("k_max", &KrrClosedForm::k_max)
      .def_readonly("cor4_rhs", &KrrClosedForm::cor4_rhs)
      .def_readonly("has_cor4", &KrrClosedForm::has_cor4)
      .def_readonly("cor4_rhs_zero_init", &KrrClosedForm::cor4_rhs_zero_init)
      .def_readonly("has_cor4_zero_init", &KrrClosedForm::has_cor4_zero_init);
  m.def("krr_closed_form",
        [](const Matrix& features, const std::vector<double>& y, double lambda,
           const std::vector<double>& w0, double T) {
          return krr_closed_form(features, y, lambda, w0, T);
        });
  m.def("sgf_remainder", &sgf_remainder);

  m.def("perturb_dataset",
        [](const Dataset& data, long i, const std::vector<double>& x,
           const std::vector<double>& y) { return perturb_dataset(data, i, x, y); });
  m.def("stability_envelope", &stability_envelope);
  m.def("kernel_perturbation_envelope", &kernel_perturbation_envelope);
  py::class_<StabilityReport>(m, "StabilityReport")
      .def_readonly("times", &StabilityReport::times)
      .def_readonly("divergence", &StabilityReport::divergence)
      .def_readonly("envelope", &StabilityReport::envelope)
      .def_readonly("violation", &StabilityReport::violation)
      .def_readonly("constants", &StabilityReport::constants);
  m.def("paired_divergence",
        [](const ModelSpec& spec, const LossSpec& loss, const ParamVector& w0, const Dataset& data,
           long i, const std::vector<double>& zx, const std::vector<double>& zy,
           const FlowConfig& cfg, Regime regime, Rng& rng, int probes, std::optional<double> sc,
           double margin) {
          return paired_divergence(spec, loss, w0, data, i, zx, zy, cfg, regime, rng, probes, sc,
                                   margin);
        },
        py::arg("spec"), py::arg("loss"), py::arg("w0"), py::arg("data"), py::arg("index"),
        py::arg("zx"), py::arg("zy"), py::arg("config"), py::arg("regime"), py::arg("rng"),
        py::arg("probes") = 32, py::arg("strong_convexity") = std::nullopt,
        py::arg("margin") = 0.05);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_static("parse_file", &ExperimentConfig::parse_file)
      .def_static("parse_string", &ExperimentConfig::parse_string)
      .def("set", &ExperimentConfig::set)
      .def("get", &ExperimentConfig::get)
      .def("canonical", &ExperimentConfig::canonical);
  py::class_<ManifestFile>(m, "ManifestFile")
      .def_readonly("name", &ManifestFile::name)
      .def_readonly("bytes", &ManifestFile::bytes)
      .def_readonly("hash", &ManifestFile::hash);
  py::class_<RunManifest>(m, "RunManifest")
      .def_readonly("config_hash", &RunManifest::config_hash)
      .def_readonly("files", &RunManifest::files)
      .def_readonly("warnings", &RunManifest::warnings);
  m.def("run_experiment", &run_experiment);
  m.def("validate_config", &validate_config);

  m.attr("__version__") = kArtifactVersion;
}
