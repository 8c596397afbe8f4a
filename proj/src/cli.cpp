/* Copyright 2026 The TGP Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
        limitations under the License.
==============================================================================*/

#include "tgp/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>

#include "tgp/errors.hpp"
#include "tgp/eval.hpp"
#include "tgp/io.hpp"
#include "tgp/synth.hpp"
#include "tgp/training.hpp"

namespace tgp {

namespace fs = std::filesystem;

namespace {

/// Test inputs with or without the target column; the model fixes D_x.
Dataset load_inputs(const std::string& path, const std::string& target, bool header,
                    int input_dim) {
  Dataset d = load_csv(path, "", header);
  if (d.x.cols() == input_dim) return d;
  if (d.x.cols() == input_dim + 1) return load_csv(path, target, header);
  throw SchemaError("'" + path + "' has " + std::to_string(d.x.cols()) +
                    " columns; the model expects " + std::to_string(input_dim) +
                    " features, optionally plus the target");
}

std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

struct Options {
  std::string config, model, data, out, spec, inputs, train_data, target = "y";
  std::optional<std::uint64_t> seed;
  bool no_header = false;
  int samples = 0, quadrature = 0, folds = 0, threads = 0;
  int grid_size = 100;
  int warp_samples = 100;
  std::optional<double> grid_min, grid_max;
  std::optional<long> n;
  std::optional<double> noise, lo, hi, period;
  std::optional<int> input_dim;
};

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  RunConfig c = load_config(o.config);
  if (o.seed) c.train.seed = *o.seed;
  const Dataset d = load_data(c.data);
  if (!d.has_target()) throw SchemaError("training data has no target column");
  bind_input_dim(c.model, static_cast<int>(d.x.cols()));
  std::vector<std::string> warnings;
  Model model = init_pipeline(c.model, d.x, d.y, c.train, &warnings);
  const TrainTrace trace = fit(model, d.x, d.y, c.train);
  for (const auto& w : trace.warnings) err << "warning: " << w << "\n";
  const fs::path dir = o.out.empty() ? fs::path(c.output.directory) : fs::path(o.out);
  const std::string model_path = (dir / "model.json").string();
  save_model(model, model_path);
  Json summary = {{"model", model_path}, {"epochs", trace.epochs.size()}};
  if (!trace.epochs.empty()) summary["final_elbo"] = trace.epochs.back().elbo;
  if (c.output.csv) {
    Matrix rows(static_cast<Eigen::Index>(trace.epochs.size()), 7);
    for (std::size_t e = 0; e < trace.epochs.size(); ++e) {
      const EpochRecord& r = trace.epochs[e];
      rows.row(static_cast<Eigen::Index>(e)) << static_cast<double>(e), r.elbo, r.ell, r.kl,
          r.penalty, r.seconds, r.escalations;
    }
    const std::string trace_path = (dir / "trace.csv").string();
    write_atomic(trace_path,
                 table_csv({"epoch", "elbo", "ell", "kl", "penalty", "seconds", "escalations"},
                           rows));
    summary["trace"] = trace_path;
  }
  if (c.output.json) write_atomic((dir / "config.json").string(), json_text(config_to_json(c)));
  out << json_text(summary);
  return kExitOk;
}

PredictOptions predict_options(const Options& o) {
  PredictOptions p;
  p.samples = o.samples;
  p.quadrature = o.quadrature;
  p.seed = o.seed.value_or(0);
  return p;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const Model model = load_model(o.model);
  const Dataset d = load_inputs(o.data, o.target, !o.no_header, model.input_dim());
  const Prediction p =
      predict(model, d.x, d.has_target() ? &d.y : nullptr, predict_options(o));
  std::vector<std::string> header = {"mean", "variance", "lower", "upper", "latent_mean"};
  Matrix rows(d.x.rows(), d.has_target() ? 6 : 5);
  rows.col(0) = p.mean;
  rows.col(1) = p.variance;
  rows.col(2) = p.lower;
  rows.col(3) = p.upper;
  rows.col(4) = p.latent_mean;
  if (d.has_target()) {
    header.push_back("log_density");
    rows.col(5) = p.log_density;
  }
  write_atomic(o.out, table_csv(header, rows));
  out << json_text({{"predictions", o.out}, {"rows", d.x.rows()}});
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const Model model = load_model(o.model);
  const Dataset d = load_inputs(o.data, o.target, !o.no_header, model.input_dim());
  if (!d.has_target()) throw SchemaError("evaluation data needs the target column");
  FoldMetrics f = evaluate(model, d.x, d.y, predict_options(o));
  out << json_text(metrics_to_json(aggregate({f})));
  return kExitOk;
}

int cmd_crossval(const Options& o, std::ostream& out, std::ostream& err) {
  RunConfig c = load_config(o.config);
  if (o.seed) {
    c.train.seed = *o.seed;
    c.data.folds.seed = *o.seed;
  }
  if (o.folds > 0) c.data.folds.folds = o.folds;
  const Dataset d = load_data(c.data);
  if (!d.has_target()) throw SchemaError("crossval data has no target column");
  bind_input_dim(c.model, static_cast<int>(d.x.cols()));
  const MetricsReport r = crossval(d.x, d.y, c.data.folds, c.model, c.train, {}, o.threads);
  for (const auto& w : r.warnings) err << "warning: " << w << "\n";
  const std::string text = json_text(metrics_to_json(r));
  if (!o.out.empty()) write_atomic((fs::path(o.out) / "metrics.json").string(), text);
  out << text;
  return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  SynthSpec s;
  if (fs::exists(o.spec) && fs::is_regular_file(o.spec)) {
    std::ifstream in(o.spec);
    Json doc;
    try {
      doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw SchemaError("synth spec '" + o.spec + "' is not valid JSON: " + e.what());
    }
    Json cfg = {{"schema_version", kConfigSchemaVersion}, {"data", {{"synth", doc}}}};
    s = *parse_config(cfg).data.synth;
  } else {
    s.kind = parse_synth_kind(o.spec);
  }
  if (o.n) s.n = *o.n;
  if (o.noise) s.noise = *o.noise;
  if (o.seed) s.seed = *o.seed;
  if (o.lo) s.lo = *o.lo;
  if (o.hi) s.hi = *o.hi;
  if (o.period) s.period = *o.period;
  if (o.input_dim) s.input_dim = *o.input_dim;
  DataSection section;
  section.synth = s;
  save_csv(o.out, load_data(section));
  out << json_text({{"data", o.out}, {"rows", s.n}, {"generator", synth_kind_name(s.kind)}});
  return kExitOk;
}

int cmd_dump_warping(const Options& o, std::ostream& out) {
  const Model model = load_model(o.model);
  const Dataset d = load_inputs(o.inputs, o.target, !o.no_header, model.input_dim());
  double lo = -2.0, hi = 2.0;
  if (!o.train_data.empty()) {
    // Span of the training targets on the model's internal scale.
    const Dataset t = load_inputs(o.train_data, o.target, !o.no_header, model.input_dim());
    if (!t.has_target()) throw SchemaError("--train data needs the target column");
    lo = (t.y.minCoeff() - model.y_shift) / model.y_scale;
    hi = (t.y.maxCoeff() - model.y_shift) / model.y_scale;
  }
  if (o.grid_min) lo = *o.grid_min;
  if (o.grid_max) hi = *o.grid_max;
  if (o.grid_size < 1 || !(hi >= lo)) throw UsageError("grid needs size >= 1 and max >= min");
  Vector grid = Vector::LinSpaced(o.grid_size, lo, hi);
  grid(0) = lo;
  const Matrix table = dump_warping(model, d.x, grid, o.warp_samples, o.seed.value_or(0));
  write_atomic(o.out, table_csv({"input_id", "f0", "mean_fk", "std_fk"}, table));
  out << json_text({{"warping", o.out}, {"rows", table.rows()}});
  return kExitOk;
}

int cmd_dump_qf0(const Options& o, std::ostream& out) {
  const Model model = load_model(o.model);
  const Dataset d = load_inputs(o.inputs, o.target, !o.no_header, model.input_dim());
  const JointGaussian q = dump_qf0(model, d.x);
  const Eigen::Index n = q.mean.size();
  std::vector<std::string> header = {"input_id", "mean"};
  for (Eigen::Index j = 0; j < n; ++j) header.push_back("cov_" + std::to_string(j));
  Matrix rows(n, n + 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    rows(i, 0) = static_cast<double>(i);
    rows(i, 1) = q.mean(i);
    rows.row(i).tail(n) = q.cov.row(i);
  }
  write_atomic(o.out, table_csv(header, rows));
  out << json_text({{"qf0", o.out}, {"points", n}, {"max_variance", q.cov.diagonal().maxCoeff()}});
  return kExitOk;
}

/// Small instance (N <= 8, M <= 3) with perturbed variational and flow
/// parameters, so no gradient block sits at a symmetric point.
int cmd_grad_check(const Options& o, std::ostream& out) {
  RunConfig c;
  if (!o.config.empty()) {
    c = load_config(o.config);
  } else {
    c.model.kind = ModelKind::kTgp;
    c.model.flow_mode = FlowMode::kFixed;
    c.model.chain = FlowChain::parse("sal");
    SynthSpec s;
    s.n = 8;
    s.hi = 1.0;
    c.data.synth = s;
  }
  const std::uint64_t seed = o.seed.value_or(c.train.seed);
  Dataset d = load_data(c.data);
  if (!d.has_target()) throw SchemaError("grad-check data has no target column");
  const Eigen::Index n = std::min<Eigen::Index>(8, d.x.rows());
  const Matrix x = d.x.topRows(n);
  const Vector y = d.y.head(n);
  ModelSpec spec = c.model;
  bind_input_dim(spec, static_cast<int>(x.cols()));
  spec.num_inducing = static_cast<int>(std::min<Eigen::Index>({3, spec.num_inducing, n}));
  spec.gsp_max_points = std::max<int>(spec.gsp_max_points, static_cast<int>(n));
  Model model = make_model(spec, x.topRows(spec.num_inducing));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& v : model.inducing.m) v = g(rng);
  for (Eigen::Index j = 0; j < spec.num_inducing; ++j)
    for (Eigen::Index i = j + 1; i < spec.num_inducing; ++i) model.inducing.s_factor(i, j) = 0.1 * g(rng);
  model.inducing.s_factor.diagonal().setConstant(0.5);
  for (auto& v : model.flow_raw) v += g(rng);
  for (auto& v : model.transform_raw) v += 0.3 * g(rng);
  const double error = elbo_gradient_error(model, x, y, seed);
  out << json_text({{"max_rel_error", error}, {"parameters", model.pack().size()}, {"points", n}});
  return error < 1e-4 ? kExitOk : kExitNumerical;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transformed Gaussian processes: train, predict and evaluate sparse GP models "
               "with marginal flows."};
  app.name(args.empty() ? "tgp" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);
  Options o;
  auto seed = [&](CLI::App* a) {
    a->add_option("--seed", o.seed, "Random seed (overrides the config)");
  };
  auto data_flags = [&](CLI::App* a) {
    a->add_option("--target", o.target, "Target column name, or index without header");
    a->add_flag("--no-header", o.no_header, "CSV files have no header row");
  };

  CLI::App* train = app.add_subcommand("train", "Fit a model from a JSON config");
  train->add_option("--config", o.config, "Run config (JSON)")->required();
  train->add_option("--out", o.out, "Output directory (default: output.directory)");
  seed(train);

  CLI::App* pred = app.add_subcommand("predict", "Predict at the rows of a CSV file");
  pred->add_option("--model", o.model, "Saved model (JSON)")->required();
  pred->add_option("--data", o.data, "Input CSV")->required();
  pred->add_option("--out", o.out, "Output CSV")->required();
  pred->add_option("--samples", o.samples, "Flow draws S (0: model default)");
  pred->add_option("--quadrature", o.quadrature, "Gauss-Hermite points (0: model default)");
  data_flags(pred);
  seed(pred);

  CLI::App* eval = app.add_subcommand("evaluate", "Test-set metrics of a saved model as JSON");
  eval->add_option("--model", o.model, "Saved model (JSON)")->required();
  eval->add_option("--data", o.data, "Test CSV with target")->required();
  eval->add_option("--samples", o.samples, "Flow draws S (0: model default)");
  eval->add_option("--quadrature", o.quadrature, "Gauss-Hermite points (0: model default)");
  data_flags(eval);
  seed(eval);

  CLI::App* cv = app.add_subcommand("crossval", "Cross-validated metrics as JSON");
  cv->add_option("--config", o.config, "Run config (JSON)")->required();
  cv->add_option("--folds", o.folds, "Number of folds (overrides the config)");
  cv->add_option("--threads", o.threads, "Worker threads (default: TGP_THREADS or all cores)");
  cv->add_option("--out", o.out, "Directory for metrics.json");
  seed(cv);

  CLI::App* syn = app.add_subcommand("synth", "Write a synthetic dataset as CSV");
  syn->add_option("--spec", o.spec,
                  "Generator (tanh-warped-sine, gp-draw, lognormal-gp, two-cluster) or a JSON "
                  "synth spec file")
      ->required();
  syn->add_option("--out", o.out, "Output CSV")->required();
  syn->add_option("--n", o.n, "Rows");
  syn->add_option("--noise", o.noise, "Noise std");
  syn->add_option("--lo", o.lo, "Domain lower end");
  syn->add_option("--hi", o.hi, "Domain upper end");
  syn->add_option("--period", o.period, "Sine period");
  syn->add_option("--input-dim", o.input_dim, "Input dimension");
  seed(syn);

  CLI::App* warp = app.add_subcommand("dump-warping", "Input-dependent warping functions as CSV");
  warp->add_option("--model", o.model, "Saved model (JSON)")->required();
  warp->add_option("--inputs", o.inputs, "CSV of input locations")->required();
  warp->add_option("--out", o.out, "Output CSV")->required();
  warp->add_option("--train", o.train_data, "Training CSV; the grid spans its target range");
  warp->add_option("--grid-size", o.grid_size, "Grid points");
  warp->add_option("--grid-min", o.grid_min, "Grid start on the internal scale");
  warp->add_option("--grid-max", o.grid_max, "Grid end on the internal scale");
  warp->add_option("--samples", o.warp_samples, "Dropout draws");
  data_flags(warp);
  seed(warp);

  CLI::App* qf0 = app.add_subcommand("dump-qf0", "Mean and covariance of q(f0) as CSV");
  qf0->add_option("--model", o.model, "Saved model (JSON)")->required();
  qf0->add_option("--inputs", o.inputs, "CSV of input locations")->required();
  qf0->add_option("--out", o.out, "Output CSV")->required();
  data_flags(qf0);

  CLI::App* grad = app.add_subcommand("grad-check", "Finite-difference check of ELBO gradients");
  grad->add_option("--config", o.config, "Run config (default: small TGP with a SAL flow)");
  seed(grad);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o, out, err);
    if (pred->parsed()) return cmd_predict(o, out);
    if (eval->parsed()) return cmd_evaluate(o, out);
    if (cv->parsed()) return cmd_crossval(o, out, err);
    if (syn->parsed()) return cmd_synth(o, out);
    if (warp->parsed()) return cmd_dump_warping(o, out);
    if (qf0->parsed()) return cmd_dump_qf0(o, out);
    if (grad->parsed()) return cmd_grad_check(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FlowNotUnconstrained& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace tgp
