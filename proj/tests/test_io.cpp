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

#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_util.hpp"
#include "tgp/errors.hpp"
#include "tgp/io.hpp"
#include "tgp/training.hpp"

namespace tgp {
namespace {

namespace fs = std::filesystem;

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("tgp_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) +
            "_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  fs::path dir_;
};

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

TEST_F(IoTest, LoadsSmallCsvWithHeader) {
  const Dataset d = load_csv(write("a.csv", "x,y\n0,1\n1,2\n2,3"), "y");
  EXPECT_EQ(d.x.rows(), 3);
  EXPECT_EQ(d.x.cols(), 1);
  EXPECT_EQ(d.y(2), 3.0);
  EXPECT_EQ(d.feature_names, std::vector<std::string>{"x"});
  EXPECT_EQ(d.target_name, "y");
}

TEST_F(IoTest, TargetColumnMayBeAnywhere) {
  const Dataset d = load_csv(write("a.csv", "y,a,b\r\n5,1,2\r\n6,3,4\r\n"), "y");
  EXPECT_EQ(d.x, (Matrix(2, 2) << 1, 2, 3, 4).finished());
  EXPECT_EQ(d.y, (Vector(2) << 5, 6).finished());
  const Dataset n = load_csv(write("b.csv", "5,1,2\n6,3,4\n"), "0", false);
  EXPECT_EQ(n.x, d.x);
  EXPECT_EQ(n.y, d.y);
}

TEST_F(IoTest, NanCellIsValidationErrorListingRow) {
  const std::string p = write("a.csv", "x,y\n0,1\n1,NaN\n2,3\n3,abc\n");
  try {
    load_csv(p, "y");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("3, 5"), std::string::npos) << msg;
  }
}

TEST_F(IoTest, SchemaErrors) {
  EXPECT_THROW(load_csv(write("empty.csv", ""), "y"), SchemaError);
  EXPECT_THROW(load_csv(write("hdr.csv", "x,y\n"), "y"), SchemaError);
  EXPECT_THROW(load_csv(write("a.csv", "x,z\n0,1\n"), "y"), SchemaError);
  EXPECT_THROW(load_csv(path("missing.csv"), "y"), SchemaError);
}

TEST_F(IoTest, RaggedRowIsValidationError) {
  EXPECT_THROW(load_csv(write("a.csv", "x,y\n0,1\n1\n"), "y"), ValidationError);
}

TEST_F(IoTest, CsvRoundTripIsBitIdentical) {
  for (SynthKind k : {SynthKind::kTanhWarpedSine, SynthKind::kGpDraw, SynthKind::kTwoCluster}) {
    DataSection s;
    s.synth = SynthSpec{};
    s.synth->kind = k;
    s.synth->n = 57;
    if (k == SynthKind::kTwoCluster) s.synth->input_dim = 3;
    const Dataset d = load_data(s);
    save_csv(path("d.csv"), d);
    const Dataset back = load_csv(path("d.csv"), "y");
    EXPECT_TRUE(same_bits(d.x, back.x)) << synth_kind_name(k);
    EXPECT_TRUE(same_bits(d.y, back.y)) << synth_kind_name(k);
  }
  // Awkward values survive as well.
  Dataset d;
  d.x = (Matrix(3, 1) << 0.1, -1e-300, 1.0 / 3.0).finished();
  d.y = (Vector(3) << 5e-324, 1.7976931348623157e308, -0.0).finished();
  d.target_name = "y";
  save_csv(path("e.csv"), d);
  const Dataset back = load_csv(path("e.csv"), "y");
  EXPECT_TRUE(same_bits(d.x, back.x));
  EXPECT_TRUE(same_bits(d.y, back.y));
}

TEST_F(IoTest, AtomicWriteLeavesNoTemporaries) {
  write_atomic(path("sub/out.txt"), "one");
  write_atomic(path("sub/out.txt"), "two");
  std::ifstream in(path("sub/out.txt"));
  std::string s;
  in >> s;
  EXPECT_EQ(s, "two");
  int files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir_ / "sub")) ++files;
  EXPECT_EQ(files, 1);
}

Json base_config() {
  return Json::parse(R"({
    "schema_version": 1,
    "model": {"kind": "tgp", "kernel": {"family": "periodic"}, "flow": "sal+sp",
              "flow_mode": "ba", "net": {"width": 8, "dropout": 0.2}},
    "train": {"epochs": 5, "lr": 0.05, "kernel_init": {"period": 0.8}},
    "data": {"synth": {"generator": "lognormal-gp", "n": 40}, "folds": {"kind": "ratio"}},
    "output": {"directory": "out", "formats": ["json"]}
  })");
}

TEST(Config, ParsesSections) {
  const RunConfig c = parse_config(base_config());
  EXPECT_EQ(c.model.kind, ModelKind::kTgp);
  EXPECT_EQ(c.model.kernel.family, KernelFamily::kPeriodic);
  EXPECT_EQ(c.model.flow_mode, FlowMode::kInputBa);
  EXPECT_EQ(c.model.net.width, 8);
  EXPECT_EQ(c.train.epochs, 5);
  EXPECT_EQ(c.train.kernel_init.period, 0.8);
  ASSERT_TRUE(c.data.synth.has_value());
  EXPECT_EQ(c.data.synth->kind, SynthKind::kLognormalGp);
  EXPECT_EQ(c.data.folds.kind, FoldSpec::Kind::kRatio);
  EXPECT_TRUE(c.output.json);
  EXPECT_FALSE(c.output.csv);
}

TEST(Config, RoundTripsThroughJson) {
  const RunConfig c = parse_config(base_config());
  const Json j = config_to_json(c);
  EXPECT_EQ(config_to_json(parse_config(j)), j);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  const std::vector<std::pair<std::string, Json>> edits = {
      {"/extra", 1},
      {"/model/colour", "red"},
      {"/model/net/depth", 2},
      {"/train/epochs", "ten"},
      {"/train/seed", -1},
      {"/model/kind", "dgp"},
      {"/model/flow", "sal+nonsense"},
      {"/data/synth/n", 0},
      {"/output/formats", Json::array({"xml"})},
      {"/schema_version", 2},
      {"/train/lr", -1.0},
  };
  for (const auto& [ptr, value] : edits) {
    Json j = base_config();
    j[Json::json_pointer(ptr)] = value;
    EXPECT_THROW(parse_config(j), SchemaError) << ptr;
  }
  Json j = base_config();
  j.erase("schema_version");
  EXPECT_THROW(parse_config(j), SchemaError);
}

TEST_F(IoTest, DataPathIsRelativeToConfig) {
  write("d.csv", "x,y\n0,1\n1,2\n");
  Json j = base_config();
  j["data"] = {{"path", "d.csv"}};
  write("c.json", j.dump());
  const RunConfig c = load_config(path("c.json"));
  EXPECT_EQ(load_data(c.data).x.rows(), 2);
  write("bad.json", "{\"schema_version\": 1,");
  EXPECT_THROW(load_config(path("bad.json")), SchemaError);
}

struct Fitted {
  Model model;
  Matrix x;
  Vector y;
};

Fitted fitted(ModelKind kind, FlowMode mode, const std::string& chain, int epochs = 20) {
  SynthSpec s;
  s.kind = SynthKind::kLognormalGp;
  s.n = 30;
  s.seed = 4;
  const SynthData d = generate(s);
  ModelSpec spec;
  spec.kind = kind;
  spec.kernel = KernelConfig::rbf_ard(1);
  spec.num_inducing = 5;
  spec.flow_mode = mode;
  if (kind == ModelKind::kVwgp) {
    spec.transform = FlowChain::parse(chain);
  } else {
    spec.chain = FlowChain::parse(chain);
  }
  spec.net.width = 6;
  spec.predict_samples = 7;
  TrainConfig c;
  c.epochs = epochs;
  c.init_epochs = 50;
  c.kmeans_runs = 2;
  c.lr = 0.05;
  Model m = init_pipeline(spec, d.x, d.y, c);
  fit(m, d.x, d.y, c);
  return {m, d.x, d.y};
}

TEST_F(IoTest, ModelRoundTripPredictsBitIdentically) {
  const std::vector<std::tuple<ModelKind, FlowMode, std::string>> cases = {
      {ModelKind::kSvgp, FlowMode::kNone, "identity"},
      {ModelKind::kTgp, FlowMode::kFixed, "sal+sp"},
      {ModelKind::kTgp, FlowMode::kInputBa, "sal"},
      {ModelKind::kVwgp, FlowMode::kNone, "sal"},
  };
  for (const auto& [kind, mode, chain] : cases) {
    const Fitted f = fitted(kind, mode, chain);
    save_model(f.model, path("m.json"));
    const Model back = load_model(path("m.json"));
    EXPECT_TRUE(same_bits(f.model.pack(), back.pack()));
    PredictOptions opt;
    opt.seed = 17;
    opt.quantile_samples = 100;
    const Prediction a = predict(f.model, f.x, &f.y, opt);
    const Prediction b = predict(back, f.x, &f.y, opt);
    const std::string label = model_kind_name(kind) + " " + chain;
    EXPECT_TRUE(same_bits(a.mean, b.mean)) << label;
    EXPECT_TRUE(same_bits(a.variance, b.variance)) << label;
    EXPECT_TRUE(same_bits(a.lower, b.lower)) << label;
    EXPECT_TRUE(same_bits(a.upper, b.upper)) << label;
    EXPECT_TRUE(same_bits(a.log_density, b.log_density)) << label;
  }
}

TEST_F(IoTest, TruncatedOrForeignModelsAreFormatErrors) {
  const Fitted f = fitted(ModelKind::kTgp, FlowMode::kFixed, "sal", 2);
  const std::string text = model_to_json(f.model).dump();
  write("trunc.json", text.substr(0, text.size() / 2));
  EXPECT_THROW(load_model(path("trunc.json")), FormatError);
  Json doc = model_to_json(f.model);
  doc["format_version"] = 99;
  write("v99.json", doc.dump());
  try {
    load_model(path("v99.json"));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("supported versions: 1"), std::string::npos) << e.what();
  }
  doc = model_to_json(f.model);
  doc["arrays"]["m"]["shape"] = {4, 1};
  EXPECT_THROW(model_from_json(doc), FormatError);
  doc = model_to_json(f.model);
  doc["arrays"].erase("z");
  EXPECT_THROW(model_from_json(doc), FormatError);
  EXPECT_THROW(load_model(path("none.json")), FormatError);
}

TEST(Warping, RequiresInputDependentFlow) {
  const Fitted f = fitted(ModelKind::kTgp, FlowMode::kFixed, "sal", 2);
  EXPECT_THROW(dump_warping(f.model, f.x, Vector::LinSpaced(5, -1, 1), 10, 0), UsageError);
}

TEST(Warping, PeHasZeroSpreadAndMatchesBaWithoutDropout) {
  Fitted f = fitted(ModelKind::kTgp, FlowMode::kInputPe, "sal", 5);
  const Vector grid = Vector::LinSpaced(9, -2, 2);
  const Matrix pe_trained = dump_warping(f.model, f.x.topRows(4), grid, 25, 3);
  ASSERT_EQ(pe_trained.rows(), 36);
  EXPECT_EQ(pe_trained.col(3).cwiseAbs().maxCoeff(), 0.0);
  f.model.spec.net.dropout = 0.0;
  const Matrix pe = dump_warping(f.model, f.x.topRows(4), grid, 25, 3);
  f.model.spec.flow_mode = FlowMode::kInputBa;
  const Matrix ba = dump_warping(f.model, f.x.topRows(4), grid, 25, 3);
  EXPECT_EQ(ba, pe);
  f.model.spec.net.dropout = 0.5;
  const Matrix mc = dump_warping(f.model, f.x.topRows(4), grid, 25, 3);
  EXPECT_GT(mc.col(3).maxCoeff(), 0.0);
  EXPECT_EQ(mc, dump_warping(f.model, f.x.topRows(4), grid, 25, 3));
}

TEST(Warping, IdentityInitialisedNetIsNearIdentity) {
  const Fitted f = fitted(ModelKind::kTgp, FlowMode::kInputPe, "sal", 0);
  const Vector grid = Vector::LinSpaced(21, -2, 2);
  const Matrix t = dump_warping(f.model, f.x.topRows(5), grid, 1, 0);
  EXPECT_LT((t.col(2) - t.col(1)).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Qf0, PriorCoincidentGivesKernelBlock) {
  Fitted f = fitted(ModelKind::kSvgp, FlowMode::kNone, "identity", 0);
  Model& m = f.model;
  m.inducing.whitened = true;
  m.inducing.m.setZero();
  m.inducing.s_factor.setIdentity();
  const Matrix x = f.x.topRows(6);
  const JointGaussian q = dump_qf0(m, x);
  const Matrix k = kernel_matrix_self(m.spec.kernel, m.kernel_raw, x);
  EXPECT_LT((q.cov - k).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(q.mean.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Qf0, SinglePointMatchesMarginal) {
  const Fitted f = fitted(ModelKind::kTgp, FlowMode::kFixed, "sal", 5);
  const Matrix x = f.x.row(3);
  const JointGaussian q = dump_qf0(f.model, x);
  const Marginals mg = q_f0_marginals(f.model.prior(), f.model.inducing, x);
  ASSERT_EQ(q.cov.rows(), 1);
  EXPECT_NEAR(q.cov(0, 0), mg.variance(0), 1e-12);
  EXPECT_NEAR(q.mean(0), mg.mean(0), 1e-12);
}

TEST(Metrics, JsonHasFlatKeys) {
  FoldMetrics f;
  f.nll = 1.5;
  f.acc = std::nan("");
  const Json j = metrics_to_json(aggregate({f, f}));
  for (const char* k : {"nll_mean", "nll_se", "rmse_mean", "rmse_se", "cov95_mean", "cov95_se",
                        "acc_mean", "acc_se", "folds"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j["nll_mean"], 1.5);
  EXPECT_TRUE(j["acc_mean"].is_null());
  EXPECT_EQ(j["folds"].size(), 2u);
}

}  // namespace
}  // namespace tgp
