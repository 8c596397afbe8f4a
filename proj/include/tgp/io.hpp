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

#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tgp/eval.hpp"
#include "tgp/models.hpp"
#include "tgp/synth.hpp"
#include "tgp/training.hpp"

namespace tgp {

using Json = nlohmann::json;

struct Dataset {
  Matrix x;
  Vector y;  // empty when the file has no target column
  std::vector<std::string> feature_names;
  std::string target_name;

  bool has_target() const { return !target_name.empty(); }
};

/// Comma-separated, optional header, '.' decimal. `target` names the target
/// column (or its 0-based index without a header); empty means features
/// only. Rows with unparseable or non-finite cells raise ValidationError
/// listing their line numbers.
Dataset load_csv(const std::string& path, const std::string& target, bool header = true);

/// Header plus shortest round-trip decimals, so load_csv restores every bit.
void save_csv(const std::string& path, const Dataset& data);

/// Writes `path` through a temporary file in the same directory and rename.
void write_atomic(const std::string& path, const std::string& content);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

/// Rows of a numeric table as CSV with the given header.
std::string table_csv(const std::vector<std::string>& header, const Matrix& rows);

struct DataSection {
  std::string path;
  std::string target = "y";
  bool header = true;
  std::optional<SynthSpec> synth;  // used when path is empty
  FoldSpec folds;
};

struct OutputSection {
  std::string directory = ".";
  bool json = true;  // model.json and metrics.json
  bool csv = true;   // trace.csv
};

struct RunConfig {
  ModelSpec model;
  TrainConfig train;
  DataSection data;
  OutputSection output;
};

constexpr int kConfigSchemaVersion = 1;
constexpr int kModelFormatVersion = 1;

/// Strict: unknown keys, wrong types and bad values raise SchemaError.
RunConfig parse_config(const Json& doc);
RunConfig load_config(const std::string& path);
Json config_to_json(const RunConfig& config);

/// Loads the configured CSV or generates the configured synthetic data.
Dataset load_data(const DataSection& data);

/// Sets the input dimension of the kernel and net from the data.
void bind_input_dim(ModelSpec& spec, int input_dim);

Json model_to_json(const Model& model);
/// FormatError for unsupported versions or malformed documents.
Model model_from_json(const Json& doc);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

/// Warped values G(f0; theta(x)) on a grid of f0 for each input row, over
/// `samples` dropout draws (one deterministic pass in pe mode). Columns:
/// input id, f0, mean, std. UsageError unless the flow is input-dependent.
Matrix dump_warping(const Model& model, const Matrix& inputs, const Vector& grid, int samples,
                    std::uint64_t seed);

/// Joint q(f0) over the given inputs on the model's internal scale.
JointGaussian dump_qf0(const Model& model, const Matrix& inputs);

Json metrics_to_json(const MetricsReport& report);

}  // namespace tgp
