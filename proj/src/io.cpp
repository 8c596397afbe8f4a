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

#include "tgp/io.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "tgp/errors.hpp"
#include "tgp/flow_net.hpp"

namespace tgp {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(std::string("cannot open ") + what + " '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// RFC-4180 style split of one record; quotes may wrap a field.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  const auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && std::isfinite(out);
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

Dataset load_csv(const std::string& path, const std::string& target, bool header) {
  const std::string text = read_file(path, "data file");
  std::vector<std::pair<long, std::vector<std::string>>> records;
  {
    std::istringstream in(text);
    std::string line;
    long number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (trim(line).empty()) continue;
      records.emplace_back(number, split_record(line));
    }
  }
  if (records.empty()) throw SchemaError("data file '" + path + "' is empty");
  std::vector<std::string> names;
  std::size_t first = 0;
  const std::size_t width = records.front().second.size();
  if (header) {
    names = records.front().second;
    first = 1;
  } else {
    for (std::size_t j = 0; j < width; ++j) names.push_back("x" + std::to_string(j));
  }
  if (records.size() == first) throw SchemaError("data file '" + path + "' has no data rows");

  long target_col = -1;
  if (!target.empty()) {
    const auto it = std::find(names.begin(), names.end(), target);
    if (header && it != names.end()) {
      target_col = it - names.begin();
    } else if (!header) {
      long idx = -1;
      const auto r = std::from_chars(target.data(), target.data() + target.size(), idx);
      if (r.ec == std::errc() && r.ptr == target.data() + target.size() && idx >= 0 &&
          idx < static_cast<long>(width)) {
        target_col = idx;
      }
    }
    if (target_col < 0) {
      throw SchemaError("target column '" + target + "' not found in '" + path +
                        "' (columns: " + join(names, ", ") + ")");
    }
  }

  const long n = static_cast<long>(records.size() - first);
  const long d = static_cast<long>(width) - (target_col >= 0 ? 1 : 0);
  Dataset out;
  out.x.resize(n, d);
  if (target_col >= 0) out.y.resize(n);
  std::vector<long> bad;
  for (long i = 0; i < n; ++i) {
    const auto& [line, cells] = records[first + static_cast<std::size_t>(i)];
    bool ok = cells.size() == width;
    for (std::size_t j = 0; ok && j < width; ++j) {
      double v;
      if (!parse_double(cells[j], v)) {
        ok = false;
        break;
      }
      const long jj = static_cast<long>(j);
      if (jj == target_col) {
        out.y(i) = v;
      } else {
        out.x(i, jj - (target_col >= 0 && jj > target_col ? 1 : 0)) = v;
      }
    }
    if (!ok) bad.push_back(line);
  }
  if (!bad.empty()) {
    std::string rows;
    for (std::size_t k = 0; k < bad.size() && k < 20; ++k) {
      rows += (k ? ", " : "") + std::to_string(bad[k]);
    }
    if (bad.size() > 20) rows += ", ...";
    throw ValidationError("data file '" + path + "': " + std::to_string(bad.size()) +
                          " row(s) with missing, unparseable or non-finite cells at line(s) " +
                          rows);
  }
  for (long j = 0; j < static_cast<long>(width); ++j) {
    if (j == target_col) {
      out.target_name = names[static_cast<std::size_t>(j)];
    } else {
      out.feature_names.push_back(names[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

std::string table_csv(const std::vector<std::string>& header, const Matrix& rows) {
  std::string out = join(header, ",") + "\n";
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      out += (j ? "," : "") + format_double(rows(i, j));
    }
    out += "\n";
  }
  return out;
}

void save_csv(const std::string& path, const Dataset& data) {
  std::vector<std::string> header = data.feature_names;
  if (header.empty()) {
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) header.push_back("x" + std::to_string(j));
  }
  if (static_cast<Eigen::Index>(header.size()) != data.x.cols()) {
    throw UsageError("feature names do not match the feature matrix");
  }
  Matrix rows = data.x;
  if (data.has_target()) {
    if (data.y.size() != data.x.rows()) throw UsageError("target length does not match rows");
    header.push_back(data.target_name);
    rows.conservativeResize(Eigen::NoChange, data.x.cols() + 1);
    rows.col(data.x.cols()) = data.y;
  }
  write_atomic(path, table_csv(header, rows));
}

void write_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  const fs::path dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
  if (!fs::exists(dir)) fs::create_directories(dir);
  const fs::path tmp =
      dir / (target.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw UsageError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw UsageError("cannot rename onto '" + path + "': " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// Config documents

namespace {

/// Strict reader over one JSON object: every key must be consumed.
class Section {
 public:
  Section(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw SchemaError(where_ + " must be a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.push_back(key);
    const Json& v = j_.at(key);
    const std::string at = where_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw SchemaError(at + " must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw SchemaError(at + " must be a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw SchemaError(at + " must be a non-negative integer");
      out = v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw SchemaError(at + " must be an integer");
      out = v.get<T>();
    } else {
      if (!v.is_number()) throw SchemaError(at + " must be a number");
      out = v.get<T>();
    }
  }

  /// Parses a string key through an enum parser, reporting bad values.
  template <class E, class F>
  void get_enum(const char* key, E& out, F parse) {
    std::string s;
    get(key, s);
    if (!j_.contains(key)) return;
    try {
      out = parse(s);
    } catch (const UsageError& e) {
      throw SchemaError(where_ + "." + key + ": " + e.what());
    }
  }

  const Json* sub(const char* key) {
    if (!j_.contains(key)) return nullptr;
    used_.push_back(key);
    return &j_.at(key);
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(used_.begin(), used_.end(), it.key()) == used_.end()) {
        throw SchemaError("unknown key '" + where_ + "." + it.key() + "'");
      }
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::vector<std::string> used_;
};

FlowChain parse_chain(const std::string& s, const std::string& where) {
  try {
    return FlowChain::parse(s);
  } catch (const UsageError& e) {
    throw SchemaError(where + ": " + e.what());
  }
}

KernelConfig parse_kernel(const Json& j, const std::string& where) {
  if (j.is_string()) {
    KernelConfig k;
    try {
      k.family = parse_kernel_family(j.get<std::string>());
    } catch (const UsageError& e) {
      throw SchemaError(where + ": " + e.what());
    }
    if (k.family == KernelFamily::kSum) throw SchemaError(where + ": a sum needs parts");
    return k;
  }
  Section s(j, where);
  KernelConfig k;
  s.get_enum("family", k.family, parse_kernel_family);
  s.get("input_dim", k.input_dim);
  if (const Json* parts = s.sub("parts")) {
    if (!parts->is_array()) throw SchemaError(s.path("parts") + " must be an array");
    for (std::size_t i = 0; i < parts->size(); ++i) {
      k.parts.push_back(parse_kernel((*parts)[i], s.path("parts") + "[" + std::to_string(i) + "]"));
    }
  }
  s.finish();
  return k;
}

Json kernel_json(const KernelConfig& k) {
  Json j = {{"family", kernel_family_name(k.family)}, {"input_dim", k.input_dim}};
  if (k.family == KernelFamily::kSum) {
    j["parts"] = Json::array();
    for (const auto& p : k.parts) j["parts"].push_back(kernel_json(p));
  }
  return j;
}

MeanFamily parse_mean(const std::string& s) {
  if (s == "zero") return MeanFamily::kZero;
  if (s == "constant") return MeanFamily::kConstant;
  throw UsageError("unknown mean '" + s + "' (expected zero or constant)");
}

ModelSpec parse_model_section(const Json& j) {
  Section s(j, "model");
  ModelSpec m;
  s.get_enum("kind", m.kind, parse_model_kind);
  if (const Json* k = s.sub("kernel")) m.kernel = parse_kernel(*k, "model.kernel");
  s.get_enum("mean", m.mean.family, parse_mean);
  s.get_enum("likelihood", m.likelihood, parse_likelihood);
  s.get("num_inducing", m.num_inducing);
  s.get("whitened", m.whitened);
  std::string chain = m.chain.to_string();
  s.get("flow", chain);
  m.chain = parse_chain(chain, "model.flow");
  s.get_enum("flow_mode", m.flow_mode, parse_flow_mode);
  if (const Json* n = s.sub("net")) {
    Section ns(*n, "model.net");
    ns.get("hidden_layers", m.net.hidden_layers);
    ns.get("width", m.net.width);
    ns.get_enum("activation", m.net.activation, parse_activation);
    ns.get("dropout", m.net.dropout);
    ns.get("weight_decay", m.net.weight_decay);
    ns.finish();
  }
  std::string transform = m.transform.to_string();
  s.get("transform", transform);
  m.transform = parse_chain(transform, "model.transform");
  s.get("transform_inverse", m.transform_inverse);
  s.get("train_samples", m.train_samples);
  s.get("predict_samples", m.predict_samples);
  s.get("train_quadrature", m.train_quadrature);
  s.get("predict_quadrature", m.predict_quadrature);
  s.get("gsp_samples", m.gsp_samples);
  s.get("gsp_max_points", m.gsp_max_points);
  if (const Json* jt = s.sub("jitter")) {
    Section js(*jt, "model.jitter");
    js.get("initial", m.jitter.initial);
    js.get("escalated", m.jitter.escalated);
    js.get("max_attempts", m.jitter.max_attempts);
    js.finish();
  }
  s.finish();
  return m;
}

Json model_section_json(const ModelSpec& m) {
  return {
      {"kind", model_kind_name(m.kind)},
      {"kernel", kernel_json(m.kernel)},
      {"mean", m.mean.family == MeanFamily::kConstant ? "constant" : "zero"},
      {"likelihood", likelihood_name(m.likelihood)},
      {"num_inducing", m.num_inducing},
      {"whitened", m.whitened},
      {"flow", m.chain.to_string()},
      {"flow_mode", flow_mode_name(m.flow_mode)},
      {"net",
       {{"hidden_layers", m.net.hidden_layers},
        {"width", m.net.width},
        {"activation", activation_name(m.net.activation)},
        {"dropout", m.net.dropout},
        {"weight_decay", m.net.weight_decay}}},
      {"transform", m.transform.to_string()},
      {"transform_inverse", m.transform_inverse},
      {"train_samples", m.train_samples},
      {"predict_samples", m.predict_samples},
      {"train_quadrature", m.train_quadrature},
      {"predict_quadrature", m.predict_quadrature},
      {"gsp_samples", m.gsp_samples},
      {"gsp_max_points", m.gsp_max_points},
      {"jitter",
       {{"initial", m.jitter.initial},
        {"escalated", m.jitter.escalated},
        {"max_attempts", m.jitter.max_attempts}}},
  };
}

TrainConfig parse_train_section(const Json& j) {
  Section s(j, "train");
  TrainConfig t;
  s.get("lr", t.lr);
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("seed", t.seed);
  s.get_enum("freeze", t.freeze, parse_freeze);
  s.get("freeze_fraction", t.freeze_fraction);
  s.get("freeze_epochs", t.freeze_epochs);
  s.get_enum("flow_init", t.flow_init, parse_flow_init);
  s.get("init_epochs", t.init_epochs);
  s.get("kmeans_runs", t.kmeans_runs);
  if (const Json* k = s.sub("kernel_init")) {
    Section ks(*k, "train.kernel_init");
    ks.get("variance", t.kernel_init.variance);
    ks.get("lengthscale", t.kernel_init.lengthscale);
    ks.get("period", t.kernel_init.period);
    ks.get("noise", t.kernel_init.noise);
    ks.finish();
  }
  s.get("noise_init", t.noise_init);
  s.get("standardize_targets", t.standardize_targets);
  s.get("progress", t.progress);
  s.finish();
  return t;
}

Json train_section_json(const TrainConfig& t) {
  return {
      {"lr", t.lr},
      {"epochs", t.epochs},
      {"batch_size", t.batch_size},
      {"seed", t.seed},
      {"freeze", freeze_name(t.freeze)},
      {"freeze_fraction", t.freeze_fraction},
      {"freeze_epochs", t.freeze_epochs},
      {"flow_init", flow_init_name(t.flow_init)},
      {"init_epochs", t.init_epochs},
      {"kmeans_runs", t.kmeans_runs},
      {"kernel_init",
       {{"variance", t.kernel_init.variance},
        {"lengthscale", t.kernel_init.lengthscale},
        {"period", t.kernel_init.period},
        {"noise", t.kernel_init.noise}}},
      {"noise_init", t.noise_init},
      {"standardize_targets", t.standardize_targets},
      {"progress", t.progress},
  };
}

SynthSpec parse_synth(const Json& j, const std::string& where) {
  Section s(j, where);
  SynthSpec p;
  s.get_enum("generator", p.kind, parse_synth_kind);
  s.get("n", p.n);
  s.get("noise", p.noise);
  s.get("seed", p.seed);
  s.get("lo", p.lo);
  s.get("hi", p.hi);
  s.get("input_dim", p.input_dim);
  s.get("period", p.period);
  s.get("tanh_a", p.tanh_a);
  s.get("tanh_b", p.tanh_b);
  s.get("tanh_c", p.tanh_c);
  s.get("tanh_d", p.tanh_d);
  s.get("variance", p.variance);
  s.get("lengthscale", p.lengthscale);
  s.finish();
  try {
    p.validate();
  } catch (const UsageError& e) {
    throw SchemaError(where + ": " + e.what());
  }
  return p;
}

Json synth_json(const SynthSpec& p) {
  return {{"generator", synth_kind_name(p.kind)},
          {"n", p.n},
          {"noise", p.noise},
          {"seed", p.seed},
          {"lo", p.lo},
          {"hi", p.hi},
          {"input_dim", p.input_dim},
          {"period", p.period},
          {"tanh_a", p.tanh_a},
          {"tanh_b", p.tanh_b},
          {"tanh_c", p.tanh_c},
          {"tanh_d", p.tanh_d},
          {"variance", p.variance},
          {"lengthscale", p.lengthscale}};
}

FoldSpec::Kind parse_fold_kind(const std::string& s) {
  if (s == "kfold") return FoldSpec::Kind::kKFold;
  if (s == "ratio") return FoldSpec::Kind::kRatio;
  throw UsageError("unknown fold kind '" + s + "' (expected kfold or ratio)");
}

}  // namespace

RunConfig parse_config(const Json& doc) {
  Section root(doc, "config");
  int version = -1;
  root.get("schema_version", version);
  if (version != kConfigSchemaVersion) {
    throw SchemaError("config.schema_version must be " + std::to_string(kConfigSchemaVersion));
  }
  RunConfig c;
  if (const Json* m = root.sub("model")) c.model = parse_model_section(*m);
  if (const Json* t = root.sub("train")) c.train = parse_train_section(*t);
  if (const Json* d = root.sub("data")) {
    Section s(*d, "data");
    s.get("path", c.data.path);
    s.get("target", c.data.target);
    s.get("header", c.data.header);
    if (const Json* sy = s.sub("synth")) c.data.synth = parse_synth(*sy, "data.synth");
    if (const Json* f = s.sub("folds")) {
      Section fs(*f, "data.folds");
      fs.get_enum("kind", c.data.folds.kind, parse_fold_kind);
      fs.get("folds", c.data.folds.folds);
      fs.get("train_fraction", c.data.folds.train_fraction);
      fs.get("seed", c.data.folds.seed);
      fs.finish();
    }
    s.finish();
  }
  if (const Json* o = root.sub("output")) {
    Section s(*o, "output");
    s.get("directory", c.output.directory);
    if (const Json* f = s.sub("formats")) {
      if (!f->is_array()) throw SchemaError("output.formats must be an array");
      c.output.json = c.output.csv = false;
      for (const Json& v : *f) {
        if (v == "json") {
          c.output.json = true;
        } else if (v == "csv") {
          c.output.csv = true;
        } else {
          throw SchemaError("output.formats entries must be \"json\" or \"csv\"");
        }
      }
    }
    s.finish();
  }
  root.finish();
  try {
    c.train.validate();
  } catch (const UsageError& e) {
    throw SchemaError(std::string("train: ") + e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  const std::string text = read_file(path, "config");
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw SchemaError("config '" + path + "' is not valid JSON: " + e.what());
  }
  RunConfig c = parse_config(doc);
  // Data paths are relative to the config file.
  if (!c.data.path.empty() && fs::path(c.data.path).is_relative()) {
    c.data.path = (fs::path(path).parent_path() / c.data.path).string();
  }
  return c;
}

Json config_to_json(const RunConfig& c) {
  Json data = {{"path", c.data.path},
               {"target", c.data.target},
               {"header", c.data.header},
               {"folds",
                {{"kind", c.data.folds.kind == FoldSpec::Kind::kKFold ? "kfold" : "ratio"},
                 {"folds", c.data.folds.folds},
                 {"train_fraction", c.data.folds.train_fraction},
                 {"seed", c.data.folds.seed}}}};
  if (c.data.synth) data["synth"] = synth_json(*c.data.synth);
  Json formats = Json::array();
  if (c.output.json) formats.push_back("json");
  if (c.output.csv) formats.push_back("csv");
  return {{"schema_version", kConfigSchemaVersion},
          {"model", model_section_json(c.model)},
          {"train", train_section_json(c.train)},
          {"data", data},
          {"output", {{"directory", c.output.directory}, {"formats", formats}}}};
}

Dataset load_data(const DataSection& data) {
  if (!data.path.empty()) {
    if (data.target.empty()) throw SchemaError("data.target must name the target column");
    return load_csv(data.path, data.target, data.header);
  }
  if (!data.synth) throw SchemaError("data needs either a path or a synth section");
  const SynthData s = generate(*data.synth);
  Dataset d;
  d.x = s.x;
  d.y = s.y;
  for (Eigen::Index j = 0; j < s.x.cols(); ++j) d.feature_names.push_back("x" + std::to_string(j));
  d.target_name = "y";
  return d;
}

namespace {

void set_kernel_dim(KernelConfig& k, int d) {
  k.input_dim = d;
  for (auto& p : k.parts) set_kernel_dim(p, d);
}

}  // namespace

void bind_input_dim(ModelSpec& spec, int input_dim) {
  set_kernel_dim(spec.kernel, input_dim);
  spec.net.input_dim = input_dim;
}

// ---------------------------------------------------------------------------
// Model documents

namespace {

Json array_json(const Matrix& m) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) throw UsageError("cannot save a model with non-finite values");
      data.push_back(m(i, j));
    }
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Matrix array_from_json(const Json& arrays, const char* name, Eigen::Index rows,
                       Eigen::Index cols) {
  if (!arrays.contains(name)) throw FormatError(std::string("missing array '") + name + "'");
  const Json& a = arrays.at(name);
  if (!a.is_object() || !a.contains("shape") || !a.contains("data") || !a["shape"].is_array() ||
      a["shape"].size() != 2 || !a["data"].is_array()) {
    throw FormatError(std::string("malformed array '") + name + "'");
  }
  const Eigen::Index r = a["shape"][0].get<Eigen::Index>();
  const Eigen::Index c = a["shape"][1].get<Eigen::Index>();
  if (r != rows || c != cols || static_cast<Eigen::Index>(a["data"].size()) != r * c) {
    throw FormatError(std::string("array '") + name + "' has shape " + std::to_string(r) + "x" +
                      std::to_string(c) + ", expected " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) {
      const Json& v = a["data"][static_cast<std::size_t>(i * c + j)];
      if (!v.is_number()) throw FormatError(std::string("non-numeric entry in '") + name + "'");
      m(i, j) = v.get<double>();
    }
  return m;
}

}  // namespace

Json model_to_json(const Model& model) {
  Json spec = model_section_json(model.spec);
  spec["y_shift"] = model.y_shift;
  spec["y_scale"] = model.y_scale;
  Json arrays = {
      {"kernel_raw", array_json(model.kernel_raw)},
      {"mean_raw", array_json(model.mean_raw)},
      {"noise_raw", array_json(Matrix::Constant(1, 1, model.noise_raw))},
      {"z", array_json(model.inducing.z)},
      {"m", array_json(model.inducing.m)},
      {"s_factor", array_json(model.inducing.s_factor)},
      {"flow_raw", array_json(model.flow_raw)},
      {"net_weights", array_json(model.net_weights)},
      {"transform_raw", array_json(model.transform_raw)},
  };
  return {{"format_version", kModelFormatVersion}, {"model", spec}, {"arrays", arrays}};
}

Model model_from_json(const Json& doc) {
  if (!doc.is_object() || !doc.contains("format_version")) {
    throw FormatError("not a model document: missing format_version");
  }
  const Json& v = doc["format_version"];
  if (!v.is_number_integer() || v.get<long>() != kModelFormatVersion) {
    throw FormatError("unsupported model format_version " + v.dump() +
                      "; supported versions: " + std::to_string(kModelFormatVersion));
  }
  if (!doc.contains("model") || !doc.contains("arrays") || !doc["arrays"].is_object()) {
    throw FormatError("model document needs 'model' and 'arrays'");
  }
  try {
    Json spec_json = doc["model"];
    if (!spec_json.is_object() || !spec_json.contains("y_shift") || !spec_json.contains("y_scale")) {
      throw FormatError("model section lacks the target standardization");
    }
    const double y_shift = spec_json["y_shift"].get<double>();
    const double y_scale = spec_json["y_scale"].get<double>();
    spec_json.erase("y_shift");
    spec_json.erase("y_scale");
    const ModelSpec spec = parse_model_section(spec_json);
    const Json& arrays = doc["arrays"];
    const Matrix z =
        array_from_json(arrays, "z", spec.num_inducing, spec.kernel.input_dim);
    Model m = make_model(spec, z);
    m.y_shift = y_shift;
    m.y_scale = y_scale;
    m.kernel_raw = array_from_json(arrays, "kernel_raw", m.kernel_raw.size(), 1);
    m.mean_raw = array_from_json(arrays, "mean_raw", m.mean_raw.size(), 1);
    m.noise_raw = array_from_json(arrays, "noise_raw", 1, 1)(0, 0);
    m.inducing.m = array_from_json(arrays, "m", spec.num_inducing, 1);
    m.inducing.s_factor =
        array_from_json(arrays, "s_factor", spec.num_inducing, spec.num_inducing);
    m.flow_raw = array_from_json(arrays, "flow_raw", m.flow_raw.size(), 1);
    m.net_weights = array_from_json(arrays, "net_weights", m.net_weights.size(), 1);
    m.transform_raw = array_from_json(arrays, "transform_raw", m.transform_raw.size(), 1);
    return m;
  } catch (const FormatError&) {
    throw;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed model document: ") + e.what());
  } catch (const Error& e) {
    throw FormatError(std::string("invalid model document: ") + e.what());
  }
}

void save_model(const Model& model, const std::string& path) {
  write_atomic(path, model_to_json(model).dump(1) + "\n");
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  Json doc;
  try {
    doc = Json::parse(s.str());
  } catch (const Json::parse_error& e) {
    throw FormatError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

// ---------------------------------------------------------------------------
// Diagnostics

Matrix dump_warping(const Model& model, const Matrix& inputs, const Vector& grid, int samples,
                    std::uint64_t seed) {
  if (!model.spec.input_dependent()) {
    throw UsageError("warping dumps need an input-dependent flow (flow_mode pe or ba)");
  }
  if (inputs.cols() != model.input_dim()) throw UsageError("inputs have the wrong dimension");
  if (samples < 1) throw UsageError("need at least one sample");
  const bool mc = model.spec.flow_mode == FlowMode::kInputBa;
  const int draws = mc ? samples : 1;
  std::mt19937_64 rng(seed);
  std::vector<Matrix> params;  // one (inputs x slots) block per draw
  for (int s = 0; s < draws; ++s) {
    if (mc) {
      const DropoutMask mask = sample_mask(model.spec.net, rng);
      params.push_back(flow_params_at(model, inputs, &mask));
    } else {
      params.push_back(flow_params_at(model, inputs, nullptr));
    }
  }
  const Eigen::Index g = grid.size();
  Matrix out(inputs.rows() * g, 4);
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    for (Eigen::Index k = 0; k < g; ++k) {
      // Welford: identical draws give exactly their value and zero spread.
      double mean = 0.0, m2 = 0.0;
      for (std::size_t s = 0; s < params.size(); ++s) {
        const Vector row = params[s].row(i).transpose();
        const double v = flow_forward(model.spec.chain, grid(k),
                                      std::span<const double>(row.data(), row.size()));
        const double delta = v - mean;
        mean += delta / static_cast<double>(s + 1);
        m2 += delta * (v - mean);
      }
      out.row(i * g + k) << static_cast<double>(i), grid(k), mean, std::sqrt(m2 / draws);
    }
  }
  return out;
}

JointGaussian dump_qf0(const Model& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim()) throw UsageError("inputs have the wrong dimension");
  return q_f0_joint(model.prior(), model.inducing, inputs);
}

Json metrics_to_json(const MetricsReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  Json folds = Json::array();
  for (const FoldMetrics& f : r.folds) {
    folds.push_back({{"ok", f.ok},
                     {"error", f.error},
                     {"n_train", f.n_train},
                     {"n_test", f.n_test},
                     {"nll", num(f.nll)},
                     {"nll_standardized", num(f.nll_standardized)},
                     {"rmse", num(f.rmse)},
                     {"cov95", num(f.cov95)},
                     {"acc", num(f.acc)}});
  }
  return {{"nll_mean", num(r.nll_mean)},
          {"nll_se", num(r.nll_se)},
          {"nll_standardized_mean", num(r.nll_standardized_mean)},
          {"nll_standardized_se", num(r.nll_standardized_se)},
          {"rmse_mean", num(r.rmse_mean)},
          {"rmse_se", num(r.rmse_se)},
          {"cov95_mean", num(r.cov95_mean)},
          {"cov95_se", num(r.cov95_se)},
          {"acc_mean", num(r.acc_mean)},
          {"acc_se", num(r.acc_se)},
          {"folds", folds},
          {"warnings", r.warnings}};
}

}  // namespace tgp
