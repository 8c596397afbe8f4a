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

#include "tgp/flow_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tgp/adam.hpp"
#include "tgp/errors.hpp"

namespace tgp {

using ad::Var;

std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw UsageError("unknown activation '" + name + "'");
}

int NetConfig::weight_count() const {
  int n = 0;
  int in = input_dim;
  for (int l = 0; l < hidden_layers; ++l) {
    n += in * width + width;
    in = width;
  }
  return n + in * output_dim + output_dim;
}

void NetConfig::validate() const {
  if (input_dim < 1) throw UsageError("net input dimension must be positive");
  if (hidden_layers < 1) throw UsageError("net needs at least one hidden layer");
  if (width < 1) throw UsageError("net width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
  if (output_dim < 1) throw UsageError("net output dimension must be positive");
  if (!(weight_decay >= 0.0)) throw UsageError("weight decay must be non-negative");
}

DropoutMask sample_mask(const NetConfig& config, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - config.dropout);
  DropoutMask mask;
  for (int l = 0; l < config.hidden_layers; ++l) {
    Matrix m(1, config.width);
    for (int j = 0; j < config.width; ++j) m(0, j) = keep(rng) ? 1.0 : 0.0;
    mask.layers.push_back(std::move(m));
  }
  return mask;
}

Var net_forward(const NetConfig& config, const Var& weights, const Var& x,
                const DropoutMask* mask) {
  config.validate();
  if (weights.rows() != config.weight_count() || weights.cols() != 1) {
    throw UsageError("net expects " + std::to_string(config.weight_count()) + " weights, got " +
                     std::to_string(weights.rows()));
  }
  if (x.cols() != config.input_dim) {
    throw UsageError("net expects " + std::to_string(config.input_dim) + " input columns");
  }
  if (mask && static_cast<int>(mask->layers.size()) != config.hidden_layers) {
    throw UsageError("dropout mask does not match the net");
  }
  ad::Tape& t = *x.tape();
  Var h = x;
  int in = config.input_dim;
  int off = 0;
  for (int l = 0; l < config.hidden_layers; ++l) {
    Var w = ad::slice(weights, off, in, config.width);
    off += in * config.width;
    Var b = ad::slice(weights, off, 1, config.width);
    off += config.width;
    Var a = ad::matmul(h, w) + b;
    h = config.activation == Activation::kRelu ? ad::relu(a) : ad::tanh(a);
    if (mask) {
      h = h * t.constant(mask->layers[static_cast<std::size_t>(l)]);
    } else if (config.dropout > 0.0) {
      h = h * (1.0 - config.dropout);
    }
    in = config.width;
  }
  Var w = ad::slice(weights, off, in, config.output_dim);
  off += in * config.output_dim;
  Var b = ad::slice(weights, off, 1, config.output_dim);
  return ad::matmul(h, w) + b;
}

Matrix net_forward(const NetConfig& config, const Vector& weights, const Matrix& x,
                   NetMode mode, std::uint64_t seed) {
  if (mode == NetMode::kDeterministic) {
    ad::Tape t;
    return net_forward(config, t.constant(Matrix(weights)), t.constant(x), nullptr).value();
  }
  std::mt19937_64 rng(seed);
  DropoutMask mask = sample_mask(config, rng);
  return net_forward(config, weights, x, mask);
}

Matrix net_forward(const NetConfig& config, const Vector& weights, const Matrix& x,
                   const DropoutMask& mask) {
  ad::Tape t;
  return net_forward(config, t.constant(Matrix(weights)), t.constant(x), &mask).value();
}

Vector net_init_weights(const NetConfig& config, std::mt19937_64& rng) {
  config.validate();
  Vector w = Vector::Zero(config.weight_count());
  int in = config.input_dim;
  int off = 0;
  auto fill = [&](int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (int i = 0; i < fan_in * fan_out; ++i) w(off + i) = u(rng);
    off += fan_in * fan_out + fan_out;
  };
  for (int l = 0; l < config.hidden_layers; ++l) {
    fill(in, config.width);
    in = config.width;
  }
  fill(in, config.output_dim);
  return w;
}

double weight_penalty(const Vector& weights, double lambda) {
  if (!(lambda >= 0.0)) throw UsageError("weight decay must be non-negative");
  return lambda * weights.squaredNorm();
}

Var weight_penalty(const Var& weights, double lambda) {
  if (!(lambda >= 0.0)) throw UsageError("weight decay must be non-negative");
  return lambda * ad::sum(ad::square(weights));
}

NetFitResult net_init_match(const NetConfig& config, const Vector& weights0,
                            const Matrix& target, const Matrix& x,
                            const NetFitOptions& options) {
  config.validate();
  if (target.cols() != config.output_dim) {
    throw UsageError("target has " + std::to_string(target.cols()) +
                     " columns but the net outputs " + std::to_string(config.output_dim));
  }
  if (target.rows() != 1 && target.rows() != x.rows()) {
    throw UsageError("target needs one row or one row per input");
  }
  if (weights0.size() != config.weight_count()) throw UsageError("net weight count mismatch");
  const Eigen::Index n = x.rows();
  if (n == 0) throw UsageError("net_init_match needs inputs");
  const Eigen::Index batch = std::min<Eigen::Index>(std::max(1, options.batch_size), n);
  std::mt19937_64 rng(options.seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  auto loss_on = [&](const Matrix& xb, const Matrix& tb) {
    return [&config, xb, tb](ad::Tape& t, const Var& w) {
      Var out = net_forward(config, w, t.constant(xb), nullptr);
      return ad::mean(ad::square(out - t.constant(tb)));
    };
  };
  NetFitResult result;
  result.weights = weights0;
  AdamState state;
  AdamOptions adam;
  adam.lr = options.lr;
  ad::Tape tape;
  const std::span<const double> params(result.weights.data(),
                                       static_cast<std::size_t>(result.weights.size()));
  try {
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (Eigen::Index start = 0; start < n; start += batch) {
        const Eigen::Index len = std::min(batch, n - start);
        Matrix xb(len, x.cols());
        Matrix tb(target.rows() == 1 ? 1 : len, target.cols());
        for (Eigen::Index i = 0; i < len; ++i) {
          const int src = order[static_cast<std::size_t>(start + i)];
          xb.row(i) = x.row(src);
          if (target.rows() != 1) tb.row(i) = target.row(src);
        }
        if (target.rows() == 1) tb = target;
        ad::forward(tape, loss_on(xb, tb), params);
        adam_step(result.weights, ad::backward(tape), state, adam);
      }
    }
    ad::Tape t;
    result.loss = ad::forward(t, loss_on(x, target), params);
  } catch (const NonFiniteValue&) {
    throw ConvergenceError("net_init_match diverged");
  }
  return result;
}

}  // namespace tgp
