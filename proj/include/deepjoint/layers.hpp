// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deepjoint/autodiff.hpp"
#include "deepjoint/random.hpp"

namespace deepjoint {

enum class Activation { softplus, tanh, sigmoid, relu };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::softplus: return "softplus";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "softplus") return Activation::softplus;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline ad::Var activate(Activation a, ad::Var x) {
  switch (a) {
    case Activation::softplus: return ad::softplus(x);
    case Activation::tanh: return ad::tanh(x);
    case Activation::sigmoid: return ad::sigmoid(x);
    case Activation::relu: return ad::relu(x);
  }
  return x;
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::softplus: return ad::softplus(x);
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return ad::sigmoid(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

/// Tensor with entries drawn uniformly from [-bound, bound].
inline Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Tensor t(rows, cols);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

struct MlpConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_layers;
  Activation activation = Activation::softplus;
  std::size_t output_dim = 1;
  std::optional<Activation> output_activation;

  void validate() const {
    if (input_dim == 0 || output_dim == 0) throw ConfigError("mlp: dimensions must be positive");
    for (auto w : hidden_layers)
      if (w == 0) throw ConfigError("mlp: hidden widths must be positive");
  }
};

struct Linear {
  ad::Parameter weight;  // [in, out]
  ad::Parameter bias;    // [1, out]

  Linear() = default;
  Linear(std::string_view prefix, std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = {std::string(prefix) + "/weight", uniform_tensor(in, out, bound, rng)};
    bias = {std::string(prefix) + "/bias", uniform_tensor(1, out, bound, rng)};
  }

  ad::Var forward(ad::Graph& g, ad::Var x) {
    ad::Var w = g.parameter(weight);
    return ad::add_broadcast(ad::matmul(x, w), g.parameter(bias));
  }
};

/// Feed-forward network: affine + activation per hidden layer, then an affine output map.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpConfig cfg, std::string_view prefix, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::size_t in = cfg_.input_dim;
    for (std::size_t l = 0; l < cfg_.hidden_layers.size(); ++l) {
      layers_.emplace_back(std::string(prefix) + "/layer" + std::to_string(l), in,
                           cfg_.hidden_layers[l], rng);
      in = cfg_.hidden_layers[l];
    }
    layers_.emplace_back(std::string(prefix) + "/output", in, cfg_.output_dim, rng);
  }

  [[nodiscard]] const MlpConfig& config() const noexcept { return cfg_; }

  ad::Var forward(ad::Graph& g, ad::Var x) {
    if (x.cols() != cfg_.input_dim) {
      throw ShapeError("mlp: input has " + std::to_string(x.cols()) + " features, expected " +
                       std::to_string(cfg_.input_dim));
    }
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l)
      x = activate(cfg_.activation, layers_[l].forward(g, x));
    x = layers_.back().forward(g, x);
    return cfg_.output_activation ? activate(*cfg_.output_activation, x) : x;
  }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<Linear>& layers() noexcept { return layers_; }
  const std::vector<Linear>& layers() const noexcept { return layers_; }

 private:
  MlpConfig cfg_;
  std::vector<Linear> layers_;
};

/// Monotone network N over [h ; eps] built from squared weights and monotone
/// activations, with a final softplus. cumulative() returns the anchored
/// Lambda(h, eps) = N(h, eps) - N(h, 0), which is zero at eps = 0 and
/// non-decreasing in eps.
class PositiveMlp {
 public:
  PositiveMlp() = default;
  // cfg.input_dim counts the embedding only; the gap adds one input column.
  PositiveMlp(MlpConfig cfg, std::string_view prefix, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.activation != Activation::tanh && cfg_.activation != Activation::softplus &&
        cfg_.activation != Activation::sigmoid) {
      throw ConfigError("positive mlp: hidden activation must be monotone and smooth");
    }
    cfg_.output_dim = 1;
    cfg_.output_activation = Activation::softplus;
    std::size_t in = cfg_.input_dim + 1;
    for (std::size_t l = 0; l < cfg_.hidden_layers.size(); ++l) {
      layers_.emplace_back(std::string(prefix) + "/layer" + std::to_string(l), in,
                           cfg_.hidden_layers[l], rng);
      in = cfg_.hidden_layers[l];
    }
    layers_.emplace_back(std::string(prefix) + "/output", in, 1, rng);
  }

  [[nodiscard]] const MlpConfig& config() const noexcept { return cfg_; }

  /// N(x) for x = [h ; eps] of shape [B, input_dim + 1].
  ad::Var network(ad::Graph& g, ad::Var x) {
    if (x.cols() != cfg_.input_dim + 1) {
      throw ShapeError("positive mlp: input has " + std::to_string(x.cols()) +
                       " columns, expected " + std::to_string(cfg_.input_dim + 1));
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      ad::Var w = ad::square(g.parameter(layers_[l].weight));
      x = ad::add_broadcast(ad::matmul(x, w), g.parameter(layers_[l].bias));
      x = l + 1 < layers_.size() ? activate(cfg_.activation, x) : ad::softplus(x);
    }
    return x;
  }

  /// Lambda(h, eps) for h [B, d] and eps [B, 1]; returns [B, 1].
  ad::Var cumulative(ad::Graph& g, ad::Var h, ad::Var eps) {
    if (eps.cols() != 1 || eps.rows() != h.rows()) {
      throw ShapeError("positive mlp: gap tensor " + eps.value().shape_string() +
                       " does not match embedding " + h.value().shape_string());
    }
    for (double e : eps.value().data())
      if (!(e >= 0.0)) throw DomainError("positive mlp: negative gap " + std::to_string(e));
    ad::Var zero = g.constant(Tensor(h.rows(), 1));
    ad::Var at_eps = network(g, ad::concat({h, eps}, 1));
    ad::Var at_zero = network(g, ad::concat({h, zero}, 1));
    return at_eps - at_zero;
  }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<Linear>& layers() noexcept { return layers_; }
  const std::vector<Linear>& layers() const noexcept { return layers_; }

 private:
  MlpConfig cfg_;
  std::vector<Linear> layers_;
};

/// Lambda(h, eps) for a single embedding, evaluated on a private graph.
inline double positive_mlp_forward(PositiveMlp& net, const Tensor& h, double eps) {
  if (eps < 0.0) throw DomainError("positive mlp: negative gap " + std::to_string(eps));
  ad::Graph g;
  ad::Var hv = g.constant(h);
  ad::Var ev = g.constant(Tensor::scalar(eps));
  return net.cumulative(g, hv, ev).value().item();
}

}  // namespace deepjoint
