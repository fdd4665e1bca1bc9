/*
 * Copyright 2026 The FedNMF Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>

#include <Eigen/Dense>

#include "fednmf/corpus.hpp"
#include "fednmf/rng.hpp"

namespace fednmf {

inline constexpr std::size_t kCriticHidden1 = 32;
inline constexpr std::size_t kCriticHidden2 = 256;
inline constexpr double kDefaultTau = 5.0;

/// Fully connected layer y = weightᵀ x + bias, weight stored in×out.
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;

  std::size_t inputs() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t outputs() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t num_params() const {
    return static_cast<std::size_t>(weight.size() + bias.size());
  }
  bool operator==(const DenseLayer& o) const { return weight == o.weight && bias == o.bias; }
};

/// Scoring network T(a, h) over the concatenation [a; h] of a count column
/// and a topic-weight column: (V+k) -> 32 -> ReLU -> 256 -> ReLU -> 1.
struct MiCritic {
  std::size_t vocab_size = 0;
  std::size_t topics = 0;
  DenseLayer layer1;
  DenseLayer layer2;
  DenseLayer layer3;
  double tau = kDefaultTau;

  std::size_t input_dim() const { return vocab_size + topics; }
  std::size_t num_params() const {
    return layer1.num_params() + layer2.num_params() + layer3.num_params();
  }

  /// Flattened parameter vector (layer1 weight, bias, layer2 ..., layer3 ...),
  /// weights in Eigen's column-major order. Used for aggregation.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  bool operator==(const MiCritic&) const = default;
};

/// Same shapes as the critic's layers, holding derivatives.
struct CriticGradients {
  DenseLayer layer1;
  DenseLayer layer2;
  DenseLayer layer3;

  Eigen::VectorXd flatten() const;
};

/// Glorot-uniform weights, zero biases, tau = 5.
MiCritic init_critic(std::size_t vocab_size, std::size_t topics, Rng& rng);

/// All-zero critic of the right shape.
MiCritic zero_critic(std::size_t vocab_size, std::size_t topics);

double critic_forward(const MiCritic& critic, const Eigen::VectorXd& a, const Eigen::VectorXd& h);

/// Range clamp min(max(v, lo), hi). Throws kInvalidBounds when lo > hi.
double clip(double v, double lo, double hi);

/// Mini-batch SMILE lower bound
///   (1/B) sum_j T(a_j, h_j) - log( 1/(B(B-1)) sum_{j != j'} clip(e^T(a_j, h_j'), e^-tau, e^tau) )
/// over the columns of A and H named by `batch`. Requires B >= 2.
double smile_estimate(const MiCritic& critic, const CountMatrix& A, const Eigen::MatrixXd& H,
                      std::span<const std::size_t> batch);

struct SmileGradients {
  double estimate = 0.0;
  CriticGradients theta;
  /// k×B, column b is d(estimate)/d H(:, batch[b]).
  Eigen::MatrixXd h_batch;
};

/// Exact reverse-mode gradients of smile_estimate. Saturated clip terms
/// contribute nothing.
SmileGradients smile_gradients(const MiCritic& critic, const CountMatrix& A,
                               const Eigen::MatrixXd& H, std::span<const std::size_t> batch);

/// Only the H part of smile_gradients; skips the critic weight products.
Eigen::MatrixXd smile_h_gradients(const MiCritic& critic, const CountMatrix& A,
                                  const Eigen::MatrixXd& H, std::span<const std::size_t> batch);

/// theta += eta * d(estimate)/d(theta). Returns the estimate before the step.
double critic_ascent_step(MiCritic& critic, const CountMatrix& A, const Eigen::MatrixXd& H,
                          std::span<const std::size_t> batch, double eta);

/// Per layer: `rows cols`, row-major weights, then one line of biases.
void save_critic(const std::filesystem::path& path, const MiCritic& critic);
MiCritic load_critic(const std::filesystem::path& path, std::size_t vocab_size);

}  // namespace fednmf
