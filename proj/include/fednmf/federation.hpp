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
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fednmf/corpus.hpp"
#include "fednmf/factorization.hpp"
#include "fednmf/mi_estimator.hpp"
#include "fednmf/partition.hpp"
#include "fednmf/rng.hpp"

namespace fednmf {

enum class Aggregator { kFedAvg, kFedAdagrad, kFedYogi, kFedAdam };

std::string_view aggregator_name(Aggregator a);
/// Accepts the names above case-insensitively ("fedavg", "FedAdam", ...).
std::optional<Aggregator> parse_aggregator(std::string_view name);

struct FedRunConfig {
  std::size_t clients = 10;       // K
  double participation = 0.2;     // C
  std::size_t rounds = 100;       // T
  std::size_t topics = 20;        // k
  SgdConfig sgd;                  // eta, lambda, B, E
  Aggregator aggregator = Aggregator::kFedAvg;
  double server_lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adapt_eps = 1e-3;
  std::uint64_t master_seed = 0;
  /// Uniform init bound; <= 0 means default_init_scale of the training data.
  double init_scale = 0.0;

  FedRunConfig() { sgd.epochs = 20; sgd.batch_size = 64; sgd.eta = 0.05; sgd.lambda = 0.1; }

  /// Every violated constraint, one message per field.
  std::vector<std::string> validate() const;
};

/// Server optimizer moments for one flattened parameter tensor.
struct AdaptiveMoments {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

struct ServerState {
  std::size_t round = 0;
  TopicModel model;
  MiCritic critic;
  AdaptiveMoments w_moments;
  AdaptiveMoments theta_moments;
};

struct ClientState {
  std::size_t client_id = 0;
  ClientShard shard;
  CountMatrix data;  // A_i, columns in shard order
  ClientFactors factors;

  std::size_t documents() const { return data.cols(); }
};

struct RoundMetrics {
  std::size_t round = 0;
  std::vector<std::size_t> participants;
  /// Per-document squared residual over all clients under the server's W.
  double mean_recon_loss = 0.0;
  /// Mean over participants of the SMILE estimates seen in their last local
  /// epoch; NaN when nobody trained (round 0).
  double mean_mi_estimate = 0.0;
  std::uint64_t cumulative_comm_bytes = 0;
};

/// What a client sends back: only W and the critic, never H.
struct ClientUpdate {
  Eigen::MatrixXd W;
  MiCritic critic;
};

struct ClientUpdateResult {
  ClientUpdate update;
  double mean_mi_estimate = 0.0;
};

// Stream identifiers for derive_seed.
enum class Stream : std::uint64_t { kServerInit = 1, kClientInit = 2, kSelection = 3, kClient = 4 };

/// Seed for (master_seed, stream, id, round); results never depend on the
/// order in which streams are consumed.
std::uint64_t stream_seed(std::uint64_t master_seed, Stream stream, std::uint64_t id,
                          std::uint64_t round);

/// m = max(floor(C*K), 1).
std::size_t participants_per_round(std::size_t clients, double participation);

/// Uniform sample of m distinct ids, returned in ascending order.
std::vector<std::size_t> select_clients(std::size_t clients, double participation, Rng& rng);

/// Shuffles 0..n-1 and cuts it into batches of `batch_size`. A trailing batch
/// of one column is folded into the previous batch so every batch has at
/// least two columns whenever n >= 2.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   Rng& rng);

/// Local training: E epochs over shuffled batches, each batch an sgd_step on
/// (W, H_i) followed by a critic ascent step at the updated H_i. H_i is
/// updated in place and stays on the client.
ClientUpdateResult client_update(ClientState& client, const Eigen::MatrixXd& W_in,
                                 const MiCritic& critic_in, const SgdConfig& sgd, Rng& rng);

/// Sample-size weighted mean over participants; W is projected afterwards.
ClientUpdate aggregate_fedavg(std::span<const ClientUpdate> updates,
                              std::span<const double> weights);

/// Adaptive server step (FedAdagrad / FedYogi / FedAdam) on W and the critic,
/// each with its own moments, using the weighted mean minus the current
/// server value as the pseudo-gradient.
void aggregate_fedopt(ServerState& server, std::span<const ClientUpdate> updates,
                      std::span<const double> weights, Aggregator variant,
                      const FedRunConfig& config);

/// 2 * m * (|W| + |theta|) * 4 bytes.
std::uint64_t round_comm_bytes(std::size_t participants, std::size_t w_params,
                               std::size_t theta_params);

/// Mean per-document ||A(:,j) - W H(:,j)||² over every client.
double global_recon_loss(const Eigen::MatrixXd& W, std::span<const ClientState> clients);

/// One server round. Client updates run on up to `threads` workers; the
/// outcome does not depend on the thread count. Throws kDiverged when W or the
/// loss turns non-finite, or the critic does while lambda > 0.
RoundMetrics run_round(ServerState& server, std::vector<ClientState>& clients,
                       const FedRunConfig& config, Rng& selection_rng,
                       std::uint64_t previous_bytes, std::size_t threads = 1);

struct TrainingResult {
  ServerState server;
  std::vector<ClientState> clients;
  std::vector<RoundMetrics> metrics;  // metrics[0] is the initial state
};

using RoundObserver = std::function<void(const RoundMetrics&, const ServerState&)>;

/// Fresh initialization followed by config.rounds rounds. The observer sees
/// the round-0 record and then every round as it completes.
TrainingResult run_training(const CountMatrix& matrix, std::span<const ClientShard> shards,
                            const FedRunConfig& config, std::size_t threads = 1,
                            const RoundObserver& observer = {});

/// Builds the initial server and client states exactly as run_training does.
ServerState init_server(const FedRunConfig& config, std::size_t vocab_size, double scale);
std::vector<ClientState> init_clients(const CountMatrix& matrix,
                                      std::span<const ClientShard> shards,
                                      const FedRunConfig& config, double scale);
double training_init_scale(const CountMatrix& matrix, std::span<const ClientShard> shards,
                           const FedRunConfig& config);

/// One JSON object per line.
std::string metrics_to_json_line(const RoundMetrics& metrics);

}  // namespace fednmf
