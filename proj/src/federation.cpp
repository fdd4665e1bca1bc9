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

#include "fednmf/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "json.hpp"

#include "fednmf/error.hpp"
#include "text_util.hpp"

namespace fednmf {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

void check_updates(std::span<const ClientUpdate> updates, std::span<const double> weights) {
  if (updates.empty()) throw Error(ErrorCode::kEmptyUpdateSet, "no client updates to aggregate");
  if (updates.size() != weights.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "one weight per update required");
  }
  const auto& first = updates.front();
  for (const auto& u : updates) {
    if (u.W.rows() != first.W.rows() || u.W.cols() != first.W.cols() ||
        u.critic.num_params() != first.critic.num_params()) {
      throw Error(ErrorCode::kDimensionMismatch, "client updates have inconsistent shapes");
    }
  }
  for (double w : weights)
    if (!(w >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative aggregation weight");
}

void adaptive_update(Eigen::Ref<VectorXd> x, AdaptiveMoments& mom, const VectorXd& delta,
                     Aggregator variant, const FedRunConfig& cfg) {
  if (mom.m.size() != x.size()) mom.m = VectorXd::Zero(x.size());
  if (mom.v.size() != x.size()) mom.v = VectorXd::Zero(x.size());
  mom.m = cfg.beta1 * mom.m + (1.0 - cfg.beta1) * delta;
  const VectorXd d2 = delta.cwiseProduct(delta);
  switch (variant) {
    case Aggregator::kFedAdagrad:
      mom.v += d2;
      break;
    case Aggregator::kFedAdam:
      mom.v = cfg.beta2 * mom.v + (1.0 - cfg.beta2) * d2;
      break;
    case Aggregator::kFedYogi: {
      const VectorXd diff = mom.v - d2;
      const VectorXd sign = diff.unaryExpr([](double s) { return double((s > 0.0) - (s < 0.0)); });
      mom.v -= (1.0 - cfg.beta2) * d2.cwiseProduct(sign);
      break;
    }
    case Aggregator::kFedAvg:
      throw Error(ErrorCode::kInvalidArgument, "FedAvg is not an adaptive aggregator");
  }
  x.array() += cfg.server_lr * mom.m.array() / (mom.v.array().sqrt() + cfg.adapt_eps);
}

}  // namespace

std::string_view aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::kFedAvg: return "FedAvg";
    case Aggregator::kFedAdagrad: return "FedAdagrad";
    case Aggregator::kFedYogi: return "FedYogi";
    case Aggregator::kFedAdam: return "FedAdam";
  }
  return "?";
}

std::optional<Aggregator> parse_aggregator(std::string_view name) {
  const std::string n = lower(name);
  for (Aggregator a : {Aggregator::kFedAvg, Aggregator::kFedAdagrad, Aggregator::kFedYogi,
                       Aggregator::kFedAdam}) {
    if (n == lower(aggregator_name(a))) return a;
  }
  return std::nullopt;
}

std::vector<std::string> FedRunConfig::validate() const {
  std::vector<std::string> errors;
  if (clients < 1) errors.push_back("clients (K) must be >= 1");
  if (!(participation > 0.0 && participation <= 1.0))
    errors.push_back("participation (C) must lie in (0, 1]");
  if (rounds < 1) errors.push_back("rounds (T) must be >= 1");
  if (topics < 1) errors.push_back("topics (k) must be >= 1");
  if (!(sgd.eta > 0.0) || !std::isfinite(sgd.eta)) errors.push_back("eta must be > 0");
  if (!(sgd.lambda >= 0.0) || !std::isfinite(sgd.lambda)) errors.push_back("lambda must be >= 0");
  if (sgd.batch_size < 1) errors.push_back("batch_size (B) must be >= 1");
  if (sgd.epochs < 1) errors.push_back("epochs (E) must be >= 1");
  if (sgd.lambda > 0.0 && sgd.batch_size < 2)
    errors.push_back("batch_size (B) must be >= 2 when lambda > 0");
  if (!(server_lr > 0.0)) errors.push_back("server_lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) errors.push_back("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) errors.push_back("beta2 must lie in [0, 1)");
  if (!(adapt_eps > 0.0)) errors.push_back("adapt_eps must be > 0");
  if (!std::isfinite(init_scale)) errors.push_back("init_scale must be finite");
  return errors;
}

std::uint64_t stream_seed(std::uint64_t master_seed, Stream stream, std::uint64_t id,
                          std::uint64_t round) {
  return derive_seed({master_seed, static_cast<std::uint64_t>(stream), id, round});
}

std::size_t participants_per_round(std::size_t clients, double participation) {
  const double raw = std::floor(participation * static_cast<double>(clients) + 1e-9);
  const auto m = raw < 1.0 ? std::size_t{1} : static_cast<std::size_t>(raw);
  return std::min(m, clients);
}

std::vector<std::size_t> select_clients(std::size_t clients, double participation, Rng& rng) {
  if (clients < 1) throw Error(ErrorCode::kInvalidArgument, "no clients to select from");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "participation must lie in (0, 1]");
  }
  const std::size_t m = participants_per_round(clients, participation);
  std::vector<std::size_t> ids(clients);
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates: the first m slots are a uniform sample.
  for (std::size_t i = 0; i < m; ++i) std::swap(ids[i], ids[i + uniform_index(rng, clients - i)]);
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   Rng& rng) {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

ClientUpdateResult client_update(ClientState& client, const MatrixXd& W_in,
                                 const MiCritic& critic_in, const SgdConfig& sgd, Rng& rng) {
  const std::size_t n = client.documents();
  if (n < 2) {
    throw Error(ErrorCode::kBatchTooSmall, "client " + std::to_string(client.client_id) +
                                               " holds fewer than 2 documents");
  }
  if (static_cast<std::size_t>(client.factors.H.cols()) != n ||
      client.factors.H.rows() != W_in.cols() ||
      static_cast<std::size_t>(W_in.rows()) != client.data.rows) {
    throw Error(ErrorCode::kDimensionMismatch,
                "client " + std::to_string(client.client_id) + " state does not match W");
  }
  ClientUpdateResult result;
  result.update.W = W_in;
  result.update.critic = critic_in;
  MatrixXd& W = result.update.W;
  MiCritic& critic = result.update.critic;
  MatrixXd& H = client.factors.H;

  double mi_sum = 0.0;
  std::size_t mi_count = 0;
  for (std::size_t epoch = 0; epoch < sgd.epochs; ++epoch) {
    const bool last = epoch + 1 == sgd.epochs;
    for (const auto& batch : make_batches(n, sgd.batch_size, rng)) {
      sgd_step(W, H, client.data, batch, sgd, critic);
      // Only reachable with batch_size 1 and lambda 0: no pairs to score.
      if (batch.size() < 2) continue;
      const double est = critic_ascent_step(critic, client.data, H, batch, sgd.eta);
      if (last) {
        mi_sum += est;
        ++mi_count;
      }
    }
  }
  result.mean_mi_estimate =
      mi_count ? mi_sum / static_cast<double>(mi_count) : std::numeric_limits<double>::quiet_NaN();
  return result;
}

ClientUpdate aggregate_fedavg(std::span<const ClientUpdate> updates,
                              std::span<const double> weights) {
  check_updates(updates, weights);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "aggregation weights sum to 0");
  const auto& first = updates.front();
  MatrixXd W = MatrixXd::Zero(first.W.rows(), first.W.cols());
  VectorXd theta = VectorXd::Zero(static_cast<Index>(first.critic.num_params()));
  for (std::size_t i = 0; i < updates.size(); ++i) {
    const double w = weights[i] / total;
    W += w * updates[i].W;
    theta += w * updates[i].critic.parameters();
  }
  project_nonneg_in_place(W);
  audit_nonneg(W);
  ClientUpdate out{std::move(W), first.critic};
  out.critic.set_parameters(theta);
  return out;
}

void aggregate_fedopt(ServerState& server, std::span<const ClientUpdate> updates,
                      std::span<const double> weights, Aggregator variant,
                      const FedRunConfig& config) {
  if (variant == Aggregator::kFedAvg) {
    throw Error(ErrorCode::kInvalidArgument, "aggregate_fedopt needs an adaptive variant");
  }
  const ClientUpdate mean = aggregate_fedavg(updates, weights);
  if (mean.W.rows() != server.model.W.rows() || mean.W.cols() != server.model.W.cols() ||
      mean.critic.num_params() != server.critic.num_params()) {
    throw Error(ErrorCode::kDimensionMismatch, "updates do not match the server model");
  }
  {
    Eigen::Map<VectorXd> w(server.model.W.data(), server.model.W.size());
    const VectorXd delta = mean.W.reshaped() - w;
    adaptive_update(w, server.w_moments, delta, variant, config);
  }
  {
    VectorXd theta = server.critic.parameters();
    const VectorXd delta = mean.critic.parameters() - theta;
    adaptive_update(theta, server.theta_moments, delta, variant, config);
    server.critic.set_parameters(theta);
  }
  project_nonneg_in_place(server.model.W);
  audit_nonneg(server.model.W);
}

std::uint64_t round_comm_bytes(std::size_t participants, std::size_t w_params,
                               std::size_t theta_params) {
  return 2ULL * participants * (static_cast<std::uint64_t>(w_params) + theta_params) * 4ULL;
}

double global_recon_loss(const MatrixXd& W, std::span<const ClientState> clients) {
  double sum = 0.0;
  std::size_t docs = 0;
  constexpr Index kChunk = 256;
  for (const auto& c : clients) {
    const Index n = static_cast<Index>(c.documents());
    for (Index start = 0; start < n; start += kChunk) {
      const Index len = std::min(kChunk, n - start);
      MatrixXd r = -(W * c.factors.H.middleCols(start, len));
      for (Index b = 0; b < len; ++b)
        for (const auto& e : c.data.columns[static_cast<std::size_t>(start + b)])
          r(e.term, b) += e.count;
      sum += r.squaredNorm();
    }
    docs += c.documents();
  }
  return docs ? sum / static_cast<double>(docs) : 0.0;
}

RoundMetrics run_round(ServerState& server, std::vector<ClientState>& clients,
                       const FedRunConfig& config, Rng& selection_rng,
                       std::uint64_t previous_bytes, std::size_t threads) {
  if (clients.empty()) throw Error(ErrorCode::kInvalidArgument, "run_round needs clients");
  const std::size_t round = server.round + 1;
  RoundMetrics metrics;
  metrics.round = round;
  metrics.participants = select_clients(clients.size(), config.participation, selection_rng);

  const std::size_t m = metrics.participants.size();
  std::vector<ClientUpdateResult> results(m);
  std::vector<std::exception_ptr> failures(m);
  auto work = [&](std::size_t slot) {
    try {
      ClientState& client = clients[metrics.participants[slot]];
      Rng rng(stream_seed(config.master_seed, Stream::kClient, client.client_id, round));
      results[slot] = client_update(client, server.model.W, server.critic, config.sgd, rng);
    } catch (...) {
      failures[slot] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), m);
  if (workers <= 1) {
    for (std::size_t s = 0; s < m; ++s) work(s);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t s = next++; s < m; s = next++) work(s);
      });
    }
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);

  std::vector<ClientUpdate> updates;
  std::vector<double> weights;
  updates.reserve(m);
  double mi_sum = 0.0;
  for (std::size_t s = 0; s < m; ++s) {
    updates.push_back(std::move(results[s].update));
    weights.push_back(static_cast<double>(clients[metrics.participants[s]].documents()));
    mi_sum += results[s].mean_mi_estimate;
  }
  if (config.aggregator == Aggregator::kFedAvg) {
    ClientUpdate agg = aggregate_fedavg(updates, weights);
    server.model.W = std::move(agg.W);
    server.critic = std::move(agg.critic);
  } else {
    aggregate_fedopt(server, updates, weights, config.aggregator, config);
  }
  server.round = round;

  metrics.mean_recon_loss = global_recon_loss(server.model.W, clients);
  metrics.mean_mi_estimate = mi_sum / static_cast<double>(m);
  const bool critic_in_loss = config.sgd.lambda > 0.0;
  if (!server.model.W.allFinite() || !std::isfinite(metrics.mean_recon_loss) ||
      (critic_in_loss && !server.critic.parameters().allFinite())) {
    throw Error(ErrorCode::kDiverged,
                "training diverged in round " + std::to_string(round) + " (non-finite values)");
  }
  metrics.cumulative_comm_bytes =
      previous_bytes + round_comm_bytes(m, static_cast<std::size_t>(server.model.W.size()),
                                        server.critic.num_params());
  return metrics;
}

double training_init_scale(const CountMatrix& matrix, std::span<const ClientShard> shards,
                           const FedRunConfig& config) {
  if (config.init_scale > 0.0) return config.init_scale;
  double total = 0.0;
  std::size_t docs = 0;
  for (const auto& s : shards) {
    for (std::size_t j : s.columns)
      for (const auto& e : matrix.columns.at(j)) total += e.count;
    docs += s.columns.size();
  }
  const double cells = static_cast<double>(matrix.rows) * static_cast<double>(docs);
  if (cells == 0.0 || total == 0.0) return 1.0;
  return std::sqrt(total / cells / static_cast<double>(config.topics));
}

ServerState init_server(const FedRunConfig& config, std::size_t vocab_size, double scale) {
  Rng rng(stream_seed(config.master_seed, Stream::kServerInit, 0, 0));
  ServerState server;
  server.model.W = random_nonneg(vocab_size, config.topics, scale, rng);
  server.critic = init_critic(vocab_size, config.topics, rng);
  return server;
}

std::vector<ClientState> init_clients(const CountMatrix& matrix,
                                      std::span<const ClientShard> shards,
                                      const FedRunConfig& config, double scale) {
  std::vector<ClientState> clients;
  clients.reserve(shards.size());
  for (const auto& shard : shards) {
    ClientState c;
    c.client_id = shard.client_id;
    c.shard = shard;
    c.data = matrix.select(shard.columns);
    Rng rng(stream_seed(config.master_seed, Stream::kClientInit, shard.client_id, 0));
    c.factors.H = random_nonneg(config.topics, shard.columns.size(), scale, rng);
    clients.push_back(std::move(c));
  }
  return clients;
}

TrainingResult run_training(const CountMatrix& matrix, std::span<const ClientShard> shards,
                            const FedRunConfig& config, std::size_t threads,
                            const RoundObserver& observer) {
  auto problems = config.validate();
  if (shards.size() != config.clients) {
    problems.push_back("clients (K) is " + std::to_string(config.clients) + " but " +
                       std::to_string(shards.size()) + " shards were given");
  }
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (shards[i].client_id != i) problems.push_back("shard ids must be 0..K-1 in order");
  }
  if (!problems.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(ErrorCode::kConfig, msg);
  }

  const double scale = training_init_scale(matrix, shards, config);
  TrainingResult result;
  result.server = init_server(config, matrix.rows, scale);
  result.clients = init_clients(matrix, shards, config, scale);

  RoundMetrics initial;
  initial.round = 0;
  initial.mean_recon_loss = global_recon_loss(result.server.model.W, result.clients);
  initial.mean_mi_estimate = std::numeric_limits<double>::quiet_NaN();
  result.metrics.push_back(initial);
  if (observer) observer(initial, result.server);

  for (std::size_t t = 1; t <= config.rounds; ++t) {
    Rng selection(stream_seed(config.master_seed, Stream::kSelection, 0, t));
    RoundMetrics m = run_round(result.server, result.clients, config, selection,
                               result.metrics.back().cumulative_comm_bytes, threads);
    result.metrics.push_back(m);
    if (observer) observer(result.metrics.back(), result.server);
  }
  return result;
}

std::string metrics_to_json_line(const RoundMetrics& m) {
  nlohmann::ordered_json j;
  j["round"] = m.round;
  j["participants"] = m.participants;
  j["mean_recon_loss"] = m.mean_recon_loss;
  if (std::isfinite(m.mean_mi_estimate)) {
    j["mean_mi_estimate"] = m.mean_mi_estimate;
  } else {
    j["mean_mi_estimate"] = nullptr;
  }
  j["cumulative_comm_bytes"] = m.cumulative_comm_bytes;
  return j.dump();
}

}  // namespace fednmf
