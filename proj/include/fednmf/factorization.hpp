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
#include <filesystem>
#include <span>
#include <utility>

#include <Eigen/Dense>

#include "fednmf/corpus.hpp"
#include "fednmf/mi_estimator.hpp"
#include "fednmf/rng.hpp"

namespace fednmf {

/// Shared token-by-topic factor W (V×k).
struct TopicModel {
  Eigen::MatrixXd W;

  std::size_t vocab_size() const { return static_cast<std::size_t>(W.rows()); }
  std::size_t topics() const { return static_cast<std::size_t>(W.cols()); }
};

/// Client-private topic-by-document factor H_i (k×N_i).
struct ClientFactors {
  Eigen::MatrixXd H;

  std::size_t topics() const { return static_cast<std::size_t>(H.rows()); }
  std::size_t documents() const { return static_cast<std::size_t>(H.cols()); }
};

struct SgdConfig {
  double eta = 0.05;
  /// Weight of the MI regularizer; 0 turns it off.
  double lambda = 0.1;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
};

/// sqrt(mean(A) / k) over all V×N entries; the default init scale.
double default_init_scale(const CountMatrix& A, std::size_t topics);

/// W and H with entries i.i.d. uniform on [0, scale). W is drawn first.
std::pair<TopicModel, ClientFactors> init_factors(std::size_t vocab_size, std::size_t topics,
                                                  std::size_t documents, double scale, Rng& rng);

/// Uniform [0, scale) k×N matrix.
Eigen::MatrixXd random_nonneg(std::size_t rows, std::size_t cols, double scale, Rng& rng);

/// (1/B) sum_{j in batch} ||A(:,j) - W H(:,j)||².
double reconstruction_loss(const Eigen::MatrixXd& W, const Eigen::MatrixXd& H,
                           const CountMatrix& A, std::span<const std::size_t> batch);

/// -lambda * SMILE + reconstruction_loss, the objective the factors minimize.
/// The critic is only consulted when lambda > 0.
double total_loss(const Eigen::MatrixXd& W, const Eigen::MatrixXd& H, const CountMatrix& A,
                  std::span<const std::size_t> batch, double lambda, const MiCritic& critic);

struct FactorGradients {
  Eigen::MatrixXd W;        // V×k
  Eigen::MatrixXd H_batch;  // k×B, column b belongs to batch[b]
};

/// Gradients of total_loss. The MI term reaches H only: W is not an input of
/// the critic. Throws kBatchTooSmall when lambda > 0 and B < 2.
FactorGradients loss_gradients(const Eigen::MatrixXd& W, const Eigen::MatrixXd& H,
                               const CountMatrix& A, std::span<const std::size_t> batch,
                               double lambda, const MiCritic& critic);

/// One projected gradient step on W and the batch columns of H, both
/// gradients taken at the incoming point.
void sgd_step(Eigen::MatrixXd& W, Eigen::MatrixXd& H, const CountMatrix& A,
              std::span<const std::size_t> batch, const SgdConfig& config,
              const MiCritic& critic);

/// Entrywise max(x, 0).
[[nodiscard]] Eigen::MatrixXd project_nonneg(const Eigen::MatrixXd& m);
void project_nonneg_in_place(Eigen::Ref<Eigen::MatrixXd> m);

/// Largest step that keeps projected gradient descent on ||a - Wh||² stable:
/// 1 / (2 ||WᵀW||_F).
double fold_in_rate(const Eigen::MatrixXd& W);

/// Topic weights for an unseen column with W fixed: projected gradient descent
/// on ||a - Wh||² from h = 1/k. A non-positive eta selects fold_in_rate(W).
Eigen::VectorXd infer_topics(const Eigen::MatrixXd& W, const SparseColumn& a, std::size_t iters,
                             double eta = 0.0);

/// Opt-in runtime audit. While enabled, every factor update and every
/// aggregation checks that the touched factors are entrywise non-negative.
struct NonnegAudit {
  std::uint64_t checks = 0;
  std::uint64_t violations = 0;
};
void set_nonneg_audit(bool enabled);
void reset_nonneg_audit();
NonnegAudit nonneg_audit();
/// Records one check of `m`; a no-op while the audit is disabled.
void audit_nonneg(const Eigen::Ref<const Eigen::MatrixXd>& m);

/// Header `V k`, then W row by row.
void save_topic_model(const std::filesystem::path& path, const TopicModel& model);
TopicModel load_topic_model(const std::filesystem::path& path);

}  // namespace fednmf
