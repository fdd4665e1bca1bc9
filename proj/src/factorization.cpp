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

#include "fednmf/factorization.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <string>

#include "fednmf/error.hpp"
#include "text_util.hpp"

namespace fednmf {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_dims(const MatrixXd& W, const MatrixXd& H, const CountMatrix& A,
                std::span<const std::size_t> batch) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  if (static_cast<std::size_t>(W.rows()) != A.rows || W.cols() != H.rows() ||
      static_cast<std::size_t>(H.cols()) != A.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "W is " + std::to_string(W.rows()) + "x" + std::to_string(W.cols()) + ", H is " +
                    std::to_string(H.rows()) + "x" + std::to_string(H.cols()) + ", A is " +
                    std::to_string(A.rows) + "x" + std::to_string(A.cols()));
  }
  for (std::size_t j : batch) {
    if (j >= A.cols()) {
      throw Error(ErrorCode::kDimensionMismatch, "batch column " + std::to_string(j) +
                                                     " out of range");
    }
  }
}

// Columns A(:,j) - W H(:,j) for the batch, V×B.
MatrixXd residuals(const MatrixXd& W, const MatrixXd& H, const CountMatrix& A,
                   std::span<const std::size_t> batch) {
  const Index B = static_cast<Index>(batch.size());
  MatrixXd hb(H.rows(), B);
  for (Index b = 0; b < B; ++b) hb.col(b) = H.col(static_cast<Index>(batch[b]));
  MatrixXd r = -(W * hb);
  for (Index b = 0; b < B; ++b)
    for (const auto& e : A.columns[batch[b]]) r(e.term, b) += e.count;
  return r;
}

}  // namespace

double default_init_scale(const CountMatrix& A, std::size_t topics) {
  const double cells = static_cast<double>(A.rows) * static_cast<double>(A.cols());
  if (cells == 0.0 || topics == 0) return 1.0;
  const double mean = A.total() / cells;
  return mean > 0.0 ? std::sqrt(mean / static_cast<double>(topics)) : 1.0;
}

MatrixXd random_nonneg(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  if (!(scale > 0.0)) throw Error(ErrorCode::kInvalidArgument, "init scale must be positive");
  MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = uniform01(rng) * scale;
  return m;
}

std::pair<TopicModel, ClientFactors> init_factors(std::size_t vocab_size, std::size_t topics,
                                                  std::size_t documents, double scale, Rng& rng) {
  if (vocab_size < 1 || topics < 1 || documents < 1) {
    throw Error(ErrorCode::kInvalidArgument, "factor dimensions must be positive");
  }
  TopicModel model{random_nonneg(vocab_size, topics, scale, rng)};
  ClientFactors factors{random_nonneg(topics, documents, scale, rng)};
  return {std::move(model), std::move(factors)};
}

double reconstruction_loss(const MatrixXd& W, const MatrixXd& H, const CountMatrix& A,
                           std::span<const std::size_t> batch) {
  check_dims(W, H, A, batch);
  return residuals(W, H, A, batch).squaredNorm() / static_cast<double>(batch.size());
}

double total_loss(const MatrixXd& W, const MatrixXd& H, const CountMatrix& A,
                  std::span<const std::size_t> batch, double lambda, const MiCritic& critic) {
  double loss = reconstruction_loss(W, H, A, batch);
  if (lambda > 0.0) loss -= lambda * smile_estimate(critic, A, H, batch);
  return loss;
}

FactorGradients loss_gradients(const MatrixXd& W, const MatrixXd& H, const CountMatrix& A,
                               std::span<const std::size_t> batch, double lambda,
                               const MiCritic& critic) {
  check_dims(W, H, A, batch);
  if (lambda < 0.0) throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  if (lambda > 0.0 && batch.size() < 2) {
    throw Error(ErrorCode::kBatchTooSmall, "MI regularizer needs a batch of at least 2");
  }
  const Index B = static_cast<Index>(batch.size());
  const double scale = -2.0 / static_cast<double>(B);
  const MatrixXd r = residuals(W, H, A, batch);

  MatrixXd hb(H.rows(), B);
  for (Index b = 0; b < B; ++b) hb.col(b) = H.col(static_cast<Index>(batch[b]));

  FactorGradients g;
  g.W.noalias() = scale * (r * hb.transpose());
  g.H_batch.noalias() = scale * (W.transpose() * r);
  if (lambda > 0.0) g.H_batch -= lambda * smile_h_gradients(critic, A, H, batch);
  return g;
}

void sgd_step(MatrixXd& W, MatrixXd& H, const CountMatrix& A, std::span<const std::size_t> batch,
              const SgdConfig& config, const MiCritic& critic) {
  if (config.eta == 0.0) {
    check_dims(W, H, A, batch);
    return;
  }
  const FactorGradients g = loss_gradients(W, H, A, batch, config.lambda, critic);
  W -= config.eta * g.W;
  project_nonneg_in_place(W);
  for (Index b = 0; b < static_cast<Index>(batch.size()); ++b) {
    auto col = H.col(static_cast<Index>(batch[b]));
    col -= config.eta * g.H_batch.col(b);
    col = col.cwiseMax(0.0);
  }
  audit_nonneg(W);
  audit_nonneg(H);
}

namespace {
std::atomic<bool> g_audit_enabled{false};
std::atomic<std::uint64_t> g_audit_checks{0};
std::atomic<std::uint64_t> g_audit_violations{0};
}  // namespace

void set_nonneg_audit(bool enabled) { g_audit_enabled = enabled; }

void reset_nonneg_audit() {
  g_audit_checks = 0;
  g_audit_violations = 0;
}

NonnegAudit nonneg_audit() { return {g_audit_checks.load(), g_audit_violations.load()}; }

void audit_nonneg(const Eigen::Ref<const MatrixXd>& m) {
  if (!g_audit_enabled.load(std::memory_order_relaxed)) return;
  ++g_audit_checks;
  if (m.size() > 0 && !(m.minCoeff() >= 0.0)) ++g_audit_violations;
}

void project_nonneg_in_place(Eigen::Ref<MatrixXd> m) { m = m.cwiseMax(0.0); }

MatrixXd project_nonneg(const MatrixXd& m) { return m.cwiseMax(0.0); }

double fold_in_rate(const MatrixXd& W) {
  const double norm = (W.transpose() * W).norm();
  return norm > 0.0 ? 1.0 / (2.0 * norm) : 1.0;
}

VectorXd infer_topics(const MatrixXd& W, const SparseColumn& a, std::size_t iters, double eta) {
  if (iters < 1) throw Error(ErrorCode::kInvalidArgument, "infer_topics needs iters >= 1");
  const Index k = W.cols();
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "W has no topics");
  for (const auto& e : a) {
    if (e.term >= W.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "count column references a term outside W");
    }
  }
  if (!(eta > 0.0)) eta = fold_in_rate(W);
  // grad = 2 (WᵀW h - Wᵀa); both products are fixed across iterations.
  const MatrixXd gram = W.transpose() * W;
  VectorXd wta = VectorXd::Zero(k);
  for (const auto& e : a) wta += e.count * W.row(e.term).transpose();
  VectorXd h = VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  for (std::size_t it = 0; it < iters; ++it) {
    h -= eta * 2.0 * (gram * h - wta);
    h = h.cwiseMax(0.0);
  }
  return h;
}

void save_topic_model(const std::filesystem::path& path, const TopicModel& model) {
  auto out = detail::open_output(path);
  out << model.W.rows() << ' ' << model.W.cols() << '\n';
  for (Index r = 0; r < model.W.rows(); ++r) {
    for (Index c = 0; c < model.W.cols(); ++c)
      out << (c == 0 ? "" : " ") << detail::format_double(model.W(r, c));
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

TopicModel load_topic_model(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string v_tok, k_tok, tok;
  if (!(in >> v_tok >> k_tok)) throw Error(ErrorCode::kParse, path.string() + ": missing header");
  const auto V = detail::parse_int<Index>(v_tok, "V");
  const auto k = detail::parse_int<Index>(k_tok, "k");
  TopicModel model{MatrixXd(V, k)};
  for (Index r = 0; r < V; ++r)
    for (Index c = 0; c < k; ++c) {
      if (!(in >> tok)) throw Error(ErrorCode::kParse, path.string() + ": truncated");
      model.W(r, c) = detail::parse_double(tok, "W entry");
      if (model.W(r, c) < 0.0) {
        throw Error(ErrorCode::kInvalidArgument, path.string() + ": negative W entry");
      }
    }
  return model;
}

}  // namespace fednmf
