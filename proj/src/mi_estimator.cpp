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

#include "fednmf/mi_estimator.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "fednmf/error.hpp"
#include "text_util.hpp"

namespace fednmf {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

DenseLayer zero_layer(std::size_t in, std::size_t out) {
  return {MatrixXd::Zero(static_cast<Index>(in), static_cast<Index>(out)),
          VectorXd::Zero(static_cast<Index>(out))};
}

DenseLayer glorot_layer(std::size_t in, std::size_t out, Rng& rng) {
  DenseLayer layer = zero_layer(in, out);
  const double s = std::sqrt(6.0 / static_cast<double>(in + out));
  // Row-major fill so the draw order matches the checkpoint layout.
  for (Index r = 0; r < layer.weight.rows(); ++r)
    for (Index c = 0; c < layer.weight.cols(); ++c)
      layer.weight(r, c) = (2.0 * uniform01(rng) - 1.0) * s;
  return layer;
}

void check_batch(const MiCritic& critic, const CountMatrix& A, const MatrixXd& H,
                 std::span<const std::size_t> batch) {
  if (batch.size() < 2) {
    throw Error(ErrorCode::kBatchTooSmall,
                "SMILE needs a batch of at least 2 columns, got " + std::to_string(batch.size()));
  }
  if (A.rows != critic.vocab_size || static_cast<std::size_t>(H.rows()) != critic.topics ||
      A.cols() != static_cast<std::size_t>(H.cols())) {
    throw Error(ErrorCode::kDimensionMismatch,
                "critic expects V=" + std::to_string(critic.vocab_size) +
                    ", k=" + std::to_string(critic.topics) + "; got A " +
                    std::to_string(A.rows) + "x" + std::to_string(A.cols()) + ", H " +
                    std::to_string(H.rows()) + "x" + std::to_string(H.cols()));
  }
  for (std::size_t j : batch) {
    if (j >= A.cols()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "batch column " + std::to_string(j) + " out of range");
    }
  }
}

// Scores every ordered pair (p, q) of batch positions, pair index p*B + q:
// the count column comes from batch[p], the topic column from batch[q].
// Layer 1 is split into count and topic parts, each evaluated once per batch
// position.
struct PairPass {
  Index B = 0;
  MatrixXd h_batch;  // k×B
  MatrixXd z1;       // 32×P
  MatrixXd z2;       // 256×P
  Eigen::RowVectorXd scores;
  double joint = 0.0;
  double marginal = 0.0;  // sum of clipped exponentials over p != q
  double estimate = 0.0;

  PairPass(const MiCritic& critic, const CountMatrix& A, const MatrixXd& H,
           std::span<const std::size_t> batch) {
    B = static_cast<Index>(batch.size());
    const Index k = static_cast<Index>(critic.topics);
    const Index V = static_cast<Index>(critic.vocab_size);
    const auto& W1 = critic.layer1.weight;

    MatrixXd pa = MatrixXd::Zero(W1.cols(), B);
    for (Index p = 0; p < B; ++p)
      for (const auto& e : A.columns[batch[static_cast<std::size_t>(p)]])
        pa.col(p).noalias() += e.count * W1.row(e.term).transpose();

    h_batch.resize(k, B);
    for (Index q = 0; q < B; ++q) h_batch.col(q) = H.col(static_cast<Index>(batch[q]));
    MatrixXd ph = W1.bottomRows(W1.rows() - V).transpose() * h_batch;
    ph.colwise() += critic.layer1.bias;

    const Index P = B * B;
    z1.resize(W1.cols(), P);
    for (Index p = 0; p < B; ++p)
      for (Index q = 0; q < B; ++q) z1.col(p * B + q) = pa.col(p) + ph.col(q);

    z2.noalias() = critic.layer2.weight.transpose() * z1.cwiseMax(0.0);
    z2.colwise() += critic.layer2.bias;
    scores.noalias() = critic.layer3.weight.col(0).transpose() * z2.cwiseMax(0.0);
    scores.array() += critic.layer3.bias[0];

    const double lo = std::exp(-critic.tau);
    const double hi = std::exp(critic.tau);
    joint = 0.0;
    marginal = 0.0;
    for (Index p = 0; p < B; ++p) {
      for (Index q = 0; q < B; ++q) {
        const double s = scores[p * B + q];
        if (p == q) {
          joint += s;
        } else {
          marginal += clip(std::exp(s), lo, hi);
        }
      }
    }
    joint /= static_cast<double>(B);
    estimate = joint - std::log(marginal / static_cast<double>(B * (B - 1)));
  }

  // d(estimate)/d(score) per pair.
  Eigen::RowVectorXd score_gradient(double tau) const {
    const double lo = std::exp(-tau);
    const double hi = std::exp(tau);
    Eigen::RowVectorXd ds(B * B);
    for (Index p = 0; p < B; ++p) {
      for (Index q = 0; q < B; ++q) {
        const Index i = p * B + q;
        if (p == q) {
          ds[i] = 1.0 / static_cast<double>(B);
        } else {
          const double e = std::exp(scores[i]);
          ds[i] = (e > lo && e < hi) ? -e / marginal : 0.0;
        }
      }
    }
    return ds;
  }
};

// Backprop from score gradients to the layer-1 pre-activations.
MatrixXd backprop_to_z1(const MiCritic& critic, const PairPass& pass,
                        const Eigen::RowVectorXd& ds, MatrixXd* dz2_out) {
  MatrixXd dz2 = critic.layer3.weight.col(0) * ds;
  dz2.array() *= (pass.z2.array() > 0.0).cast<double>();
  MatrixXd dz1 = critic.layer2.weight * dz2;
  dz1.array() *= (pass.z1.array() > 0.0).cast<double>();
  if (dz2_out) *dz2_out = std::move(dz2);
  return dz1;
}

// Sums dz1 over pairs sharing a topic column: gH(:, q) = sum_p dz1(:, p*B + q).
MatrixXd topic_side_sum(const MatrixXd& dz1, Index B) {
  MatrixXd g = MatrixXd::Zero(dz1.rows(), B);
  for (Index p = 0; p < B; ++p) g += dz1.middleCols(p * B, B);
  return g;
}

}  // namespace

VectorXd MiCritic::parameters() const {
  VectorXd flat(static_cast<Index>(num_params()));
  Index at = 0;
  for (const DenseLayer* l : {&layer1, &layer2, &layer3}) {
    flat.segment(at, l->weight.size()) = l->weight.reshaped();
    at += l->weight.size();
    flat.segment(at, l->bias.size()) = l->bias;
    at += l->bias.size();
  }
  return flat;
}

void MiCritic::set_parameters(const VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != num_params()) {
    throw Error(ErrorCode::kDimensionMismatch, "critic parameter vector has wrong length");
  }
  Index at = 0;
  for (DenseLayer* l : {&layer1, &layer2, &layer3}) {
    l->weight.reshaped() = flat.segment(at, l->weight.size());
    at += l->weight.size();
    l->bias = flat.segment(at, l->bias.size());
    at += l->bias.size();
  }
}

VectorXd CriticGradients::flatten() const {
  MiCritic shell;
  shell.layer1 = layer1;
  shell.layer2 = layer2;
  shell.layer3 = layer3;
  return shell.parameters();
}

MiCritic init_critic(std::size_t vocab_size, std::size_t topics, Rng& rng) {
  if (vocab_size < 1 || topics < 1) {
    throw Error(ErrorCode::kInvalidArgument, "critic needs V >= 1 and k >= 1");
  }
  MiCritic c;
  c.vocab_size = vocab_size;
  c.topics = topics;
  c.layer1 = glorot_layer(vocab_size + topics, kCriticHidden1, rng);
  c.layer2 = glorot_layer(kCriticHidden1, kCriticHidden2, rng);
  c.layer3 = glorot_layer(kCriticHidden2, 1, rng);
  c.tau = kDefaultTau;
  return c;
}

MiCritic zero_critic(std::size_t vocab_size, std::size_t topics) {
  MiCritic c;
  c.vocab_size = vocab_size;
  c.topics = topics;
  c.layer1 = zero_layer(vocab_size + topics, kCriticHidden1);
  c.layer2 = zero_layer(kCriticHidden1, kCriticHidden2);
  c.layer3 = zero_layer(kCriticHidden2, 1);
  return c;
}

double critic_forward(const MiCritic& critic, const VectorXd& a, const VectorXd& h) {
  if (static_cast<std::size_t>(a.size()) != critic.vocab_size ||
      static_cast<std::size_t>(h.size()) != critic.topics) {
    throw Error(ErrorCode::kDimensionMismatch, "critic input has the wrong dimension");
  }
  VectorXd x(a.size() + h.size());
  x << a, h;
  VectorXd r1 = (critic.layer1.weight.transpose() * x + critic.layer1.bias).cwiseMax(0.0);
  VectorXd r2 = (critic.layer2.weight.transpose() * r1 + critic.layer2.bias).cwiseMax(0.0);
  return critic.layer3.weight.col(0).dot(r2) + critic.layer3.bias[0];
}

double clip(double v, double lo, double hi) {
  if (lo > hi) {
    throw Error(ErrorCode::kInvalidBounds, "clip bounds out of order: " +
                                               detail::format_double(lo) + " > " +
                                               detail::format_double(hi));
  }
  return std::min(std::max(v, lo), hi);
}

double smile_estimate(const MiCritic& critic, const CountMatrix& A, const MatrixXd& H,
                      std::span<const std::size_t> batch) {
  check_batch(critic, A, H, batch);
  return PairPass(critic, A, H, batch).estimate;
}

SmileGradients smile_gradients(const MiCritic& critic, const CountMatrix& A, const MatrixXd& H,
                               std::span<const std::size_t> batch) {
  check_batch(critic, A, H, batch);
  PairPass pass(critic, A, H, batch);
  const Index B = pass.B;
  const Index V = static_cast<Index>(critic.vocab_size);
  const Eigen::RowVectorXd ds = pass.score_gradient(critic.tau);

  SmileGradients out;
  out.estimate = pass.estimate;
  auto& g = out.theta;

  g.layer3.weight = pass.z2.cwiseMax(0.0) * ds.transpose();
  g.layer3.bias = VectorXd::Constant(1, ds.sum());

  MatrixXd dz2;
  MatrixXd dz1 = backprop_to_z1(critic, pass, ds, &dz2);
  g.layer2.weight.noalias() = pass.z1.cwiseMax(0.0) * dz2.transpose();
  g.layer2.bias = dz2.rowwise().sum();

  g.layer1.weight = MatrixXd::Zero(critic.layer1.weight.rows(), critic.layer1.weight.cols());
  g.layer1.bias = dz1.rowwise().sum();
  for (Index p = 0; p < B; ++p) {
    const VectorXd ga = dz1.middleCols(p * B, B).rowwise().sum();
    for (const auto& e : A.columns[batch[static_cast<std::size_t>(p)]])
      g.layer1.weight.row(e.term) += e.count * ga.transpose();
  }
  const MatrixXd gh = topic_side_sum(dz1, B);
  g.layer1.weight.bottomRows(g.layer1.weight.rows() - V).noalias() =
      pass.h_batch * gh.transpose();
  out.h_batch = critic.layer1.weight.bottomRows(critic.layer1.weight.rows() - V) * gh;
  return out;
}

MatrixXd smile_h_gradients(const MiCritic& critic, const CountMatrix& A, const MatrixXd& H,
                           std::span<const std::size_t> batch) {
  check_batch(critic, A, H, batch);
  PairPass pass(critic, A, H, batch);
  const Index V = static_cast<Index>(critic.vocab_size);
  const MatrixXd dz1 = backprop_to_z1(critic, pass, pass.score_gradient(critic.tau), nullptr);
  return critic.layer1.weight.bottomRows(critic.layer1.weight.rows() - V) *
         topic_side_sum(dz1, pass.B);
}

double critic_ascent_step(MiCritic& critic, const CountMatrix& A, const MatrixXd& H,
                          std::span<const std::size_t> batch, double eta) {
  SmileGradients g = smile_gradients(critic, A, H, batch);
  if (eta != 0.0) {
    critic.layer1.weight += eta * g.theta.layer1.weight;
    critic.layer1.bias += eta * g.theta.layer1.bias;
    critic.layer2.weight += eta * g.theta.layer2.weight;
    critic.layer2.bias += eta * g.theta.layer2.bias;
    critic.layer3.weight += eta * g.theta.layer3.weight;
    critic.layer3.bias += eta * g.theta.layer3.bias;
  }
  return g.estimate;
}

void save_critic(const std::filesystem::path& path, const MiCritic& critic) {
  auto out = detail::open_output(path);
  for (const DenseLayer* l : {&critic.layer1, &critic.layer2, &critic.layer3}) {
    out << l->weight.rows() << ' ' << l->weight.cols() << '\n';
    for (Index r = 0; r < l->weight.rows(); ++r) {
      for (Index c = 0; c < l->weight.cols(); ++c)
        out << (c == 0 ? "" : " ") << detail::format_double(l->weight(r, c));
      out << '\n';
    }
    for (Index c = 0; c < l->bias.size(); ++c)
      out << (c == 0 ? "" : " ") << detail::format_double(l->bias[c]);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

MiCritic load_critic(const std::filesystem::path& path, std::size_t vocab_size) {
  auto in = detail::open_input(path);
  auto read_layer = [&](std::size_t expect_rows, std::size_t expect_cols) {
    std::string r_tok, c_tok;
    if (!(in >> r_tok >> c_tok)) throw Error(ErrorCode::kParse, path.string() + ": truncated");
    const auto rows = detail::parse_int<std::size_t>(r_tok, "rows");
    const auto cols = detail::parse_int<std::size_t>(c_tok, "cols");
    if ((expect_rows && rows != expect_rows) || cols != expect_cols) {
      throw Error(ErrorCode::kDimensionMismatch, path.string() + ": unexpected layer shape " +
                                                     r_tok + "x" + c_tok);
    }
    DenseLayer l = zero_layer(rows, cols);
    std::string tok;
    for (Index r = 0; r < l.weight.rows(); ++r)
      for (Index c = 0; c < l.weight.cols(); ++c) {
        if (!(in >> tok)) throw Error(ErrorCode::kParse, path.string() + ": truncated");
        l.weight(r, c) = detail::parse_double(tok, "weight");
      }
    for (Index c = 0; c < l.bias.size(); ++c) {
      if (!(in >> tok)) throw Error(ErrorCode::kParse, path.string() + ": truncated");
      l.bias[c] = detail::parse_double(tok, "bias");
    }
    return l;
  };
  MiCritic c;
  c.layer1 = read_layer(0, kCriticHidden1);
  if (c.layer1.inputs() <= vocab_size) {
    throw Error(ErrorCode::kDimensionMismatch,
                path.string() + ": layer 1 input width does not exceed V");
  }
  c.vocab_size = vocab_size;
  c.topics = c.layer1.inputs() - vocab_size;
  c.layer2 = read_layer(kCriticHidden1, kCriticHidden2);
  c.layer3 = read_layer(kCriticHidden2, 1);
  c.tau = kDefaultTau;
  return c;
}

}  // namespace fednmf
