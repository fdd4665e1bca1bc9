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

#include "fednmf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fednmf/error.hpp"
#include "fednmf/rng.hpp"
#include "text_util.hpp"

namespace fednmf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const VectorXd* EmbeddingTable::find(const std::string& word) const {
  auto it = vectors.find(word);
  return it == vectors.end() ? nullptr : &it->second;
}

std::vector<std::size_t> top_indices(const MatrixXd& W, std::size_t topic, std::size_t n) {
  const auto V = static_cast<std::size_t>(W.rows());
  if (topic >= static_cast<std::size_t>(W.cols())) {
    throw Error(ErrorCode::kInvalidArgument, "topic index out of range");
  }
  if (n < 1 || n > V) throw Error(ErrorCode::kInvalidArgument, "need 1 <= n <= V");
  std::vector<std::size_t> idx(V);
  std::iota(idx.begin(), idx.end(), 0);
  const auto col = W.col(static_cast<Index>(topic));
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double wa = col[static_cast<Index>(a)];
                      const double wb = col[static_cast<Index>(b)];
                      return wa > wb || (wa == wb && a < b);
                    });
  idx.resize(n);
  return idx;
}

std::vector<std::string> top_words(const MatrixXd& W, std::size_t topic, std::size_t n,
                                   const Vocabulary& vocab) {
  if (vocab.size() != static_cast<std::size_t>(W.rows())) {
    throw Error(ErrorCode::kDimensionMismatch, "vocabulary size does not match W");
  }
  std::vector<std::string> words;
  for (std::size_t i : top_indices(W, topic, n)) words.push_back(vocab.term(i));
  return words;
}

double cosine(const VectorXd& a, const VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double we_coherence(std::span<const std::string> words, const EmbeddingTable& embeddings) {
  std::vector<const VectorXd*> found;
  for (const auto& w : words)
    if (const auto* v = embeddings.find(w)) found.push_back(v);
  const std::size_t m = found.size();
  if (m < 2) {
    throw Error(ErrorCode::kTooFewEmbeddedWords,
                std::to_string(m) + " of " + std::to_string(words.size()) +
                    " words have embeddings; need 2");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) sum += cosine(*found[i], *found[j]);
  return 2.0 * sum / static_cast<double>(m * (m - 1));
}

TopicReport model_coherence(const MatrixXd& W, const Vocabulary& vocab,
                            const EmbeddingTable& embeddings, std::size_t n) {
  const auto k = static_cast<std::size_t>(W.cols());
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "W has no topics");
  TopicReport report;
  double sum = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    report.top_words.push_back(top_words(W, t, n, vocab));
    try {
      const double c = we_coherence(report.top_words.back(), embeddings);
      report.coherence.emplace_back(c);
      sum += c;
      ++report.scored_topics;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTooFewEmbeddedWords) throw;
      report.coherence.emplace_back(std::nullopt);
    }
  }
  if (report.scored_topics == 0) {
    throw Error(ErrorCode::kNoScorableTopics, "no topic has two embedded top words");
  }
  report.mean_coherence = sum / static_cast<double>(report.scored_topics);
  return report;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  EmbeddingTable table;
  std::string line;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    fields.clear();
    std::string_view rest(line);
    while (!rest.empty()) {
      auto sp = rest.find(' ');
      if (sp != 0) fields.push_back(rest.substr(0, sp));
      if (sp == std::string_view::npos) break;
      rest.remove_prefix(sp + 1);
    }
    if (fields.size() < 2) {
      ++table.skipped_lines;
      continue;
    }
    if (table.dim == 0) {
      table.dim = fields.size() - 1;
    } else if (fields.size() - 1 != table.dim) {
      ++table.skipped_lines;
      continue;
    }
    VectorXd v(static_cast<Index>(table.dim));
    bool ok = true;
    for (std::size_t i = 0; i < table.dim && ok; ++i) {
      try {
        v[static_cast<Index>(i)] = detail::parse_double(fields[i + 1], "embedding value");
      } catch (const Error&) {
        ok = false;
      }
    }
    if (!ok) {
      ++table.skipped_lines;
      continue;
    }
    std::string word(fields[0]);
    for (auto& c : word)
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    table.vectors[std::move(word)] = std::move(v);
  }
  if (table.vectors.empty()) {
    throw Error(ErrorCode::kEmptyTable, path.string() + " holds no usable embeddings");
  }
  return table;
}

ClassificationReport score_predictions(std::span<const std::size_t> predictions,
                                       std::span<const std::size_t> labels,
                                       std::size_t num_classes) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "predictions and labels must be equal, nonempty");
  }
  std::vector<std::size_t> tp(num_classes, 0), predicted(num_classes, 0), actual(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] >= num_classes || labels[i] >= num_classes) {
      throw Error(ErrorCode::kInvalidArgument, "class id outside num_classes");
    }
    ++predicted[predictions[i]];
    ++actual[labels[i]];
    if (predictions[i] == labels[i]) {
      ++tp[labels[i]];
      ++correct;
    }
  }
  ClassificationReport report;
  report.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  std::size_t classes_seen = 0;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    ClassMetrics m;
    m.support = actual[c];
    if (predicted[c] > 0) m.precision = static_cast<double>(tp[c]) / static_cast<double>(predicted[c]);
    if (actual[c] > 0) m.recall = static_cast<double>(tp[c]) / static_cast<double>(actual[c]);
    if (predicted[c] > 0 && actual[c] > 0 && m.precision + m.recall > 0.0)
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    if (predicted[c] > 0 || actual[c] > 0) {
      ++classes_seen;
      f1_sum += m.f1;
    }
    report.per_class.push_back(m);
  }
  report.macro_f1 = f1_sum / static_cast<double>(classes_seen);
  return report;
}

double macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (labels.empty()) throw Error(ErrorCode::kInvalidArgument, "macro_f1 of nothing");
  std::size_t num_classes = 0;
  for (std::size_t x : predictions) num_classes = std::max(num_classes, x + 1);
  for (std::size_t x : labels) num_classes = std::max(num_classes, x + 1);
  return score_predictions(predictions, labels, num_classes).macro_f1;
}

std::size_t LinearClassifier::predict(const VectorXd& x) const {
  VectorXd z = weights * x + bias;
  Index best = 0;
  z.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

MatrixXd normalize_columns(const MatrixXd& features) {
  MatrixXd out = features;
  for (Index j = 0; j < out.cols(); ++j) {
    const double n = out.col(j).norm();
    if (n > 0.0) out.col(j) /= n;
  }
  return out;
}

LinearClassifier fit_softmax(const MatrixXd& x, std::span<const std::size_t> labels,
                             std::size_t num_classes, std::size_t epochs, double learning_rate) {
  const Index d = x.rows();
  const Index n = x.cols();
  const Index c = static_cast<Index>(num_classes);
  LinearClassifier model{MatrixXd::Zero(c, d), VectorXd::Zero(c)};
  MatrixXd onehot = MatrixXd::Zero(c, n);
  for (Index j = 0; j < n; ++j) onehot(static_cast<Index>(labels[static_cast<std::size_t>(j)]), j) = 1.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    MatrixXd z = model.weights * x;
    z.colwise() += model.bias;
    for (Index j = 0; j < n; ++j) {
      auto col = z.col(j);
      col.array() -= col.maxCoeff();
      col = col.array().exp();
      col /= col.sum();
    }
    const MatrixXd err = z - onehot;
    model.weights -= learning_rate * inv_n * (err * x.transpose());
    model.bias -= learning_rate * inv_n * err.rowwise().sum();
  }
  return model;
}

ClassificationReport train_classifier(const MatrixXd& features,
                                      std::span<const std::size_t> labels,
                                      const ClassifierOptions& options) {
  const auto n = static_cast<std::size_t>(features.cols());
  if (labels.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "one label per feature column required");
  }
  const std::set<std::size_t> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) {
    throw Error(ErrorCode::kSingleClass, "classification needs at least two classes");
  }
  if (!(options.split_ratio > 0.0 && options.split_ratio < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "split ratio must lie in (0, 1)");
  }
  const auto n_train =
      static_cast<std::size_t>(std::llround(options.split_ratio * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw Error(ErrorCode::kDegenerateSplit, "classifier split leaves one side empty");
  }
  const std::size_t num_classes = *distinct.rbegin() + 1;

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(options.seed);
  shuffle(std::span<std::size_t>(perm), rng);

  const MatrixXd x = normalize_columns(features);
  MatrixXd x_train(x.rows(), static_cast<Index>(n_train));
  std::vector<std::size_t> y_train(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    x_train.col(static_cast<Index>(i)) = x.col(static_cast<Index>(perm[i]));
    y_train[i] = labels[perm[i]];
  }
  const LinearClassifier model =
      fit_softmax(x_train, y_train, num_classes, options.epochs, options.learning_rate);

  std::vector<std::size_t> predictions, truth;
  for (std::size_t i = n_train; i < n; ++i) {
    predictions.push_back(model.predict(x.col(static_cast<Index>(perm[i]))));
    truth.push_back(labels[perm[i]]);
  }
  ClassificationReport report = score_predictions(predictions, truth, num_classes);
  report.train_size = n_train;
  report.test_size = n - n_train;
  return report;
}

}  // namespace fednmf
