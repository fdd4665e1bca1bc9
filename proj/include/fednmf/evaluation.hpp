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
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fednmf/corpus.hpp"

namespace fednmf {

struct EmbeddingTable {
  std::size_t dim = 0;
  std::unordered_map<std::string, Eigen::VectorXd> vectors;
  /// Lines dropped by load_embeddings because of a wrong field count or an
  /// unparsable number.
  std::size_t skipped_lines = 0;

  const Eigen::VectorXd* find(const std::string& word) const;
};

struct TopicReport {
  std::vector<std::vector<std::string>> top_words;
  /// Empty for topics with fewer than two embedded top words.
  std::vector<std::optional<double>> coherence;
  double mean_coherence = 0.0;
  std::size_t scored_topics = 0;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

/// Indices of the n largest entries of W(:, topic), ties to the lower index.
std::vector<std::size_t> top_indices(const Eigen::MatrixXd& W, std::size_t topic, std::size_t n);
std::vector<std::string> top_words(const Eigen::MatrixXd& W, std::size_t topic, std::size_t n,
                                   const Vocabulary& vocab);

/// Cosine similarity; 0 when either vector is zero.
double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Mean pairwise cosine over the words that have an embedding. Throws
/// kTooFewEmbeddedWords when fewer than two do.
double we_coherence(std::span<const std::string> words, const EmbeddingTable& embeddings);

/// Per-topic coherence of the top `n` words; the mean covers scorable topics
/// only. Throws kNoScorableTopics when none is scorable.
TopicReport model_coherence(const Eigen::MatrixXd& W, const Vocabulary& vocab,
                            const EmbeddingTable& embeddings, std::size_t n = 10);

/// `word v1 ... vd` per line. The first well-formed line fixes d; words are
/// lowercased and a repeated word keeps its last vector.
EmbeddingTable load_embeddings(const std::filesystem::path& path);

/// Unweighted mean of per-class F1 over every class that occurs in either
/// list; a class with undefined precision or recall scores 0.
double macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

ClassificationReport score_predictions(std::span<const std::size_t> predictions,
                                       std::span<const std::size_t> labels,
                                       std::size_t num_classes);

struct ClassifierOptions {
  double split_ratio = 0.8;
  std::uint64_t seed = 0;
  std::size_t epochs = 500;
  double learning_rate = 0.5;
};

/// Softmax regression weights; rows are classes.
struct LinearClassifier {
  Eigen::MatrixXd weights;  // classes × d
  Eigen::VectorXd bias;

  std::size_t predict(const Eigen::VectorXd& normalized_features) const;
};

/// L2-normalizes each column; zero columns stay zero.
Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& features);

/// Full-batch gradient descent on the mean cross-entropy.
LinearClassifier fit_softmax(const Eigen::MatrixXd& normalized_features,
                             std::span<const std::size_t> labels, std::size_t num_classes,
                             std::size_t epochs, double learning_rate);

/// Columns of `features` are documents. Splits them (seeded), trains softmax
/// regression on the first part and scores the rest. Throws kSingleClass when
/// the labels hold fewer than two classes.
ClassificationReport train_classifier(const Eigen::MatrixXd& features,
                                      std::span<const std::size_t> labels,
                                      const ClassifierOptions& options = {});

}  // namespace fednmf
