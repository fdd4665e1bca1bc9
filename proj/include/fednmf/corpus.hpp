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
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace fednmf {

using StopwordSet = std::unordered_set<std::string>;

struct Document {
  std::string id;
  std::string text;
  std::size_t label = 0;
};

/// Documents plus the sorted label names their dense label ids refer to.
struct LabeledCorpus {
  std::vector<Document> documents;
  std::vector<std::string> label_names;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Throws kInvalidArgument on duplicate terms.
  explicit Vocabulary(std::vector<std::string> terms);

  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::string& term(std::size_t index) const { return terms_.at(index); }
  std::optional<std::size_t> find(std::string_view token) const;

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct CountEntry {
  std::uint32_t term = 0;
  double count = 0.0;

  bool operator==(const CountEntry&) const = default;
};

/// Sorted by term index, strictly positive counts.
using SparseColumn = std::vector<CountEntry>;

/// Token-by-document matrix: `rows` is the vocabulary size V, each column is
/// one document. Corpus-built matrices hold integer counts; synthetic ones
/// may hold arbitrary positive reals.
struct CountMatrix {
  std::size_t rows = 0;
  std::vector<SparseColumn> columns;
  std::vector<std::string> doc_ids;
  std::vector<std::size_t> labels;

  std::size_t cols() const { return columns.size(); }

  /// Throws kInvalidArgument describing the first violated invariant.
  void validate() const;

  /// New matrix holding the given columns in the given order.
  CountMatrix select(std::span<const std::size_t> column_indices) const;

  Eigen::VectorXd dense_column(std::size_t j) const;
  double total() const;
  std::size_t num_classes() const;

  bool operator==(const CountMatrix&) const = default;
};

/// Builds a CountMatrix from a dense non-negative matrix (zeros dropped).
CountMatrix from_dense(const Eigen::MatrixXd& dense);
Eigen::MatrixXd to_dense(const CountMatrix& matrix);

std::vector<std::string> tokenize(std::string_view text,
                                  const StopwordSet& stopwords);

Vocabulary build_vocabulary(std::span<const Document> docs,
                            const StopwordSet& stopwords,
                            std::size_t min_count = 1);

struct Vectorized {
  CountMatrix matrix;
  /// Columns with no in-vocabulary tokens. They stay in the matrix so column
  /// indices keep lining up with labels.
  std::vector<std::size_t> empty_columns;
};

Vectorized vectorize(std::span<const Document> docs, const Vocabulary& vocab);

std::pair<CountMatrix, CountMatrix> split_train_test(const CountMatrix& matrix,
                                                     double ratio,
                                                     std::uint64_t seed);

// File formats.

/// `label<TAB>text` per line; labels are mapped to dense ids in sorted order.
/// Blank lines are ignored. Document ids are the 1-based line numbers.
LabeledCorpus read_corpus(const std::filesystem::path& path);
StopwordSet read_stopwords(const std::filesystem::path& path);

/// Header `V N`, then per column `j nnz idx:count ...`.
void write_count_matrix(std::ostream& out, const CountMatrix& matrix);
CountMatrix read_count_matrix(std::istream& in);

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary read_vocabulary(const std::filesystem::path& path);

/// Sidecar `doc_id<TAB>label_id<TAB>label_name` per column.
void write_labels(const std::filesystem::path& path, const CountMatrix& matrix,
                  std::span<const std::string> label_names);
/// Fills doc_ids and labels of `matrix`; returns the label names by id.
std::vector<std::string> read_labels(const std::filesystem::path& path,
                                     CountMatrix& matrix);

void save_count_matrix(const std::filesystem::path& path, const CountMatrix& matrix);
CountMatrix load_count_matrix(const std::filesystem::path& path);

}  // namespace fednmf
