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

#include "fednmf/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "fednmf/error.hpp"
#include "fednmf/rng.hpp"
#include "text_util.hpp"

namespace fednmf {

Vocabulary::Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i], i).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate vocabulary term '" + terms_[i] + "'");
    }
  }
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void CountMatrix::validate() const {
  if (doc_ids.size() != columns.size() || labels.size() != columns.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "count matrix has " + std::to_string(columns.size()) + " columns but " +
                    std::to_string(doc_ids.size()) + " ids and " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto& col = columns[j];
    if (col.size() > rows) {
      throw Error(ErrorCode::kInvalidArgument,
                  "column " + std::to_string(j) + " has more entries than rows");
    }
    for (std::size_t e = 0; e < col.size(); ++e) {
      if (col[e].term >= rows) {
        throw Error(ErrorCode::kInvalidArgument,
                    "column " + std::to_string(j) + " references term " +
                        std::to_string(col[e].term) + " >= V=" + std::to_string(rows));
      }
      if (!(col[e].count > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "column " + std::to_string(j) + " has a non-positive count");
      }
      if (e > 0 && col[e - 1].term >= col[e].term) {
        throw Error(ErrorCode::kInvalidArgument,
                    "column " + std::to_string(j) + " entries are not strictly sorted");
      }
    }
  }
}

CountMatrix CountMatrix::select(std::span<const std::size_t> column_indices) const {
  CountMatrix out;
  out.rows = rows;
  out.columns.reserve(column_indices.size());
  out.doc_ids.reserve(column_indices.size());
  out.labels.reserve(column_indices.size());
  for (std::size_t j : column_indices) {
    out.columns.push_back(columns.at(j));
    out.doc_ids.push_back(doc_ids.at(j));
    out.labels.push_back(labels.at(j));
  }
  return out;
}

Eigen::VectorXd CountMatrix::dense_column(std::size_t j) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
  for (const auto& e : columns.at(j)) v[e.term] = e.count;
  return v;
}

double CountMatrix::total() const {
  double sum = 0.0;
  for (const auto& col : columns)
    for (const auto& e : col) sum += e.count;
  return sum;
}

std::size_t CountMatrix::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

CountMatrix from_dense(const Eigen::MatrixXd& dense) {
  CountMatrix m;
  m.rows = static_cast<std::size_t>(dense.rows());
  for (Eigen::Index j = 0; j < dense.cols(); ++j) {
    SparseColumn col;
    for (Eigen::Index i = 0; i < dense.rows(); ++i) {
      if (dense(i, j) < 0.0) {
        throw Error(ErrorCode::kInvalidArgument, "dense matrix has a negative entry");
      }
      if (dense(i, j) > 0.0) col.push_back({static_cast<std::uint32_t>(i), dense(i, j)});
    }
    m.columns.push_back(std::move(col));
    m.doc_ids.push_back(std::to_string(j));
    m.labels.push_back(0);
  }
  return m;
}

Eigen::MatrixXd to_dense(const CountMatrix& matrix) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(matrix.rows),
                                            static_cast<Eigen::Index>(matrix.cols()));
  for (std::size_t j = 0; j < matrix.cols(); ++j)
    for (const auto& e : matrix.columns[j]) d(e.term, static_cast<Eigen::Index>(j)) = e.count;
  return d;
}

namespace {

bool is_token_byte(unsigned char c) {
  // Bytes >= 0x80 belong to multi-byte UTF-8 sequences and are kept inside
  // tokens; only ASCII letters are case-folded.
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         c >= 0x80;
}

template <typename Fn>
void for_each_token(std::string_view text, const StopwordSet& stopwords, Fn&& fn) {
  std::string token;
  auto flush = [&] {
    if (token.size() > 1 && !stopwords.contains(token)) fn(token);
    token.clear();
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_token_byte(c)) {
      token.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else {
      flush();
    }
  }
  flush();
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const StopwordSet& stopwords) {
  std::vector<std::string> tokens;
  for_each_token(text, stopwords, [&](const std::string& t) { tokens.push_back(t); });
  return tokens;
}

Vocabulary build_vocabulary(std::span<const Document> docs, const StopwordSet& stopwords,
                            std::size_t min_count) {
  if (min_count < 1) {
    throw Error(ErrorCode::kInvalidArgument, "min_count must be >= 1");
  }
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& doc : docs) {
    for_each_token(doc.text, stopwords, [&](const std::string& t) {
      auto [it, inserted] = freq.try_emplace(t, 0);
      if (inserted) order.push_back(t);
      ++it->second;
    });
  }
  std::vector<std::string> kept;
  for (auto& t : order)
    if (freq[t] >= min_count) kept.push_back(std::move(t));
  if (kept.empty()) {
    throw Error(ErrorCode::kEmptyVocabulary,
                "no token reaches min_count=" + std::to_string(min_count));
  }
  return Vocabulary(std::move(kept));
}

Vectorized vectorize(std::span<const Document> docs, const Vocabulary& vocab) {
  if (vocab.empty()) throw Error(ErrorCode::kEmptyVocabulary, "vectorize needs a vocabulary");
  static const StopwordSet kNone;
  Vectorized out;
  out.matrix.rows = vocab.size();
  out.matrix.columns.reserve(docs.size());
  std::map<std::uint32_t, double> counts;
  for (std::size_t j = 0; j < docs.size(); ++j) {
    counts.clear();
    for_each_token(docs[j].text, kNone, [&](const std::string& t) {
      if (auto idx = vocab.find(t)) counts[static_cast<std::uint32_t>(*idx)] += 1.0;
    });
    SparseColumn col;
    col.reserve(counts.size());
    for (auto [term, c] : counts) col.push_back({term, c});
    if (col.empty()) out.empty_columns.push_back(j);
    out.matrix.columns.push_back(std::move(col));
    out.matrix.doc_ids.push_back(docs[j].id);
    out.matrix.labels.push_back(docs[j].label);
  }
  return out;
}

std::pair<CountMatrix, CountMatrix> split_train_test(const CountMatrix& matrix, double ratio,
                                                     std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "split ratio must lie in (0, 1)");
  }
  const std::size_t n = matrix.cols();
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw Error(ErrorCode::kDegenerateSplit,
                "split of " + std::to_string(n) + " columns at ratio " +
                    detail::format_double(ratio) + " leaves one side empty");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  shuffle(std::span<std::size_t>(perm), rng);
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {matrix.select(train), matrix.select(test)};
}

LabeledCorpus read_corpus(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  struct Raw {
    std::string id, label, text;
  };
  std::vector<Raw> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::kParse,
                  path.string() + ":" + std::to_string(lineno) + ": expected label<TAB>text");
    }
    raw.push_back({std::to_string(lineno), line.substr(0, tab), line.substr(tab + 1)});
  }
  LabeledCorpus corpus;
  std::map<std::string, std::size_t> label_ids;
  for (const auto& r : raw) label_ids.emplace(r.label, 0);
  for (auto& [name, id] : label_ids) {
    id = corpus.label_names.size();
    corpus.label_names.push_back(name);
  }
  corpus.documents.reserve(raw.size());
  for (auto& r : raw) {
    corpus.documents.push_back({std::move(r.id), std::move(r.text), label_ids.at(r.label)});
  }
  return corpus;
}

StopwordSet read_stopwords(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    auto t = detail::trim(line);
    if (t.empty()) continue;
    std::string w(t);
    for (auto& c : w)
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    words.insert(std::move(w));
  }
  return words;
}

void write_count_matrix(std::ostream& out, const CountMatrix& matrix) {
  out << matrix.rows << ' ' << matrix.cols() << '\n';
  for (std::size_t j = 0; j < matrix.cols(); ++j) {
    const auto& col = matrix.columns[j];
    out << j << ' ' << col.size();
    for (const auto& e : col) out << ' ' << e.term << ':' << detail::format_double(e.count);
    out << '\n';
  }
}

CountMatrix read_count_matrix(std::istream& in) {
  CountMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "count matrix: missing header");
  std::size_t n = 0;
  {
    std::istringstream hs(line);
    std::string v_tok, n_tok;
    if (!(hs >> v_tok >> n_tok)) throw Error(ErrorCode::kParse, "count matrix: bad header");
    m.rows = detail::parse_int<std::size_t>(v_tok, "V");
    n = detail::parse_int<std::size_t>(n_tok, "N");
  }
  m.columns.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::getline(in, line)) {
      throw Error(ErrorCode::kParse, "count matrix: expected " + std::to_string(n) +
                                         " columns, got " + std::to_string(j));
    }
    std::istringstream ls(line);
    std::string j_tok, nnz_tok, entry;
    if (!(ls >> j_tok >> nnz_tok)) {
      throw Error(ErrorCode::kParse, "count matrix: bad column line " + std::to_string(j));
    }
    if (detail::parse_int<std::size_t>(j_tok, "column index") != j) {
      throw Error(ErrorCode::kParse, "count matrix: columns out of order at " + std::to_string(j));
    }
    const auto nnz = detail::parse_int<std::size_t>(nnz_tok, "nnz");
    auto& col = m.columns[j];
    col.reserve(nnz);
    while (ls >> entry) {
      auto colon = entry.find(':');
      if (colon == std::string::npos) {
        throw Error(ErrorCode::kParse, "count matrix: bad entry '" + entry + "'");
      }
      std::string_view sv(entry);
      col.push_back({detail::parse_int<std::uint32_t>(sv.substr(0, colon), "term index"),
                     detail::parse_double(sv.substr(colon + 1), "count")});
    }
    if (col.size() != nnz) {
      throw Error(ErrorCode::kParse, "count matrix: column " + std::to_string(j) +
                                         " declares " + std::to_string(nnz) + " entries");
    }
    m.doc_ids.push_back(std::to_string(j));
  }
  m.labels.assign(n, 0);
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, std::string("count matrix: ") + e.what());
  }
  return m;
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  auto out = detail::open_output(path);
  for (const auto& t : vocab.terms()) out << t << '\n';
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) terms.push_back(line);
  }
  return Vocabulary(std::move(terms));
}

void write_labels(const std::filesystem::path& path, const CountMatrix& matrix,
                  std::span<const std::string> label_names) {
  auto out = detail::open_output(path);
  for (std::size_t j = 0; j < matrix.cols(); ++j) {
    const std::size_t label = matrix.labels[j];
    out << matrix.doc_ids[j] << '\t' << label << '\t'
        << (label < label_names.size() ? label_names[label] : std::to_string(label)) << '\n';
  }
}

std::vector<std::string> read_labels(const std::filesystem::path& path, CountMatrix& matrix) {
  auto in = detail::open_input(path);
  std::vector<std::string> names;
  std::vector<std::string> ids;
  std::vector<std::size_t> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw Error(ErrorCode::kParse, path.string() + ": expected id<TAB>label<TAB>name");
    }
    ids.push_back(line.substr(0, t1));
    const auto label =
        detail::parse_int<std::size_t>(std::string_view(line).substr(t1 + 1, t2 - t1 - 1), "label");
    labels.push_back(label);
    if (names.size() <= label) names.resize(label + 1);
    names[label] = line.substr(t2 + 1);
  }
  if (ids.size() != matrix.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                path.string() + " has " + std::to_string(ids.size()) + " rows for " +
                    std::to_string(matrix.cols()) + " columns");
  }
  matrix.doc_ids = std::move(ids);
  matrix.labels = std::move(labels);
  return names;
}

void save_count_matrix(const std::filesystem::path& path, const CountMatrix& matrix) {
  auto out = detail::open_output(path);
  write_count_matrix(out, matrix);
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

CountMatrix load_count_matrix(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_count_matrix(in);
}

}  // namespace fednmf
