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

#include <cmath>
#include <numeric>

#include "doctest.h"

#include "fednmf/error.hpp"
#include "fednmf/evaluation.hpp"
#include "test_support.hpp"

using namespace fednmf;
using namespace fednmf::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// cat (1,0), dog (1,0), car (0,1).
EmbeddingTable toy_table() {
  EmbeddingTable t;
  t.dim = 2;
  t.vectors["cat"] = vec({1, 0});
  t.vectors["dog"] = vec({1, 0});
  t.vectors["car"] = vec({0, 1});
  return t;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

// Per-class F1 from an explicit confusion matrix.
double brute_macro_f1(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth,
                      std::size_t classes) {
  std::vector<std::vector<double>> cm(classes, std::vector<double>(classes, 0.0));
  for (std::size_t i = 0; i < pred.size(); ++i) cm[truth[i]][pred[i]] += 1.0;
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    double row = 0.0, col = 0.0;
    for (std::size_t o = 0; o < classes; ++o) {
      row += cm[c][o];
      col += cm[o][c];
    }
    if (row == 0.0 && col == 0.0) continue;
    ++present;
    const double p = col > 0 ? cm[c][c] / col : 0.0;
    const double r = row > 0 ? cm[c][c] / row : 0.0;
    sum += (p + r > 0) ? 2 * p * r / (p + r) : 0.0;
  }
  return sum / static_cast<double>(present);
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("top_words ordering") {
    const Vocabulary vocab({"t0", "t1", "t2", "t3", "t4"});
    MatrixXd W = MatrixXd::Zero(5, 3);
    W(3, 0) = 1.0;
    W.col(1).setConstant(0.2);
    W.col(2).head(3) << 0.5, 0.9, 0.1;
    CHECK(top_words(W, 0, 1, vocab) == std::vector<std::string>{"t3"});
    CHECK(top_words(W, 1, 2, vocab) == std::vector<std::string>{"t0", "t1"});
    CHECK(top_words(W, 2, 2, vocab) == std::vector<std::string>{"t1", "t0"});
    MatrixXd scaled = W * 7.5;
    for (std::size_t t = 0; t < 3; ++t)
      CHECK(top_indices(scaled, t, 4) == top_indices(W, t, 4));
    CHECK_THROWS_AS(top_indices(W, 3, 1), Error);
    CHECK_THROWS_AS(top_indices(W, 0, 6), Error);
  }

  TEST_CASE("we_coherence hand cases") {
    const auto t = toy_table();
    const std::vector<std::string> parallel = {"cat", "dog"};
    const std::vector<std::string> orth = {"cat", "car"};
    const std::vector<std::string> three = {"cat", "dog", "car"};
    CHECK(std::abs(we_coherence(parallel, t) - 1.0) <= 1e-12);
    CHECK(std::abs(we_coherence(orth, t) - 0.0) <= 1e-12);
    CHECK(std::abs(we_coherence(three, t) - 1.0 / 3.0) <= 1e-12);
    const std::vector<std::string> unknown = {"cat", "zebra"};
    CHECK(code_of([&] { we_coherence(unknown, t); }) == ErrorCode::kTooFewEmbeddedWords);
  }

  TEST_CASE("we_coherence is bounded, order free and scale free") {
    Rng rng(3);
    EmbeddingTable t;
    t.dim = 4;
    std::vector<std::string> words;
    for (int i = 0; i < 12; ++i) {
      words.push_back("w" + std::to_string(i));
      t.vectors[words.back()] = uniform_matrix(4, 1, rng, -1.0, 1.0).col(0);
    }
    EmbeddingTable scaled = t;
    for (auto& [w, v] : scaled.vectors) v *= 3.25;
    for (int rep = 0; rep < 30; ++rep) {
      shuffle(std::span<std::string>(words), rng);
      const std::vector<std::string> pick(words.begin(), words.begin() + 5);
      const double c = we_coherence(pick, t);
      CHECK(c >= -1.0);
      CHECK(c <= 1.0);
      auto rev = pick;
      std::reverse(rev.begin(), rev.end());
      CHECK(std::abs(we_coherence(rev, t) - c) <= 1e-12);
      CHECK(std::abs(we_coherence(pick, scaled) - c) <= 1e-12);
    }
  }

  TEST_CASE("model_coherence") {
    const auto t = toy_table();
    const Vocabulary vocab({"cat", "dog", "car", "zebra"});
    MatrixXd W(4, 2);
    W << 0.9, 0.9,
         0.8, 0.8,
         0.0, 0.7,
         0.1, 0.0;
    // Topic 0 top-3 is cat, dog, zebra -> 1.0; topic 1 is cat, dog, car -> 1/3.
    const auto r = model_coherence(W, vocab, t, 3);
    REQUIRE(r.coherence.size() == 2);
    CHECK(std::abs(*r.coherence[0] - 1.0) <= 1e-12);
    CHECK(std::abs(*r.coherence[1] - 1.0 / 3.0) <= 1e-12);
    CHECK(std::abs(r.mean_coherence - 2.0 / 3.0) <= 1e-12);
    CHECK(r.scored_topics == 2);

    const auto single = model_coherence(W.leftCols(1), vocab, t, 3);
    CHECK(single.mean_coherence == *single.coherence[0]);
    MatrixXd same(4, 3);
    same << W.col(1), W.col(1), W.col(1);
    CHECK(std::abs(model_coherence(same, vocab, t, 3).mean_coherence - 1.0 / 3.0) <= 1e-12);

    MatrixXd lonely = MatrixXd::Zero(4, 1);
    lonely(3, 0) = 1.0;
    lonely(0, 0) = 0.5;
    CHECK(code_of([&] { model_coherence(lonely, vocab, t, 2); }) == ErrorCode::kNoScorableTopics);
  }

  TEST_CASE("load_embeddings") {
    TempDir dir;
    write_text(dir / "e.txt", "cat 1.0 0.0\ndog 0.0 1.0\n");
    auto t = load_embeddings(dir / "e.txt");
    CHECK(t.dim == 2);
    CHECK(t.vectors.size() == 2);
    write_text(dir / "f.txt", "Cat 1 0\nbad 1 2 3\nnan x 1\ncat 0 2\n\n");
    t = load_embeddings(dir / "f.txt");
    CHECK(t.vectors.size() == 1);
    CHECK(t.skipped_lines == 2);
    CHECK(*t.find("cat") == vec({0, 2}));
    write_text(dir / "g.txt", "lonely\n");
    CHECK(code_of([&] { load_embeddings(dir / "g.txt"); }) == ErrorCode::kEmptyTable);
    CHECK(code_of([&] { load_embeddings(dir / "none.txt"); }) == ErrorCode::kIo);
  }

  TEST_CASE("macro_f1 hand cases") {
    const std::vector<std::size_t> y = {0, 1, 2, 1, 0};
    CHECK(macro_f1(y, y) == 1.0);
    const std::vector<std::size_t> truth = {0, 0, 0, 1, 1, 1};
    const std::vector<std::size_t> all0(6, 0);
    CHECK(std::abs(macro_f1(all0, truth) - 1.0 / 3.0) <= 1e-12);
    const auto r = score_predictions(all0, truth, 2);
    CHECK(r.per_class[1].f1 == 0.0);
    CHECK(std::abs(r.per_class[0].f1 - 2.0 / 3.0) <= 1e-12);
    CHECK(std::abs(r.accuracy - 0.5) <= 1e-12);
  }

  TEST_CASE("macro_f1 and accuracy agree with a confusion matrix") {
    Rng rng(10);
    for (int rep = 0; rep < 200; ++rep) {
      const std::size_t classes = 2 + uniform_index(rng, 4);
      const std::size_t n = 1 + uniform_index(rng, 40);
      std::vector<std::size_t> pred(n), truth(n);
      double correct = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        pred[i] = uniform_index(rng, classes);
        truth[i] = uniform_index(rng, classes);
        correct += pred[i] == truth[i];
      }
      const auto r = score_predictions(pred, truth, classes);
      CHECK(std::abs(r.macro_f1 - brute_macro_f1(pred, truth, classes)) <= 1e-12);
      CHECK(std::abs(r.accuracy - correct / static_cast<double>(n)) <= 1e-12);
      CHECK(std::abs(macro_f1(pred, truth) - r.macro_f1) <= 1e-12);
    }
  }

  TEST_CASE("classifier separates clusters") {
    Rng rng(4);
    MatrixXd x(2, 200);
    std::vector<std::size_t> y(200);
    for (Eigen::Index j = 0; j < 200; ++j) {
      y[static_cast<std::size_t>(j)] = static_cast<std::size_t>(j % 2);
      x.col(j) = (j % 2 == 0 ? vec({1, 0}) : vec({0, 1})) + uniform_matrix(2, 1, rng, 0.0, 0.2).col(0);
    }
    // Brute-force scan: the direction (1, -1) splits the two clusters with a margin.
    double worst = INFINITY;
    for (Eigen::Index j = 0; j < 200; ++j) {
      const double s = (x(0, j) - x(1, j)) * (y[static_cast<std::size_t>(j)] == 0 ? 1.0 : -1.0);
      worst = std::min(worst, s);
    }
    REQUIRE(worst >= 0.5);
    const auto r = train_classifier(x, y, {0.8, 1, 500, 0.5});
    CHECK(r.accuracy >= 0.95);
    CHECK(r.train_size == 160);
    CHECK(r.test_size == 40);
  }

  TEST_CASE("classifier is at chance on random labels") {
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(200 + seed);
      MatrixXd x = uniform_matrix(5, 400, rng);
      std::vector<std::size_t> y(400);
      for (std::size_t j = 0; j < 400; ++j) y[j] = j % 2;
      shuffle(std::span<std::size_t>(y), rng);
      acc += train_classifier(x, y, {0.8, seed, 300, 0.5}).accuracy;
    }
    CHECK(std::abs(acc / 5 - 0.5) <= 0.15);
  }

  TEST_CASE("classifier errors") {
    MatrixXd x = MatrixXd::Ones(2, 10);
    const std::vector<std::size_t> same(10, 1);
    CHECK(code_of([&] { train_classifier(x, same); }) == ErrorCode::kSingleClass);
    const std::vector<std::size_t> short_labels(4, 0);
    CHECK(code_of([&] { train_classifier(x, short_labels); }) == ErrorCode::kDimensionMismatch);
  }

  TEST_CASE("cosine of zero vectors is zero") {
    CHECK(cosine(vec({0, 0}), vec({1, 0})) == 0.0);
    CHECK(std::abs(cosine(vec({1, 1}), vec({2, 2})) - 1.0) <= 1e-15);
  }
}
