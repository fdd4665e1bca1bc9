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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"

#include "fednmf/error.hpp"
#include "fednmf/partition.hpp"
#include "test_support.hpp"

using namespace fednmf;
using fednmf::testing::balanced_label_matrix;

namespace {

double tv_distance(const std::vector<std::size_t>& mix, const std::vector<double>& p) {
  const double n = static_cast<double>(std::accumulate(mix.begin(), mix.end(), std::size_t{0}));
  double tv = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) tv += std::abs(static_cast<double>(mix[c]) / n - p[c]);
  return 0.5 * tv;
}

}  // namespace

TEST_SUITE("partition") {
  TEST_CASE("sample_dirichlet basics") {
    Rng rng(1);
    const std::vector<double> one = {3.7};
    CHECK(sample_dirichlet(one, rng) == std::vector<double>{1.0});
    for (double a : {1e-4, 0.01, 0.5, 1.0, 10.0, 1e6}) {
      const std::vector<double> c(5, a);
      for (int i = 0; i < 50; ++i) {
        auto x = sample_dirichlet(c, rng);
        CHECK(std::abs(std::accumulate(x.begin(), x.end(), 0.0) - 1.0) <= 1e-12);
        for (double v : x) CHECK(v >= 0.0);
      }
    }
    const std::vector<double> bad = {1.0, 0.0};
    CHECK_THROWS_AS(sample_dirichlet(bad, rng), Error);
    const std::vector<double> empty;
    CHECK_THROWS_AS(sample_dirichlet(empty, rng), Error);
  }

  TEST_CASE("sample_dirichlet mean matches normalized concentration") {
    Rng rng(12);
    const std::vector<double> c = {1e6 * 0.3, 1e6 * 0.7};
    double m0 = 0.0, m1 = 0.0;
    for (int i = 0; i < 1000; ++i) {
      auto x = sample_dirichlet(c, rng);
      m0 += x[0];
      m1 += x[1];
    }
    CHECK(std::abs(m0 / 1000 - 0.3) <= 0.01);
    CHECK(std::abs(m1 / 1000 - 0.7) <= 0.01);
  }

  TEST_CASE("sample_gamma moments") {
    // Gamma(a, 1) has mean a and variance a.
    for (double a : {0.3, 1.0, 4.0}) {
      Rng rng(static_cast<std::uint64_t>(a * 100));
      const int n = 100000;
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const double g = sample_gamma(a, rng);
        CHECK(g >= 0.0);
        s += g;
        s2 += g * g;
      }
      const double mean = s / n;
      const double var = s2 / n - mean * mean;
      CHECK(std::abs(mean - a) < 0.03 * std::max(a, 1.0));
      CHECK(std::abs(var - a) < 0.08 * std::max(a, 1.0));
    }
    Rng rng(0);
    CHECK_THROWS_AS(sample_gamma(0.0, rng), Error);
  }

  TEST_CASE("K=1 keeps every document") {
    auto m = balanced_label_matrix(40, 4);
    auto p = label_distribution(m, 4);
    auto shards = partition_clients(m, {1, 0.5, 3}, p);
    REQUIRE(shards.size() == 1);
    CHECK(shards[0].columns.size() == 40);
    CHECK(shards[0].label_mix == std::vector<std::size_t>{10, 10, 10, 10});
  }

  TEST_CASE("floor rule and disjointness") {
    auto m = balanced_label_matrix(105, 3);
    auto p = label_distribution(m, 3);
    for (double alpha : {0.01, 1.0, 1e6}) {
      auto shards = partition_clients(m, {10, alpha, 8}, p);
      REQUIRE(shards.size() == 10);
      std::set<std::size_t> seen;
      for (std::size_t i = 0; i < shards.size(); ++i) {
        CHECK(shards[i].client_id == i);
        CHECK(shards[i].columns.size() == 10);
        for (auto c : shards[i].columns) CHECK(seen.insert(c).second);
        std::vector<std::size_t> mix(3, 0);
        for (auto c : shards[i].columns) ++mix[m.labels[c]];
        CHECK(mix == shards[i].label_mix);
      }
      CHECK(seen.size() == 100);
    }
  }

  TEST_CASE("same spec gives identical shards") {
    auto m = balanced_label_matrix(300, 4);
    auto p = label_distribution(m, 4);
    CHECK(partition_clients(m, {7, 0.3, 5}, p) == partition_clients(m, {7, 0.3, 5}, p));
    CHECK(partition_clients(m, {7, 0.3, 5}, p) != partition_clients(m, {7, 0.3, 6}, p));
  }

  TEST_CASE("alpha limits") {
    auto m = balanced_label_matrix(6000, 4);
    auto p = label_distribution(m, 4);
    auto iid = partition_clients(m, {30, 1e6, 1}, p);
    for (const auto& s : iid) CHECK(tv_distance(s.label_mix, p) <= 0.05);

    auto skew = partition_clients(m, {30, 0.01, 1}, p);
    double share = 0.0;
    for (const auto& s : skew) {
      share += static_cast<double>(*std::max_element(s.label_mix.begin(), s.label_mix.end())) /
               static_cast<double>(s.columns.size());
    }
    CHECK(share / 30.0 >= 0.9);
  }

  TEST_CASE("errors") {
    auto m = balanced_label_matrix(5, 2);
    auto p = label_distribution(m, 2);
    CHECK_THROWS_AS(partition_clients(m, {6, 1.0, 0}, p), Error);
    try {
      partition_clients(m, {6, 1.0, 0}, p);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kTooFewDocuments);
    }
    CHECK_THROWS_AS(partition_clients(m, {2, 0.0, 0}, p), Error);
    const std::vector<double> bad = {0.7, 0.7};
    CHECK_THROWS_AS(partition_clients(m, {2, 1.0, 0}, bad), Error);
  }

  TEST_CASE("shard manifest round trip") {
    fednmf::testing::TempDir dir;
    auto m = balanced_label_matrix(50, 2);
    auto p = label_distribution(m, 2);
    auto shards = partition_clients(m, {4, 0.2, 2}, p);
    write_shard_manifest(dir / "shards.txt", shards);
    CHECK(read_shard_manifest(dir / "shards.txt", &m) == shards);
    auto text = fednmf::testing::read_text(dir / "shards.txt");
    CHECK(text.rfind("0: ", 0) == 0);

    fednmf::testing::write_text(dir / "bad.txt", "1: 0,1\n");
    CHECK_THROWS_AS(read_shard_manifest(dir / "bad.txt"), Error);
    fednmf::testing::write_text(dir / "oob.txt", "0: 0,99\n");
    CHECK_THROWS_AS(read_shard_manifest(dir / "oob.txt", &m), Error);
  }
}
