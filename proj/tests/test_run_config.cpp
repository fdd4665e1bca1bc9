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

#include "doctest.h"

#include "fednmf/run_config.hpp"
#include "test_support.hpp"

using namespace fednmf;
using nlohmann::json;

TEST_SUITE("run_config") {
  TEST_CASE("defaults and overrides") {
    std::vector<std::string> errors;
    const auto c = fed_config_from_json(json::object(), errors);
    CHECK(errors.empty());
    CHECK(c.sgd.lambda == 0.1);
    CHECK(c.participation == 0.2);
    CHECK(c.clients == 10);
    CHECK(c.aggregator == Aggregator::kFedAvg);

    const auto d = fed_config_from_json(
        json{{"lambda", 0.5}, {"batch_size", 128}, {"aggregator", "fedadam"}, {"master_seed", 7}},
        errors);
    CHECK(errors.empty());
    CHECK(d.sgd.lambda == 0.5);
    CHECK(d.sgd.batch_size == 128);
    CHECK(d.aggregator == Aggregator::kFedAdam);
    CHECK(d.master_seed == 7);
  }

  TEST_CASE("every problem is reported") {
    std::vector<std::string> errors;
    fed_config_from_json(json{{"participation", 0},
                              {"topics", -3},
                              {"aggregator", "sgd"},
                              {"eta", "fast"},
                              {"colour", 1}},
                         errors);
    CHECK(errors.size() == 5);
    auto has = [&](const std::string& s) {
      for (const auto& e : errors)
        if (e.find(s) != std::string::npos) return true;
      return false;
    };
    CHECK(has("participation (C)"));
    CHECK(has("topics"));
    CHECK(has("aggregator"));
    CHECK(has("eta"));
    CHECK(has("colour"));
  }

  TEST_CASE("extra keys and hashing") {
    std::vector<std::string> errors;
    fed_config_from_json(json{{"matrix", "a.txt"}}, errors, {"matrix"});
    CHECK(errors.empty());
    FedRunConfig a, b;
    CHECK(config_hash(to_json(a)) == config_hash(to_json(b)));
    b.sgd.lambda = 0.0;
    CHECK(config_hash(to_json(a)) != config_hash(to_json(b)));
    CHECK(config_hash(to_json(a)).size() == 16);

    std::vector<std::string> again;
    const auto round_trip = fed_config_from_json(json::parse(to_json(b).dump()), again);
    CHECK(again.empty());
    CHECK(to_json(round_trip) == to_json(b));
  }

  TEST_CASE("file digest") {
    fednmf::testing::TempDir dir;
    fednmf::testing::write_text(dir / "a", "hello");
    fednmf::testing::write_text(dir / "b", "hello");
    fednmf::testing::write_text(dir / "c", "hellp");
    CHECK(file_digest((dir / "a").string()) == file_digest((dir / "b").string()));
    CHECK(file_digest((dir / "a").string()) != file_digest((dir / "c").string()));
    // FNV-1a 64 of the empty string is the offset basis.
    fednmf::testing::write_text(dir / "e", "");
    CHECK(file_digest((dir / "e").string()) == "cbf29ce484222325");
  }
}
