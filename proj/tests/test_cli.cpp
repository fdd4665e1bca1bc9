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

#include <chrono>
#include <cstdlib>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "fednmf/cli.hpp"
#include "test_support.hpp"

using fednmf::testing::read_text;
using fednmf::testing::TempDir;
using fednmf::testing::write_text;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = fednmf::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string p(const std::filesystem::path& path) { return path.string(); }

// Two topics: fruit words for label "food", machine words for label "tech".
void write_corpus(const std::filesystem::path& path, std::size_t docs) {
  const std::vector<std::string> food = {"apple", "banana", "cherry", "grape", "melon", "peach"};
  const std::vector<std::string> tech = {"rocket", "engine", "laser", "robot", "circuit", "sensor"};
  fednmf::Rng rng(5);
  std::string text;
  for (std::size_t d = 0; d < docs; ++d) {
    const bool is_food = d % 2 == 0;
    const auto& words = is_food ? food : tech;
    text += is_food ? "food\t" : "tech\t";
    for (int w = 0; w < 12; ++w) text += words[fednmf::uniform_index(rng, words.size())] + " ";
    text += "the and\n";
  }
  write_text(path, text);
}

void write_embeddings(const std::filesystem::path& path) {
  write_text(path,
             "apple 1 0.1\nbanana 0.9 0\ncherry 1 0.2\ngrape 0.8 0.1\nmelon 1 0\npeach 0.9 0.1\n"
             "rocket 0 1\nengine 0.1 0.9\nlaser 0 1\nrobot 0.2 1\ncircuit 0 0.8\nsensor 0.1 1\n");
}

struct Pipeline {
  TempDir dir;
  std::filesystem::path matrix, shards, config;

  explicit Pipeline(std::size_t docs = 40, std::size_t clients = 2, json overrides = json::object()) {
    write_corpus(dir / "corpus.tsv", docs);
    write_text(dir / "stop.txt", "the\nand\n");
    write_embeddings(dir / "emb.txt");
    matrix = dir / "data" / "matrix.txt";
    shards = dir / "data" / "shards.txt";
    config = dir / "run.json";
    REQUIRE(run({"prepare", "--corpus", p(dir / "corpus.tsv"), "--stopwords", p(dir / "stop.txt"),
                 "--out", p(matrix)}).code == 0);
    REQUIRE(run({"partition", "--matrix", p(matrix), "--clients", std::to_string(clients),
                 "--alpha", "1.0", "--seed", "3", "--out", p(shards)}).code == 0);
    json cfg = {{"matrix", "data/matrix.txt"}, {"shards", "data/shards.txt"},
                {"clients", clients},          {"participation", 1.0},
                {"rounds", 2},                 {"topics", 2},
                {"batch_size", 8},             {"epochs", 2}};
    cfg.update(overrides);
    write_text(config, cfg.dump(2));
  }

  Result train(const std::string& out_dir, std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"train", "--config", p(config), "--out-dir", p(dir / out_dir)};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("prepare writes a matrix and is reproducible") {
    TempDir dir;
    write_text(dir / "c.tsv", "ham\tlunch at noon\nspam\tcheap pills now\nham\tnoon works fine\n");
    const auto r = run({"prepare", "--corpus", p(dir / "c.tsv"), "--out", p(dir / "m.txt")});
    CHECK(r.code == 0);
    const auto text = read_text(dir / "m.txt");
    CHECK(text.substr(0, text.find('\n')).ends_with(" 3"));
    CHECK(std::filesystem::exists(dir / "m.txt.vocab"));
    CHECK(std::filesystem::exists(dir / "m.txt.labels"));
    CHECK(run({"prepare", "--corpus", p(dir / "c.tsv"), "--out", p(dir / "m2.txt")}).code == 0);
    CHECK(read_text(dir / "m2.txt") == text);

    const auto split = run({"prepare", "--corpus", p(dir / "c.tsv"), "--out", p(dir / "s.txt"),
                            "--train-ratio", "0.67", "--seed", "1"});
    CHECK(split.code == 0);
    CHECK(std::filesystem::exists(dir / "s.txt.test"));
  }

  TEST_CASE("prepare reports missing files by path") {
    TempDir dir;
    const auto missing = p(dir / "nope.tsv");
    const auto r = run({"prepare", "--corpus", missing, "--out", p(dir / "m.txt")});
    CHECK(r.code != 0);
    CHECK(r.err.find(missing) != std::string::npos);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  }

  TEST_CASE("usage errors") {
    CHECK(run({}).code == fednmf::cli::kExitUsage);
    CHECK(run({"prepare"}).code == fednmf::cli::kExitUsage);
    CHECK(run({"frobnicate"}).code == fednmf::cli::kExitUsage);
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"--version"}).out.find(fednmf::cli::version()) != std::string::npos);
  }

  TEST_CASE("train writes manifest, metrics and checkpoints") {
    Pipeline pl;
    const auto r = pl.train("run", {"--checkpoint-every", "1"});
    REQUIRE(r.code == 0);
    const auto out = pl.dir / "run";
    for (const char* f : {"manifest.json", "metrics.jsonl", "model.W", "critic.txt",
                          "topic_features.txt", "checkpoints/round_000001.W",
                          "checkpoints/round_000002.critic"})
      CHECK(std::filesystem::exists(out / f));
    const json manifest = json::parse(read_text(out / "manifest.json"));
    CHECK(manifest["config"]["lambda"] == 0.1);
    CHECK(manifest["master_seed"] == 0);
    CHECK(manifest["inputs"]["matrix"]["digest"].get<std::string>().size() == 16);
    const auto metrics = read_text(out / "metrics.jsonl");
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 3);
    CHECK(metrics.find("\"config_hash\":\"" + manifest["config_hash"].get<std::string>() + "\"") !=
          std::string::npos);
  }

  TEST_CASE("equal manifests give identical metrics") {
    Pipeline pl(40, 4);
    REQUIRE(pl.train("a").code == 0);
    REQUIRE(pl.train("b", {"--threads", "4"}).code == 0);
    CHECK(read_text(pl.dir / "a" / "metrics.jsonl") == read_text(pl.dir / "b" / "metrics.jsonl"));
    CHECK(read_text(pl.dir / "a" / "manifest.json") == read_text(pl.dir / "b" / "manifest.json"));
    REQUIRE(pl.train("c", {"--seed", "9"}).code == 0);
    CHECK(read_text(pl.dir / "a" / "metrics.jsonl") != read_text(pl.dir / "c" / "metrics.jsonl"));
    CHECK(json::parse(read_text(pl.dir / "c" / "manifest.json"))["master_seed"] == 9);
  }

  TEST_CASE("train rejects bad configs naming every field") {
    Pipeline pl(40, 2, {{"participation", 0}, {"topics", 0}, {"lamda", 0.1}});
    const auto r = pl.train("bad");
    CHECK(r.code == fednmf::cli::kExitFailure);
    CHECK(r.err.find("participation (C)") != std::string::npos);
    CHECK(r.err.find("topics") != std::string::npos);
    CHECK(r.err.find("lamda") != std::string::npos);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  }

  TEST_CASE("single-client single-round smoke run is fast") {
    Pipeline pl(20, 1, {{"rounds", 1}, {"topics", 3}});
    const auto start = std::chrono::steady_clock::now();
    CHECK(pl.train("smoke").code == 0);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 5.0);
  }

  TEST_CASE("eval modes") {
    Pipeline pl(60, 2, {{"rounds", 3}});
    REQUIRE(pl.train("run").code == 0);
    const auto run_dir = pl.dir / "run";
    const std::string vocab = p(pl.matrix) + ".vocab";

    const auto usage = run({"eval", "--checkpoint", p(run_dir / "model.W"), "--vocab", vocab,
                            "--mode", "coherence"});
    CHECK(usage.code == fednmf::cli::kExitUsage);

    const auto both = run({"eval", "--checkpoint", p(run_dir / "model.W"), "--vocab", vocab,
                           "--embeddings", p(pl.dir / "emb.txt"), "--features",
                           p(run_dir / "topic_features.txt"), "--top-n", "3", "--out-dir",
                           p(pl.dir / "eval")});
    REQUIRE(both.code == 0);
    CHECK(std::regex_match(both.out, std::regex("coherence=-?[0-9.]+ macro_f1=[0-9.]+ acc=[0-9.]+\n")));
    CHECK(std::filesystem::exists(pl.dir / "eval" / "coherence_report.json"));
    CHECK(std::filesystem::exists(pl.dir / "eval" / "classification_report.json"));

    const auto fold = run({"eval", "--checkpoint", p(run_dir / "model.W"), "--mode", "classify",
                           "--fold-in", "--matrix", p(pl.matrix), "--out-dir", p(pl.dir / "fold")});
    CHECK(fold.code == 0);
    CHECK(fold.out.starts_with("macro_f1="));
  }

  TEST_CASE("eval on a single-class shard fails") {
    TempDir dir;
    write_text(dir / "f.txt", "4 2\n0 0 0.1 0.2\n1 0 0.3 0.1\n2 0 0.5 0.5\n3 0 0.2 0.9\n");
    write_text(dir / "w.txt", "2 2\n1 0\n0 1\n");
    const auto r = run({"eval", "--checkpoint", p(dir / "w.txt"), "--mode", "classify",
                        "--features", p(dir / "f.txt")});
    CHECK(r.code == fednmf::cli::kExitFailure);
    CHECK(r.err.find("SingleClass") != std::string::npos);
  }

  TEST_CASE("sweep builds the cartesian product") {
    Pipeline pl(40, 2);
    json grid = {{"matrix", "data/matrix.txt"},
                 {"embeddings", "emb.txt"},
                 {"top_n", 3},
                 {"classifier", {{"epochs", 50}}},
                 {"base", {{"clients", 2}, {"participation", 1.0}, {"rounds", 1}, {"topics", 2},
                           {"batch_size", 8}, {"epochs", 1}, {"alpha", 1.0}}},
                 {"grid", {{"lambda", {0, 0.1}}, {"seed", {1, 2}}}}};
    write_text(pl.dir / "grid.json", grid.dump());
    const auto r = run({"sweep", "--config", p(pl.dir / "grid.json"), "--out-dir", p(pl.dir / "sw")});
    REQUIRE(r.code == 0);
    const auto table = read_text(pl.dir / "sw" / "sweep.tsv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 5);
    CHECK(table.find("failed") == std::string::npos);

    // Parallel cells give the same table.
    CHECK(run({"sweep", "--config", p(pl.dir / "grid.json"), "--out-dir", p(pl.dir / "sw2"),
               "--parallel", "3"}).code == 0);
    CHECK(read_text(pl.dir / "sw2" / "sweep.tsv") == table);
  }

  TEST_CASE("sweep accepts the published grids and records failed cells") {
    Pipeline pl(40, 2);
    json grid = {{"matrix", "data/matrix.txt"},
                 {"classifier", {{"epochs", 20}}},
                 {"base", {{"clients", 2}, {"participation", 1.0}, {"rounds", 1}, {"topics", 2},
                           {"epochs", 1}}},
                 {"grid", {{"lambda", {0, 0.01, 0.05, 0.1, 0.5}}, {"batch_size", {16, 32, 64, 128}}}}};
    write_text(pl.dir / "grid.json", grid.dump());
    const auto r = run({"sweep", "--config", p(pl.dir / "grid.json"), "--out-dir", p(pl.dir / "sw")});
    REQUIRE(r.code == 0);
    const auto table = read_text(pl.dir / "sw" / "sweep.tsv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 21);

    json bad = grid;
    bad["grid"] = {{"topics", {2, 0}}};
    write_text(pl.dir / "bad.json", bad.dump());
    const auto b = run({"sweep", "--config", p(pl.dir / "bad.json"), "--out-dir", p(pl.dir / "sb")});
    CHECK(b.code == 0);
    const auto bad_table = read_text(pl.dir / "sb" / "sweep.tsv");
    CHECK(bad_table.find("\tok\t") != std::string::npos);
    CHECK(bad_table.find("\tfailed\t") != std::string::npos);

    json empty = grid;
    empty["grid"] = json::object();
    write_text(pl.dir / "empty.json", empty.dump());
    CHECK(run({"sweep", "--config", p(pl.dir / "empty.json")}).code != 0);
  }

  TEST_CASE("binary exit codes") {
    const std::string bin = FEDNMF_CLI_PATH;
    CHECK(std::system((bin + " --help > /dev/null").c_str()) == 0);
    CHECK(std::system((bin + " prepare --corpus /nonexistent/x --out /tmp/x 2> /dev/null").c_str()) != 0);
  }
}
