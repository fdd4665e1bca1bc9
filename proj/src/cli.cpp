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

#include "fednmf/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "fednmf/corpus.hpp"
#include "fednmf/error.hpp"
#include "fednmf/evaluation.hpp"
#include "fednmf/factorization.hpp"
#include "fednmf/federation.hpp"
#include "fednmf/partition.hpp"
#include "fednmf/run_config.hpp"
#include "text_util.hpp"

#ifndef FEDNMF_VERSION
#define FEDNMF_VERSION "unknown"
#endif

namespace fednmf::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using Eigen::Index;
using Eigen::MatrixXd;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path sidecar(const fs::path& p, const std::string& suffix) {
  return fs::path(p.string() + suffix);
}

CountMatrix load_labeled_matrix(const fs::path& path, std::vector<std::string>* names = nullptr) {
  CountMatrix m = load_count_matrix(path);
  const auto labels_path = sidecar(path, ".labels");
  if (fs::exists(labels_path)) {
    auto n = read_labels(labels_path, m);
    if (names) *names = std::move(n);
  }
  return m;
}

json read_json_file(const fs::path& path) {
  auto in = detail::open_input(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const ojson& j) {
  auto out = detail::open_output(path);
  out << j.dump(2) << '\n';
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? sep : "") + parts[i];
  return s;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

/// Topic-weight features of every non-empty training document, ordered by
/// source column.
struct Features {
  MatrixXd values;  // k×N
  std::vector<std::size_t> columns;
  std::vector<std::size_t> labels;
};

Features features_from_clients(std::span<const ClientState> clients) {
  struct Row {
    std::size_t column;
    std::size_t label;
    const ClientState* client;
    Index local;
  };
  std::vector<Row> rows;
  for (const auto& c : clients) {
    for (std::size_t b = 0; b < c.documents(); ++b) {
      if (c.data.columns[b].empty()) continue;
      rows.push_back({c.shard.columns[b], c.data.labels[b], &c, static_cast<Index>(b)});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.column < b.column; });
  Features f;
  const Index k = clients.empty() ? 0 : clients.front().factors.H.rows();
  f.values.resize(k, static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    f.values.col(static_cast<Index>(i)) = rows[i].client->factors.H.col(rows[i].local);
    f.columns.push_back(rows[i].column);
    f.labels.push_back(rows[i].label);
  }
  return f;
}

void save_features(const fs::path& path, const Features& f) {
  auto out = detail::open_output(path);
  out << f.values.cols() << ' ' << f.values.rows() << '\n';
  for (Index j = 0; j < f.values.cols(); ++j) {
    out << f.columns[static_cast<std::size_t>(j)] << ' ' << f.labels[static_cast<std::size_t>(j)];
    for (Index t = 0; t < f.values.rows(); ++t) out << ' ' << detail::format_double(f.values(t, j));
    out << '\n';
  }
}

Features load_features(const fs::path& path) {
  auto in = detail::open_input(path);
  std::string n_tok, k_tok, tok;
  if (!(in >> n_tok >> k_tok)) throw Error(ErrorCode::kParse, path.string() + ": missing header");
  const auto n = detail::parse_int<Index>(n_tok, "N");
  const auto k = detail::parse_int<Index>(k_tok, "k");
  Features f;
  f.values.resize(k, n);
  for (Index j = 0; j < n; ++j) {
    if (!(in >> tok)) throw Error(ErrorCode::kParse, path.string() + ": truncated");
    f.columns.push_back(detail::parse_int<std::size_t>(tok, "column"));
    if (!(in >> tok)) throw Error(ErrorCode::kParse, path.string() + ": truncated");
    f.labels.push_back(detail::parse_int<std::size_t>(tok, "label"));
    for (Index t = 0; t < k; ++t) {
      if (!(in >> tok)) throw Error(ErrorCode::kParse, path.string() + ": truncated");
      f.values(t, j) = detail::parse_double(tok, "feature");
    }
  }
  return f;
}

Features fold_in_features(const MatrixXd& W, const CountMatrix& matrix, std::size_t iters) {
  Features f;
  std::vector<Eigen::VectorXd> cols;
  for (std::size_t j = 0; j < matrix.cols(); ++j) {
    if (matrix.columns[j].empty()) continue;
    cols.push_back(infer_topics(W, matrix.columns[j], iters));
    f.columns.push_back(j);
    f.labels.push_back(matrix.labels[j]);
  }
  f.values.resize(W.cols(), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) f.values.col(static_cast<Index>(i)) = cols[i];
  return f;
}

ojson coherence_json(const TopicReport& r, std::size_t top_n, const std::string& hash) {
  ojson j;
  j["config_hash"] = hash;
  j["top_n"] = top_n;
  j["mean_coherence"] = r.mean_coherence;
  j["scored_topics"] = r.scored_topics;
  j["topics"] = ojson::array();
  for (std::size_t t = 0; t < r.top_words.size(); ++t) {
    ojson topic;
    topic["index"] = t;
    topic["top_words"] = r.top_words[t];
    if (r.coherence[t]) {
      topic["coherence"] = *r.coherence[t];
    } else {
      topic["coherence"] = nullptr;
    }
    j["topics"].push_back(topic);
  }
  return j;
}

ojson classification_json(const ClassificationReport& r, const std::string& hash) {
  ojson j;
  j["config_hash"] = hash;
  // Softmax regression stands in for the SVM of the original evaluation.
  j["classifier"] = "softmax_regression";
  j["macro_f1"] = r.macro_f1;
  j["accuracy"] = r.accuracy;
  j["train_size"] = r.train_size;
  j["test_size"] = r.test_size;
  j["per_class"] = ojson::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    j["per_class"].push_back(ojson{{"class", c},
                                   {"precision", m.precision},
                                   {"recall", m.recall},
                                   {"f1", m.f1},
                                   {"support", m.support}});
  }
  return j;
}

// ---------------------------------------------------------------- prepare

struct PrepareOptions {
  std::string corpus;
  std::string stopwords;
  std::size_t min_count = 1;
  std::string out;
  double train_ratio = 0.0;
  std::uint64_t seed = 0;
};

void cmd_prepare(const PrepareOptions& o, std::ostream& out) {
  const LabeledCorpus corpus = read_corpus(o.corpus);
  const StopwordSet stopwords = o.stopwords.empty() ? StopwordSet{} : read_stopwords(o.stopwords);
  const Vocabulary vocab = build_vocabulary(corpus.documents, stopwords, o.min_count);
  Vectorized vec = vectorize(corpus.documents, vocab);

  const fs::path out_path(o.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_vocabulary(sidecar(out_path, ".vocab"), vocab);
  if (o.train_ratio > 0.0) {
    auto [train, test] = split_train_test(vec.matrix, o.train_ratio, o.seed);
    save_count_matrix(out_path, train);
    write_labels(sidecar(out_path, ".labels"), train, corpus.label_names);
    save_count_matrix(sidecar(out_path, ".test"), test);
    write_labels(sidecar(out_path, ".test.labels"), test, corpus.label_names);
    out << "prepared V=" << vocab.size() << " train=" << train.cols() << " test=" << test.cols();
  } else {
    save_count_matrix(out_path, vec.matrix);
    write_labels(sidecar(out_path, ".labels"), vec.matrix, corpus.label_names);
    out << "prepared V=" << vocab.size() << " N=" << vec.matrix.cols();
  }
  out << " empty_documents=" << vec.empty_columns.size() << '\n';
}

// -------------------------------------------------------------- partition

struct PartitionOptions {
  std::string matrix;
  std::size_t clients = 10;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_partition(const PartitionOptions& o, std::ostream& out) {
  const CountMatrix matrix = load_labeled_matrix(o.matrix);
  const auto p = label_distribution(matrix, std::max<std::size_t>(matrix.num_classes(), 1));
  const auto shards = partition_clients(matrix, {o.clients, o.alpha, o.seed}, p);
  const fs::path out_path(o.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_shard_manifest(out_path, shards);
  out << "partitioned " << matrix.cols() << " documents into " << shards.size()
      << " shards of " << (shards.empty() ? 0 : shards.front().columns.size()) << '\n';
}

// ------------------------------------------------------------------ train

struct TrainOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::size_t threads = 1;
  std::optional<std::size_t> checkpoint_every;
};

const std::vector<std::string> kTrainExtraKeys = {"matrix", "shards", "out_dir",
                                                  "checkpoint_every"};

void cmd_train(const TrainOptions& o, std::ostream& out) {
  const fs::path config_path(o.config);
  const json j = read_json_file(config_path);
  std::vector<std::string> errors;
  FedRunConfig cfg = fed_config_from_json(j, errors, kTrainExtraKeys);
  if (o.seed) cfg.master_seed = *o.seed;
  for (const char* key : {"matrix", "shards"}) {
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_string())
      errors.push_back(std::string(key) + " (path) is required");
  }
  std::size_t checkpoint_every = 0;
  if (j.is_object() && j.contains("checkpoint_every")) {
    if (j.at("checkpoint_every").is_number_unsigned())
      checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
    else
      errors.push_back("checkpoint_every must be a non-negative integer");
  }
  if (o.checkpoint_every) checkpoint_every = *o.checkpoint_every;
  if (!errors.empty()) {
    throw Error(ErrorCode::kConfig, "invalid config " + config_path.string() + ": " +
                                        join(errors, "; "));
  }

  const fs::path base = config_path.parent_path();
  const fs::path matrix_path = resolve(base, j.at("matrix").get<std::string>());
  const fs::path shards_path = resolve(base, j.at("shards").get<std::string>());
  fs::path out_dir = o.out_dir.empty()
                         ? (j.contains("out_dir") ? resolve(base, j.at("out_dir").get<std::string>())
                                                  : fs::path("."))
                         : fs::path(o.out_dir);

  const CountMatrix matrix = load_labeled_matrix(matrix_path);
  const auto shards = read_shard_manifest(shards_path, &matrix);
  fs::create_directories(out_dir);

  const ojson effective = to_json(cfg);
  const std::string hash = config_hash(effective);
  ojson manifest;
  manifest["version"] = version();
  manifest["command"] = "train";
  manifest["config"] = effective;
  manifest["config_hash"] = hash;
  manifest["master_seed"] = cfg.master_seed;
  manifest["checkpoint_every"] = checkpoint_every;
  manifest["inputs"] = {
      {"matrix", {{"path", matrix_path.string()}, {"digest", file_digest(matrix_path.string())}}},
      {"shards", {{"path", shards_path.string()}, {"digest", file_digest(shards_path.string())}}}};
  manifest["outputs"] = {"metrics.jsonl", "model.W", "critic.txt", "topic_features.txt"};
  write_json_file(out_dir / "manifest.json", manifest);

  auto metrics_out = detail::open_output(out_dir / "metrics.jsonl");
  if (checkpoint_every > 0) fs::create_directories(out_dir / "checkpoints");
  auto observer = [&](const RoundMetrics& m, const ServerState& server) {
    std::string line = metrics_to_json_line(m);
    // Tag every record with the manifest it belongs to.
    line.insert(1, "\"config_hash\":\"" + hash + "\",");
    metrics_out << line << '\n';
    metrics_out.flush();
    if (checkpoint_every > 0 && m.round > 0 && m.round % checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "round_%06zu", m.round);
      save_topic_model(out_dir / "checkpoints" / (std::string(name) + ".W"), server.model);
      save_critic(out_dir / "checkpoints" / (std::string(name) + ".critic"), server.critic);
    }
  };
  const TrainingResult result = run_training(matrix, shards, cfg, o.threads, observer);

  save_topic_model(out_dir / "model.W", result.server.model);
  save_critic(out_dir / "critic.txt", result.server.critic);
  save_features(out_dir / "topic_features.txt", features_from_clients(result.clients));
  const auto& last = result.metrics.back();
  out << "trained rounds=" << last.round << " recon_loss=" << fixed6(last.mean_recon_loss)
      << " comm_bytes=" << last.cumulative_comm_bytes << " out=" << out_dir.string() << '\n';
}

// ------------------------------------------------------------------- eval

struct EvalOptions {
  std::string checkpoint;
  std::string vocab;
  std::string embeddings;
  std::string mode = "both";
  std::string features;
  std::string matrix;
  bool fold_in = false;
  std::size_t fold_in_iters = 200;
  std::size_t top_n = 10;
  ClassifierOptions classifier;
  std::string out_dir = ".";
};

void cmd_eval(const EvalOptions& o, std::ostream& out) {
  const bool want_coherence = o.mode == "coherence" || o.mode == "both";
  const bool want_classify = o.mode == "classify" || o.mode == "both";
  if (!want_coherence && !want_classify) {
    throw UsageError("--mode must be coherence, classify or both");
  }
  if (want_coherence && o.embeddings.empty()) {
    throw UsageError("--mode " + o.mode + " needs --embeddings");
  }
  if (want_classify && !o.fold_in && o.features.empty()) {
    throw UsageError("--mode " + o.mode + " needs --features (or --fold-in with --matrix)");
  }
  if (want_classify && o.fold_in && o.matrix.empty()) {
    throw UsageError("--fold-in needs --matrix");
  }

  const TopicModel model = load_topic_model(o.checkpoint);
  ojson options;
  options["checkpoint_digest"] = file_digest(o.checkpoint);
  options["mode"] = o.mode;
  options["top_n"] = o.top_n;
  options["fold_in"] = o.fold_in;
  options["fold_in_iters"] = o.fold_in_iters;
  options["split_ratio"] = o.classifier.split_ratio;
  options["seed"] = o.classifier.seed;
  options["epochs"] = o.classifier.epochs;
  options["learning_rate"] = o.classifier.learning_rate;
  const std::string hash = config_hash(options);
  const fs::path out_dir(o.out_dir);
  fs::create_directories(out_dir);

  std::vector<std::string> summary;
  if (want_coherence) {
    const fs::path vocab_path =
        o.vocab.empty() ? throw UsageError("--mode " + o.mode + " needs --vocab") : fs::path(o.vocab);
    const Vocabulary vocab = read_vocabulary(vocab_path);
    const EmbeddingTable table = load_embeddings(o.embeddings);
    const TopicReport report = model_coherence(model.W, vocab, table, o.top_n);
    write_json_file(out_dir / "coherence_report.json", coherence_json(report, o.top_n, hash));
    summary.push_back("coherence=" + fixed6(report.mean_coherence));
  }
  if (want_classify) {
    const Features f = o.fold_in
                           ? fold_in_features(model.W, load_labeled_matrix(o.matrix), o.fold_in_iters)
                           : load_features(o.features);
    const ClassificationReport report = train_classifier(f.values, f.labels, o.classifier);
    write_json_file(out_dir / "classification_report.json", classification_json(report, hash));
    summary.push_back("macro_f1=" + fixed6(report.macro_f1));
    summary.push_back("acc=" + fixed6(report.accuracy));
  }
  const std::string line = join(summary, " ");
  {
    auto s = detail::open_output(out_dir / "summary.txt");
    s << line << '\n';
  }
  out << line << '\n';
}

// ------------------------------------------------------------------ sweep

struct SweepOptions {
  std::string config;
  std::string out_dir = ".";
  std::size_t parallel = 1;
};

const std::vector<std::string> kSweepAxes = {"lambda", "topics", "batch_size", "epochs", "eta",
                                             "aggregator", "alpha", "clients", "seed"};

struct SweepCell {
  std::map<std::string, json> values;
  std::string status = "ok";
  std::string error;
  double final_recon_loss = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::optional<double> coherence;
};

void cmd_sweep(const SweepOptions& o, std::ostream& out) {
  const fs::path config_path(o.config);
  const json j = read_json_file(config_path);
  const fs::path base = config_path.parent_path();
  std::vector<std::string> errors;
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "sweep config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    static const std::vector<std::string> known = {"matrix", "vocab", "embeddings", "base",
                                                   "grid", "classifier", "top_n"};
    if (std::find(known.begin(), known.end(), key) == known.end())
      errors.push_back("unknown key '" + key + "'");
  }
  if (!j.contains("matrix") || !j["matrix"].is_string()) errors.push_back("matrix (path) is required");
  const json base_cfg = j.value("base", json::object());
  json base_fed = base_cfg;
  double base_alpha = 1.0;
  if (base_fed.is_object() && base_fed.contains("alpha")) {
    if (base_fed["alpha"].is_number()) base_alpha = base_fed["alpha"].get<double>();
    else errors.push_back("base.alpha must be a number");
    base_fed.erase("alpha");
  }
  {
    std::vector<std::string> base_errors;
    fed_config_from_json(base_fed, base_errors);
    for (auto& e : base_errors) errors.push_back("base: " + e);
  }
  const json grid = j.value("grid", json::object());
  std::vector<std::pair<std::string, std::vector<json>>> axes;
  if (!grid.is_object() || grid.empty()) errors.push_back("grid must be a nonempty object");
  else {
    for (const auto& axis : kSweepAxes) {
      if (!grid.contains(axis)) continue;
      const auto& vals = grid.at(axis);
      if (!vals.is_array() || vals.empty()) {
        errors.push_back("grid." + axis + " must be a nonempty array");
        continue;
      }
      axes.emplace_back(axis, std::vector<json>(vals.begin(), vals.end()));
    }
    for (const auto& [key, value] : grid.items()) {
      if (std::find(kSweepAxes.begin(), kSweepAxes.end(), key) == kSweepAxes.end())
        errors.push_back("grid has unknown axis '" + key + "'");
    }
  }
  ClassifierOptions copts;
  if (j.contains("classifier")) {
    const auto& c = j["classifier"];
    copts.epochs = c.value("epochs", copts.epochs);
    copts.learning_rate = c.value("learning_rate", copts.learning_rate);
    copts.split_ratio = c.value("split_ratio", copts.split_ratio);
  }
  const std::size_t top_n = j.value("top_n", std::size_t{10});
  if (!errors.empty()) {
    throw Error(ErrorCode::kConfig, "invalid sweep config " + config_path.string() + ": " +
                                        join(errors, "; "));
  }

  const fs::path matrix_path = resolve(base, j["matrix"].get<std::string>());
  const CountMatrix matrix = load_labeled_matrix(matrix_path);
  const auto global_p = label_distribution(matrix, std::max<std::size_t>(matrix.num_classes(), 1));
  std::optional<Vocabulary> vocab;
  std::optional<EmbeddingTable> table;
  if (j.contains("embeddings")) {
    table = load_embeddings(resolve(base, j["embeddings"].get<std::string>()));
    vocab = read_vocabulary(j.contains("vocab") ? resolve(base, j["vocab"].get<std::string>())
                                                : sidecar(matrix_path, ".vocab"));
  }

  // Cartesian product, last axis varying fastest.
  std::vector<SweepCell> cells(1);
  for (const auto& [axis, values] : axes) {
    std::vector<SweepCell> next;
    for (const auto& cell : cells)
      for (const auto& v : values) {
        SweepCell c = cell;
        c.values[axis] = v;
        next.push_back(std::move(c));
      }
    cells = std::move(next);
  }

  auto run_cell = [&](SweepCell& cell) {
    try {
      json fed = base_fed;
      double alpha = base_alpha;
      for (const auto& [axis, v] : cell.values) {
        if (axis == "alpha") alpha = v.get<double>();
        else if (axis == "seed") fed["master_seed"] = v;
        else fed[axis] = v;
      }
      std::vector<std::string> cell_errors;
      const FedRunConfig cfg = fed_config_from_json(fed, cell_errors);
      if (!cell_errors.empty()) throw Error(ErrorCode::kConfig, join(cell_errors, "; "));
      const auto shards =
          partition_clients(matrix, {cfg.clients, alpha, cfg.master_seed}, global_p);
      const TrainingResult result = run_training(matrix, shards, cfg, 1);
      cell.final_recon_loss = result.metrics.back().mean_recon_loss;
      const Features f = features_from_clients(result.clients);
      ClassifierOptions cell_copts = copts;
      cell_copts.seed = cfg.master_seed;
      const ClassificationReport report = train_classifier(f.values, f.labels, cell_copts);
      cell.macro_f1 = report.macro_f1;
      cell.accuracy = report.accuracy;
      if (table) {
        cell.coherence = model_coherence(result.server.model.W, *vocab, *table, top_n).mean_coherence;
      }
    } catch (const std::exception& e) {
      cell.status = "failed";
      cell.error = e.what();
      std::replace(cell.error.begin(), cell.error.end(), '\t', ' ');
      std::replace(cell.error.begin(), cell.error.end(), '\n', ' ');
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(o.parallel, 1), cells.size());
  if (workers <= 1) {
    for (auto& c : cells) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
      });
  }

  const fs::path out_dir(o.out_dir);
  fs::create_directories(out_dir);
  auto table_out = detail::open_output(out_dir / "sweep.tsv");
  for (const auto& axis : kSweepAxes) table_out << axis << '\t';
  table_out << "status\tfinal_recon_loss\tmacro_f1\taccuracy\tcoherence\terror\n";
  std::size_t failed = 0;
  for (const auto& cell : cells) {
    json fed = base_fed;
    double alpha = base_alpha;
    for (const auto& [axis, v] : cell.values) {
      if (axis == "alpha") alpha = v.get<double>();
      else if (axis == "seed") fed["master_seed"] = v;
      else fed[axis] = v;
    }
    std::vector<std::string> ignored;
    const FedRunConfig cfg = fed_config_from_json(fed, ignored);
    table_out << detail::format_double(cfg.sgd.lambda) << '\t' << cfg.topics << '\t'
              << cfg.sgd.batch_size << '\t' << cfg.sgd.epochs << '\t'
              << detail::format_double(cfg.sgd.eta) << '\t' << aggregator_name(cfg.aggregator)
              << '\t' << detail::format_double(alpha) << '\t' << cfg.clients << '\t'
              << cfg.master_seed << '\t' << cell.status << '\t';
    if (cell.status == "ok") {
      table_out << detail::format_double(cell.final_recon_loss) << '\t'
                << detail::format_double(cell.macro_f1) << '\t'
                << detail::format_double(cell.accuracy) << '\t'
                << (cell.coherence ? detail::format_double(*cell.coherence) : "NA") << '\t';
    } else {
      ++failed;
      table_out << "NA\tNA\tNA\tNA\t";
    }
    table_out << cell.error << '\n';
  }
  out << "sweep cells=" << cells.size() << " failed=" << failed
      << " table=" << (out_dir / "sweep.tsv").string() << '\n';
}

}  // namespace

std::string version() { return FEDNMF_VERSION; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated NMF topic modeling with a mutual-information regularizer", "fednmf"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  PrepareOptions prep;
  auto* prepare = app.add_subcommand("prepare", "Corpus file -> vocabulary + count matrix");
  prepare->add_option("--corpus", prep.corpus, "label<TAB>text per line")->required();
  prepare->add_option("--stopwords", prep.stopwords, "One stopword per line");
  prepare->add_option("--min-count", prep.min_count, "Minimum corpus frequency")
      ->check(CLI::PositiveNumber);
  prepare->add_option("--out", prep.out, "Output count matrix path")->required();
  prepare->add_option("--train-ratio", prep.train_ratio,
                      "Also split into <out> (train) and <out>.test");
  prepare->add_option("--seed", prep.seed, "Seed for the train/test split");

  PartitionOptions part;
  auto* partition = app.add_subcommand("partition", "Dirichlet label-skew client shards");
  partition->add_option("--matrix", part.matrix, "Count matrix (labels read from <matrix>.labels)")
      ->required();
  partition->add_option("--clients", part.clients, "Number of clients K")->check(CLI::PositiveNumber);
  partition->add_option("--alpha", part.alpha, "Dirichlet concentration");
  partition->add_option("--seed", part.seed, "Partition seed");
  partition->add_option("--out", part.out, "Shard manifest path")->required();

  TrainOptions train;
  std::uint64_t train_seed = 0;
  std::size_t checkpoint_every = 0;
  auto* trainc = app.add_subcommand("train", "Federated training from a JSON run config");
  trainc->add_option("--config", train.config, "Run config (JSON)")->required();
  auto* seed_opt = trainc->add_option("--seed", train_seed, "Override master_seed");
  trainc->add_option("--out-dir", train.out_dir, "Output directory");
  trainc->add_option("--threads", train.threads, "Parallel client workers")
      ->check(CLI::PositiveNumber);
  auto* ckpt_opt =
      trainc->add_option("--checkpoint-every", checkpoint_every, "Checkpoint period in rounds");

  EvalOptions ev;
  auto* evalc = app.add_subcommand("eval", "Topic coherence and downstream classification");
  evalc->add_option("--checkpoint", ev.checkpoint, "Topic model (W) file")->required();
  evalc->add_option("--vocab", ev.vocab, "Vocabulary file");
  evalc->add_option("--embeddings", ev.embeddings, "Word embeddings (word v1 ... vd)");
  evalc->add_option("--mode", ev.mode, "coherence | classify | both");
  evalc->add_option("--features", ev.features, "topic_features.txt from train");
  evalc->add_option("--matrix", ev.matrix, "Count matrix to fold in");
  evalc->add_flag("--fold-in", ev.fold_in, "Infer features for --matrix with W fixed");
  evalc->add_option("--fold-in-iters", ev.fold_in_iters, "Projected gradient iterations");
  evalc->add_option("--top-n", ev.top_n, "Top words per topic")->check(CLI::PositiveNumber);
  evalc->add_option("--split-ratio", ev.classifier.split_ratio, "Classifier train fraction");
  evalc->add_option("--seed", ev.classifier.seed, "Classifier split seed");
  evalc->add_option("--classifier-epochs", ev.classifier.epochs, "Gradient descent epochs");
  evalc->add_option("--learning-rate", ev.classifier.learning_rate, "Classifier learning rate");
  evalc->add_option("--out-dir", ev.out_dir, "Report directory");

  SweepOptions sw;
  auto* sweep = app.add_subcommand("sweep", "Grid of training runs -> one table");
  sweep->add_option("--config", sw.config, "Sweep grid (JSON)")->required();
  sweep->add_option("--out-dir", sw.out_dir, "Output directory");
  sweep->add_option("--parallel", sw.parallel, "Cells run concurrently")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (prepare->parsed()) {
      cmd_prepare(prep, out);
    } else if (partition->parsed()) {
      cmd_partition(part, out);
    } else if (trainc->parsed()) {
      if (seed_opt->count()) train.seed = train_seed;
      if (ckpt_opt->count()) train.checkpoint_every = checkpoint_every;
      cmd_train(train, out);
    } else if (evalc->parsed()) {
      cmd_eval(ev, out);
    } else if (sweep->parsed()) {
      cmd_sweep(sw, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << error_code_name(e.code()) << ": " << msg << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace fednmf::cli
