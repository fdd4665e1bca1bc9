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

#include "fednmf/run_config.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "fednmf/error.hpp"

namespace fednmf {
namespace {

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t fnv1a(std::uint64_t h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

template <typename T>
void read_number(const nlohmann::json& j, const char* key, T& out,
                 std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) {
      errors.push_back(std::string(key) + " must be a number");
      return;
    }
    out = v.get<T>();
  } else {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0)) {
      errors.push_back(std::string(key) + " must be a non-negative integer");
      return;
    }
    out = v.get<T>();
  }
}

}  // namespace

const std::vector<std::string>& fed_config_keys() {
  static const std::vector<std::string> keys = {
      "clients", "participation", "rounds",    "topics", "eta",       "lambda",
      "batch_size", "epochs",     "aggregator", "server_lr", "beta1", "beta2",
      "adapt_eps", "master_seed", "init_scale"};
  return keys;
}

FedRunConfig fed_config_from_json(const nlohmann::json& j, std::vector<std::string>& errors,
                                  const std::vector<std::string>& extra_keys) {
  FedRunConfig c;
  if (!j.is_object()) {
    errors.push_back("config must be a JSON object");
    return c;
  }
  const auto& keys = fed_config_keys();
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end() &&
        std::find(extra_keys.begin(), extra_keys.end(), key) == extra_keys.end()) {
      errors.push_back("unknown key '" + key + "'");
    }
  }
  read_number(j, "clients", c.clients, errors);
  read_number(j, "participation", c.participation, errors);
  read_number(j, "rounds", c.rounds, errors);
  read_number(j, "topics", c.topics, errors);
  read_number(j, "eta", c.sgd.eta, errors);
  read_number(j, "lambda", c.sgd.lambda, errors);
  read_number(j, "batch_size", c.sgd.batch_size, errors);
  read_number(j, "epochs", c.sgd.epochs, errors);
  read_number(j, "server_lr", c.server_lr, errors);
  read_number(j, "beta1", c.beta1, errors);
  read_number(j, "beta2", c.beta2, errors);
  read_number(j, "adapt_eps", c.adapt_eps, errors);
  read_number(j, "master_seed", c.master_seed, errors);
  read_number(j, "init_scale", c.init_scale, errors);
  if (j.contains("aggregator")) {
    const auto& v = j.at("aggregator");
    std::optional<Aggregator> a;
    if (v.is_string()) a = parse_aggregator(v.get<std::string>());
    if (a) {
      c.aggregator = *a;
    } else {
      errors.push_back("aggregator must be one of FedAvg, FedAdagrad, FedYogi, FedAdam");
    }
  }
  for (auto& e : c.validate()) errors.push_back(std::move(e));
  return c;
}

nlohmann::ordered_json to_json(const FedRunConfig& c) {
  nlohmann::ordered_json j;
  j["clients"] = c.clients;
  j["participation"] = c.participation;
  j["rounds"] = c.rounds;
  j["topics"] = c.topics;
  j["eta"] = c.sgd.eta;
  j["lambda"] = c.sgd.lambda;
  j["batch_size"] = c.sgd.batch_size;
  j["epochs"] = c.sgd.epochs;
  j["aggregator"] = std::string(aggregator_name(c.aggregator));
  j["server_lr"] = c.server_lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adapt_eps"] = c.adapt_eps;
  j["master_seed"] = c.master_seed;
  j["init_scale"] = c.init_scale;
  return j;
}

std::string config_hash(const nlohmann::ordered_json& j) {
  const std::string s = j.dump();
  return hex64(fnv1a(kFnvOffset, s.data(), s.size()));
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a(h, buf, static_cast<std::size_t>(in.gcount()));
  }
  return hex64(h);
}

}  // namespace fednmf
