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

#include <string>
#include <vector>

#include "json.hpp"

#include "fednmf/federation.hpp"

namespace fednmf {

/// Keys understood by fed_config_from_json, one per FedRunConfig field:
/// clients, participation, rounds, topics, eta, lambda, batch_size, epochs,
/// aggregator, server_lr, beta1, beta2, adapt_eps, master_seed, init_scale.
const std::vector<std::string>& fed_config_keys();

/// Reads the keys above (absent keys keep their defaults). Type errors,
/// unknown keys, and range violations are all appended to `errors`; nothing
/// is thrown. Keys listed in `extra_keys` are ignored.
FedRunConfig fed_config_from_json(const nlohmann::json& j, std::vector<std::string>& errors,
                                  const std::vector<std::string>& extra_keys = {});

/// Every field, including defaults, in a fixed key order.
nlohmann::ordered_json to_json(const FedRunConfig& config);

/// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string config_hash(const nlohmann::ordered_json& j);

/// 16 hex digits of FNV-1a over a file's bytes.
std::string file_digest(const std::string& path);

}  // namespace fednmf
