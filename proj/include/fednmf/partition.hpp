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
#include <span>
#include <vector>

#include "fednmf/corpus.hpp"
#include "fednmf/rng.hpp"

namespace fednmf {

struct PartitionSpec {
  std::size_t clients = 1;
  double alpha = 1.0;
  std::uint64_t seed = 0;
};

struct ClientShard {
  std::size_t client_id = 0;
  /// Column indices into the source CountMatrix, in draw order.
  std::vector<std::size_t> columns;
  /// Realized per-label document counts.
  std::vector<std::size_t> label_mix;

  bool operator==(const ClientShard&) const = default;
};

/// Gamma(shape, 1) variate, Marsaglia-Tsang with the U^(1/a) boost for a < 1.
double sample_gamma(double shape, Rng& rng);

/// Draws from Dir(concentration). Gammas are combined in log space, so tiny
/// concentrations (alpha -> 0) still return a valid simplex point.
std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng);

/// Empirical label distribution of `matrix` over `num_classes` labels.
std::vector<double> label_distribution(const CountMatrix& matrix, std::size_t num_classes);

/// Label-skewed equal-size shards. Each client draws q ~ Dir(alpha * p) and
/// takes floor(N/K) documents. Label counts come from systematic sampling of q
/// renormalized over labels whose pool still has documents (then p, then
/// uniform when q has no mass there); documents leave their label's pool
/// without replacement. N mod K documents are left out.
std::vector<ClientShard> partition_clients(const CountMatrix& matrix, const PartitionSpec& spec,
                                           std::span<const double> global_p);

/// `client_id: col,col,...` per line.
void write_shard_manifest(const std::filesystem::path& path, std::span<const ClientShard> shards);
/// label_mix is recomputed from `matrix` when given.
std::vector<ClientShard> read_shard_manifest(const std::filesystem::path& path,
                                             const CountMatrix* matrix = nullptr);

}  // namespace fednmf
