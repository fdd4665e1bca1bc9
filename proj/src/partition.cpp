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

#include "fednmf/partition.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "fednmf/error.hpp"
#include "text_util.hpp"

namespace fednmf {
namespace {

// Marsaglia-Tsang for shape >= 1, returned as log(x).
double log_gamma_ge1(double shape, Rng& rng) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - uniform01(rng);  // (0, 1]
    if (u < 1.0 - 0.0331 * x * x * x * x) return std::log(d * v);
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return std::log(d * v);
  }
}

double log_gamma_variate(double shape, Rng& rng) {
  if (shape >= 1.0) return log_gamma_ge1(shape, rng);
  // G(a) = G(a + 1) * U^(1/a); in log space the power cannot underflow.
  const double lg = log_gamma_ge1(shape + 1.0, rng);
  const double u = 1.0 - uniform01(rng);
  return lg + std::log(u) / shape;
}

}  // namespace

double sample_gamma(double shape, Rng& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw Error(ErrorCode::kInvalidConcentration, "gamma shape must be positive and finite");
  }
  return std::exp(log_gamma_variate(shape, rng));
}

std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng) {
  if (concentration.empty()) {
    throw Error(ErrorCode::kInvalidConcentration, "empty concentration vector");
  }
  for (double c : concentration) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw Error(ErrorCode::kInvalidConcentration,
                  "concentration entry " + detail::format_double(c) + " is not positive");
    }
  }
  std::vector<double> logs(concentration.size());
  for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = log_gamma_variate(concentration[i], rng);
  const double top = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (auto& l : logs) {
    l = std::exp(l - top);
    sum += l;
  }
  for (auto& l : logs) l /= sum;
  return logs;
}

std::vector<double> label_distribution(const CountMatrix& matrix, std::size_t num_classes) {
  std::vector<double> p(num_classes, 0.0);
  if (matrix.cols() == 0) return p;
  for (std::size_t label : matrix.labels) {
    if (label >= num_classes) {
      throw Error(ErrorCode::kInvalidArgument, "label " + std::to_string(label) +
                                                   " outside " + std::to_string(num_classes) +
                                                   " classes");
    }
    p[label] += 1.0;
  }
  for (auto& x : p) x /= static_cast<double>(matrix.cols());
  return p;
}

std::vector<ClientShard> partition_clients(const CountMatrix& matrix, const PartitionSpec& spec,
                                           std::span<const double> global_p) {
  if (spec.clients < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one client");
  if (!(spec.alpha > 0.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be positive");
  const std::size_t n = matrix.cols();
  if (n < spec.clients) {
    throw Error(ErrorCode::kTooFewDocuments, std::to_string(n) + " documents for " +
                                                 std::to_string(spec.clients) + " clients");
  }
  const std::size_t num_classes = global_p.size();
  double p_sum = 0.0;
  for (double x : global_p) {
    if (x < 0.0) throw Error(ErrorCode::kInvalidArgument, "global_p has a negative entry");
    p_sum += x;
  }
  if (std::abs(p_sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "global_p does not sum to 1");
  }

  Rng rng(spec.seed);
  std::vector<std::vector<std::size_t>> pools(num_classes);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t label = matrix.labels.at(j);
    if (label >= num_classes) {
      throw Error(ErrorCode::kInvalidArgument,
                  "column " + std::to_string(j) + " has label outside global_p");
    }
    pools[label].push_back(j);
  }
  for (auto& pool : pools) shuffle(std::span<std::size_t>(pool), rng);

  std::vector<std::size_t> support;
  for (std::size_t c = 0; c < num_classes; ++c)
    if (global_p[c] > 0.0) support.push_back(c);

  const std::size_t per_client = n / spec.clients;
  std::vector<ClientShard> shards(spec.clients);
  std::vector<double> concentration(support.size());
  std::vector<double> q(num_classes);
  const std::vector<double> global_p_copy(global_p.begin(), global_p.end());
  const std::vector<double> ones(num_classes, 1.0);
  for (std::size_t i = 0; i < spec.clients; ++i) {
    for (std::size_t s = 0; s < support.size(); ++s)
      concentration[s] = spec.alpha * global_p[support[s]];
    const auto draw = sample_dirichlet(concentration, rng);
    std::fill(q.begin(), q.end(), 0.0);
    for (std::size_t s = 0; s < support.size(); ++s) q[support[s]] = draw[s];

    auto& shard = shards[i];
    shard.client_id = i;
    shard.label_mix.assign(num_classes, 0);
    shard.columns.reserve(per_client);
    std::size_t remaining = per_client;
    while (remaining > 0) {
      // Weights restricted to nonempty pools: q, else global_p, else uniform.
      std::vector<double> w(num_classes, 0.0);
      double mass = 0.0;
      for (const std::vector<double>* source :
           std::array<const std::vector<double>*, 3>{&q, &global_p_copy, &ones}) {
        mass = 0.0;
        for (std::size_t c = 0; c < num_classes; ++c) {
          w[c] = pools[c].empty() ? 0.0 : (*source)[c];
          mass += w[c];
        }
        if (mass > 0.0) break;
      }
      // Systematic sampling: `remaining` evenly spaced points with one
      // uniform offset, mapped through the cumulative weights.
      const double u = uniform01(rng);
      const double r = static_cast<double>(remaining);
      auto below = [&](double y) {
        const double k = std::ceil(y / mass * r - u);
        return static_cast<std::size_t>(std::clamp(k, 0.0, r));
      };
      double cum = 0.0;
      std::size_t prev = 0;
      std::size_t last = 0;
      for (std::size_t c = 0; c < num_classes; ++c)
        if (w[c] > 0.0) last = c;
      std::size_t taken = 0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        if (!(w[c] > 0.0)) continue;
        cum += w[c];
        const std::size_t upto = c == last ? remaining : below(cum);
        const std::size_t take = std::min(upto - prev, pools[c].size());
        prev = upto;
        for (std::size_t t = 0; t < take; ++t) {
          shard.columns.push_back(pools[c].back());
          pools[c].pop_back();
        }
        shard.label_mix[c] += take;
        taken += take;
      }
      remaining -= taken;
    }
  }
  return shards;
}

void write_shard_manifest(const std::filesystem::path& path, std::span<const ClientShard> shards) {
  auto out = detail::open_output(path);
  for (const auto& s : shards) {
    out << s.client_id << ':';
    for (std::size_t i = 0; i < s.columns.size(); ++i) out << (i == 0 ? " " : ",") << s.columns[i];
    out << '\n';
  }
}

std::vector<ClientShard> read_shard_manifest(const std::filesystem::path& path,
                                             const CountMatrix* matrix) {
  auto in = detail::open_input(path);
  std::vector<ClientShard> shards;
  std::string line;
  const std::size_t num_classes = matrix ? matrix->num_classes() : 0;
  while (std::getline(in, line)) {
    auto body = detail::trim(line);
    if (body.empty()) continue;
    auto colon = body.find(':');
    if (colon == std::string_view::npos) {
      throw Error(ErrorCode::kParse, path.string() + ": expected 'client_id: cols'");
    }
    ClientShard shard;
    shard.client_id = detail::parse_int<std::size_t>(detail::trim(body.substr(0, colon)), "client id");
    if (shard.client_id != shards.size()) {
      throw Error(ErrorCode::kParse, path.string() + ": client ids must be 0..K-1 in order");
    }
    auto rest = detail::trim(body.substr(colon + 1));
    while (!rest.empty()) {
      auto comma = rest.find(',');
      auto tok = detail::trim(rest.substr(0, comma));
      shard.columns.push_back(detail::parse_int<std::size_t>(tok, "column index"));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (matrix) {
      shard.label_mix.assign(num_classes, 0);
      for (std::size_t c : shard.columns) {
        if (c >= matrix->cols()) {
          throw Error(ErrorCode::kDimensionMismatch,
                      "shard column " + std::to_string(c) + " outside the matrix");
        }
        ++shard.label_mix[matrix->labels[c]];
      }
    }
    shards.push_back(std::move(shard));
  }
  return shards;
}

}  // namespace fednmf
