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
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace fednmf {

// Engine plus portable distributions; outputs match across standard libraries.
using Rng = std::mt19937_64;

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Folds an ordered list of words into one seed. Used to derive independent
/// streams such as (master_seed, client_id, round).
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

/// Uniform on [0, 1) with 53 bits of resolution.
double uniform01(Rng& rng);

/// Uniform integer on [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Standard normal via the Marsaglia polar method (no cached second value,
/// so the stream position depends only on the number of calls).
double standard_normal(Rng& rng);

template <typename T>
void shuffle(std::span<T> values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(values[i - 1], values[j]);
  }
}

}  // namespace fednmf
