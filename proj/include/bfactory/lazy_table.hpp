// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <atomic>
#include <bit>
#include <cstddef>
#include <memory>
#include <mutex>

#include "bfactory/errors.hpp"

namespace bfactory {

/// Append-only memo table filled in index order on demand.
///
/// Readers of already published entries never lock: storage is a list of
/// chunks of doubling size, so published entries never move. Extension runs
/// under a mutex and calls `extend(i, table)` for each missing index i in
/// increasing order; inside `extend`, `table.published(j)` is valid for j < i.
template <class T>
class LazyTable {
 public:
  LazyTable() = default;
  LazyTable(const LazyTable&) = delete;
  LazyTable& operator=(const LazyTable&) = delete;

  std::size_t size() const { return ready_.load(std::memory_order_acquire); }

  template <class Extend>
  const T& get(std::size_t index, Extend&& extend) const {
    if (index < ready_.load(std::memory_order_acquire)) return slot(index);
    std::lock_guard lock(mutex_);
    std::size_t n = ready_.load(std::memory_order_relaxed);
    while (n <= index) {
      auto [chunk, offset] = locate(n);
      if (chunk >= kMaxChunks) throw Error("memo table capacity exceeded");
      if (!chunks_[chunk]) chunks_[chunk] = std::make_unique<T[]>(chunk_size(chunk));
      chunks_[chunk][offset] = extend(n, *this);
      ++n;
      ready_.store(n, std::memory_order_release);
    }
    return slot(index);
  }

  /// Entry access for indices below size(); used from inside `extend`.
  const T& published(std::size_t index) const { return slot(index); }

 private:
  static constexpr std::size_t kBase = 64;
  static constexpr std::size_t kMaxChunks = 40;

  static std::size_t chunk_size(std::size_t chunk) { return kBase << chunk; }

  static std::pair<std::size_t, std::size_t> locate(std::size_t index) {
    const std::size_t m = index / kBase + 1;
    const std::size_t chunk = static_cast<std::size_t>(std::bit_width(m)) - 1;
    const std::size_t first = kBase * ((std::size_t{1} << chunk) - 1);
    return {chunk, index - first};
  }

  const T& slot(std::size_t index) const {
    auto [chunk, offset] = locate(index);
    return chunks_[chunk][offset];
  }

  mutable std::mutex mutex_;
  mutable std::atomic<std::size_t> ready_{0};
  mutable std::array<std::unique_ptr<T[]>, kMaxChunks> chunks_{};
};

}  // namespace bfactory
