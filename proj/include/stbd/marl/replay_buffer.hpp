#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "stbd/marl/episode.hpp"

namespace stbd::marl {

// Episode-granular ring buffer; evicts strictly oldest-first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000) : capacity_(capacity) {
    if (capacity_ == 0) throw ValidationError("replay buffer capacity must be positive");
    slots_.reserve(std::min<std::size_t>(capacity_, 1024));
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }
  std::uint64_t insertions() const { return inserted_; }

  void insert(EpisodeRecord episode) {
    auto ptr = std::make_shared<const EpisodeRecord>(std::move(episode));
    if (slots_.size() < capacity_) {
      slots_.push_back(std::move(ptr));
    } else {
      slots_[head_] = std::move(ptr);
      head_ = (head_ + 1) % capacity_;
    }
    ++inserted_;
  }

  // Oldest first.
  const EpisodeRecord& at(std::size_t i) const {
    const std::size_t idx = slots_.size() < capacity_ ? i : (head_ + i) % capacity_;
    return *slots_.at(idx);
  }

  // Uniform sample of min(count, size) distinct episodes.
  std::vector<std::shared_ptr<const EpisodeRecord>> sample(std::size_t count, std::mt19937_64& rng) const {
    std::vector<std::size_t> idx(slots_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t k = std::min(count, idx.size());
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<std::shared_ptr<const EpisodeRecord>> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(slots_[idx[i]]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<std::shared_ptr<const EpisodeRecord>> slots_;
  std::size_t head_ = 0;
  std::uint64_t inserted_ = 0;
};

}  // namespace stbd::marl
