#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "caps/replay/replay.hpp"
#include "caps/util/errors.hpp"

namespace caps::replay {

void ReplayConfig::validate() const {
  if (global_capacity < 1) throw ConfigError("replay.global_capacity must be >= 1");
  if (local_capacity < 1) throw ConfigError("replay.local_capacity must be >= 1");
  if (flush_every < 1 || flush_every > local_capacity)
    throw ConfigError("replay.flush_every must lie in [1, local_capacity]");
  if (!(per_alpha >= 0.0) || !std::isfinite(per_alpha)) throw ConfigError("replay.per_alpha must be >= 0");
  if (!(per_beta >= 0.0 && per_beta <= 1.0)) throw ConfigError("replay.per_beta must lie in [0, 1]");
  if (!(priority_eps > 0.0)) throw ConfigError("replay.priority_eps must be positive");
}

SumTree::SumTree(std::size_t capacity) : capacity_(capacity), leaves_(1) {
  if (capacity == 0) throw std::invalid_argument("SumTree capacity must be positive");
  while (leaves_ < capacity) leaves_ <<= 1;
  sum_.assign(2 * leaves_, 0.0);
  max_.assign(2 * leaves_, 0.0);
}

void SumTree::set(std::size_t index, double value) {
  if (index >= capacity_) throw std::out_of_range("SumTree index out of range");
  if (!(value >= 0.0) || !std::isfinite(value)) throw std::invalid_argument("SumTree values must be finite and >= 0");
  std::size_t i = leaves_ + index;
  sum_[i] = value;
  max_[i] = value;
  for (i >>= 1; i >= 1; i >>= 1) {
    sum_[i] = sum_[2 * i] + sum_[2 * i + 1];
    max_[i] = std::max(max_[2 * i], max_[2 * i + 1]);
  }
}

std::size_t SumTree::find(double prefix) const {
  std::size_t i = 1;
  while (i < leaves_) {
    const double left = sum_[2 * i];
    if (prefix < left || sum_[2 * i + 1] <= 0.0) {
      i = 2 * i;
    } else {
      prefix -= left;
      i = 2 * i + 1;
    }
  }
  return std::min(i - leaves_, capacity_ - 1);
}

LocalBuffer::LocalBuffer(std::size_t capacity, int actor_id) : capacity_(capacity), actor_id_(actor_id) {
  if (capacity == 0) throw std::invalid_argument("LocalBuffer capacity must be positive");
}

void LocalBuffer::push(Transition t) {
  if (size() == capacity_) {
    ++head_;
    ++evicted_;
  }
  items_.push_back(std::move(t));
  if (head_ > capacity_) {
    items_.erase(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }
}

std::vector<Transition> LocalBuffer::drain() {
  std::vector<Transition> out(std::make_move_iterator(items_.begin() + static_cast<std::ptrdiff_t>(head_)),
                              std::make_move_iterator(items_.end()));
  items_.clear();
  head_ = 0;
  return out;
}

GlobalBuffer::GlobalBuffer(const ReplayConfig& cfg)
    : cfg_(cfg),
      slots_(cfg.global_capacity),
      slot_id_(cfg.global_capacity, 0),
      priority_(cfg.global_capacity, 0.0),
      tree_(cfg.global_capacity),
      raw_(cfg.global_capacity) {
  cfg_.validate();
}

void GlobalBuffer::add_batch(std::vector<Transition> batch) {
  std::lock_guard lock(mutex_);
  const double p = size_ == 0 ? 1.0 : raw_.max();
  const double pa = std::pow(p, cfg_.per_alpha);
  for (auto& t : batch) {
    const std::size_t slot = static_cast<std::size_t>(next_id_ % cfg_.global_capacity);
    slots_[slot] = std::make_shared<const Transition>(std::move(t));
    slot_id_[slot] = next_id_;
    priority_[slot] = p;
    tree_.set(slot, pa);
    raw_.set(slot, p);
    ++next_id_;
    if (size_ < cfg_.global_capacity) ++size_;
  }
}

SampledBatch GlobalBuffer::sample(std::size_t batch_size, Rng& rng) const {
  std::lock_guard lock(mutex_);
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (size_ < batch_size)
    throw std::runtime_error("replay holds " + std::to_string(size_) + " transitions, fewer than batch size " +
                             std::to_string(batch_size));
  SampledBatch out;
  out.items.reserve(batch_size);
  out.weights.reserve(batch_size);
  out.ids.reserve(batch_size);
  const bool prioritized = cfg_.mode == SampleMode::prioritized && tree_.total() > 0.0;
  const double total = tree_.total();
  const double n = static_cast<double>(size_);
  double max_w = 0.0;
  for (std::size_t k = 0; k < batch_size; ++k) {
    std::size_t slot;
    double w = 1.0;
    if (prioritized) {
      slot = tree_.find(rng.uniform() * total);
      const double prob = tree_.get(slot) / total;
      w = std::pow(n * prob, -cfg_.per_beta);
    } else {
      slot = rng.index(size_);
    }
    max_w = std::max(max_w, w);
    out.items.push_back(slots_[slot]);
    out.ids.push_back(slot_id_[slot]);
    out.weights.push_back(w);
  }
  if (prioritized)
    for (auto& w : out.weights) w /= max_w;
  return out;
}

void GlobalBuffer::update_priorities(std::span<const std::uint64_t> ids, std::span<const double> td_errors) {
  if (ids.size() != td_errors.size()) throw std::invalid_argument("ids and td_errors differ in length");
  std::lock_guard lock(mutex_);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const std::size_t slot = static_cast<std::size_t>(ids[k] % cfg_.global_capacity);
    if (ids[k] >= next_id_ || slot_id_[slot] != ids[k] || !slots_[slot]) continue;
    const double p = std::fabs(td_errors[k]) + cfg_.priority_eps;
    if (!std::isfinite(p)) continue;
    priority_[slot] = p;
    tree_.set(slot, std::pow(p, cfg_.per_alpha));
    raw_.set(slot, p);
  }
}

std::size_t GlobalBuffer::size() const {
  std::lock_guard lock(mutex_);
  return size_;
}

std::uint64_t GlobalBuffer::inserted() const {
  std::lock_guard lock(mutex_);
  return next_id_;
}

std::uint64_t GlobalBuffer::evicted() const {
  std::lock_guard lock(mutex_);
  return next_id_ - size_;
}

double GlobalBuffer::priority_sum() const {
  std::lock_guard lock(mutex_);
  return tree_.total();
}

double GlobalBuffer::rescan_sum() const {
  std::lock_guard lock(mutex_);
  double s = 0.0;
  for (std::size_t i = 0; i < cfg_.global_capacity; ++i)
    if (slots_[i]) s += std::pow(priority_[i], cfg_.per_alpha);
  return s;
}

double GlobalBuffer::max_priority() const {
  std::lock_guard lock(mutex_);
  return size_ == 0 ? 1.0 : raw_.max();
}

std::vector<double> GlobalBuffer::resident_priorities() const {
  std::lock_guard lock(mutex_);
  std::vector<double> out;
  for (std::size_t i = 0; i < cfg_.global_capacity; ++i)
    if (slots_[i]) out.push_back(priority_[i]);
  return out;
}

std::shared_ptr<const Transition> GlobalBuffer::get(std::uint64_t id) const {
  std::lock_guard lock(mutex_);
  const std::size_t slot = static_cast<std::size_t>(id % cfg_.global_capacity);
  if (id >= next_id_ || slot_id_[slot] != id) return nullptr;
  return slots_[slot];
}

}  // namespace caps::replay
