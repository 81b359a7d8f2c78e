#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "caps/replay/transition.hpp"
#include "caps/util/rng.hpp"

namespace caps::replay {

// One environment step as seen by an actor.
struct StepRecord {
  StackedObs obs;
  std::array<double, 2> action{};
  double reward = 0.0;
  StackedObs next_obs;
  bool terminal = false;     // no bootstrap beyond this step
  bool episode_end = false;  // terminal or truncated (timeout)
};

// n-step transition from the first min(n, steps to episode end) records of
// `window`. Throws std::invalid_argument on an empty window or n < 1.
Transition make_n_step(std::span<const StepRecord> window, double gamma, int n);

// Binary sum tree with a parallel max tree over `capacity` leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);
  std::size_t capacity() const { return capacity_; }
  void set(std::size_t index, double value);
  double get(std::size_t index) const { return sum_[leaves_ + index]; }
  double total() const { return sum_[1]; }
  double max() const { return max_[1]; }
  // Leaf whose cumulative range contains `prefix` (clamped to occupied mass).
  std::size_t find(double prefix) const;

 private:
  std::size_t capacity_;
  std::size_t leaves_;
  std::vector<double> sum_;
  std::vector<double> max_;
};

class LocalBuffer {
 public:
  LocalBuffer(std::size_t capacity, int actor_id);
  void push(Transition t);
  std::size_t size() const { return items_.size() - head_; }
  std::size_t capacity() const { return capacity_; }
  int actor_id() const { return actor_id_; }
  std::uint64_t evicted() const { return evicted_; }
  // Removes and returns all held transitions, oldest first.
  std::vector<Transition> drain();

 private:
  std::size_t capacity_;
  int actor_id_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;
  std::uint64_t evicted_ = 0;
};

enum class SampleMode { uniform, prioritized };

struct ReplayConfig {
  std::size_t global_capacity = 45000;
  std::size_t local_capacity = 2000;
  std::size_t flush_every = 200;
  SampleMode mode = SampleMode::prioritized;
  double per_alpha = 0.6;
  double per_beta = 0.4;
  double priority_eps = 1e-6;
  void validate() const;
};

struct SampledBatch {
  std::vector<std::shared_ptr<const Transition>> items;
  std::vector<double> weights;
  std::vector<std::uint64_t> ids;  // insertion ids, for priority updates
};

// Ring of transitions with oldest-first eviction and prioritized sampling.
// Inserts may come from several threads; every public member locks.
class GlobalBuffer {
 public:
  explicit GlobalBuffer(const ReplayConfig& cfg);

  // Appends in order with priority = current max resident priority (1 when empty).
  void add_batch(std::vector<Transition> batch);
  SampledBatch sample(std::size_t batch_size, Rng& rng) const;
  // priority <- |td| + eps; ids no longer resident are skipped.
  void update_priorities(std::span<const std::uint64_t> ids, std::span<const double> td_errors);

  std::size_t size() const;
  std::size_t capacity() const { return cfg_.global_capacity; }
  std::uint64_t inserted() const;
  std::uint64_t evicted() const;
  double priority_sum() const;  // sum-tree root (of priority^alpha)
  double rescan_sum() const;    // full recomputation over resident slots
  double max_priority() const;
  std::vector<double> resident_priorities() const;  // slot order
  // Resident transition with insertion id `id`, or null.
  std::shared_ptr<const Transition> get(std::uint64_t id) const;

 private:
  ReplayConfig cfg_;
  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<const Transition>> slots_;
  std::vector<std::uint64_t> slot_id_;
  std::vector<double> priority_;
  SumTree tree_;   // priority^alpha
  SumTree raw_;    // raw priorities, for the running max
  std::uint64_t next_id_ = 0;
  std::size_t size_ = 0;
};

}  // namespace caps::replay
