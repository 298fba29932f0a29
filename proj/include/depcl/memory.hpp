#ifndef DEPCL_MEMORY_HPP
#define DEPCL_MEMORY_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "depcl/datagen.hpp"
#include "depcl/errors.hpp"
#include "depcl/random.hpp"

namespace depcl {

/// Classic single-pass reservoir (Algorithm R) of capacity k.
template <typename Item>
class Reservoir {
 public:
  explicit Reservoir(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("reservoir capacity must be >= 1");
    buffer_.reserve(capacity);
  }

  void offer(const Item& item, Rng& rng) {
    ++seen_;
    if (buffer_.size() < capacity_) {
      buffer_.push_back(item);
      return;
    }
    const auto j = rng.uniform_int(0, static_cast<std::int64_t>(seen_) - 1);
    if (static_cast<std::size_t>(j) < capacity_) buffer_[static_cast<std::size_t>(j)] = item;
  }

  const std::vector<Item>& items() const noexcept { return buffer_; }
  std::size_t seen() const noexcept { return seen_; }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t seen_ = 0;
  std::vector<Item> buffer_;
};

struct MemoryPolicy {
  enum class Kind { full, fixed, random, reservoir };

  Kind kind = Kind::full;
  /// fixed: R_t for each past task (0-based sample indices); entries beyond current_T-1 ignored.
  std::vector<std::vector<int>> fixed_rows;
  /// random: b_t per past task; a single entry applies to every task.
  std::vector<int> budgets;
  /// reservoir: total buffer size over all past tasks.
  int reservoir_budget = 1;
  std::uint64_t seed = 0;

  static MemoryPolicy full() { return {}; }
  static MemoryPolicy fixed(std::vector<std::vector<int>> rows) {
    MemoryPolicy p;
    p.kind = Kind::fixed;
    p.fixed_rows = std::move(rows);
    return p;
  }
  static MemoryPolicy random(int b, std::uint64_t seed) {
    MemoryPolicy p;
    p.kind = Kind::random;
    p.budgets = {b};
    p.seed = seed;
    return p;
  }
  static MemoryPolicy reservoir(int budget, std::uint64_t seed) {
    MemoryPolicy p;
    p.kind = Kind::reservoir;
    p.reservoir_budget = budget;
    p.seed = seed;
    return p;
  }

  int budget_for(int t) const {
    if (budgets.empty()) throw std::invalid_argument("random memory policy needs a budget");
    if (budgets.size() == 1) return budgets.front();
    if (t < 1 || t > static_cast<int>(budgets.size()))
      throw std::invalid_argument("no memory budget for task " + std::to_string(t));
    return budgets[static_cast<std::size_t>(t - 1)];
  }
};

inline std::string to_string(MemoryPolicy::Kind k) {
  switch (k) {
    case MemoryPolicy::Kind::full: return "full";
    case MemoryPolicy::Kind::fixed: return "fixed";
    case MemoryPolicy::Kind::random: return "random";
    case MemoryPolicy::Kind::reservoir: return "reservoir";
  }
  return "full";
}

/// Reservoir over the past stream (t, i) in task order, t = 1..past_tasks.
/// The generator is consumed sequentially, so the buffer after task t is the
/// state that the next boundary continues from.
inline std::vector<std::pair<int, int>> reservoir_past(int past_tasks, int m, int budget,
                                                       std::uint64_t seed) {
  Reservoir<std::pair<int, int>> res(static_cast<std::size_t>(budget));
  Rng rng = make_stream(seed, Stream::memory, 0xA11CE);
  for (int t = 1; t <= past_tasks; ++t)
    for (int i = 0; i < m; ++i) res.offer({t, i}, rng);
  return res.items();
}

/**
 * Availability mask for tasks 1..current_T. The current task always keeps
 * all m samples; restrict never adds samples.
 */
inline SampleStore restrict(const SampleStore& store, const MemoryPolicy& policy, int current_T) {
  if (current_T < 1 || current_T > store.T()) throw std::out_of_range("current task out of range");
  const int m = store.m();
  SampleStore base = store.prefix(current_T);
  std::vector<std::vector<char>> mask;
  for (int t = 1; t <= current_T; ++t) mask.push_back(base.mask(t));
  auto& cur = mask.back();
  if (std::count(cur.begin(), cur.end(), 1) != m)
    throw std::invalid_argument("store is not full on the current task");

  auto keep_only = [&](int t, const std::vector<int>& keep) {
    auto& row = mask[static_cast<std::size_t>(t - 1)];
    std::vector<char> next(row.size(), 0);
    for (int i : keep) {
      if (i < 0 || i >= m) throw std::invalid_argument("memory index out of range");
      next[static_cast<std::size_t>(i)] = row[static_cast<std::size_t>(i)];
    }
    row = std::move(next);
  };

  switch (policy.kind) {
    case MemoryPolicy::Kind::full:
      break;
    case MemoryPolicy::Kind::fixed:
      for (int t = 1; t < current_T; ++t) {
        if (static_cast<std::size_t>(t) > policy.fixed_rows.size())
          throw std::invalid_argument("fixed memory policy lacks R_" + std::to_string(t));
        keep_only(t, policy.fixed_rows[static_cast<std::size_t>(t - 1)]);
      }
      break;
    case MemoryPolicy::Kind::random:
      for (int t = 1; t < current_T; ++t) {
        const int b = policy.budget_for(t);
        if (b < 1 || b > m)
          throw std::invalid_argument("memory budget " + std::to_string(b) + " outside [1, m]");
        std::vector<int> perm(static_cast<std::size_t>(m));
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng = make_stream(policy.seed, Stream::memory, static_cast<std::uint64_t>(t));
        for (int k = 0; k < b; ++k) {
          const auto j = rng.uniform_int(k, m - 1);
          std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(j)]);
        }
        perm.resize(static_cast<std::size_t>(b));
        std::sort(perm.begin(), perm.end());
        keep_only(t, perm);
      }
      break;
    case MemoryPolicy::Kind::reservoir: {
      if (policy.reservoir_budget < 1) throw std::invalid_argument("reservoir budget must be >= 1");
      if (current_T == 1) break;
      std::vector<std::vector<int>> keep(static_cast<std::size_t>(current_T - 1));
      for (auto [t, i] : reservoir_past(current_T - 1, m, policy.reservoir_budget, policy.seed))
        keep[static_cast<std::size_t>(t - 1)].push_back(i);
      for (int t = 1; t < current_T; ++t) {
        auto& k = keep[static_cast<std::size_t>(t - 1)];
        std::sort(k.begin(), k.end());
        keep_only(t, k);
      }
      break;
    }
  }
  return base.with_mask(std::move(mask));
}

struct BalanceReport {
  int min_n = 0;
  int max_n = 0;
  double ratio = 0.0;
};

/// min/max of n_t over tasks with n_t > 0.
inline BalanceReport balance_report(const SampleStore& store) {
  BalanceReport r;
  bool any = false;
  for (int t = 1; t <= store.T(); ++t) {
    const int n = store.n(t);
    if (n == 0) continue;
    if (!any) {
      r.min_n = r.max_n = n;
      any = true;
    }
    r.min_n = std::min(r.min_n, n);
    r.max_n = std::max(r.max_n, n);
  }
  r.ratio = any ? static_cast<double>(r.max_n) / r.min_n : 0.0;
  return r;
}

}  // namespace depcl

#endif  // DEPCL_MEMORY_HPP
