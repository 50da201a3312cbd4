#ifndef MEGPF_TELEMETRY_HPP
#define MEGPF_TELEMETRY_HPP

#include <atomic>
#include <cstdint>

namespace megpf {

/// Snapshot of likelihood-evaluation counts by call site.
struct EvalStats {
  std::uint64_t weight = 0;   ///< per-particle weight updates
  std::uint64_t death = 0;    ///< leave-one-out + reference evals in the death proposal
  std::uint64_t move = 0;     ///< per-time-step terms of MH acceptance products
  std::uint64_t rw_cond = 0;  ///< candidate evals in the conditional location step
  std::uint64_t total() const { return weight + death + move + rw_cond; }
};

/// Thread-safe likelihood-evaluation counter shared by all particle workers.
class EvalCounter {
 public:
  void add_weight(std::uint64_t n = 1) { weight_.fetch_add(n, std::memory_order_relaxed); }
  void add_death(std::uint64_t n = 1) { death_.fetch_add(n, std::memory_order_relaxed); }
  void add_move(std::uint64_t n = 1) { move_.fetch_add(n, std::memory_order_relaxed); }
  void add_rw_cond(std::uint64_t n = 1) { rw_cond_.fetch_add(n, std::memory_order_relaxed); }

  void reset() {
    weight_ = 0;
    death_ = 0;
    move_ = 0;
    rw_cond_ = 0;
  }

  EvalStats snapshot() const {
    EvalStats s;
    s.weight = weight_.load(std::memory_order_relaxed);
    s.death = death_.load(std::memory_order_relaxed);
    s.move = move_.load(std::memory_order_relaxed);
    s.rw_cond = rw_cond_.load(std::memory_order_relaxed);
    return s;
  }

 private:
  std::atomic<std::uint64_t> weight_{0}, death_{0}, move_{0}, rw_cond_{0};
};

}  // namespace megpf

#endif  // MEGPF_TELEMETRY_HPP
