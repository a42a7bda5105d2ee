#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace teamwork {

// Cost unit is the multiply-accumulate (MAC); reported FLOPs are 2x MACs.
inline constexpr double kFlopsPerMac = 2.0;

enum class MacCategory : int {
    FrozenLinear = 0,  // products against frozen base weights (incl. materialized apply)
    LowRank = 1,       // products against adapter factors
    Attention = 2,     // score (QK^T) and mix (PV) products
};

inline constexpr int kMacCategoryCount = 3;

// Accumulates MAC counts per category. Increments are atomic so one ledger
// may be shared by concurrent workers; counters only grow within a
// measurement scope and are reset at scope boundaries.
class FlopLedger {
  public:
    FlopLedger() = default;
    FlopLedger(const FlopLedger&) = delete;
    FlopLedger& operator=(const FlopLedger&) = delete;

    void add(MacCategory cat, std::uint64_t macs) noexcept {
        if (enabled_.load(std::memory_order_relaxed))
            counters_[static_cast<int>(cat)].fetch_add(macs, std::memory_order_relaxed);
    }

    std::uint64_t count(MacCategory cat) const noexcept {
        return counters_[static_cast<int>(cat)].load(std::memory_order_relaxed);
    }

    std::uint64_t total() const noexcept {
        std::uint64_t sum = 0;
        for (const auto& c : counters_) sum += c.load(std::memory_order_relaxed);
        return sum;
    }

    void reset() noexcept {
        for (auto& c : counters_) c.store(0, std::memory_order_relaxed);
    }

    void set_enabled(bool on) noexcept { enabled_.store(on, std::memory_order_relaxed); }
    bool enabled() const noexcept { return enabled_.load(std::memory_order_relaxed); }

  private:
    std::array<std::atomic<std::uint64_t>, kMacCategoryCount> counters_{};
    std::atomic<bool> enabled_{true};
};

// The active ledger is thread-local; kernels record into it when one is
// installed. Parallel sweeps install per-configuration ledgers.
inline FlopLedger*& active_ledger_slot() noexcept {
    thread_local FlopLedger* slot = nullptr;
    return slot;
}

inline FlopLedger* active_ledger() noexcept { return active_ledger_slot(); }

inline void count_macs(MacCategory cat, std::uint64_t macs) noexcept {
    if (FlopLedger* ledger = active_ledger()) ledger->add(cat, macs);
}

// RAII install/restore of the active ledger for the current thread.
class LedgerScope {
  public:
    explicit LedgerScope(FlopLedger& ledger) : prev_(active_ledger_slot()) {
        active_ledger_slot() = &ledger;
    }
    ~LedgerScope() { active_ledger_slot() = prev_; }
    LedgerScope(const LedgerScope&) = delete;
    LedgerScope& operator=(const LedgerScope&) = delete;

  private:
    FlopLedger* prev_;
};

// Suspends instrumentation, e.g. while assembling a materialized matrix
// whose construction cost is amortized and must not pollute forward counts.
class LedgerPause {
  public:
    LedgerPause() : prev_(active_ledger_slot()) { active_ledger_slot() = nullptr; }
    ~LedgerPause() { active_ledger_slot() = prev_; }
    LedgerPause(const LedgerPause&) = delete;
    LedgerPause& operator=(const LedgerPause&) = delete;

  private:
    FlopLedger* prev_;
};

// Minimal index-range worker pool. Propagates the caller's active ledger to
// the workers so shared instrumentation keeps counting.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::thread::hardware_concurrency();
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    if (threads > count) threads = static_cast<unsigned>(count);
    FlopLedger* ledger = active_ledger();
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        active_ledger_slot() = ledger;
        for (;;) {
            std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) break;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (unsigned t = 0; t + 1 < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

}  // namespace teamwork
