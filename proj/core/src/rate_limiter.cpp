#include "densekit/rate_limiter.hpp"

#include <cmath>
#include <thread>

#include "densekit/error.hpp"

namespace densekit {

Clock::time_point SteadyClock::now() {
    return std::chrono::time_point_cast<duration>(std::chrono::steady_clock::now());
}

void SteadyClock::sleep_until(time_point t) { std::this_thread::sleep_until(t); }

SteadyClock& SteadyClock::instance() {
    static SteadyClock clock;
    return clock;
}

void ManualClock::sleep_until(time_point t) {
    const auto target = t.time_since_epoch().count();
    auto current = ticks_.load();
    while (current < target && !ticks_.compare_exchange_weak(current, target)) {
    }
}

TokenBucket::TokenBucket(double calls_per_minute, std::size_t burst, Clock& clock)
    : clock_(clock), burst_(burst) {
    if (!(calls_per_minute > 0.0) || !std::isfinite(calls_per_minute)) {
        throw Error(ErrorCode::invalid_argument, "rate limit must be a positive number of calls per minute");
    }
    if (burst == 0) throw Error(ErrorCode::invalid_argument, "token bucket burst must be at least 1");
    // Round the spacing up so rounding can never admit an extra call per window.
    interval_ = Clock::duration(static_cast<Clock::duration::rep>(std::ceil(60e9 / calls_per_minute)));
}

Clock::time_point TokenBucket::acquire() {
    Clock::time_point slot;
    {
        std::lock_guard guard(mutex_);
        const auto now = clock_.now();
        const auto earliest = now - interval_ * static_cast<Clock::duration::rep>(burst_ - 1);
        if (!started_ || next_free_ < earliest) {
            next_free_ = earliest;
            started_ = true;
        }
        slot = std::max(next_free_, now);
        next_free_ += interval_;
    }
    clock_.sleep_until(slot);
    return slot;
}

}  // namespace densekit
