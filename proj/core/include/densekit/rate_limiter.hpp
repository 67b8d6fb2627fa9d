#pragma once

#include <atomic>
#include <chrono>
#include <mutex>

namespace densekit {

/// Time source used by the limiter and backoff so tests can substitute a
/// virtual clock.
class Clock {
public:
    using duration = std::chrono::nanoseconds;
    using time_point = std::chrono::time_point<std::chrono::steady_clock, duration>;

    virtual ~Clock() = default;
    virtual time_point now() = 0;
    virtual void sleep_until(time_point t) = 0;
    void sleep_for(duration d) { sleep_until(now() + d); }
};

class SteadyClock final : public Clock {
public:
    time_point now() override;
    void sleep_until(time_point t) override;

    static SteadyClock& instance();
};

/// Virtual time: sleeping advances the clock instantly. Thread-safe; the
/// clock never moves backwards.
class ManualClock final : public Clock {
public:
    time_point now() override { return time_point(duration(ticks_.load())); }
    void sleep_until(time_point t) override;
    void advance(duration d) { ticks_ += d.count(); }

private:
    std::atomic<duration::rep> ticks_{0};
};

/// Token bucket in its reservation form: each acquire() books the next free
/// slot, spaced 60s / calls_per_minute apart, with up to `burst` slots
/// available immediately after an idle period. With burst = 1 no half-open
/// 60-second window ever holds more than calls_per_minute grants.
class TokenBucket {
public:
    TokenBucket(double calls_per_minute, std::size_t burst, Clock& clock);

    /// Blocks until a token is available; returns the granted slot time.
    Clock::time_point acquire();

    Clock::duration interval() const noexcept { return interval_; }

private:
    Clock& clock_;
    Clock::duration interval_;
    std::size_t burst_;
    std::mutex mutex_;
    Clock::time_point next_free_{};
    bool started_ = false;
};

}  // namespace densekit
