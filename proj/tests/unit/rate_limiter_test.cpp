#include <gtest/gtest.h>

#include <mutex>
#include <thread>

#include "densekit/error.hpp"
#include "densekit/rate_limiter.hpp"
#include "stub_server.hpp"

using namespace densekit;
using namespace std::chrono_literals;

TEST(ManualClock, SleepAdvancesAndNeverRewinds) {
    ManualClock clock;
    EXPECT_EQ(clock.now().time_since_epoch(), 0ns);
    clock.sleep_for(5s);
    EXPECT_EQ(clock.now().time_since_epoch(), 5s);
    clock.sleep_until(Clock::time_point(1s));
    EXPECT_EQ(clock.now().time_since_epoch(), 5s);
    clock.advance(1s);
    EXPECT_EQ(clock.now().time_since_epoch(), 6s);
}

TEST(TokenBucket, RejectsBadSettings) {
    ManualClock clock;
    EXPECT_THROW(TokenBucket(0.0, 1, clock), Error);
    EXPECT_THROW(TokenBucket(-5.0, 1, clock), Error);
    EXPECT_THROW(TokenBucket(100.0, 0, clock), Error);
}

TEST(TokenBucket, SpacingIsRoundedUp) {
    ManualClock clock;
    TokenBucket bucket(3500.0, 1, clock);
    // 60 s / 3500 = 17142857.14 ns
    EXPECT_EQ(bucket.interval(), 17'142'858ns);
}

TEST(TokenBucket, NoMinuteExceedsTheLimit) {
    ManualClock clock;
    TokenBucket bucket(3500.0, 1, clock);
    std::vector<Clock::time_point> grants;
    for (int i = 0; i < 10'000; ++i) grants.push_back(bucket.acquire());
    EXPECT_EQ(testsupport::max_in_window(grants, 60s), 3500u);
    // Sustained throughput is the configured rate, not a fraction of it.
    EXPECT_LT(grants.back() - grants.front(), 172s);
}

TEST(TokenBucket, IdleTimeDoesNotBankCredit) {
    ManualClock clock;
    TokenBucket bucket(60.0, 1, clock);
    bucket.acquire();
    clock.advance(1h);
    const auto a = bucket.acquire();
    const auto b = bucket.acquire();
    EXPECT_EQ(b - a, 1s);
}

TEST(TokenBucket, BurstAllowsImmediateGrants) {
    ManualClock clock;
    TokenBucket bucket(60.0, 3, clock);
    clock.advance(10s);
    const auto t0 = clock.now();
    EXPECT_EQ(bucket.acquire(), t0);
    EXPECT_EQ(bucket.acquire(), t0);
    EXPECT_EQ(bucket.acquire(), t0);
    EXPECT_EQ(bucket.acquire(), t0 + 1s);
}

TEST(TokenBucket, ConcurrentAcquirersShareTheLimit) {
    ManualClock clock;
    TokenBucket bucket(3500.0, 1, clock);
    std::mutex lock;
    std::vector<Clock::time_point> grants;
    {
        std::vector<std::jthread> workers;
        for (int t = 0; t < 8; ++t) {
            workers.emplace_back([&] {
                for (int i = 0; i < 1250; ++i) {
                    const auto slot = bucket.acquire();
                    std::lock_guard guard(lock);
                    grants.push_back(slot);
                }
            });
        }
    }
    ASSERT_EQ(grants.size(), 10'000u);
    EXPECT_LE(testsupport::max_in_window(grants, 60s), 3500u);
    std::sort(grants.begin(), grants.end());
    for (std::size_t i = 1; i < grants.size(); ++i) ASSERT_GE(grants[i] - grants[i - 1], bucket.interval());
}

TEST(TokenBucket, RealClockPacing) {
    TokenBucket bucket(6000.0, 1, SteadyClock::instance());
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 21; ++i) bucket.acquire();
    // 20 intervals of 10 ms each after the first grant.
    EXPECT_GE(std::chrono::steady_clock::now() - start, 200ms);
}

TEST(MaxInWindow, HalfOpenWindows) {
    using TP = Clock::time_point;
    std::vector<TP> t{TP(0s), TP(30s), TP(60s), TP(90s)};
    EXPECT_EQ(testsupport::max_in_window(t, 60s), 2u);
    EXPECT_EQ(testsupport::max_in_window(t, 61s), 3u);
}
