#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "largebatch/error.hpp"
#include "largebatch/lr_schedule.hpp"

using namespace largebatch;

TEST_CASE("eta_base examples") {
    CHECK(eta_base(ClusterShape(1024, 32)) == 12.8);
    CHECK(eta_base(ClusterShape(8, 32)) == 0.1);
    CHECK(eta_base(ClusterShape(1, 256)) == 0.1);
    CHECK(eta_base(ClusterShape(4, 8)) == doctest::Approx(0.0125).epsilon(1e-15));
    CHECK_THROWS_AS(ClusterShape(0, 32), Error);
    CHECK_THROWS_AS(ClusterShape(4, 0), Error);
}

TEST_CASE("eta_base is linear in the total batch") {
    for (std::size_t b : {1, 7, 32, 256}) {
        for (std::size_t k : {2, 3, 16, 1024}) {
            CHECK(eta_base(ClusterShape(k, b)) == doctest::Approx(k * eta_base(ClusterShape(1, b))).epsilon(1e-15));
        }
    }
}

TEST_CASE("slow-start examples") {
    const auto s = slow_start_schedule(12.8);
    CHECK(s.total_epochs() == 90.0);
    CHECK(lr_at(s, 0) == doctest::Approx(6.4).epsilon(1e-15));
    CHECK(lr_at(s, 39.999) == doctest::Approx(6.4).epsilon(1e-15));
    CHECK(lr_at(s, 40) == doctest::Approx(0.96).epsilon(1e-15));
    CHECK(lr_at(s, 70) == doctest::Approx(0.128).epsilon(1e-15));
    CHECK(lr_at(s, 85) == doctest::Approx(0.0128).epsilon(1e-15));
    CHECK(lr_at(s, 89.5) == doctest::Approx(0.0128).epsilon(1e-15));
    CHECK_THROWS_AS(lr_at(s, 90), DomainError);
    CHECK_THROWS_AS(lr_at(s, -0.5), DomainError);
}

TEST_CASE("goyal examples") {
    const auto s = goyal_schedule(2.0);
    CHECK(lr_at(s, 0) == 2.0);
    CHECK(lr_at(s, 29.99) == 2.0);
    CHECK(lr_at(s, 30) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(lr_at(s, 60) == doctest::Approx(0.02).epsilon(1e-15));
    CHECK(lr_at(s, 85) == doctest::Approx(0.002).epsilon(1e-15));
}

TEST_CASE("schedules are nonincreasing") {
    for (auto kind : {ScheduleKind::slow_start, ScheduleKind::goyal}) {
        const auto s = make_schedule(kind, 1.0, 90);
        double prev = lr_at(s, 0);
        for (int k = 1; k < 90000; ++k) {
            const double lr = lr_at(s, k * 0.001);
            REQUIRE(lr <= prev);
            REQUIRE(lr > 0);
            prev = lr;
        }
    }
}

TEST_CASE("slow-start integral") {
    const auto s = slow_start_schedule(1.0);
    double sum = 0;
    for (int k = 0; k < 90000; ++k) sum += lr_at(s, k * 0.001) * 0.001;
    CHECK(std::abs(sum - 22.405) < 1e-3);
}

TEST_CASE("shorter runs scale every boundary") {
    const auto s = slow_start_schedule(1.0, 30);
    CHECK(s.total_epochs() == 30.0);
    REQUIRE(s.phases().size() == 4);
    CHECK(s.phases()[0].end_epoch == doctest::Approx(40.0 / 3));
    CHECK(s.phases()[1].end_epoch == doctest::Approx(70.0 / 3));
    CHECK(s.phases()[2].end_epoch == doctest::Approx(85.0 / 3));

    // Rounded to a 10-iteration epoch grid.
    const auto r = slow_start_schedule(1.0, 30, 10);
    CHECK(r.phases()[0].end_epoch == 13.3);
    CHECK(r.phases()[1].end_epoch == 23.3);
    CHECK(r.phases()[2].end_epoch == 28.3);
    CHECK(r.phases()[3].end_epoch == 30.0);

    CHECK_THROWS_AS(slow_start_schedule(1.0, 3.5), DomainError);
    CHECK_THROWS_AS(goyal_schedule(0.0), DomainError);
}

TEST_CASE("schedule validation") {
    CHECK_THROWS_AS(LrSchedule(1.0, {{0, 10, 1.0}, {11, 20, 0.1}}), Error);
    CHECK_THROWS_AS(LrSchedule(1.0, {{0, 10, 1.0}, {10, 20, 0.0}}), Error);
    CHECK_THROWS_AS(LrSchedule(1.0, {}), Error);
    CHECK_NOTHROW(LrSchedule(1.0, {{0, 10, 1.0}, {10, 20, 0.5}}));
    CHECK(parse_schedule_kind("goyal") == ScheduleKind::goyal);
    CHECK(to_string(ScheduleKind::slow_start) == "slow_start");
    CHECK_THROWS_AS(parse_schedule_kind("cosine"), Error);
}
