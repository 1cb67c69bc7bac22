#include <doctest.h>

#include <cmath>

#include "affectflow/temporal.hpp"

using namespace affectflow;
using namespace affectflow::temporal;

namespace {

constexpr double kPi = 3.14159265358979323846264338328;

ingest::UtteranceRecord rec(const std::string& ts, const std::string& conv = "c1") {
    ingest::UtteranceRecord r;
    r.timestamp = ingest::parse_timestamp(ts, "test");
    r.conversation_id = conv;
    r.text = "some text";
    return r;
}

annotate::EmotionVector ev(std::array<double, 6> e) {
    annotate::EmotionVector v;
    v.e = e;
    return v;
}

}  // namespace

TEST_CASE("cyclic_transform: axis cases") {
    ingest::Timestamp t;
    t.hh = 6;
    const CyclicEncoding at6 = cyclic_transform(t);
    CHECK(at6.sin_h == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(at6.cos_h == doctest::Approx(0.0).scale(1).epsilon(1e-15));

    const CyclicEncoding zero = cyclic_transform(ingest::Timestamp{});
    CHECK(zero.sin_h == 0.0);
    CHECK(zero.cos_h == 1.0);
    CHECK(zero.sin_m == 0.0);
    CHECK(zero.cos_m == 1.0);
    CHECK(zero.sin_s == 0.0);
    CHECK(zero.cos_s == 1.0);

    ingest::Timestamp half;
    half.mm = 30;
    const CyclicEncoding at30 = cyclic_transform(half);
    CHECK(at30.sin_m == doctest::Approx(0.0).scale(1).epsilon(1e-15));
    CHECK(at30.cos_m == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("cyclic_transform: sin^2 + cos^2 = 1 for every clock value") {
    for (int hh = 0; hh < 24; ++hh)
        for (int mm : {0, 7, 30, 59})
            for (int ss : {0, 13, 30, 59}) {
                ingest::Timestamp t;
                t.hh = hh;
                t.mm = mm;
                t.ss = ss;
                const CyclicEncoding c = cyclic_transform(t);
                CHECK(std::abs(c.sin_h * c.sin_h + c.cos_h * c.cos_h - 1.0) <= 1e-9);
                CHECK(std::abs(c.sin_m * c.sin_m + c.cos_m * c.cos_m - 1.0) <= 1e-9);
                CHECK(std::abs(c.sin_s * c.sin_s + c.cos_s * c.cos_s - 1.0) <= 1e-9);
            }
}

TEST_CASE("compute_delay: seconds subtraction, first-row zero, clamping") {
    // 12:00:00 then 12:00:19 -> 19 seconds
    const auto taus = compute_delay({rec("2020:01:15:12:00:00"), rec("2020:01:15:12:00:19")});
    REQUIRE(taus.size() == 2);
    CHECK(taus[0] == 0.0);
    CHECK(taus[1] == 19.0);

    // identical consecutive timestamps clamp to the lower bound 1
    const auto same = compute_delay({rec("2020:01:15:12:00:05"), rec("2020:01:15:12:00:05")});
    CHECK(same[1] == 1.0);

    // gaps larger than a day clamp to 86400
    const auto wide = compute_delay({rec("2020:01:15:12:00:00"), rec("2020:01:18:12:00:00")});
    CHECK(wide[1] == 86400.0);

    // crossing a date boundary uses the full timestamp, not just ss
    const auto midnight = compute_delay({rec("2020:01:15:23:59:50"), rec("2020:01:16:00:00:10")});
    CHECK(midnight[1] == 20.0);
}

TEST_CASE("compute_delay vs the raw ss-field reading") {
    const std::vector<ingest::UtteranceRecord> records = {
        rec("2020:01:15:12:00:50"), rec("2020:01:15:12:01:10")};
    const auto full = compute_delay(records);
    const auto ss_only = compute_delay_ss_field(records);
    CHECK(full[1] == 20.0);      // 50 -> 70 seconds of day
    CHECK(ss_only[1] == 40.0);   // |10 - 50| on the ss column alone
    // the stated range [1, 86400] is reachable only under the full reading
    CHECK(full[1] >= 1.0);
    CHECK(full[1] <= 86400.0);
}

TEST_CASE("cumulative_time is a prefix sum, strictly increasing after the clamp") {
    CHECK(cumulative_time({0.0, 5.0, 3.0}) == std::vector<double>{0.0, 5.0, 8.0});
    CHECK(cumulative_time({0.0}) == std::vector<double>{0.0});
    const auto t = cumulative_time({0.0, 1.0, 1.0, 1.0});
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] > t[i - 1]);
}

TEST_CASE("affective_magnitude: L1 shift with zero first row") {
    const auto d0 = affective_magnitude({ev({0.2, 0.1, 0.3, 0.2, 0.1, 0.1})});
    CHECK(d0 == std::vector<double>{0.0});

    const auto d1 = affective_magnitude({ev({0.2, 0.1, 0.3, 0.2, 0.1, 0.1}),
                                         ev({0.2, 0.1, 0.3, 0.2, 0.1, 0.1})});
    CHECK(d1[1] == 0.0);

    const auto d2 = affective_magnitude({ev({0.2, 0.1, 0.3, 0.2, 0.1, 0.1}),
                                         ev({0.1, 0.2, 0.3, 0.2, 0.1, 0.1})});
    CHECK(d2[1] == doctest::Approx(0.2).epsilon(1e-14));  // |0.1-0.2| + |0.2-0.1|

    CHECK_THROWS_AS(affective_magnitude({}), std::invalid_argument);
}

TEST_CASE("affective_magnitude stays in [0, 2] for simplex inputs") {
    const auto d = affective_magnitude({ev({1, 0, 0, 0, 0, 0}), ev({0, 0, 0, 0, 0, 1})});
    CHECK(d[1] == doctest::Approx(2.0));
    CHECK(d[1] <= 2.0 + 1e-12);
}

TEST_CASE("arctan2_recombine: axis cases and range") {
    CHECK(arctan2_recombine(1.0, 0.0) == doctest::Approx(kPi / 2).epsilon(1e-15));  // hour 6
    CHECK(arctan2_recombine(0.0, 1.0) == 0.0);                                      // hour 0
    CHECK(arctan2_recombine(-0.0, -1.0) == doctest::Approx(kPi));  // -pi mapped into (-pi, pi]
    CHECK(arctan2_recombine(-0.0, -1.0) > 0.0);
    CHECK_THROWS_AS(arctan2_recombine(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("arctan2_recombine recovers the clock angle modulo 2*pi") {
    // frozen example: hh = 17 recombines to 2*pi*17/24 - 2*pi
    ingest::Timestamp t17;
    t17.hh = 17;
    const CyclicEncoding c17 = cyclic_transform(t17);
    CHECK(arctan2_recombine(c17.sin_h, c17.cos_h) ==
          doctest::Approx(-1.8325957145940461).epsilon(1e-12));

    for (int hh = 0; hh < 24; ++hh) {
        ingest::Timestamp t;
        t.hh = hh;
        const CyclicEncoding c = cyclic_transform(t);
        const double angle = arctan2_recombine(c.sin_h, c.cos_h);
        const double expect = kTwoPi * hh / 24.0;
        const double wrapped = std::remainder(angle - expect, kTwoPi);
        CHECK(std::abs(wrapped) <= 1e-9);
        CHECK(angle > -kPi - 1e-15);
        CHECK(angle <= kPi + 1e-15);
    }
    for (int mm = 0; mm < 60; ++mm) {
        ingest::Timestamp t;
        t.mm = mm;
        t.ss = mm;
        const CyclicEncoding c = cyclic_transform(t);
        const double expect = kTwoPi * mm / 60.0;
        CHECK(std::abs(std::remainder(arctan2_recombine(c.sin_m, c.cos_m) - expect, kTwoPi)) <= 1e-9);
        CHECK(std::abs(std::remainder(arctan2_recombine(c.sin_s, c.cos_s) - expect, kTwoPi)) <= 1e-9);
    }
}

TEST_CASE("build_temporal_rows composes the pipeline in the required order") {
    const std::vector<ingest::UtteranceRecord> records = {rec("2020:01:15:12:00:00"),
                                                          rec("2020:01:15:12:00:19")};
    const std::vector<annotate::EmotionVector> emotions = {
        ev({0.2, 0.1, 0.3, 0.2, 0.1, 0.1}), ev({0.1, 0.2, 0.3, 0.2, 0.1, 0.1})};
    const auto rows = build_temporal_rows(records, emotions);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].tau == 0.0);
    CHECK(rows[0].delta_mag == 0.0);
    CHECK(rows[0].t_tilde == 0.0);
    CHECK(rows[1].tau == 19.0);
    CHECK(rows[1].t_tilde == 19.0);
    CHECK(rows[1].delta_mag == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(rows[1].cyclic.sin_s == doctest::Approx(std::sin(kTwoPi * 19 / 60)).epsilon(1e-15));
}

TEST_CASE("build_temporal_rows: singleton and unsorted input") {
    const auto rows = build_temporal_rows({rec("2020:01:15:12:00:00")},
                                          {ev({0.2, 0.1, 0.3, 0.2, 0.1, 0.1})});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].tau == 0.0);
    CHECK(rows[0].delta_mag == 0.0);
    CHECK(rows[0].t_tilde == 0.0);

    CHECK_THROWS_AS(build_temporal_rows({rec("2020:01:15:12:00:05"), rec("2020:01:15:12:00:01")},
                                        {ev({1, 0, 0, 0, 0, 0}), ev({1, 0, 0, 0, 0, 0})}),
                    input_error);
}
