#include <cmath>

#include "doctest.h"

#include "canids/attack_sim.hpp"
#include "canids/synthgen.hpp"

using namespace canids;

namespace {

long count_labels(const std::vector<uint8_t>& labels) {
    long n = 0;
    for (uint8_t l : labels) n += l;
    return n;
}

Mat clean_series(int signals, int steps, uint64_t seed) {
    return benchmark_series(signals, steps, 0.01, seed);
}

} // namespace

TEST_CASE("kind and granularity names round trip") {
    for (auto k : {AttackKind::dos, AttackKind::fuzzy, AttackKind::suspension,
                   AttackKind::replay, AttackKind::spoofing, AttackKind::masquerade})
        CHECK(attack_kind_from_string(to_string(k)) == k);
    CHECK(granularity_from_string("coarse") == Granularity::coarse);
    CHECK(granularity_from_string("fine") == Granularity::fine);
    CHECK_THROWS(attack_kind_from_string("nope"));
    CHECK_THROWS(granularity_from_string(""));
}

TEST_CASE("flood insertion grows the stream by the configured ratio") {
    auto s = clean_series(3, 200, 1);
    AttackScenario a;
    a.kind = AttackKind::dos;
    a.begin = 50;
    a.end = 150;
    a.rho = 0.5;
    a.seed = 2;
    auto r = inject(s, a);
    // 50 forged steps on top of 200 real ones
    CHECK(r.series.cols == 250);
    CHECK(count_labels(r.labels) == 50);
    CHECK(r.labels.size() == 250);

    // every forged step carries the flood value on every signal
    for (size_t i = 0; i < r.labels.size(); ++i)
        if (r.labels[i])
            for (int m = 0; m < 3; ++m) CHECK(r.series(m, static_cast<int>(i)) == 0.0);

    // clean prefix and suffix are untouched
    for (int n = 0; n < 50; ++n)
        for (int m = 0; m < 3; ++m) CHECK(r.series(m, n) == s(m, n));
}

TEST_CASE("flood at full ratio doubles the attacked stretch") {
    auto s = clean_series(1, 100, 3);
    AttackScenario a;
    a.kind = AttackKind::dos;
    a.begin = 20;
    a.end = 40;
    a.rho = 1.0;
    a.seed = 4;
    auto r = inject(s, a);
    CHECK(r.series.cols == 120);
    CHECK(count_labels(r.labels) == 20);
}

TEST_CASE("original step order survives an insertion attack") {
    auto s = clean_series(1, 80, 5);
    AttackScenario a;
    a.kind = AttackKind::fuzzy;
    a.begin = 10;
    a.end = 70;
    a.rho = 0.3;
    a.seed = 6;
    auto r = inject(s, a);
    // dropping forged steps recovers the original series exactly
    std::vector<double> kept;
    for (size_t i = 0; i < r.labels.size(); ++i)
        if (!r.labels[i]) kept.push_back(r.series(0, static_cast<int>(i)));
    REQUIRE(kept.size() == 80);
    for (int n = 0; n < 80; ++n) CHECK(kept[static_cast<size_t>(n)] == s(0, n));
}

TEST_CASE("coarse fuzz draws uniform values, fine fuzz stays near the mean") {
    auto s = clean_series(2, 400, 7);
    AttackScenario a;
    a.kind = AttackKind::fuzzy;
    a.begin = 0;
    a.end = 400;
    a.rho = 1.0;
    a.seed = 8;
    auto coarse = inject(s, a);
    double lo = 1.0, hi = 0.0;
    for (size_t i = 0; i < coarse.labels.size(); ++i)
        if (coarse.labels[i]) {
            lo = std::min(lo, coarse.series(0, static_cast<int>(i)));
            hi = std::max(hi, coarse.series(0, static_cast<int>(i)));
        }
    CHECK(lo < 0.1); // uniform over [0, 1] reaches the edges
    CHECK(hi > 0.9);

    a.granularity = Granularity::fine;
    auto fine = inject(s, a);
    // per-signal sample mean and deviation of the clean stream
    for (int m = 0; m < 2; ++m) {
        double mean = 0.0;
        for (int n = 0; n < s.cols; ++n) mean += s(m, n);
        mean /= s.cols;
        double var = 0.0;
        for (int n = 0; n < s.cols; ++n) var += (s(m, n) - mean) * (s(m, n) - mean);
        double sigma = std::sqrt(var / s.cols);
        for (size_t i = 0; i < fine.labels.size(); ++i)
            if (fine.labels[i]) {
                double v = fine.series(m, static_cast<int>(i));
                CHECK(v >= mean - sigma - 1e-12);
                CHECK(v <= mean + sigma + 1e-12);
            }
    }
}

TEST_CASE("suspension removes the interval and labels what follows the gap") {
    auto s = clean_series(2, 100, 9);
    AttackScenario a;
    a.kind = AttackKind::suspension;
    a.begin = 40;
    a.end = 60;
    a.window = 16;
    auto r = inject(s, a);
    REQUIRE(r.series.cols == 80);
    REQUIRE(r.labels.size() == 80);
    // steps after the gap carry the labels
    for (int n = 40; n < 56; ++n) CHECK(r.labels[static_cast<size_t>(n)] == 1);
    CHECK(count_labels(r.labels) == 16);
    // the surviving values are the original ones
    for (int m = 0; m < 2; ++m) {
        for (int n = 0; n < 40; ++n) CHECK(r.series(m, n) == s(m, n));
        for (int n = 40; n < 80; ++n) CHECK(r.series(m, n) == s(m, n + 20));
    }
}

TEST_CASE("suspension labelling clamps at the stream end") {
    auto s = clean_series(1, 50, 10);
    AttackScenario a;
    a.kind = AttackKind::suspension;
    a.begin = 30;
    a.end = 45;
    a.window = 16;
    auto r = inject(s, a);
    REQUIRE(r.series.cols == 35);
    CHECK(count_labels(r.labels) == 5); // only 5 steps remain after the gap
}

TEST_CASE("replay inserts an exact copy of earlier traffic") {
    auto s = clean_series(2, 200, 11);
    AttackScenario a;
    a.kind = AttackKind::replay;
    a.begin = 120;
    a.end = 160;
    a.replay_src = 20;
    auto r = inject(s, a);
    REQUIRE(r.series.cols == 240);
    CHECK(count_labels(r.labels) == 40);
    for (int j = 0; j < 40; ++j) {
        CHECK(r.labels[static_cast<size_t>(120 + j)] == 1);
        for (int m = 0; m < 2; ++m)
            CHECK(r.series(m, 120 + j) == s(m, 20 + j));
    }
    // stream resumes after the replayed block
    for (int m = 0; m < 2; ++m) {
        CHECK(r.series(m, 119) == s(m, 119));
        CHECK(r.series(m, 160) == s(m, 120));
    }
}

TEST_CASE("replay source must not overlap the injection point") {
    auto s = clean_series(1, 100, 12);
    AttackScenario a;
    a.kind = AttackKind::replay;
    a.begin = 50;
    a.end = 70;
    a.replay_src = 40; // source [40, 60) overlaps [50, 70)
    CHECK_THROWS(inject(s, a));
    a.replay_src = 90; // source [90, 110) runs past the stream
    CHECK_THROWS(inject(s, a));
    a.replay_src = 10;
    CHECK_NOTHROW(inject(s, a));
}

TEST_CASE("coarse spoofing pushes targets to the range ceiling") {
    auto s = clean_series(2, 150, 13);
    AttackScenario a;
    a.kind = AttackKind::spoofing;
    a.begin = 60;
    a.end = 90;
    a.target_signals = {1};
    auto r = inject(s, a);
    REQUIRE(r.series.cols == 180);
    CHECK(count_labels(r.labels) == 30);
    for (int j = 0; j < 30; ++j) {
        // unset spoof value derives from the observed max, clipped to 1
        CHECK(r.series(1, 60 + j) == doctest::Approx(1.0));
        // non-target holds the last clean value
        CHECK(r.series(0, 60 + j) == s(0, 59));
    }

    a.spoof_value = 0.75;
    auto fixed = inject(s, a);
    for (int j = 0; j < 30; ++j) CHECK(fixed.series(1, 60 + j) == doctest::Approx(0.75));
}

TEST_CASE("ramp spoofing interpolates toward the target") {
    auto s = clean_series(1, 100, 14);
    AttackScenario a;
    a.kind = AttackKind::spoofing;
    a.begin = 50;
    a.end = 60;
    a.spoof_value = 1.0;
    a.ramp = true;
    auto r = inject(s, a);
    // starts at the last clean value, ends at the target
    CHECK(r.series(0, 50) == doctest::Approx(s(0, 49)));
    CHECK(r.series(0, 59) == doctest::Approx(1.0));
    for (int j = 1; j < 10; ++j)
        CHECK(r.series(0, 50 + j) >= r.series(0, 50 + j - 1) - 1e-12);
}

TEST_CASE("fine spoofing stays near the local mean") {
    auto s = clean_series(1, 300, 15);
    AttackScenario a;
    a.kind = AttackKind::spoofing;
    a.granularity = Granularity::fine;
    a.begin = 100;
    a.end = 160;
    a.delta = 0.05;
    a.seed = 16;
    auto r = inject(s, a);
    double local = 0.0;
    for (int n = 100; n < 160; ++n) local += s(0, n);
    local /= 60.0;
    for (int j = 0; j < 60; ++j) {
        double v = r.series(0, 100 + j);
        CHECK(v >= local - 0.05 - 1e-12);
        CHECK(v <= local + 0.05 + 1e-12);
    }
}

TEST_CASE("masquerade keeps the length and replaces target values") {
    auto s = clean_series(2, 100, 17);
    AttackScenario a;
    a.kind = AttackKind::masquerade;
    a.begin = 40;
    a.end = 60;
    a.spoof_value = 0.9;
    auto r = inject(s, a);
    REQUIRE(r.series.cols == 100);
    CHECK(count_labels(r.labels) == 20);
    for (int n = 0; n < 100; ++n) {
        const bool attacked = n >= 40 && n < 60;
        CHECK(r.labels[static_cast<size_t>(n)] == (attacked ? 1 : 0));
        for (int m = 0; m < 2; ++m) {
            if (attacked) CHECK(r.series(m, n) == doctest::Approx(0.9));
            else CHECK(r.series(m, n) == s(m, n));
        }
    }
}

TEST_CASE("masquerade with explicit targets leaves other signals intact") {
    auto s = clean_series(3, 80, 18);
    AttackScenario a;
    a.kind = AttackKind::masquerade;
    a.begin = 20;
    a.end = 40;
    a.spoof_value = 1.0;
    a.target_signals = {0, 2};
    auto r = inject(s, a);
    for (int n = 20; n < 40; ++n) {
        CHECK(r.series(0, n) == doctest::Approx(1.0));
        CHECK(r.series(1, n) == s(1, n)); // untouched channel
        CHECK(r.series(2, n) == doctest::Approx(1.0));
    }
}

TEST_CASE("interval validation rejects nonsense") {
    auto s = clean_series(1, 50, 19);
    AttackScenario a;
    a.kind = AttackKind::dos;
    a.begin = 10;
    a.end = 10;
    CHECK_THROWS(inject(s, a));
    a.end = 60;
    CHECK_THROWS(inject(s, a));
    a.begin = -1;
    a.end = 10;
    CHECK_THROWS(inject(s, a));
    a.begin = 0;
    a.end = 10;
    a.rho = 0.0;
    CHECK_THROWS(inject(s, a));
    a.rho = 1.5;
    CHECK_THROWS(inject(s, a));
    a.rho = 0.5;
    a.target_signals = {3};
    CHECK_THROWS(inject(s, a));
}

TEST_CASE("injection is deterministic per seed") {
    auto s = clean_series(2, 150, 20);
    AttackScenario a;
    a.kind = AttackKind::fuzzy;
    a.begin = 10;
    a.end = 140;
    a.rho = 0.4;
    a.seed = 21;
    auto r1 = inject(s, a);
    auto r2 = inject(s, a);
    CHECK(r1.series.d == r2.series.d);
    CHECK(r1.labels == r2.labels);
    a.seed = 22;
    auto r3 = inject(s, a);
    CHECK(r1.series.d != r3.series.d);
}

TEST_CASE("prior labels ride through later injections") {
    auto s = clean_series(1, 100, 23);
    AttackScenario first;
    first.kind = AttackKind::masquerade;
    first.begin = 10;
    first.end = 20;
    first.spoof_value = 0.8;
    auto r1 = inject(s, first);

    AttackScenario second;
    second.kind = AttackKind::dos;
    second.begin = 50;
    second.end = 90;
    second.rho = 0.5;
    second.seed = 24;
    auto r2 = inject(r1.series, r1.labels, second);
    CHECK(r2.series.cols == 120);
    // both attack marks survive
    CHECK(count_labels(r2.labels) == 10 + 20);
    for (int n = 10; n < 20; ++n) CHECK(r2.labels[static_cast<size_t>(n)] == 1);
}

TEST_CASE("window labels flag any overlap with a dirty step") {
    std::vector<uint8_t> steps(30, 0);
    steps[10] = 1;
    auto w = label_windows(steps, 4, 2);
    REQUIRE(w.size() == 25); // 30 - 6 + 1
    for (size_t k = 0; k < w.size(); ++k) {
        // window k covers steps [k, k+6)
        const bool overlaps = k <= 10 && 10 < k + 6;
        CHECK(w[k] == (overlaps ? 1 : 0));
    }

    // too short for one window
    CHECK(label_windows(std::vector<uint8_t>(3, 1), 4, 2).empty());
}

TEST_CASE("scenario records round trip through text") {
    AttackScenario a;
    a.kind = AttackKind::replay;
    a.granularity = Granularity::fine;
    a.begin = 123;
    a.end = 456;
    a.rho = 0.125;
    a.replay_src = 7;
    a.spoof_value = 0.875;
    a.delta = 1.0 / 3.0;
    a.ramp = true;
    a.window = 24;
    a.seed = 987654321;
    a.target_signals = {0, 2, 5};

    auto rec = scenario_to_record(a);
    auto b = scenario_from_record(rec);
    CHECK(b.kind == a.kind);
    CHECK(b.granularity == a.granularity);
    CHECK(b.begin == a.begin);
    CHECK(b.end == a.end);
    CHECK(b.rho == a.rho);
    CHECK(b.replay_src == a.replay_src);
    CHECK(b.spoof_value == a.spoof_value);
    CHECK(b.delta == a.delta); // survives despite not being representable
    CHECK(b.ramp == a.ramp);
    CHECK(b.window == a.window);
    CHECK(b.seed == a.seed);
    CHECK(b.target_signals == a.target_signals);

    CHECK_THROWS(scenario_from_record("kind=dos bogus_key=1"));
    CHECK_THROWS(scenario_from_record("kind=warp"));
    CHECK_THROWS(scenario_from_record("begin=xyz"));
}
