#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "triage/protocols.hpp"

using namespace triage;
using namespace triage::mdp;
using namespace triage::protocols;

namespace {

struct PatientSpec {
    int age = 50;
    int sofa = 8;
    double bmi = 25;
    bool comorbidity = false;
    int admission_day = 0;
    bool ventilated = false;
};

struct Fixture {
    CohortDataset cohort;
    SimState state;
};

Fixture make_fixture(const std::vector<PatientSpec>& specs) {
    Fixture f;
    f.state.counters = FairnessCounters(4);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& ps = specs[i];
        ClinicalTrajectory t;
        t.patient_id = "p" + std::to_string(i);
        t.group = static_cast<int>(i % 4);
        t.age = ps.age;
        t.bmi = ps.bmi;
        t.severe_comorbidity = ps.comorbidity;
        t.sofa_total = {ps.sofa, ps.sofa};
        t.conditions.assign(2, std::vector<double>{0.5, 0.5});
        t.outcome = Outcome::Survived;
        f.cohort.trajectories.push_back(std::move(t));

        BedState bed;
        bed.condition = BedCondition::Normal;
        bed.ventilated = ps.ventilated;
        bed.occupant = Occupant{static_cast<int>(i), 0, ps.admission_day, ps.ventilated,
                                static_cast<int>(i)};
        f.state.beds.push_back(bed);
    }
    return f;
}

std::vector<int> order_of(const PriorityRanking& r) {
    std::vector<int> beds;
    for (const auto& rb : r.order) beds.push_back(rb.bed);
    return beds;
}

} // namespace

TEST_CASE("lottery ranks a single requester first") {
    auto f = make_fixture({{}});
    RandomStream rng(3);
    auto r = rank_lottery(f.state, rng);
    CHECK(order_of(r) == std::vector<int>{0});
}

TEST_CASE("lottery is uniform over requesters") {
    auto f = make_fixture({{}, {}, {}, {}});
    RandomStream rng(5);
    std::map<int, int> first_counts;
    for (int i = 0; i < 10000; ++i) {
        auto r = rank_lottery(f.state, rng);
        first_counts[r.order.front().bed]++;
    }
    for (int b = 0; b < 4; ++b) CHECK(std::abs(first_counts[b] - 2500) <= 150);
}

TEST_CASE("lottery repeats under the same stream") {
    auto f = make_fixture({{}, {}, {}, {}, {}});
    RandomStream a(9), b(9);
    CHECK(order_of(rank_lottery(f.state, a)) == order_of(rank_lottery(f.state, b)));
}

TEST_CASE("youngest orders by ascending age") {
    auto f = make_fixture({{.age = 70}, {.age = 30}, {.age = 50}});
    RandomStream rng(1);
    CHECK(order_of(rank_youngest(f.state, f.cohort, rng)) == std::vector<int>{1, 2, 0});
}

TEST_CASE("youngest falls back to a lottery on equal ages") {
    auto f = make_fixture({{.age = 40}, {.age = 40}, {.age = 40}});
    RandomStream rng(7);
    std::map<int, int> first_counts;
    for (int i = 0; i < 9000; ++i) first_counts[rank_youngest(f.state, f.cohort, rng).order.front().bed]++;
    for (int b = 0; b < 3; ++b) CHECK(std::abs(first_counts[b] - 3000) <= 170);
}

TEST_CASE("empty request set yields an empty ranking") {
    SimState s;
    s.beds.assign(3, BedState{});
    s.counters = FairnessCounters(4);
    RandomStream rng(2);
    CHECK(rank_lottery(s, rng).order.empty());
    CohortDataset empty_cohort;
    CHECK(rank_youngest(s, empty_cohort, rng).order.empty());
}

TEST_CASE("sofa tier boundaries") {
    CHECK(sofa_tier(5) == 0);
    CHECK(sofa_tier(7) == 0);
    CHECK(sofa_tier(8) == 1);
    CHECK(sofa_tier(9) == 1);
    CHECK(sofa_tier(11) == 1);
    CHECK(sofa_tier(12) == 2);
    CHECK(sofa_tier(13) == 2);
}

TEST_CASE("sofa protocol ranks tiers and breaks ties by lottery") {
    auto f = make_fixture({{.sofa = 13}, {.sofa = 5}, {.sofa = 9}});
    RandomStream rng(4);
    CHECK(order_of(rank_sofa(f.state, f.cohort, rng)) == std::vector<int>{1, 2, 0});

    auto boundary = make_fixture({{.sofa = 8}, {.sofa = 7}});
    CHECK(order_of(rank_sofa(boundary.state, boundary.cohort, rng)) == std::vector<int>{1, 0});

    auto tied = make_fixture({{.sofa = 10}, {.sofa = 10}});
    std::map<int, int> first_counts;
    for (int i = 0; i < 4000; ++i) first_counts[rank_sofa(tied.state, tied.cohort, rng).order.front().bed]++;
    CHECK(std::abs(first_counts[0] - 2000) <= 130);
}

TEST_CASE("mp points follow the band table plus comorbidity") {
    CHECK(mp_sofa_points(3) == 1);
    CHECK(mp_sofa_points(8) == 1);
    CHECK(mp_sofa_points(9) == 2);
    CHECK(mp_sofa_points(11) == 2);
    CHECK(mp_sofa_points(12) == 3);
    CHECK(mp_sofa_points(14) == 3);
    CHECK(mp_sofa_points(15) == 4);

    auto f = make_fixture({{.sofa = 10, .comorbidity = true}});
    RandomStream rng(6);
    auto r = rank_mp(f.state, f.cohort, rng);
    CHECK(r.order.front().priority_key == doctest::Approx(5)); // 2 + 3
}

TEST_CASE("mp breaks point ties by younger age group") {
    auto f = make_fixture({{.age = 75, .sofa = 3}, {.age = 30, .sofa = 3}});
    RandomStream rng(8);
    CHECK(order_of(rank_mp(f.state, f.cohort, rng)) == std::vector<int>{1, 0});
    // same age group (both 50-69): resolved by lottery
    auto tied = make_fixture({{.age = 55, .sofa = 3}, {.age = 60, .sofa = 3}});
    std::map<int, int> first_counts;
    for (int i = 0; i < 4000; ++i) first_counts[rank_mp(tied.state, tied.cohort, rng).order.front().bed]++;
    CHECK(std::abs(first_counts[0] - 2000) <= 130);
}

TEST_CASE("dt levels and admission-day tiebreak") {
    auto f = make_fixture({{.age = 60, .sofa = 8, .bmi = 25, .admission_day = 5},
                           {.age = 60, .sofa = 12, .bmi = 25, .admission_day = 1},
                           {.age = 60, .sofa = 8, .bmi = 25, .admission_day = 3}});
    auto r = rank_dt(f.state, f.cohort);
    // beds 0 and 2 are level 1; earlier admission first
    CHECK(order_of(r) == std::vector<int>{2, 0, 1});

    auto high_bmi = make_fixture({{.age = 60, .sofa = 8, .bmi = 45}});
    CHECK(rank_dt(high_bmi.state, high_bmi.cohort).order.front().priority_key == doctest::Approx(2));
    auto old_age = make_fixture({{.age = 75, .sofa = 8, .bmi = 25}});
    CHECK(rank_dt(old_age.state, old_age.cohort).order.front().priority_key == doctest::Approx(2));
}

TEST_CASE("allocate hands top-ranked beds the ventilators") {
    auto f = make_fixture({{}, {}, {}});
    PriorityRanking ranking;
    ranking.order = {{2, 0, TieRule::Primary}, {0, 1, TieRule::Primary}, {1, 2, TieRule::Primary}};
    auto a = allocate(ranking, f.state, 2, true);
    CHECK(a.assign == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(is_feasible(f.state, a, 2, true));
}

TEST_CASE("allocate renews committed ventilators first") {
    auto f = make_fixture({{}, {}, {}, {.ventilated = true}});
    PriorityRanking ranking;
    ranking.order = {{0, 0, TieRule::Primary}, {1, 1, TieRule::Primary}, {2, 2, TieRule::Primary},
                     {3, 3, TieRule::Primary}};
    auto a = allocate(ranking, f.state, 2, true);
    CHECK(a.assign == std::vector<std::uint8_t>{1, 0, 0, 1});
    // reassessment mode ignores possession
    auto b = allocate(ranking, f.state, 2, false);
    CHECK(b.assign == std::vector<std::uint8_t>{1, 1, 0, 0});
}

TEST_CASE("allocate with zero capacity") {
    auto f = make_fixture({{}, {}});
    PriorityRanking ranking;
    ranking.order = {{0, 0, TieRule::Primary}, {1, 1, TieRule::Primary}};
    auto a = allocate(ranking, f.state, 0, true);
    CHECK(a.assign == std::vector<std::uint8_t>{0, 0});
}

TEST_CASE("allocate rejects capacity below committed ventilators") {
    auto f = make_fixture({{.ventilated = true}, {.ventilated = true}});
    PriorityRanking ranking;
    CHECK_THROWS_AS(allocate(ranking, f.state, 1, true), ConfigError);
}

TEST_CASE("every protocol produces feasible actions on random states") {
    RandomStream rng(31);
    std::vector<std::string> names = {"lottery", "youngest", "sofa", "mp", "dt"};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<PatientSpec> specs;
        int n = 1 + static_cast<int>(rng.uniform_int(8));
        int vented = 0;
        for (int i = 0; i < n; ++i) {
            PatientSpec ps;
            ps.age = 20 + static_cast<int>(rng.uniform_int(70));
            ps.sofa = static_cast<int>(rng.uniform_int(25));
            ps.bmi = 16 + 30 * rng.uniform();
            ps.comorbidity = rng.bernoulli(0.3);
            ps.admission_day = static_cast<int>(rng.uniform_int(10));
            ps.ventilated = rng.bernoulli(0.3);
            vented += ps.ventilated ? 1 : 0;
            specs.push_back(ps);
        }
        auto f = make_fixture(specs);
        int capacity = vented + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n + 1)));
        bool withdrawal = rng.bernoulli(0.5);
        for (const auto& name : names) {
            auto policy = make_baseline(name);
            auto a = policy->decide(f.state, f.cohort, capacity, withdrawal, rng);
            CHECK(is_feasible(f.state, a, capacity, withdrawal));
        }
    }
}

TEST_CASE("with enough capacity every protocol ventilates all requesters") {
    RandomStream rng(37);
    std::vector<PatientSpec> specs(6);
    auto f = make_fixture(specs);
    for (const auto& name : {"lottery", "youngest", "sofa", "mp", "dt"}) {
        auto policy = make_baseline(name);
        auto a = policy->decide(f.state, f.cohort, 6, true, rng);
        CHECK(a.total() == 6);
    }
}

TEST_CASE("rankings are a total order over requesting beds") {
    RandomStream rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<PatientSpec> specs(5);
        for (auto& ps : specs) {
            ps.age = 20 + static_cast<int>(rng.uniform_int(70));
            ps.sofa = static_cast<int>(rng.uniform_int(25));
        }
        auto f = make_fixture(specs);
        for (auto* fn : {&rank_sofa, &rank_mp}) {
            auto r = (*fn)(f.state, f.cohort, rng);
            std::vector<int> beds = order_of(r);
            std::sort(beds.begin(), beds.end());
            CHECK(beds == std::vector<int>{0, 1, 2, 3, 4});
        }
    }
}

TEST_CASE("tier rankings ignore perturbations inside a band") {
    // same tiers, different raw scores: identical order under the same stream
    auto a = make_fixture({{.sofa = 5}, {.sofa = 9}, {.sofa = 13}});
    auto b = make_fixture({{.sofa = 7}, {.sofa = 11}, {.sofa = 20}});
    RandomStream r1(77), r2(77);
    CHECK(order_of(rank_sofa(a.state, a.cohort, r1)) == order_of(rank_sofa(b.state, b.cohort, r2)));

    auto c = make_fixture({{.age = 30, .sofa = 3}, {.age = 55, .sofa = 10}});
    auto d = make_fixture({{.age = 45, .sofa = 7}, {.age = 69, .sofa = 11}});
    RandomStream r3(78), r4(78);
    CHECK(order_of(rank_mp(c.state, c.cohort, r3)) == order_of(rank_mp(d.state, d.cohort, r4)));
}

TEST_CASE("unknown protocol name is a configuration error") {
    CHECK_THROWS_AS(make_baseline("nope"), ConfigError);
}
