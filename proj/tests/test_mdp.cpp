#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "triage/mdp.hpp"

using namespace triage;
using namespace triage::mdp;

namespace {

ClinicalTrajectory make_traj(int length, Outcome outcome, int sofa = 8) {
    ClinicalTrajectory t;
    t.patient_id = "t";
    t.group = 0;
    t.age = 50;
    t.bmi = 25;
    t.outcome = outcome;
    t.sofa_total.assign(static_cast<std::size_t>(length), sofa);
    t.conditions.assign(static_cast<std::size_t>(length), std::vector<double>{0.3, 0.4, 0.5});
    return t;
}

BedState normal_bed(int cursor = 0, bool ventilated = false) {
    BedState b;
    b.condition = BedCondition::Normal;
    b.ventilated = ventilated;
    b.occupant = Occupant{0, cursor, 0, ventilated, 0};
    return b;
}

SimState make_state(std::vector<BedState> beds) {
    SimState s;
    s.beds = std::move(beds);
    s.counters = FairnessCounters(4);
    return s;
}

Action make_action(std::vector<int> bits) {
    Action a;
    for (int b : bits) a.assign.push_back(static_cast<std::uint8_t>(b));
    return a;
}

// Independent KL oracle: direct sum in extended precision.
double kl_oracle(const std::vector<std::int64_t>& n, const std::vector<std::int64_t>& m,
                 double eps) {
    long double ns = 0, ms = 0;
    for (auto v : n) ns += v;
    for (auto v : m) ms += v;
    if (ns == 0 || ms == 0) return 0.0;
    const long double nt = ns + static_cast<long double>(eps) * n.size();
    const long double mt = ms + static_cast<long double>(eps) * m.size();
    long double kl = 0;
    for (std::size_t g = 0; g < n.size(); ++g) {
        const long double p = (n[g] + static_cast<long double>(eps)) / nt;
        const long double q = (m[g] + static_cast<long double>(eps)) / mt;
        kl += p * std::log(p / q);
    }
    if (kl < 0) kl = 0;
    return static_cast<double>(kl);
}

FairnessCounters counters(std::vector<std::int64_t> n, std::vector<std::int64_t> m) {
    FairnessCounters c(n.size());
    c.arrivals = std::move(n);
    c.ventilated = std::move(m);
    return c;
}

} // namespace

TEST_CASE("feasibility basics") {
    auto vacant = make_state({BedState{}, BedState{}, BedState{}});
    CHECK(is_feasible(vacant, make_action({0, 0, 0}), 1, true));
    CHECK_FALSE(is_feasible(vacant, make_action({1, 0, 0}), 1, true)); // no patient there

    auto with_vent = make_state({normal_bed(0, true), normal_bed(), normal_bed()});
    CHECK_FALSE(is_feasible(with_vent, make_action({0, 1, 0}), 2, true)); // withdrawal
    CHECK(is_feasible(with_vent, make_action({0, 1, 0}), 2, false));     // reassessment mode

    auto four = make_state({normal_bed(), normal_bed(), normal_bed(), normal_bed()});
    CHECK_FALSE(is_feasible(four, make_action({1, 1, 1, 0}), 2, false)); // capacity
    CHECK(is_feasible(four, make_action({1, 1, 1, 0}), 3, false));

    CHECK_THROWS_AS(is_feasible(four, make_action({1, 0}), 2, false), ShapeError);
}

TEST_CASE("feasibility is monotone in capacity") {
    RandomStream rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + static_cast<int>(rng.uniform_int(6));
        std::vector<BedState> beds;
        for (int i = 0; i < n; ++i) {
            double u = rng.uniform();
            if (u < 0.4)
                beds.push_back(BedState{});
            else
                beds.push_back(normal_bed(0, rng.bernoulli(0.3)));
        }
        auto state = make_state(beds);
        Action a;
        for (int i = 0; i < n; ++i) a.assign.push_back(rng.bernoulli(0.5) ? 1 : 0);
        int c = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n + 1)));
        bool w = rng.bernoulli(0.5);
        if (is_feasible(state, a, c, w)) CHECK(is_feasible(state, a, c + 1, w));
    }
}

TEST_CASE("ventilated transition advances to the recorded outcome") {
    RandomStream rng(1);
    auto traj = make_traj(3, Outcome::Survived);
    auto bed = normal_bed(2);
    auto next = apply_clinical_transition(bed, true, 1.0, traj, rng);
    CHECK(next.condition == BedCondition::Survived);

    auto traj2 = make_traj(3, Outcome::Dead);
    auto next2 = apply_clinical_transition(normal_bed(2), true, 1.0, traj2, rng);
    CHECK(next2.condition == BedCondition::Dead);

    auto mid = apply_clinical_transition(normal_bed(0), true, 1.0, traj, rng);
    CHECK(mid.condition == BedCondition::Normal);
    CHECK(mid.occupant->cursor == 1);
    CHECK(mid.ventilated);
}

TEST_CASE("denied transition: certain death at p=1, untouched at p=0") {
    RandomStream rng(2);
    auto traj = make_traj(5, Outcome::Survived);
    auto dead = apply_clinical_transition(normal_bed(1), false, 1.0, traj, rng);
    CHECK(dead.condition == BedCondition::Dead);

    auto waiting = apply_clinical_transition(normal_bed(1), false, 0.0, traj, rng);
    CHECK(waiting.condition == BedCondition::Normal);
    CHECK(waiting.occupant->cursor == 1); // cursor frozen
    CHECK_FALSE(waiting.ventilated);
}

TEST_CASE("denied transition death frequency matches p") {
    RandomStream rng(3);
    auto traj = make_traj(5, Outcome::Survived);
    int deaths = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        auto next = apply_clinical_transition(normal_bed(1), false, 0.3, traj, rng);
        if (next.condition == BedCondition::Dead) ++deaths;
    }
    double freq = static_cast<double>(deaths) / trials;
    CHECK(freq == doctest::Approx(0.3).epsilon(0.04));
    CHECK(std::abs(freq - 0.3) <= 0.01);
}

TEST_CASE("transition rejects non-Normal beds") {
    RandomStream rng(4);
    auto traj = make_traj(2, Outcome::Survived);
    CHECK_THROWS_AS(apply_clinical_transition(BedState{}, true, 1.0, traj, rng), ContractError);
}

TEST_CASE("ventilated patients never die before their final step") {
    RandomStream rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        int len = 1 + static_cast<int>(rng.uniform_int(8));
        Outcome oc = rng.bernoulli(0.5) ? Outcome::Survived : Outcome::Dead;
        auto traj = make_traj(len, oc);
        BedState bed = normal_bed(0);
        for (int d = 0; d + 1 < len; ++d) {
            bed = apply_clinical_transition(bed, true, 1.0, traj, rng);
            REQUIRE(bed.condition == BedCondition::Normal);
        }
        bed = apply_clinical_transition(bed, true, 1.0, traj, rng);
        CHECK(bed.condition ==
              (oc == Outcome::Survived ? BedCondition::Survived : BedCondition::Dead));
    }
}

TEST_CASE("terminal reward counts events") {
    StepEvents ev;
    ev.newly_survived = {{0, 0}, {1, 1}};
    CHECK(terminal_reward(ev) == doctest::Approx(2));
    ev.newly_dead_post_vent = {{2, 2}};
    ev.newly_dead_denied = {{3, 3}};
    CHECK(terminal_reward(ev) == doctest::Approx(2 - 2));
    StepEvents ev2;
    ev2.newly_survived = {{0, 0}};
    ev2.newly_dead_post_vent = {{1, 1}};
    ev2.newly_dead_denied = {{2, 2}};
    CHECK(terminal_reward(ev2) == doctest::Approx(-1));
    CHECK(terminal_reward(StepEvents{}) == doctest::Approx(0));
}

TEST_CASE("ventilation cost is the number of ventilators in use") {
    CHECK(ventilation_cost(make_action({0, 0, 0})) == doctest::Approx(0));
    CHECK(ventilation_cost(make_action({1, 1, 0, 1})) == doctest::Approx(3));
    CHECK(-0.1 * ventilation_cost(make_action({1, 1, 0, 1})) == doctest::Approx(-0.3));
}

TEST_CASE("fairness penalty of matched distributions is zero") {
    auto c = counters({10, 10, 10, 10}, {5, 5, 5, 5});
    CHECK(fairness_penalty(c, 1e-6) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fairness penalty matches the hand-evaluated KL sum") {
    auto c = counters({10, 10, 10, 10}, {4, 4, 4, 8});
    // sum_g p_g ln(p_g/q_g), p = [.25 x4], q = [.2,.2,.2,.4]
    //   = 3*0.25*ln(1.25) + 0.25*ln(0.625) = 0.04985675617...
    const double expected = 0.04985675617422341;
    CHECK(fairness_penalty(c, 1e-6) == doctest::Approx(expected).epsilon(1e-5));
    CHECK(fairness_penalty(c, 1e-6) == doctest::Approx(kl_oracle(c.arrivals, c.ventilated, 1e-6)));
}

TEST_CASE("fairness penalty is zero before any ventilation") {
    auto c = counters({1, 0, 0, 0}, {0, 0, 0, 0});
    CHECK(fairness_penalty(c, 1e-6) == 0.0);
    auto empty = counters({0, 0, 0, 0}, {0, 0, 0, 0});
    CHECK(fairness_penalty(empty, 1e-6) == 0.0);
}

TEST_CASE("fairness penalty agrees with the independent oracle on random counters") {
    RandomStream rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::int64_t> n(4), m(4);
        for (int g = 0; g < 4; ++g) {
            n[static_cast<std::size_t>(g)] = static_cast<std::int64_t>(rng.uniform_int(200));
            m[static_cast<std::size_t>(g)] = n[static_cast<std::size_t>(g)] == 0
                                                 ? 0
                                                 : static_cast<std::int64_t>(rng.uniform_int(
                                                       static_cast<std::uint64_t>(n[static_cast<std::size_t>(g)] + 1)));
        }
        auto c = counters(n, m);
        double lib = fairness_penalty(c, 1e-6);
        double ora = kl_oracle(n, m, 1e-6);
        CHECK(lib >= 0.0);
        CHECK(std::abs(lib - ora) <= 1e-10);
    }
}

TEST_CASE("total reward composes the three parts") {
    RewardParams params; // mu=-0.1, lambda=1e3
    StepEvents ev;
    ev.newly_survived = {{0, 0}};
    auto c = counters({10, 10, 10, 10}, {5, 5, 5, 5});
    CHECK(total_reward(ev, make_action({1, 1, 0}), c, params) == doctest::Approx(0.8));
}

TEST_CASE("all reward flags off yields zero") {
    RewardParams params;
    params.enable_terminal = params.enable_cost = params.enable_fairness = false;
    StepEvents ev;
    ev.newly_survived = {{0, 0}, {1, 1}};
    auto c = counters({9, 1, 0, 0}, {1, 1, 0, 0});
    CHECK(total_reward(ev, make_action({1, 1, 1}), c, params) == 0.0);
}

TEST_CASE("fairness term enters with a negative sign") {
    RewardParams params;
    params.mu = 0;
    auto c = counters({10, 10, 10, 10}, {4, 4, 4, 8});
    double expected = -1000.0 * kl_oracle(c.arrivals, c.ventilated, params.kl_epsilon);
    double r = total_reward(StepEvents{}, make_action({0, 0, 0, 0}), c, params);
    CHECK(r == doctest::Approx(expected).epsilon(1e-10));
    CHECK(r == doctest::Approx(-49.8568).epsilon(1e-4));
    CHECK(r < 0);
}

TEST_CASE("with lambda and mu zero the reward is the terminal part") {
    RewardParams params;
    params.mu = 0;
    params.lambda = 0;
    RandomStream rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        StepEvents ev;
        int s = static_cast<int>(rng.uniform_int(4));
        int d = static_cast<int>(rng.uniform_int(4));
        for (int i = 0; i < s; ++i) ev.newly_survived.push_back({i, i});
        for (int i = 0; i < d; ++i) ev.newly_dead_denied.push_back({10 + i, 10 + i});
        auto c = counters({static_cast<std::int64_t>(rng.uniform_int(50)), 3, 4, 5},
                          {1, 2, 3, 4});
        CHECK(total_reward(ev, make_action({1, 0, 1}), c, params) ==
              doctest::Approx(terminal_reward(ev)));
    }
}
