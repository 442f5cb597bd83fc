#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "triage/errors.hpp"
#include "triage/mdp.hpp"
#include "triage/random.hpp"
#include "triage/trajectory.hpp"

namespace triage::protocols {

enum class TieRule { None, Primary, Lottery, AgeGroup, AdmissionDay, BedIndex };

inline const char* to_string(TieRule r) {
    switch (r) {
        case TieRule::None: return "none";
        case TieRule::Primary: return "primary";
        case TieRule::Lottery: return "lottery";
        case TieRule::AgeGroup: return "age_group";
        case TieRule::AdmissionDay: return "admission_day";
        case TieRule::BedIndex: return "bed_index";
    }
    return "?";
}

struct RankedBed {
    int bed = -1;
    double priority_key = 0.0;        // protocol-specific; smaller = earlier
    TieRule decided_by = TieRule::None; // rule that separated this entry from the next
};

// Best-first total order over the beds whose occupant currently requests a
// ventilator (all Normal beds; everyone in the unit is prescribed one).
struct PriorityRanking {
    std::vector<RankedBed> order;
};

namespace detail {

// key components compared lexicographically; the lottery component is a
// uniformly random rank drawn per decision, so ties resolve as a lottery.
struct SortEntry {
    int bed;
    double k1 = 0, k2 = 0, k3 = 0;
    double lottery = 0;
    TieRule r1 = TieRule::Primary, r2 = TieRule::None, r3 = TieRule::None,
            r_last = TieRule::Lottery;
};

inline PriorityRanking finish(std::vector<SortEntry> entries) {
    std::sort(entries.begin(), entries.end(), [](const SortEntry& a, const SortEntry& b) {
        return std::tie(a.k1, a.k2, a.k3, a.lottery, a.bed) <
               std::tie(b.k1, b.k2, b.k3, b.lottery, b.bed);
    });
    PriorityRanking out;
    out.order.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        RankedBed rb;
        rb.bed = entries[i].bed;
        rb.priority_key = entries[i].k1;
        if (i + 1 < entries.size()) {
            const auto& a = entries[i];
            const auto& b = entries[i + 1];
            if (a.k1 != b.k1)
                rb.decided_by = a.r1;
            else if (a.k2 != b.k2)
                rb.decided_by = a.r2;
            else if (a.k3 != b.k3)
                rb.decided_by = a.r3;
            else if (a.lottery != b.lottery)
                rb.decided_by = a.r_last;
            else
                rb.decided_by = TieRule::BedIndex;
        }
        out.order.push_back(rb);
    }
    return out;
}

inline std::vector<int> requesting_beds(const mdp::SimState& state) {
    std::vector<int> beds;
    for (std::size_t i = 0; i < state.beds.size(); ++i)
        if (state.beds[i].is_normal()) beds.push_back(static_cast<int>(i));
    return beds;
}

inline std::vector<double> lottery_ranks(std::size_t n, RandomStream& rng) {
    std::vector<int> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
    rng.shuffle(perm);
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) rank[static_cast<std::size_t>(perm[i])] = static_cast<double>(i);
    return rank;
}

inline const ClinicalTrajectory& traj_of(const mdp::SimState& state, const CohortDataset& cohort,
                                         int bed) {
    return cohort.trajectories.at(
        static_cast<std::size_t>(state.beds[static_cast<std::size_t>(bed)].occupant->patient));
}

inline int current_sofa(const mdp::SimState& state, const CohortDataset& cohort, int bed) {
    const auto& occ = *state.beds[static_cast<std::size_t>(bed)].occupant;
    return traj_of(state, cohort, bed).sofa_total.at(static_cast<std::size_t>(occ.cursor));
}

} // namespace detail

// Lottery: uniformly random order.
inline PriorityRanking rank_lottery(const mdp::SimState& state, RandomStream& rng) {
    auto beds = detail::requesting_beds(state);
    auto lot = detail::lottery_ranks(beds.size(), rng);
    std::vector<detail::SortEntry> entries(beds.size());
    for (std::size_t i = 0; i < beds.size(); ++i) {
        entries[i].bed = beds[i];
        entries[i].k1 = lot[i];
        entries[i].r1 = TieRule::Lottery;
    }
    return detail::finish(std::move(entries));
}

// Youngest first; lottery among equal ages.
inline PriorityRanking rank_youngest(const mdp::SimState& state, const CohortDataset& cohort,
                                     RandomStream& rng) {
    auto beds = detail::requesting_beds(state);
    auto lot = detail::lottery_ranks(beds.size(), rng);
    std::vector<detail::SortEntry> entries(beds.size());
    for (std::size_t i = 0; i < beds.size(); ++i) {
        entries[i].bed = beds[i];
        entries[i].k1 = detail::traj_of(state, cohort, beds[i]).age;
        entries[i].lottery = lot[i];
    }
    return detail::finish(std::move(entries));
}

// SOFA tiers 0-7 / 8-11 / 12+, lottery within tier.
inline int sofa_tier(int sofa) { return sofa <= 7 ? 0 : (sofa <= 11 ? 1 : 2); }

inline PriorityRanking rank_sofa(const mdp::SimState& state, const CohortDataset& cohort,
                                 RandomStream& rng) {
    auto beds = detail::requesting_beds(state);
    auto lot = detail::lottery_ranks(beds.size(), rng);
    std::vector<detail::SortEntry> entries(beds.size());
    for (std::size_t i = 0; i < beds.size(); ++i) {
        entries[i].bed = beds[i];
        entries[i].k1 = sofa_tier(detail::current_sofa(state, cohort, beds[i]));
        entries[i].lottery = lot[i];
    }
    return detail::finish(std::move(entries));
}

// Multiprinciple: SOFA band points (0-8:1, 9-11:2, 12-14:3, >14:4), +3 for
// severe comorbidities; ties by younger age group (0-49, 50-69, 70-84, 85+),
// then lottery.
inline int mp_sofa_points(int sofa) {
    if (sofa <= 8) return 1;
    if (sofa <= 11) return 2;
    if (sofa <= 14) return 3;
    return 4;
}

inline int mp_age_group(int age) {
    if (age <= 49) return 0;
    if (age <= 69) return 1;
    if (age <= 84) return 2;
    return 3;
}

inline PriorityRanking rank_mp(const mdp::SimState& state, const CohortDataset& cohort,
                               RandomStream& rng) {
    auto beds = detail::requesting_beds(state);
    auto lot = detail::lottery_ranks(beds.size(), rng);
    std::vector<detail::SortEntry> entries(beds.size());
    for (std::size_t i = 0; i < beds.size(); ++i) {
        const auto& traj = detail::traj_of(state, cohort, beds[i]);
        int points = mp_sofa_points(detail::current_sofa(state, cohort, beds[i])) +
                     (traj.severe_comorbidity ? 3 : 0);
        entries[i].bed = beds[i];
        entries[i].k1 = points;
        entries[i].k2 = mp_age_group(traj.age);
        entries[i].r2 = TieRule::AgeGroup;
        entries[i].lottery = lot[i];
    }
    return detail::finish(std::move(entries));
}

// Configurable two-level tree over (SOFA, age, BMI). The published source
// protocol does not reproduce its exact split points, so these defaults are
// a stand-in and can be overridden from configuration.
struct DtThresholds {
    int sofa_max = 10;   // level 1 requires SOFA <= sofa_max
    int age_max = 70;    // ... and age < age_max
    double bmi_max = 40; // ... and BMI < bmi_max
};

inline PriorityRanking rank_dt(const mdp::SimState& state, const CohortDataset& cohort,
                               const DtThresholds& th = {}) {
    auto beds = detail::requesting_beds(state);
    std::vector<detail::SortEntry> entries(beds.size());
    for (std::size_t i = 0; i < beds.size(); ++i) {
        const auto& traj = detail::traj_of(state, cohort, beds[i]);
        const auto& occ = *state.beds[static_cast<std::size_t>(beds[i])].occupant;
        bool level1 = detail::current_sofa(state, cohort, beds[i]) <= th.sofa_max &&
                      traj.age < th.age_max && traj.bmi < th.bmi_max;
        entries[i].bed = beds[i];
        entries[i].k1 = level1 ? 1 : 2;
        entries[i].k2 = occ.admission_day;
        entries[i].r2 = TieRule::AdmissionDay;
        entries[i].r_last = TieRule::BedIndex;
    }
    return detail::finish(std::move(entries));
}

// ---------------------------------------------------------------------------
// Ranking -> action. Under the withdrawal constraint, committed ventilators
// are renewed first and only the remaining slots go to the ranking.
// ---------------------------------------------------------------------------
inline mdp::Action allocate(const PriorityRanking& ranking, const mdp::SimState& state,
                            int capacity, bool withdrawal_on) {
    mdp::Action action;
    action.assign.assign(state.bed_count(), 0);
    int slots = capacity;
    if (withdrawal_on) {
        int locked = 0;
        for (std::size_t i = 0; i < state.beds.size(); ++i)
            if (state.beds[i].is_normal() && state.beds[i].ventilated) {
                action.assign[i] = 1;
                ++locked;
            }
        if (locked > capacity)
            throw ConfigError("capacity " + std::to_string(capacity) + " below " +
                              std::to_string(locked) + " committed ventilators");
        slots -= locked;
    }
    for (const auto& rb : ranking.order) {
        if (slots <= 0) break;
        auto idx = static_cast<std::size_t>(rb.bed);
        if (action.assign[idx]) continue; // already kept by the withdrawal rule
        action.assign[idx] = 1;
        --slots;
    }
    return action;
}

// ---------------------------------------------------------------------------
// Uniform policy interface shared by the heuristics and the learned model.
// ---------------------------------------------------------------------------
class AllocationPolicy {
public:
    virtual ~AllocationPolicy() = default;
    virtual std::string name() const = 0;
    virtual mdp::Action decide(const mdp::SimState& state, const CohortDataset& cohort,
                               int capacity, bool withdrawal_on, RandomStream& rng) const = 0;
};

namespace detail {

template <typename RankFn>
class RankingPolicy final : public AllocationPolicy {
public:
    RankingPolicy(std::string name, RankFn fn) : name_(std::move(name)), fn_(std::move(fn)) {}
    std::string name() const override { return name_; }
    mdp::Action decide(const mdp::SimState& state, const CohortDataset& cohort, int capacity,
                       bool withdrawal_on, RandomStream& rng) const override {
        return allocate(fn_(state, cohort, rng), state, capacity, withdrawal_on);
    }

private:
    std::string name_;
    RankFn fn_;
};

template <typename RankFn>
std::unique_ptr<AllocationPolicy> make_ranking_policy(std::string name, RankFn fn) {
    return std::make_unique<RankingPolicy<RankFn>>(std::move(name), std::move(fn));
}

} // namespace detail

// Baseline protocol by name: lottery | youngest | sofa | mp | dt.
inline std::unique_ptr<AllocationPolicy> make_baseline(const std::string& name,
                                                       const DtThresholds& dt = {}) {
    if (name == "lottery")
        return detail::make_ranking_policy(name, [](const mdp::SimState& s, const CohortDataset&,
                                                    RandomStream& rng) { return rank_lottery(s, rng); });
    if (name == "youngest")
        return detail::make_ranking_policy(name, [](const mdp::SimState& s, const CohortDataset& c,
                                                    RandomStream& rng) { return rank_youngest(s, c, rng); });
    if (name == "sofa")
        return detail::make_ranking_policy(name, [](const mdp::SimState& s, const CohortDataset& c,
                                                    RandomStream& rng) { return rank_sofa(s, c, rng); });
    if (name == "mp")
        return detail::make_ranking_policy(name, [](const mdp::SimState& s, const CohortDataset& c,
                                                    RandomStream& rng) { return rank_mp(s, c, rng); });
    if (name == "dt")
        return detail::make_ranking_policy(name, [dt](const mdp::SimState& s, const CohortDataset& c,
                                                      RandomStream&) { return rank_dt(s, c, dt); });
    throw ConfigError("unknown protocol '" + name + "'");
}

} // namespace triage::protocols
