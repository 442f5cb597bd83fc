#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "triage/errors.hpp"
#include "triage/random.hpp"
#include "triage/trajectory.hpp"

namespace triage::mdp {

// Special bed conditions beside a normal clinical state. Survived/Dead act
// as one-step terminators before the bed is vacated.
enum class BedCondition { Vacant, Normal, Survived, Dead };

struct Occupant {
    int patient = -1;      // index into the cohort
    int cursor = 0;        // current day within the trajectory
    int admission_day = 0; // simulator day of admission
    bool ever_ventilated = false;
    int ledger_entry = -1; // index into the episode ledger
};

struct BedState {
    BedCondition condition = BedCondition::Vacant;
    bool ventilated = false;
    std::optional<Occupant> occupant;

    bool is_normal() const { return condition == BedCondition::Normal; }
    bool is_terminal() const {
        return condition == BedCondition::Survived || condition == BedCondition::Dead;
    }
};

// Cumulative per-group arrival (n) and first-ventilation (m) counts.
struct FairnessCounters {
    std::vector<std::int64_t> arrivals;   // n_g
    std::vector<std::int64_t> ventilated; // m_g

    explicit FairnessCounters(std::size_t groups = 0)
        : arrivals(groups, 0), ventilated(groups, 0) {}
};

struct SimState {
    std::vector<BedState> beds;
    FairnessCounters counters;
    int day = 0;

    std::size_t bed_count() const { return beds.size(); }
    int ventilated_count() const {
        int c = 0;
        for (const auto& b : beds)
            if (b.is_normal() && b.ventilated) ++c;
        return c;
    }
    int normal_count() const {
        int c = 0;
        for (const auto& b : beds)
            if (b.is_normal()) ++c;
        return c;
    }
};

struct Action {
    std::vector<std::uint8_t> assign; // one bit per bed

    std::size_t size() const { return assign.size(); }
    int total() const {
        int s = 0;
        for (auto a : assign) s += a;
        return s;
    }
};

// Reward scalars; defaults follow the reported training configuration
// (ventilator cost -0.1, fairness weight 1e3).
struct RewardParams {
    double mu = -0.1;
    double lambda = 1e3;
    bool enable_terminal = true;
    bool enable_cost = true;
    bool enable_fairness = true;
    double kl_epsilon = 1e-6;

    void validate() const {
        if (!(kl_epsilon > 0)) throw ConfigError("kl_epsilon must be positive");
    }
};

struct PatientRef {
    int patient = -1;
    int ledger_entry = -1;
};

struct StepEvents {
    std::vector<PatientRef> newly_survived;
    std::vector<PatientRef> newly_dead_post_vent;
    std::vector<PatientRef> newly_dead_denied;
    std::vector<PatientRef> admissions;

    std::size_t survived_count() const { return newly_survived.size(); }
    std::size_t dead_count() const { return newly_dead_post_vent.size() + newly_dead_denied.size(); }
};

// ---------------------------------------------------------------------------
// Feasibility: capacity cap, optional withdrawal lock, no ventilators on
// empty or terminated beds.
// ---------------------------------------------------------------------------
inline bool is_feasible(const SimState& state, const Action& action, int capacity,
                        bool withdrawal_on) {
    if (action.size() != state.bed_count())
        throw ShapeError("action length " + std::to_string(action.size()) + " != bed count " +
                         std::to_string(state.bed_count()));
    int used = 0;
    for (std::size_t i = 0; i < action.size(); ++i) {
        const auto& bed = state.beds[i];
        const bool on = action.assign[i] != 0;
        if (on) {
            if (!bed.is_normal()) return false;
            ++used;
        } else if (withdrawal_on && bed.is_normal() && bed.ventilated) {
            return false;
        }
    }
    return used <= capacity;
}

// ---------------------------------------------------------------------------
// Per-bed clinical transition. Ventilated patients advance along their real
// trajectory; unventilated ones die with probability death_prob (otherwise
// they wait in place with a frozen cursor). death_prob == 1 reproduces the
// base assumption that unmet requests are fatal the same day.
// ---------------------------------------------------------------------------
inline BedState apply_clinical_transition(const BedState& bed, bool ventilate,
                                          double death_prob, const ClinicalTrajectory& traj,
                                          RandomStream& rng) {
    if (!bed.is_normal()) throw ContractError("apply_clinical_transition: bed is not Normal");
    const Occupant& occ = *bed.occupant;
    BedState next = bed;
    if (ventilate) {
        next.ventilated = true;
        next.occupant->ever_ventilated = true;
        if (occ.cursor + 1 >= traj.length()) {
            next.condition =
                traj.outcome == Outcome::Survived ? BedCondition::Survived : BedCondition::Dead;
        } else {
            next.occupant->cursor = occ.cursor + 1;
        }
        return next;
    }
    next.ventilated = false;
    bool dies;
    if (death_prob >= 1.0)
        dies = true;
    else if (death_prob <= 0.0)
        dies = false;
    else
        dies = rng.bernoulli(death_prob);
    if (dies) next.condition = BedCondition::Dead;
    // else: patient waits, cursor untouched
    return next;
}

// R_t: +1 per discharge alive, -1 per death of either cause.
inline double terminal_reward(const StepEvents& events) {
    return static_cast<double>(events.survived_count()) - static_cast<double>(events.dead_count());
}

// R_v: number of ventilators in use (scaled by mu in the total).
inline double ventilation_cost(const Action& action) { return static_cast<double>(action.total()); }

// R_f: KL between the arrival-frequency and ventilated-frequency group
// distributions. Counts are smoothed symmetrically with eps before
// normalizing so early-episode zeros stay finite. Defined as 0 until both
// counters have mass.
inline double fairness_penalty(const FairnessCounters& counters, double eps) {
    if (counters.arrivals.size() != counters.ventilated.size())
        throw ShapeError("fairness counters: group count mismatch");
    std::int64_t n_sum = 0, m_sum = 0;
    for (std::size_t g = 0; g < counters.arrivals.size(); ++g) {
        n_sum += counters.arrivals[g];
        m_sum += counters.ventilated[g];
    }
    if (n_sum == 0 || m_sum == 0) return 0.0;
    const double groups = static_cast<double>(counters.arrivals.size());
    const double n_tot = static_cast<double>(n_sum) + eps * groups;
    const double m_tot = static_cast<double>(m_sum) + eps * groups;
    double kl = 0.0;
    for (std::size_t g = 0; g < counters.arrivals.size(); ++g) {
        const double p = (static_cast<double>(counters.arrivals[g]) + eps) / n_tot;
        const double q = (static_cast<double>(counters.ventilated[g]) + eps) / m_tot;
        kl += p * std::log(p / q);
    }
    return std::max(0.0, kl);
}

// R(s,a) = R_t + mu*R_v - lambda*R_f. The fairness term enters with a
// negative sign: larger divergence from parity lowers the reward.
inline double total_reward(const StepEvents& events, const Action& action,
                           const FairnessCounters& counters, const RewardParams& params) {
    double r = 0.0;
    if (params.enable_terminal) r += terminal_reward(events);
    if (params.enable_cost) r += params.mu * ventilation_cost(action);
    if (params.enable_fairness) r -= params.lambda * fairness_penalty(counters, params.kl_epsilon);
    return r;
}

} // namespace triage::mdp
