#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/errors.hpp"
#include "triage/mdp.hpp"
#include "triage/protocols.hpp"
#include "triage/random.hpp"
#include "triage/trajectory.hpp"

namespace triage::sim {

struct SimConfig {
    int capacity = 8;           // C
    double arrival_rate = 12.0; // Lambda
    int bed_count = 0;          // N; 0 -> C + ceil(2*Lambda)
    bool withdrawal_on = true;
    double death_prob = 1.0; // p: chance a denied requester dies that day
    bool fairness_tracking = true;
    int horizon = 365;
    mdp::RewardParams reward;
    std::uint64_t seed = 0;

    int beds() const {
        return bed_count > 0 ? bed_count
                             : capacity + static_cast<int>(std::ceil(2.0 * arrival_rate));
    }

    void validate() const {
        if (capacity < 0) throw ConfigError("capacity must be >= 0");
        if (!(arrival_rate > 0)) throw ConfigError("arrival_rate must be positive");
        if (beds() < capacity) throw ConfigError("bed_count must be >= capacity");
        if (death_prob < 0 || death_prob > 1) throw ConfigError("death_prob must lie in [0,1]");
        reward.validate();
    }
};

struct TransitionTuple {
    mdp::SimState s;
    mdp::Action a;
    mdp::SimState s_next;
    double r = 0;
    mdp::StepEvents events;
};

// One line per step for the episode-log export.
struct StepSummary {
    int day = 0;
    std::string action_hex;
    double reward = 0;
    int survived = 0, dead_post_vent = 0, dead_denied = 0, admissions = 0;
};

enum class LedgerOutcome { Active, Survived, DeadPostVent, DeadDenied };

inline const char* to_string(LedgerOutcome o) {
    switch (o) {
        case LedgerOutcome::Active: return "active";
        case LedgerOutcome::Survived: return "survived";
        case LedgerOutcome::DeadPostVent: return "dead_post_vent";
        case LedgerOutcome::DeadDenied: return "dead_denied";
    }
    return "?";
}

// One row per admission. A trajectory can be re-admitted later in the same
// episode (it returns to the sampling pool); each re-admission gets its own
// row.
struct LedgerEntry {
    int patient = -1;
    int group = 0;
    int admission_day = 0;
    bool ventilated = false;
    LedgerOutcome outcome = LedgerOutcome::Active;
    // Admitted on the final step, so no allocation decision ever happened;
    // excluded from request/allocation rates, still part of conservation.
    bool pending = false;
};

struct EpisodeLog {
    std::vector<TransitionTuple> transitions; // filled only when recording is on
    std::vector<StepSummary> steps;
    std::vector<LedgerEntry> ledger;
    std::vector<int> daily_demand; // requesting beds at each decision point
    std::size_t group_count = 0;

    std::size_t survivors() const {
        return static_cast<std::size_t>(
            std::count_if(ledger.begin(), ledger.end(),
                          [](const LedgerEntry& e) { return e.outcome == LedgerOutcome::Survived; }));
    }
    std::size_t outcome_count(LedgerOutcome o) const {
        return static_cast<std::size_t>(std::count_if(
            ledger.begin(), ledger.end(), [o](const LedgerEntry& e) { return e.outcome == o; }));
    }
    std::vector<std::int64_t> group_requests() const {
        std::vector<std::int64_t> v(group_count, 0);
        for (const auto& e : ledger)
            if (!e.pending) v[static_cast<std::size_t>(e.group)]++;
        return v;
    }
    std::vector<std::int64_t> group_allocations() const {
        std::vector<std::int64_t> v(group_count, 0);
        for (const auto& e : ledger)
            if (!e.pending && e.ventilated) v[static_cast<std::size_t>(e.group)]++;
        return v;
    }
};

inline std::string action_to_hex(const mdp::Action& action) {
    std::string out = "0x";
    const std::size_t n = action.size();
    const std::size_t nibbles = (n + 3) / 4;
    for (std::size_t ni = nibbles; ni-- > 0;) {
        unsigned v = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            std::size_t bit = ni * 4 + b;
            if (bit < n && action.assign[bit]) v |= 1u << b;
        }
        out.push_back("0123456789abcdef"[v]);
    }
    return out;
}

// Fixed-capacity ring buffer of replay tuples; overwrites oldest.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 16000) : capacity_(capacity) {}

    void push(TransitionTuple t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const TransitionTuple& at(std::size_t i) const { return data_[(head_ + i) % data_.size()]; }

private:
    std::size_t capacity_;
    std::size_t head_ = 0; // oldest element once full
    std::vector<TransitionTuple> data_;
};

// ---------------------------------------------------------------------------
// Trajectory-replay simulator. Arrivals are Poisson draws from the cohort
// pool without replacement; removed patients (discharged, dead or denied)
// return to the pool so episodes can run indefinitely.
// ---------------------------------------------------------------------------
class Simulator {
public:
    Simulator(const SimConfig& config, const CohortDataset& cohort)
        : config_(config), cohort_(&cohort) {
        config_.validate();
        if (cohort.trajectories.empty()) throw ConfigError("simulator requires a non-empty cohort");
    }

    const SimConfig& config() const { return config_; }
    const CohortDataset& cohort() const { return *cohort_; }
    const mdp::SimState& state() const { return state_; }
    const std::vector<LedgerEntry>& ledger() const { return ledger_; }
    RandomStream& policy_stream() { return policy_rng_; }

    mdp::SimState reset(std::uint64_t seed) {
        env_rng_ = RandomStream(seed).fork("env");
        policy_rng_ = RandomStream(seed).fork("policy");
        const int n_beds = config_.beds();
        state_ = mdp::SimState{};
        state_.beds.assign(static_cast<std::size_t>(n_beds), mdp::BedState{});
        state_.counters = mdp::FairnessCounters(cohort_->n_groups());
        state_.day = 0;
        ledger_.clear();
        pool_.resize(cohort_->size());
        for (std::size_t i = 0; i < pool_.size(); ++i) pool_[i] = static_cast<int>(i);

        int arrivals = env_rng_.poisson(config_.arrival_rate);
        arrivals = std::min({arrivals, n_beds, static_cast<int>(pool_.size())});
        admit_patients(arrivals, nullptr);
        return state_;
    }

    // One environment day: clinical transitions under the action, clearing
    // of last step's terminal markers, Poisson admissions, reward.
    std::pair<double, mdp::StepEvents> step(const mdp::Action& action) {
        if (!mdp::is_feasible(state_, action, config_.capacity, config_.withdrawal_on))
            throw ContractError("step: infeasible action");
        mdp::StepEvents events;

        // Terminal markers persist exactly one step, then the bed frees up
        // and the trajectory re-enters the sampling pool.
        for (auto& bed : state_.beds) {
            if (bed.is_terminal()) {
                pool_.push_back(bed.occupant->patient);
                bed = mdp::BedState{};
            }
        }

        for (std::size_t i = 0; i < state_.beds.size(); ++i) {
            auto& bed = state_.beds[i];
            if (!bed.is_normal()) continue;
            const bool vent = action.assign[i] != 0;
            const auto& occ = *bed.occupant;
            const auto& traj = cohort_->trajectories[static_cast<std::size_t>(occ.patient)];
            if (vent && !occ.ever_ventilated) {
                if (config_.fairness_tracking)
                    state_.counters.ventilated[static_cast<std::size_t>(traj.group)]++;
                ledger_[static_cast<std::size_t>(occ.ledger_entry)].ventilated = true;
            }
            bed = mdp::apply_clinical_transition(bed, vent, config_.death_prob, traj, env_rng_);
            if (bed.is_terminal()) {
                auto& entry = ledger_[static_cast<std::size_t>(bed.occupant->ledger_entry)];
                mdp::PatientRef ref{occ.patient, occ.ledger_entry};
                if (bed.condition == mdp::BedCondition::Survived) {
                    entry.outcome = LedgerOutcome::Survived;
                    events.newly_survived.push_back(ref);
                } else if (vent) {
                    entry.outcome = LedgerOutcome::DeadPostVent;
                    events.newly_dead_post_vent.push_back(ref);
                } else {
                    entry.outcome = LedgerOutcome::DeadDenied;
                    events.newly_dead_denied.push_back(ref);
                }
            }
        }

        // Arrivals recorded after the day advances: an admission on day d
        // receives its first allocation decision at step d+1.
        state_.day += 1;
        int arrivals = env_rng_.poisson(config_.arrival_rate);
        arrivals = std::min(arrivals, static_cast<int>(pool_.size()));
        admit_patients(arrivals, &events);

        double r = mdp::total_reward(events, action, state_.counters, config_.reward);
        return {r, events};
    }

    // Convenience wrapper producing a replay tuple.
    TransitionTuple step_tuple(const mdp::Action& action) {
        TransitionTuple t;
        t.s = state_;
        t.a = action;
        auto [r, events] = step(action);
        t.s_next = state_;
        t.r = r;
        t.events = std::move(events);
        return t;
    }

private:
    void admit_patients(int count, mdp::StepEvents* events) {
        if (count <= 0) return;
        // sample without replacement from the pool
        std::vector<int> chosen;
        chosen.reserve(static_cast<std::size_t>(count));
        for (int c = 0; c < count; ++c) {
            std::size_t j = static_cast<std::size_t>(env_rng_.uniform_int(pool_.size()));
            chosen.push_back(pool_[j]);
            pool_[j] = pool_.back();
            pool_.pop_back();
        }
        std::vector<std::size_t> vacant;
        for (std::size_t i = 0; i < state_.beds.size(); ++i)
            if (state_.beds[i].condition == mdp::BedCondition::Vacant) vacant.push_back(i);

        for (int patient : chosen) {
            const auto& traj = cohort_->trajectories[static_cast<std::size_t>(patient)];
            if (!vacant.empty()) {
                std::size_t vi = static_cast<std::size_t>(env_rng_.uniform_int(vacant.size()));
                std::size_t bed_idx = vacant[vi];
                vacant[vi] = vacant.back();
                vacant.pop_back();

                mdp::BedState bed;
                bed.condition = mdp::BedCondition::Normal;
                bed.ventilated = false;
                bed.occupant = mdp::Occupant{patient, 0, state_.day, false,
                                             static_cast<int>(ledger_.size())};
                ledger_.push_back({patient, traj.group, state_.day, false, LedgerOutcome::Active});
                state_.beds[bed_idx] = bed;
                if (config_.fairness_tracking)
                    state_.counters.arrivals[static_cast<std::size_t>(traj.group)]++;
                if (events)
                    events->admissions.push_back(
                        {patient, static_cast<int>(ledger_.size()) - 1});
            } else {
                // No free bed. The request is denied on arrival: fatal with
                // probability p, otherwise the patient retries from the pool
                // on a later day and no request is recorded.
                bool dies;
                if (config_.death_prob >= 1.0)
                    dies = true;
                else if (config_.death_prob <= 0.0)
                    dies = false;
                else
                    dies = env_rng_.bernoulli(config_.death_prob);
                if (dies) {
                    ledger_.push_back(
                        {patient, traj.group, state_.day, false, LedgerOutcome::DeadDenied});
                    if (config_.fairness_tracking)
                        state_.counters.arrivals[static_cast<std::size_t>(traj.group)]++;
                    if (events)
                        events->newly_dead_denied.push_back(
                            {patient, static_cast<int>(ledger_.size()) - 1});
                    pool_.push_back(patient);
                } else {
                    pool_.push_back(patient);
                }
            }
        }
    }

    SimConfig config_;
    const CohortDataset* cohort_;
    mdp::SimState state_;
    RandomStream env_rng_{0};
    RandomStream policy_rng_{0};
    std::vector<int> pool_; // trajectory indices currently not admitted
    std::vector<LedgerEntry> ledger_;
};

// ---------------------------------------------------------------------------
// Episode driver
// ---------------------------------------------------------------------------
inline EpisodeLog run_episode(const protocols::AllocationPolicy& policy, const SimConfig& config,
                              const CohortDataset& cohort, int horizon, std::uint64_t seed,
                              bool record_transitions = false) {
    Simulator sim(config, cohort);
    sim.reset(seed);
    EpisodeLog log;
    log.group_count = cohort.n_groups();
    log.steps.reserve(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) {
        log.daily_demand.push_back(sim.state().normal_count());
        mdp::Action action = policy.decide(sim.state(), cohort, config.capacity,
                                           config.withdrawal_on, sim.policy_stream());
        TransitionTuple tuple = sim.step_tuple(action);
        StepSummary s;
        s.day = tuple.s.day;
        s.action_hex = action_to_hex(tuple.a);
        s.reward = tuple.r;
        s.survived = static_cast<int>(tuple.events.survived_count());
        s.dead_post_vent = static_cast<int>(tuple.events.newly_dead_post_vent.size());
        s.dead_denied = static_cast<int>(tuple.events.newly_dead_denied.size());
        s.admissions = static_cast<int>(tuple.events.admissions.size());
        log.steps.push_back(std::move(s));
        if (record_transitions) log.transitions.push_back(std::move(tuple));
    }
    log.ledger = sim.ledger();
    for (auto& e : log.ledger)
        e.pending = e.admission_day == horizon && e.outcome == LedgerOutcome::Active;
    return log;
}

// Fills a ring buffer by rolling the simulator under a behavior policy.
// Off-policy training refreshes the buffer with the learner each epoch;
// offline training calls this once with a fixed heuristic.
inline void fill_replay(const protocols::AllocationPolicy& policy, Simulator& sim, int steps,
                        ReplayBuffer& buffer) {
    if (steps < 1) throw ConfigError("fill_replay: steps must be >= 1");
    for (int t = 0; t < steps; ++t) {
        mdp::Action action = policy.decide(sim.state(), sim.cohort(), sim.config().capacity,
                                           sim.config().withdrawal_on, sim.policy_stream());
        buffer.push(sim.step_tuple(action));
    }
}

// ---------------------------------------------------------------------------
// JSON-lines export: one summary per step, footer with the patient ledger.
// ---------------------------------------------------------------------------
inline void write_episode_jsonl(const EpisodeLog& log, const std::vector<std::string>& group_names,
                                std::ostream& out) {
    for (const auto& s : log.steps) {
        nlohmann::json j = {{"day", s.day},
                            {"action_hex", s.action_hex},
                            {"reward", s.reward},
                            {"survived", s.survived},
                            {"dead_post_vent", s.dead_post_vent},
                            {"dead_denied", s.dead_denied},
                            {"admissions", s.admissions}};
        out << j.dump() << "\n";
    }
    nlohmann::json footer;
    footer["ledger"] = nlohmann::json::array();
    for (const auto& e : log.ledger) {
        footer["ledger"].push_back({{"patient", e.patient},
                                    {"group", group_names.at(static_cast<std::size_t>(e.group))},
                                    {"admission_day", e.admission_day},
                                    {"ventilated", e.ventilated},
                                    {"outcome", to_string(e.outcome)}});
    }
    auto req = log.group_requests();
    auto alloc = log.group_allocations();
    for (std::size_t g = 0; g < group_names.size(); ++g) {
        footer["group_requests"][group_names[g]] = req[g];
        footer["group_allocations"][group_names[g]] = alloc[g];
    }
    out << footer.dump() << "\n";
}

inline void write_episode_jsonl(const EpisodeLog& log, const std::vector<std::string>& group_names,
                                const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open episode log for writing: " + path);
    write_episode_jsonl(log, group_names, out);
}

// Allocates to every requester; used for demand measurement and no-shortage
// anchor runs (capacity must cover all requesters).
class AllocateAllPolicy final : public protocols::AllocationPolicy {
public:
    std::string name() const override { return "allocate_all"; }
    mdp::Action decide(const mdp::SimState& state, const CohortDataset&, int capacity,
                       bool, RandomStream&) const override {
        mdp::Action a;
        a.assign.assign(state.bed_count(), 0);
        int used = 0;
        for (std::size_t i = 0; i < state.beds.size(); ++i) {
            if (state.beds[i].is_normal() && used < capacity) {
                a.assign[i] = 1;
                ++used;
            }
        }
        return a;
    }
};

} // namespace triage::sim
