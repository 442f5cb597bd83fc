#pragma once

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "triage/errors.hpp"
#include "triage/metrics.hpp"
#include "triage/qnet.hpp"
#include "triage/random.hpp"
#include "triage/simulator.hpp"

namespace triage::trainer {

struct TrainConfig {
    // optimization (reported training configuration)
    int batch_size = 32;
    double learning_rate = 3e-5;
    int update_freq = 500;     // h: gradient steps between target updates
    int epochs = 60;           // E
    int gradient_steps = 1000; // G per epoch
    double discount = 0.95;    // gamma
    double target_mix = 0.005; // tau; not reported, standard soft-update scale
    double huber_delta = 1.0;
    // data collection
    std::string mode = "off_policy"; // off_policy | offline
    std::string behavior = "mp";     // offline behavior protocol
    double epsilon = 0.1;            // exploration during buffer fill (0 = pure greedy)
    // Behavior protocol for the very first off-policy buffer fill. An
    // untrained greedy head ranks by an arbitrary fixed function and can
    // starve the buffer of ventilated-survivor outcomes; an unbiased first
    // fill removes that failure mode. "none" hands epoch 0 to the learner.
    std::string bootstrap_behavior = "lottery";
    std::size_t buffer_capacity = 16000;
    int steps_per_epoch = 1000; // off-policy buffer refresh per epoch
    int offline_fill_steps = 0; // offline one-shot fill; 0 -> buffer_capacity
    double cohort_fraction = 1.0; // early-data ablation: train on a prefix subset
    // network
    int embed_dim = 64;
    int num_heads = 4;
    int hidden_dim = 128;
    int num_layers = 2;
    bool attention_off = false;
    std::optional<bool> fairness_features; // default: on iff the fairness reward is live
    bool single_network = false;           // no separate target network
    // Greedy semantics for collection, targets and deployment. The literal
    // top-k rule (fill every remaining slot by rank) is the default: the
    // exact-argmax variant can stop allocating entirely early in training
    // and then only ever observes denial outcomes.
    bool force_fill = true;
    // Initialize the output bias near the per-token discounted return seen
    // in the first buffer fill, so the Huber loss starts near its quadratic
    // region instead of spending the whole budget on the shared offset.
    bool warm_start_bias = true;
    // validation
    int validation_episodes = 5;
    int validation_horizon = 365;

    std::uint64_t seed = 0;

    void validate() const {
        if (!(discount > 0 && discount < 1)) throw ConfigError("discount must lie in (0,1)");
        if (!(target_mix > 0 && target_mix <= 1)) throw ConfigError("target_mix must lie in (0,1]");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (static_cast<std::size_t>(batch_size) > buffer_capacity)
            throw ConfigError("batch_size exceeds buffer capacity");
        if (epochs < 1 || gradient_steps < 1) throw ConfigError("epochs and gradient_steps must be >= 1");
        if (update_freq < 1) throw ConfigError("update_freq must be >= 1");
        if (mode != "off_policy" && mode != "offline")
            throw ConfigError("mode must be off_policy or offline");
        if (epsilon < 0 || epsilon > 1) throw ConfigError("epsilon must lie in [0,1]");
        if (cohort_fraction <= 0 || cohort_fraction > 1)
            throw ConfigError("cohort_fraction must lie in (0,1]");
        if (learning_rate < 0) throw ConfigError("learning_rate must be non-negative");
    }
};

struct TrainHistory {
    std::vector<double> loss;             // one entry per gradient step
    std::vector<double> val_survival_pct; // per epoch
    std::vector<double> val_dpr_pct;      // per epoch (NaN when undefined)
    std::vector<double> val_mean_reward;  // per epoch; checkpoint selection metric
    std::vector<double> epoch_seconds;    // wall clock, reporting only
    int best_epoch = -1;
};

// ---------------------------------------------------------------------------
// Policies used during collection
// ---------------------------------------------------------------------------

// Greedy policy over a (borrowed) parameter snapshot.
class GreedyPolicy final : public protocols::AllocationPolicy {
public:
    GreedyPolicy(const qnet::QNetParams& params, bool force_fill)
        : params_(&params), force_fill_(force_fill) {}
    std::string name() const override { return "greedy"; }
    mdp::Action decide(const mdp::SimState& state, const CohortDataset& cohort, int capacity,
                       bool withdrawal_on, RandomStream&) const override {
        return qnet::greedy_action(*params_, state, cohort, capacity, withdrawal_on, force_fill_);
    }

private:
    const qnet::QNetParams* params_;
    bool force_fill_;
};

// With probability epsilon, flips one random feasible bed bit of the base
// policy's action.
class EpsilonGreedyPolicy final : public protocols::AllocationPolicy {
public:
    EpsilonGreedyPolicy(const protocols::AllocationPolicy& base, double epsilon)
        : base_(&base), epsilon_(epsilon) {}
    std::string name() const override { return base_->name() + "+eps"; }
    mdp::Action decide(const mdp::SimState& state, const CohortDataset& cohort, int capacity,
                       bool withdrawal_on, RandomStream& rng) const override {
        mdp::Action a = base_->decide(state, cohort, capacity, withdrawal_on, rng);
        if (epsilon_ <= 0 || !rng.bernoulli(epsilon_)) return a;
        std::vector<std::size_t> flips;
        const int used = a.total();
        for (std::size_t i = 0; i < state.bed_count(); ++i) {
            const auto& bed = state.beds[i];
            if (!bed.is_normal()) continue;
            if (a.assign[i]) {
                if (!(withdrawal_on && bed.ventilated)) flips.push_back(i); // may switch off
            } else if (used < capacity) {
                flips.push_back(i); // may switch on
            }
        }
        if (flips.empty()) return a;
        std::size_t pick = flips[static_cast<std::size_t>(rng.uniform_int(flips.size()))];
        a.assign[pick] ^= 1;
        return a;
    }

private:
    const protocols::AllocationPolicy* base_;
    double epsilon_;
};

// Greedy policy over a classical enumerated head snapshot.
class ClassicalGreedyPolicy final : public protocols::AllocationPolicy {
public:
    ClassicalGreedyPolicy(const qnet::ClassicalParams& params, bool force_fill)
        : params_(&params), force_fill_(force_fill) {}
    std::string name() const override { return "classical-greedy"; }
    mdp::Action decide(const mdp::SimState& state, const CohortDataset& cohort, int capacity,
                       bool withdrawal_on, RandomStream&) const override {
        mdp::Action a;
        a.assign.assign(state.bed_count(), 0);
        if (state.normal_count() == 0) return a;
        auto flat = qnet::build_flat_state(state, cohort, params_->config);
        auto q = qnet::classical_forward(*params_, flat);
        auto idx = qnet::classical_argmax(*params_, q, qnet::normal_mask_of(state),
                                          qnet::locked_mask_of(state, withdrawal_on),
                                          std::min(capacity, params_->config.capacity), force_fill_);
        const std::uint32_t mask = params_->actions[idx];
        for (std::size_t i = 0; i < state.bed_count(); ++i) a.assign[i] = (mask >> i) & 1u;
        return a;
    }

private:
    const qnet::ClassicalParams* params_;
    bool force_fill_;
};

// ---------------------------------------------------------------------------
// TD target: next action from the primary network's constrained greedy rule,
// evaluated under the target network (double-DQN decoupling). Empty next
// state bootstraps zero.
// ---------------------------------------------------------------------------
inline double td_target(const sim::TransitionTuple& tuple, const CohortDataset& cohort,
                        const qnet::QNetParams& primary, const qnet::QNetParams& target,
                        double discount, int capacity, bool withdrawal_on,
                        bool force_fill = false) {
    auto sm = qnet::build_state_matrix(tuple.s_next, cohort, primary.config, withdrawal_on);
    if (sm.tokens.rows == 0) return tuple.r;
    qnet::Mat out_primary = qnet::forward(primary, sm.tokens);
    std::vector<double> d(static_cast<std::size_t>(out_primary.rows));
    for (int i = 0; i < out_primary.rows; ++i)
        d[static_cast<std::size_t>(i)] = out_primary.at(i, 1) - out_primary.at(i, 0);
    auto next_bits = qnet::greedy_bits(d, sm.locked, capacity, force_fill);
    qnet::Mat out_target =
        (&target == &primary) ? out_primary : qnet::forward(target, sm.tokens);
    return tuple.r + discount * qnet::joint_q_from_output(out_target, next_bits);
}

// One Huber-loss descent step on a batch; returns the new parameter snapshot
// and the batch loss. Inputs are untouched.
inline std::pair<qnet::QNetParams, double> gradient_step(
    const std::vector<const sim::TransitionTuple*>& batch, const CohortDataset& cohort,
    const qnet::QNetParams& primary, const std::vector<double>& targets, double learning_rate,
    bool withdrawal_on, double huber_delta = 1.0) {
    if (batch.size() != targets.size()) throw ShapeError("gradient_step: batch/target size mismatch");
    std::vector<double> grad(primary.flat.size(), 0.0);
    double loss = 0;
    const double w = 1.0 / static_cast<double>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& tuple = *batch[b];
        auto sm = qnet::build_state_matrix(tuple.s, cohort, primary.config, withdrawal_on);
        if (sm.tokens.rows == 0) continue; // no tokens, no contribution
        std::vector<std::uint8_t> bits(sm.bed_index.size());
        for (std::size_t r = 0; r < sm.bed_index.size(); ++r)
            bits[r] = tuple.a.assign[static_cast<std::size_t>(sm.bed_index[r])];
        loss += w * qnet::loss_and_grad(primary, sm.tokens, bits, targets[b], grad, w, huber_delta);
    }
    if (!std::isfinite(loss)) throw NumericError("gradient step produced a non-finite loss");
    qnet::QNetParams next = primary;
    for (std::size_t i = 0; i < next.flat.size(); ++i) next.flat[i] -= learning_rate * grad[i];
    return {std::move(next), loss};
}

// Elementwise blend: target <- tau * primary + (1 - tau) * target.
inline qnet::QNetParams soft_update(const qnet::QNetParams& target,
                                    const qnet::QNetParams& primary, double tau) {
    if (target.flat.size() != primary.flat.size())
        throw ShapeError("soft_update: parameter shape mismatch");
    qnet::QNetParams next = target;
    for (std::size_t i = 0; i < next.flat.size(); ++i)
        next.flat[i] = tau * primary.flat[i] + (1 - tau) * next.flat[i];
    return next;
}

struct TrainResult {
    qnet::ModelFile model;
    TrainHistory history;
};

// Output-bias offsets of the transformer head.
struct ParamLayoutBias {
    std::size_t b_out;
    explicit ParamLayoutBias(const qnet::QNetConfig& c) {
        qnet::ParamLayout lay(c);
        b_out = lay.b_out;
    }
};

namespace detail {

// Mean reward and mean token count over the buffer, for bias warm starts.
inline std::pair<double, double> buffer_return_scale(const sim::ReplayBuffer& buffer,
                                                     double discount) {
    double r_sum = 0, m_sum = 0;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        r_sum += buffer.at(i).r;
        m_sum += buffer.at(i).s.normal_count();
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, buffer.size()));
    const double mean_tokens = std::max(1.0, m_sum / n);
    return {(r_sum / n) / (1.0 - discount) / mean_tokens, mean_tokens};
}

inline CohortDataset cohort_prefix(const CohortDataset& cohort, double fraction) {
    if (fraction >= 1.0) return cohort;
    CohortDataset sub;
    sub.group_names = cohort.group_names;
    sub.split_tag = cohort.split_tag;
    auto n = static_cast<std::size_t>(
        std::max<double>(1.0, std::ceil(fraction * static_cast<double>(cohort.size()))));
    sub.trajectories.assign(cohort.trajectories.begin(),
                            cohort.trajectories.begin() + static_cast<std::ptrdiff_t>(n));
    return sub;
}

struct Validation {
    double survival_pct = 0;
    double dpr_pct = std::numeric_limits<double>::quiet_NaN();
    double mean_reward = 0;
};

inline Validation validate_policy(const protocols::AllocationPolicy& policy,
                                  const sim::SimConfig& sim_config, const CohortDataset& cohort,
                                  int episodes, int horizon, std::uint64_t seed_base) {
    Validation v;
    std::vector<double> survival, dprs, rewards;
    for (int i = 0; i < episodes; ++i) {
        auto log = sim::run_episode(policy, sim_config, cohort, horizon,
                                    RandomStream(seed_base).fork(static_cast<std::uint64_t>(i)).next_u64());
        auto m = eval::episode_metrics(log);
        if (m.requests > 0)
            survival.push_back(100.0 * static_cast<double>(m.survivors) /
                               static_cast<double>(m.requests));
        if (m.dpr_pct) dprs.push_back(*m.dpr_pct);
        double r = 0;
        for (const auto& s : log.steps) r += s.reward;
        rewards.push_back(r / std::max<std::size_t>(1, log.steps.size()));
    }
    v.survival_pct = eval::mean(survival);
    v.dpr_pct = dprs.empty() ? std::numeric_limits<double>::quiet_NaN() : eval::mean(dprs);
    v.mean_reward = eval::mean(rewards);
    return v;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Full double-DQN training loop over the simulator (transformer head).
// ---------------------------------------------------------------------------
inline TrainResult train(const CohortDataset& full_cohort, const sim::SimConfig& sim_config_in,
                         const TrainConfig& config) {
    config.validate();
    sim::SimConfig sim_config = sim_config_in;
    sim_config.validate();
    CohortDataset cohort = detail::cohort_prefix(full_cohort, config.cohort_fraction);
    if (cohort.trajectories.empty()) throw ConfigError("training requires a non-empty cohort");

    const bool fairness_live =
        sim_config.reward.enable_fairness && sim_config.reward.lambda != 0.0;

    qnet::QNetConfig net;
    net.n_features = static_cast<int>(cohort.trajectories.front().conditions.front().size());
    net.n_groups = static_cast<int>(cohort.n_groups());
    net.fairness_features = config.fairness_features.value_or(fairness_live);
    net.embed_dim = config.embed_dim;
    net.num_heads = config.num_heads;
    net.hidden_dim = config.hidden_dim;
    net.num_layers = config.num_layers;
    net.max_tokens = sim_config.beds();
    net.attention_off = config.attention_off;
    net.validate();

    RandomStream root(config.seed);
    qnet::QNetParams primary = qnet::QNetParams::init(net, root.fork("init").next_u64());
    qnet::QNetParams target = primary;
    RandomStream batch_rng = root.fork("batch");

    sim::ReplayBuffer buffer(config.buffer_capacity);
    TrainHistory history;
    history.loss.reserve(static_cast<std::size_t>(config.epochs) *
                         static_cast<std::size_t>(config.gradient_steps));

    std::unique_ptr<protocols::AllocationPolicy> behavior;
    if (config.mode == "offline") {
        behavior = protocols::make_baseline(config.behavior);
        EpsilonGreedyPolicy explore(*behavior, config.epsilon);
        sim::Simulator sim(sim_config, cohort);
        sim.reset(root.fork("offline-fill").next_u64());
        int fill = config.offline_fill_steps > 0 ? config.offline_fill_steps
                                                 : static_cast<int>(config.buffer_capacity);
        sim::fill_replay(explore, sim, fill, buffer);
    }

    qnet::QNetParams best = primary;
    double best_metric = -1e300;
    history.best_epoch = -1;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();

        if (config.mode == "off_policy") {
            std::unique_ptr<protocols::AllocationPolicy> bootstrap;
            GreedyPolicy greedy(primary, config.force_fill);
            const protocols::AllocationPolicy* fill_policy = &greedy;
            if (epoch == 0 && config.bootstrap_behavior != "none") {
                bootstrap = protocols::make_baseline(config.bootstrap_behavior);
                fill_policy = bootstrap.get();
            }
            EpsilonGreedyPolicy explore(*fill_policy, config.epsilon);
            sim::Simulator sim(sim_config, cohort);
            sim.reset(root.fork("epoch-fill").fork(static_cast<std::uint64_t>(epoch)).next_u64());
            sim::fill_replay(explore, sim, config.steps_per_epoch, buffer);
        }
        if (buffer.size() < static_cast<std::size_t>(config.batch_size))
            throw ConfigError("replay buffer smaller than one batch; increase fill steps");

        if (epoch == 0 && config.warm_start_bias) {
            const ParamLayoutBias lay(primary.config);
            auto [per_token, mean_tokens] = detail::buffer_return_scale(buffer, config.discount);
            (void)mean_tokens;
            primary.flat[lay.b_out] = per_token;
            primary.flat[lay.b_out + 1] = per_token;
            target = primary;
        }

        for (int g = 0; g < config.gradient_steps; ++g) {
            auto idx = batch_rng.sample_without_replacement(buffer.size(),
                                                            static_cast<std::size_t>(config.batch_size));
            std::vector<const sim::TransitionTuple*> batch;
            std::vector<double> targets;
            batch.reserve(idx.size());
            targets.reserve(idx.size());
            const qnet::QNetParams& target_view = config.single_network ? primary : target;
            for (auto i : idx) {
                const auto& tuple = buffer.at(i);
                batch.push_back(&tuple);
                targets.push_back(td_target(tuple, cohort, primary, target_view, config.discount,
                                            sim_config.capacity, sim_config.withdrawal_on,
                                            config.force_fill));
            }
            auto [next, loss] = gradient_step(batch, cohort, primary, targets,
                                              config.learning_rate, sim_config.withdrawal_on,
                                              config.huber_delta);
            primary = std::move(next);
            history.loss.push_back(loss);
            if (loss > 1e6)
                throw NumericError("training diverged: loss " + std::to_string(loss) + " at epoch " +
                                   std::to_string(epoch) + " step " + std::to_string(g));
            if (!config.single_network && g % config.update_freq == 0)
                target = soft_update(target, primary, config.target_mix);
        }

        detail::Validation val{};
        if (config.validation_episodes > 0) {
            GreedyPolicy greedy(primary, config.force_fill);
            val = detail::validate_policy(greedy, sim_config, cohort, config.validation_episodes,
                                          config.validation_horizon,
                                          root.fork("val").fork(static_cast<std::uint64_t>(epoch)).next_u64());
            if (val.mean_reward > best_metric) {
                best_metric = val.mean_reward;
                best = primary;
                history.best_epoch = epoch;
            }
        }
        history.val_survival_pct.push_back(val.survival_pct);
        history.val_dpr_pct.push_back(val.dpr_pct);
        history.val_mean_reward.push_back(val.mean_reward);
        history.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }

    if (history.best_epoch < 0) best = primary; // no validation: keep the final snapshot

    qnet::ModelFile model;
    model.type = "transformer";
    model.transformer = std::move(best);
    model.meta.seed = config.seed;
    model.meta.lambda = fairness_live ? sim_config.reward.lambda : 0.0;
    model.meta.mu = sim_config.reward.enable_cost ? sim_config.reward.mu : 0.0;
    model.meta.capacity = sim_config.capacity;
    model.meta.mode = config.mode == "offline" ? "offline:" + config.behavior : "off_policy";
    model.meta.force_fill = config.force_fill;
    return {std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Same loop for the classical enumerated head (small-N comparison).
// ---------------------------------------------------------------------------
inline TrainResult train_classical(const CohortDataset& full_cohort,
                                   const sim::SimConfig& sim_config_in, const TrainConfig& config) {
    config.validate();
    sim::SimConfig sim_config = sim_config_in;
    sim_config.validate();
    CohortDataset cohort = detail::cohort_prefix(full_cohort, config.cohort_fraction);
    if (cohort.trajectories.empty()) throw ConfigError("training requires a non-empty cohort");

    qnet::ClassicalConfig net;
    net.n_beds = sim_config.beds();
    net.capacity = sim_config.capacity;
    net.n_features = static_cast<int>(cohort.trajectories.front().conditions.front().size());
    net.n_groups = static_cast<int>(cohort.n_groups());
    net.fairness_features =
        config.fairness_features.value_or(sim_config.reward.enable_fairness &&
                                          sim_config.reward.lambda != 0.0);
    net.hidden_dim = config.hidden_dim;
    net.validate();

    RandomStream root(config.seed);
    qnet::ClassicalParams primary = qnet::ClassicalParams::init(net, root.fork("init").next_u64());
    qnet::ClassicalParams target = primary;
    RandomStream batch_rng = root.fork("batch");

    sim::ReplayBuffer buffer(config.buffer_capacity);
    TrainHistory history;

    std::unique_ptr<protocols::AllocationPolicy> behavior;
    if (config.mode == "offline") {
        behavior = protocols::make_baseline(config.behavior);
        EpsilonGreedyPolicy explore(*behavior, config.epsilon);
        sim::Simulator sim(sim_config, cohort);
        sim.reset(root.fork("offline-fill").next_u64());
        int fill = config.offline_fill_steps > 0 ? config.offline_fill_steps
                                                 : static_cast<int>(config.buffer_capacity);
        sim::fill_replay(explore, sim, fill, buffer);
    }

    // bitmask -> action index lookup
    std::vector<std::int32_t> index_of(1u << net.n_beds, -1);
    for (std::size_t i = 0; i < primary.actions.size(); ++i)
        index_of[primary.actions[i]] = static_cast<std::int32_t>(i);
    auto mask_of_action = [&](const mdp::Action& a) {
        std::uint32_t mask = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a.assign[i]) mask |= 1u << i;
        return mask;
    };

    qnet::ClassicalParams best = primary;
    double best_metric = -1e300;
    history.best_epoch = -1;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        if (config.mode == "off_policy") {
            std::unique_ptr<protocols::AllocationPolicy> bootstrap;
            ClassicalGreedyPolicy greedy(primary, config.force_fill);
            const protocols::AllocationPolicy* fill_policy = &greedy;
            if (epoch == 0 && config.bootstrap_behavior != "none") {
                bootstrap = protocols::make_baseline(config.bootstrap_behavior);
                fill_policy = bootstrap.get();
            }
            EpsilonGreedyPolicy explore(*fill_policy, config.epsilon);
            sim::Simulator sim(sim_config, cohort);
            sim.reset(root.fork("epoch-fill").fork(static_cast<std::uint64_t>(epoch)).next_u64());
            sim::fill_replay(explore, sim, config.steps_per_epoch, buffer);
        }
        if (buffer.size() < static_cast<std::size_t>(config.batch_size))
            throw ConfigError("replay buffer smaller than one batch; increase fill steps");

        if (epoch == 0 && config.warm_start_bias) {
            auto [per_token, mean_tokens] = detail::buffer_return_scale(buffer, config.discount);
            const auto lay = primary.layout();
            const double q0 = per_token * mean_tokens; // whole-state return estimate
            for (std::size_t i = 0; i < primary.actions.size(); ++i)
                primary.flat[lay.b3 + i] = q0;
            target = primary;
        }

        for (int g = 0; g < config.gradient_steps; ++g) {
            auto idx = batch_rng.sample_without_replacement(buffer.size(),
                                                            static_cast<std::size_t>(config.batch_size));
            std::vector<double> grad(primary.flat.size(), 0.0);
            double loss = 0;
            const double w = 1.0 / static_cast<double>(idx.size());
            for (auto i : idx) {
                const auto& tuple = buffer.at(i);
                double tgt = tuple.r;
                if (tuple.s_next.normal_count() > 0) {
                    auto flat_next = qnet::build_flat_state(tuple.s_next, cohort, net);
                    auto q_primary = qnet::classical_forward(primary, flat_next);
                    auto a_next = qnet::classical_argmax(
                        primary, q_primary, qnet::normal_mask_of(tuple.s_next),
                        qnet::locked_mask_of(tuple.s_next, sim_config.withdrawal_on), -1,
                        config.force_fill);
                    const auto& tgt_params = config.single_network ? primary : target;
                    auto q_target = qnet::classical_forward(tgt_params, flat_next);
                    tgt += config.discount * q_target[a_next];
                }
                auto flat_s = qnet::build_flat_state(tuple.s, cohort, net);
                qnet::ClassicalTape tape;
                auto q = qnet::classical_forward(primary, flat_s, &tape);
                auto ai = index_of[mask_of_action(tuple.a)];
                if (ai < 0) throw ContractError("stored action outside the enumerated table");
                const double err = q[static_cast<std::size_t>(ai)] - tgt;
                std::vector<double> dout(q.size(), 0.0);
                dout[static_cast<std::size_t>(ai)] = qnet::huber_grad(err, config.huber_delta) * w;
                qnet::classical_backward(primary, tape, dout, grad);
                loss += w * qnet::huber(err, config.huber_delta);
            }
            if (!std::isfinite(loss)) throw NumericError("classical training: non-finite loss");
            for (std::size_t i = 0; i < primary.flat.size(); ++i)
                primary.flat[i] -= config.learning_rate * grad[i];
            history.loss.push_back(loss);
            if (loss > 1e6) throw NumericError("classical training diverged");
            if (!config.single_network && g % config.update_freq == 0) {
                for (std::size_t i = 0; i < target.flat.size(); ++i)
                    target.flat[i] = config.target_mix * primary.flat[i] +
                                     (1 - config.target_mix) * target.flat[i];
            }
        }

        detail::Validation val{};
        if (config.validation_episodes > 0) {
            ClassicalGreedyPolicy greedy(primary, config.force_fill);
            val = detail::validate_policy(greedy, sim_config, cohort, config.validation_episodes,
                                          config.validation_horizon,
                                          root.fork("val").fork(static_cast<std::uint64_t>(epoch)).next_u64());
            if (val.mean_reward > best_metric) {
                best_metric = val.mean_reward;
                best = primary;
                history.best_epoch = epoch;
            }
        }
        history.val_survival_pct.push_back(val.survival_pct);
        history.val_dpr_pct.push_back(val.dpr_pct);
        history.val_mean_reward.push_back(val.mean_reward);
        history.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    if (history.best_epoch < 0) best = primary;

    qnet::ModelFile model;
    model.type = "classical";
    model.classical = std::move(best);
    model.meta.seed = config.seed;
    model.meta.lambda = 0.0;
    model.meta.mu = sim_config.reward.enable_cost ? sim_config.reward.mu : 0.0;
    model.meta.capacity = sim_config.capacity;
    model.meta.mode = config.mode == "offline" ? "offline:" + config.behavior : "off_policy";
    model.meta.force_fill = config.force_fill;
    return {std::move(model), std::move(history)};
}

// History CSV exports: (step, loss) and (epoch, survival, dpr).
inline void write_history_csv(const TrainHistory& history, const std::string& loss_path,
                              const std::string& epoch_path) {
    {
        std::ofstream out(loss_path, std::ios::binary);
        if (!out) throw ParseError("cannot open " + loss_path);
        out << "step,loss\n";
        char buf[64];
        for (std::size_t i = 0; i < history.loss.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, history.loss[i]);
            out << buf;
        }
    }
    {
        std::ofstream out(epoch_path, std::ios::binary);
        if (!out) throw ParseError("cannot open " + epoch_path);
        out << "epoch,survival,dpr\n";
        char buf[96];
        for (std::size_t i = 0; i < history.val_survival_pct.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", i, history.val_survival_pct[i],
                          history.val_dpr_pct[i]);
            out << buf;
        }
    }
}

} // namespace triage::trainer
