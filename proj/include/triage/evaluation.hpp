#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/metrics.hpp"
#include "triage/parallel.hpp"
#include "triage/simulator.hpp"
#include "triage/trainer.hpp"

namespace triage::eval {

struct EvalConfig {
    std::vector<double> capacity_grid_pct = {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    int seeds = 30;
    int horizon = 365;
    double arrival_rate = 12.0;
    bool withdrawal_on = true;
    double death_prob = 1.0;
    // 0: the simulator default (C + 2*Lambda). With death_prob < 1 waiting
    // patients occupy beds; a generous count keeps ventilators the only
    // scarce resource, as the study frames it.
    int bed_count = 0;
    mdp::RewardParams reward; // used for logged step rewards only
    std::uint64_t seed_base = 0;

    void validate() const {
        if (capacity_grid_pct.empty()) throw ConfigError("capacity grid must be non-empty");
        if (seeds < 1) throw ConfigError("at least one evaluation seed required");
        if (horizon < 1) throw ConfigError("horizon must be >= 1");
    }
};

inline std::uint64_t eval_seed(std::uint64_t base, int index) {
    return RandomStream(base).fork("eval-seed").fork(static_cast<std::uint64_t>(index)).next_u64();
}

// Bed count for the unconstrained reference runs: admissions live at most
// 31 days (30 trajectory days + one terminal-marker day), so occupancy is
// bounded by roughly arrival_rate * 31 plus fluctuation headroom.
inline int reference_bed_count(double arrival_rate) {
    return static_cast<int>(std::ceil(arrival_rate)) * 31 + 64;
}

// Full-capacity anchor: per-seed no-shortage runs measuring the maximum
// daily ventilator demand (the 100% capacity mark) and the anchor survivor
// counts every protocol is normalized against.
struct DemandReference {
    int max_daily_demand = 0;
    int reference_beds = 0;
    std::vector<double> survivors_full; // per seed
    std::vector<EpisodeMetrics> full_metrics;
};

inline DemandReference measure_reference(const CohortDataset& cohort, const EvalConfig& cfg) {
    cfg.validate();
    DemandReference ref;
    ref.reference_beds = reference_bed_count(cfg.arrival_rate);
    ref.survivors_full.resize(static_cast<std::size_t>(cfg.seeds));
    ref.full_metrics.resize(static_cast<std::size_t>(cfg.seeds));
    std::vector<int> max_demand(static_cast<std::size_t>(cfg.seeds), 0);

    sim::SimConfig sc;
    sc.capacity = ref.reference_beds;
    sc.bed_count = ref.reference_beds;
    sc.arrival_rate = cfg.arrival_rate;
    sc.withdrawal_on = cfg.withdrawal_on;
    sc.death_prob = cfg.death_prob;
    sc.reward = cfg.reward;

    sim::AllocateAllPolicy everyone;
    parallel_for(static_cast<std::size_t>(cfg.seeds), [&](std::size_t s) {
        auto log = sim::run_episode(everyone, sc, cohort, cfg.horizon,
                                    eval_seed(cfg.seed_base, static_cast<int>(s)));
        int peak = 0;
        for (int d : log.daily_demand) peak = std::max(peak, d);
        max_demand[s] = peak;
        ref.survivors_full[s] = static_cast<double>(log.survivors());
        ref.full_metrics[s] = episode_metrics(log);
    });
    for (int d : max_demand) ref.max_daily_demand = std::max(ref.max_daily_demand, d);
    if (ref.max_daily_demand < 1) throw EvalError("reference runs produced no demand");
    return ref;
}

struct SweepPoint {
    double capacity_pct = 0;
    int capacity = 0;
    std::vector<double> survival_pct;            // per seed, normalized
    std::vector<double> overall_alloc_pct;       // per seed
    std::vector<double> dpr_pct;                 // per seed where defined
    std::vector<std::vector<std::optional<double>>> group_rates; // per seed
    double survival_mean = 0, survival_std = 0;
    double alloc_mean = 0, alloc_std = 0;
    double dpr_mean = 0, dpr_std = 0;
    std::vector<double> group_rate_mean; // per group, over defined seeds
};

struct ProtocolSweep {
    std::string protocol;
    std::vector<SweepPoint> points;
    double auscc = 0;
    double auacc = 0;
};

namespace detail {

inline void finalize_point(SweepPoint& p, std::size_t groups) {
    p.survival_mean = mean(p.survival_pct);
    p.survival_std = stddev(p.survival_pct);
    p.alloc_mean = mean(p.overall_alloc_pct);
    p.alloc_std = stddev(p.overall_alloc_pct);
    p.dpr_mean = mean(p.dpr_pct);
    p.dpr_std = stddev(p.dpr_pct);
    p.group_rate_mean.assign(groups, 0);
    std::vector<int> defined(groups, 0);
    for (const auto& seed_rates : p.group_rates)
        for (std::size_t g = 0; g < groups; ++g)
            if (seed_rates[g]) {
                p.group_rate_mean[g] += *seed_rates[g];
                defined[g]++;
            }
    for (std::size_t g = 0; g < groups; ++g)
        p.group_rate_mean[g] = defined[g] ? p.group_rate_mean[g] / defined[g] : 0.0;
}

} // namespace detail

// One grid point: run every seed at the given capacity and normalize against
// the reference anchors. The 100% point reuses the reference bed layout so
// the no-shortage run replays the anchor run exactly.
inline SweepPoint sweep_point(const protocols::AllocationPolicy& policy,
                              const CohortDataset& cohort, const DemandReference& ref,
                              double capacity_pct, const EvalConfig& cfg) {
    SweepPoint point;
    point.capacity_pct = capacity_pct;
    point.capacity = static_cast<int>(
        std::llround(capacity_pct / 100.0 * static_cast<double>(ref.max_daily_demand)));

    sim::SimConfig sc;
    sc.capacity = point.capacity;
    sc.arrival_rate = cfg.arrival_rate;
    sc.withdrawal_on = cfg.withdrawal_on;
    sc.death_prob = cfg.death_prob;
    sc.bed_count = cfg.bed_count;
    sc.reward = cfg.reward;
    if (capacity_pct >= 100.0) {
        sc.capacity = std::max(point.capacity, ref.max_daily_demand);
        sc.bed_count = ref.reference_beds;
    }

    const auto n_seeds = static_cast<std::size_t>(cfg.seeds);
    point.survival_pct.resize(n_seeds);
    point.overall_alloc_pct.resize(n_seeds);
    point.group_rates.resize(n_seeds);
    std::vector<std::optional<double>> dprs(n_seeds);

    parallel_for(n_seeds, [&](std::size_t s) {
        auto log = sim::run_episode(policy, sc, cohort, cfg.horizon,
                                    eval_seed(cfg.seed_base, static_cast<int>(s)));
        auto m = episode_metrics(log);
        point.survival_pct[s] =
            normalized_survival(static_cast<double>(m.survivors), ref.survivors_full[s]);
        point.overall_alloc_pct[s] = m.overall_allocation_pct;
        point.group_rates[s] = m.group_rates;
        dprs[s] = m.dpr_pct;
    });
    for (const auto& d : dprs)
        if (d) point.dpr_pct.push_back(*d);
    detail::finalize_point(point, cohort.n_groups());
    return point;
}

inline ProtocolSweep capacity_sweep(const protocols::AllocationPolicy& policy,
                                    const std::string& label, const CohortDataset& cohort,
                                    const DemandReference& ref, const EvalConfig& cfg) {
    cfg.validate();
    ProtocolSweep sweep;
    sweep.protocol = label;
    std::vector<double> grid = cfg.capacity_grid_pct;
    std::sort(grid.begin(), grid.end());
    for (double pct : grid) sweep.points.push_back(sweep_point(policy, cohort, ref, pct, cfg));
    if (sweep.points.size() >= 2) {
        std::vector<CurvePoint> scc, acc;
        for (const auto& p : sweep.points) {
            scc.push_back({p.capacity_pct, p.survival_mean});
            acc.push_back({p.capacity_pct, p.alloc_mean});
        }
        sweep.auscc = auc(scc);
        sweep.auacc = auc(acc);
    }
    return sweep;
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------
struct EvalReport {
    std::vector<ProtocolSweep> sweeps;
    std::vector<std::string> group_names;
    int max_daily_demand = 0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["max_daily_demand"] = max_daily_demand;
        j["groups"] = group_names;
        auto& arr = j["protocols"];
        arr = nlohmann::json::array();
        for (const auto& sw : sweeps) {
            nlohmann::json pj;
            pj["protocol"] = sw.protocol;
            pj["auscc"] = sw.auscc;
            pj["auacc"] = sw.auacc;
            for (const auto& p : sw.points) {
                nlohmann::json pt;
                pt["capacity_pct"] = p.capacity_pct;
                pt["capacity"] = p.capacity;
                pt["survival_mean"] = p.survival_mean;
                pt["survival_std"] = p.survival_std;
                pt["alloc_mean"] = p.alloc_mean;
                pt["alloc_std"] = p.alloc_std;
                pt["dpr_mean"] = p.dpr_mean;
                pt["dpr_std"] = p.dpr_std;
                for (std::size_t g = 0; g < group_names.size(); ++g)
                    pt["group_alloc_mean"][group_names[g]] = p.group_rate_mean[g];
                pj["points"].push_back(pt);
            }
            arr.push_back(pj);
        }
        return j;
    }
};

namespace detail {

inline std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace detail

// Flat CSV: protocol,capacity_pct,seed,survival_pct,group,alloc_pct,dpr_pct
inline void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path);
    out << "protocol,capacity_pct,seed,survival_pct,group,alloc_pct,dpr_pct\n";
    for (const auto& sw : report.sweeps) {
        for (const auto& p : sw.points) {
            for (std::size_t s = 0; s < p.survival_pct.size(); ++s) {
                const double dpr_s =
                    s < p.group_rates.size()
                        ? [&]() {
                              try {
                                  return dpr(p.group_rates[s]);
                              } catch (const EvalError&) {
                                  return std::numeric_limits<double>::quiet_NaN();
                              }
                          }()
                        : std::numeric_limits<double>::quiet_NaN();
                out << sw.protocol << ',' << detail::fmt(p.capacity_pct) << ',' << s << ','
                    << detail::fmt(p.survival_pct[s]) << ",overall,"
                    << detail::fmt(p.overall_alloc_pct[s]) << ',' << detail::fmt(dpr_s) << "\n";
                for (std::size_t g = 0; g < report.group_names.size(); ++g) {
                    if (!p.group_rates[s][g]) continue;
                    out << sw.protocol << ',' << detail::fmt(p.capacity_pct) << ',' << s << ','
                        << detail::fmt(p.survival_pct[s]) << ',' << report.group_names[g] << ','
                        << detail::fmt(*p.group_rates[s][g]) << ',' << detail::fmt(dpr_s) << "\n";
                }
            }
        }
    }
}

// Curve CSVs (capacity_pct,mean,std), one file per protocol per curve.
inline void write_curve_csv(const ProtocolSweep& sweep, bool survival, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path);
    out << "capacity_pct,mean,std\n";
    for (const auto& p : sweep.points)
        out << detail::fmt(p.capacity_pct) << ','
            << detail::fmt(survival ? p.survival_mean : p.alloc_mean) << ','
            << detail::fmt(survival ? p.survival_std : p.alloc_std) << "\n";
}

// ---------------------------------------------------------------------------
// Survival-fairness Pareto sweep at a fixed shortage level: one training run
// per lambda, evaluated on the held-out seeds.
// ---------------------------------------------------------------------------
struct ParetoPoint {
    double lambda = 0;
    double survival_mean = 0;
    double dpr_mean = 0;
};

struct ParetoResult {
    std::vector<ParetoPoint> points;
    double capacity_pct = 50;
    int capacity = 0;
    std::size_t turning_index = 0; // largest-DPR lambda that keeps survival
                                   // within one point of the lambda=0 run
};

inline ParetoResult pareto_sweep(const CohortDataset& train_cohort,
                                 const CohortDataset& eval_cohort,
                                 const std::vector<double>& lambdas, double capacity_pct,
                                 const sim::SimConfig& sim_base,
                                 const trainer::TrainConfig& train_base, const EvalConfig& cfg) {
    if (lambdas.empty()) throw ConfigError("pareto sweep needs a non-empty lambda grid");
    auto ref = measure_reference(eval_cohort, cfg);
    ParetoResult result;
    result.capacity_pct = capacity_pct;
    result.capacity = static_cast<int>(
        std::llround(capacity_pct / 100.0 * static_cast<double>(ref.max_daily_demand)));

    double survival_at_zero = -1;
    for (double lambda : lambdas) {
        sim::SimConfig sc = sim_base;
        sc.capacity = result.capacity;
        sc.bed_count = 0; // default C + 2*Lambda
        sc.arrival_rate = cfg.arrival_rate;
        sc.withdrawal_on = cfg.withdrawal_on;
        sc.death_prob = cfg.death_prob;
        sc.reward.lambda = lambda;
        sc.reward.enable_fairness = lambda != 0.0;

        auto trained = trainer::train(train_cohort, sc, train_base);
        qnet::LearnedPolicy policy(std::move(trained.model));

        EvalConfig point_cfg = cfg;
        point_cfg.capacity_grid_pct = {capacity_pct};
        auto point = sweep_point(policy, eval_cohort, ref, capacity_pct, point_cfg);
        ParetoPoint pp;
        pp.lambda = lambda;
        pp.survival_mean = point.survival_mean;
        pp.dpr_mean = point.dpr_mean;
        if (lambda == 0.0) survival_at_zero = pp.survival_mean;
        result.points.push_back(pp);
    }
    if (survival_at_zero < 0) survival_at_zero = result.points.front().survival_mean;

    double best_dpr = -1;
    for (std::size_t i = 0; i < result.points.size(); ++i) {
        const auto& pp = result.points[i];
        if (pp.survival_mean >= survival_at_zero - 1.0 && pp.dpr_mean > best_dpr) {
            best_dpr = pp.dpr_mean;
            result.turning_index = i;
        }
    }
    return result;
}

inline void write_pareto_csv(const ParetoResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path);
    out << "lambda,survival_mean,dpr_mean,turning_point\n";
    for (std::size_t i = 0; i < result.points.size(); ++i) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%.9g,%.6f,%.6f,%d\n", result.points[i].lambda,
                      result.points[i].survival_mean, result.points[i].dpr_mean,
                      i == result.turning_index ? 1 : 0);
        out << buf;
    }
}

} // namespace triage::eval
