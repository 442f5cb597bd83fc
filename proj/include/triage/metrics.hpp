#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "triage/errors.hpp"
#include "triage/simulator.hpp"

namespace triage::eval {

// Survival scaled so the no-shortage survivor count reads 100% (with p = 1,
// zero capacity pins the other anchor at 0%).
inline double normalized_survival(double survivors, double survivors_at_full_capacity) {
    if (!(survivors_at_full_capacity > 0))
        throw EvalError("normalized survival undefined: no survivors at full capacity");
    return 100.0 * survivors / survivors_at_full_capacity;
}

// Share of requests that ever received a ventilator. Zero requests leaves
// the rate undefined (excluded from DPR).
inline std::optional<double> allocation_rate(std::int64_t allocated, std::int64_t requested) {
    if (requested < 0 || allocated < 0 || allocated > requested)
        throw EvalError("allocation rate: invalid counts");
    if (requested == 0) return std::nullopt;
    return 100.0 * static_cast<double>(allocated) / static_cast<double>(requested);
}

// Demographic parity ratio: smallest over largest defined group rate.
inline double dpr(const std::vector<std::optional<double>>& group_rates) {
    double lo = 1e300, hi = -1e300;
    int defined = 0;
    for (const auto& r : group_rates) {
        if (!r) continue;
        ++defined;
        lo = std::min(lo, *r);
        hi = std::max(hi, *r);
    }
    if (defined < 2) throw EvalError("DPR undefined: fewer than two groups with requests");
    if (hi <= 0) return 0.0;
    return 100.0 * lo / hi;
}

// Trapezoidal area under a (capacity, value) curve.
struct CurvePoint {
    double capacity_pct = 0;
    double value = 0;
};

inline double auc(const std::vector<CurvePoint>& points) {
    if (points.size() < 2) throw EvalError("auc needs at least two curve points");
    double area = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const auto& a = points[i - 1];
        const auto& b = points[i];
        if (b.capacity_pct < a.capacity_pct) throw EvalError("auc: points must be sorted by capacity");
        area += 0.5 * (a.value + b.value) * (b.capacity_pct - a.capacity_pct);
    }
    return area;
}

// Per-episode metric bundle pulled off a ledger.
struct EpisodeMetrics {
    std::size_t requests = 0;
    std::size_t survivors = 0;
    std::size_t allocated = 0;
    std::vector<std::optional<double>> group_rates;
    std::optional<double> dpr_pct;
    double overall_allocation_pct = 0;
};

inline EpisodeMetrics episode_metrics(const sim::EpisodeLog& log) {
    EpisodeMetrics m;
    m.requests = static_cast<std::size_t>(
        std::count_if(log.ledger.begin(), log.ledger.end(),
                      [](const sim::LedgerEntry& e) { return !e.pending; }));
    m.survivors = log.survivors();
    auto req = log.group_requests();
    auto alloc = log.group_allocations();
    std::int64_t total_alloc = 0, total_req = 0;
    for (std::size_t g = 0; g < req.size(); ++g) {
        m.group_rates.push_back(allocation_rate(alloc[g], req[g]));
        total_alloc += alloc[g];
        total_req += req[g];
    }
    m.allocated = static_cast<std::size_t>(total_alloc);
    m.overall_allocation_pct =
        total_req > 0 ? 100.0 * static_cast<double>(total_alloc) / static_cast<double>(total_req) : 0.0;
    try {
        m.dpr_pct = dpr(m.group_rates);
    } catch (const EvalError&) {
        m.dpr_pct = std::nullopt;
    }
    return m;
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0;
    double mu = mean(v);
    double acc = 0;
    for (double x : v) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

} // namespace triage::eval
