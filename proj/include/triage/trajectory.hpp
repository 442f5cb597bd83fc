#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/errors.hpp"
#include "triage/random.hpp"

namespace triage {

enum class Outcome { Survived, Dead };

inline const char* to_string(Outcome o) { return o == Outcome::Survived ? "survived" : "dead"; }

// One patient's full ventilated course: per-day condition vectors plus the
// demographics the triage protocols key on.
struct ClinicalTrajectory {
    std::string patient_id;
    int group = 0; // index into CohortDataset::group_names
    int age = 0;
    double bmi = 0.0;
    bool severe_comorbidity = false;
    std::vector<int> sofa_total;               // one per day, 0..24
    std::vector<std::vector<double>> conditions; // one vector in [0,1]^k per day
    Outcome outcome = Outcome::Survived;

    int length() const { return static_cast<int>(conditions.size()); }

    void validate() const {
        if (conditions.empty()) throw ContractError("trajectory " + patient_id + ": empty conditions");
        if (sofa_total.size() != conditions.size())
            throw ContractError("trajectory " + patient_id + ": sofa/conditions length mismatch");
        if (length() < 1 || length() > 30)
            throw ContractError("trajectory " + patient_id + ": length outside [1,30]");
        if (age < 18 || age > 95)
            throw ContractError("trajectory " + patient_id + ": age outside [18,95]");
        for (const auto& x : conditions) {
            if (x.size() != conditions.front().size())
                throw ContractError("trajectory " + patient_id + ": ragged condition vectors");
            for (double v : x)
                if (!(v >= 0.0 && v <= 1.0))
                    throw ContractError("trajectory " + patient_id + ": condition outside [0,1]");
        }
        for (int s : sofa_total)
            if (s < 0 || s > 24) throw ContractError("trajectory " + patient_id + ": SOFA outside [0,24]");
    }
};

inline const std::vector<std::string>& default_group_names() {
    static const std::vector<std::string> names = {"Asian", "Black", "Hispanic", "White"};
    return names;
}

struct CohortDataset {
    std::vector<ClinicalTrajectory> trajectories;
    std::vector<std::string> group_names = default_group_names();
    std::string split_tag = "all"; // all | train | val | test

    std::size_t size() const { return trajectories.size(); }
    std::size_t n_groups() const { return group_names.size(); }

    std::vector<std::size_t> group_counts() const {
        std::vector<std::size_t> counts(group_names.size(), 0);
        for (const auto& t : trajectories) counts.at(static_cast<std::size_t>(t.group))++;
        return counts;
    }

    void validate() const {
        std::vector<std::string> ids;
        ids.reserve(trajectories.size());
        for (const auto& t : trajectories) {
            t.validate();
            if (t.group < 0 || t.group >= static_cast<int>(group_names.size()))
                throw ContractError("trajectory " + t.patient_id + ": group index out of range");
            ids.push_back(t.patient_id);
        }
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw ContractError("duplicate patient_id in dataset");
    }
};

// Knobs for the synthetic stand-in cohort. The severity chain is a bounded
// random walk; everything observable (SOFA, features, outcome odds) is a
// function of it, so allocation quality is learnable from the state.
struct SyntheticCohortConfig {
    int n_patients = 1000;
    int n_features = 38;
    std::vector<std::string> group_names = default_group_names();
    // Group mix mirrors the reported four-group composition (4.1 / 14.7 /
    // 10.8 / 63.8 percent), renormalized onto the simplex.
    std::vector<double> group_proportions = {0.041 / 0.934, 0.147 / 0.934, 0.108 / 0.934,
                                             0.638 / 0.934};
    std::vector<double> base_mortality = {0.25, 0.25, 0.25, 0.25};
    // Per-group extra daily severity drift. Mild adverse drift for the two
    // groups that fairness rewards are meant to protect, so the fairness
    // penalty has a real disparity to correct.
    std::vector<double> group_drift_delta = {0.0, 0.01, 0.01, 0.0};
    double severity_drift = 0.0;      // common daily drift
    double severity_step_sd = 0.05;   // random-walk step scale
    double severity_start_min = 0.15;
    double severity_start_max = 0.85;
    double mortality_severity_gain = 2.0; // p(death) = clamp(base_g * gain * terminal_severity)
    // Strength with which the terminal outcome is written into the last
    // feature channel (1 = fully separable cohort, 0 = severity only).
    double outcome_signal = 0.5;
    // Visibility of the ethnoracial group in the leading feature channels
    // (the real feature set carries demographics). 0 leaves the channels to
    // the plain affine map.
    double group_signal = 1.0;
    double feature_noise_sd = 0.02;
    double mean_length = 5.0;
    double sd_length = 3.0;
    double comorbidity_rate = 0.3;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_patients < 1) throw ConfigError("n_patients must be >= 1");
        if (n_features < 1) throw ConfigError("n_features must be >= 1");
        if (group_names.empty()) throw ConfigError("at least one group required");
        if (group_proportions.size() != group_names.size())
            throw ConfigError("group_proportions size must match group count");
        if (base_mortality.size() != group_names.size())
            throw ConfigError("base_mortality size must match group count");
        if (group_drift_delta.size() != group_names.size())
            throw ConfigError("group_drift_delta size must match group count");
        double sum = 0;
        for (double p : group_proportions) {
            if (p < 0) throw ConfigError("group_proportions must be non-negative");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("group_proportions must sum to 1");
        for (double m : base_mortality)
            if (m < 0 || m > 1) throw ConfigError("base_mortality entries must lie in [0,1]");
        if (outcome_signal < 0 || outcome_signal > 1)
            throw ConfigError("outcome_signal must lie in [0,1]");
        if (group_signal < 0 || group_signal > 1)
            throw ConfigError("group_signal must lie in [0,1]");
    }
};

namespace detail {

// Fixed affine feature map: weights depend only on the feature index, never
// on the cohort seed, so two cohorts embed severity the same way.
inline void embed_conditions(ClinicalTrajectory& t, const std::vector<double>& severity,
                             const SyntheticCohortConfig& cfg, RandomStream& noise) {
    const int k = cfg.n_features;
    RandomStream map_rng(0x5eedfacefeedULL); // constant: the map itself is fixed
    std::vector<double> w_sev(k), w_age(k), w_bmi(k), w_com(k), bias(k);
    for (int j = 0; j < k; ++j) {
        w_sev[j] = 0.35 + 0.5 * map_rng.uniform();
        w_age[j] = 0.2 * (map_rng.uniform() - 0.5);
        w_bmi[j] = 0.2 * (map_rng.uniform() - 0.5);
        w_com[j] = 0.15 * map_rng.uniform();
        bias[j] = 0.1 + 0.2 * map_rng.uniform();
    }
    const double age_n = (t.age - 18.0) / 77.0;
    const double bmi_n = std::clamp((t.bmi - 12.0) / 58.0, 0.0, 1.0);
    const double leak = t.outcome == Outcome::Survived ? 0.9 : 0.1;
    const int g_count = static_cast<int>(cfg.group_names.size());
    t.conditions.resize(severity.size());
    for (std::size_t d = 0; d < severity.size(); ++d) {
        auto& x = t.conditions[d];
        x.resize(k);
        for (int j = 0; j < k; ++j) {
            double v = bias[j] + w_sev[j] * severity[d] + w_age[j] * age_n + w_bmi[j] * bmi_n +
                       w_com[j] * (t.severe_comorbidity ? 1.0 : 0.0) +
                       cfg.feature_noise_sd * noise.normal();
            x[j] = std::clamp(v, 0.0, 1.0);
        }
        // Leading channels carry the demographics one-hot (the real feature
        // set includes race/ethnicity); the last channel carries the outcome
        // with configurable strength.
        if (cfg.group_signal > 0) {
            for (int g = 0; g < g_count && g < k - 1; ++g) {
                const double onehot = t.group == g ? 0.8 : 0.05;
                double v = (1.0 - cfg.group_signal) * x[static_cast<std::size_t>(g)] +
                           cfg.group_signal *
                               (0.15 * x[static_cast<std::size_t>(g)] + onehot +
                                0.5 * cfg.feature_noise_sd * noise.normal());
                x[static_cast<std::size_t>(g)] = std::clamp(v, 0.0, 1.0);
            }
        }
        double base = x[k - 1];
        x[k - 1] = std::clamp(cfg.outcome_signal * leak + (1.0 - cfg.outcome_signal) * base +
                                  0.25 * cfg.feature_noise_sd * noise.normal(),
                              0.0, 1.0);
    }
}

} // namespace detail

inline CohortDataset generate_cohort(const SyntheticCohortConfig& cfg) {
    cfg.validate();
    CohortDataset out;
    out.group_names = cfg.group_names;
    out.trajectories.reserve(static_cast<std::size_t>(cfg.n_patients));

    RandomStream root(cfg.seed);
    RandomStream demo = root.fork("demographics");
    RandomStream walk = root.fork("severity");
    RandomStream feat = root.fork("features");
    RandomStream fate = root.fork("outcome");

    const std::size_t g_count = cfg.group_names.size();
    for (int i = 0; i < cfg.n_patients; ++i) {
        ClinicalTrajectory t;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "p%06d", i);
        t.patient_id = buf;

        // group by inverse CDF over the simplex
        double u = demo.uniform();
        double acc = 0;
        std::size_t g = g_count - 1;
        for (std::size_t j = 0; j < g_count; ++j) {
            acc += cfg.group_proportions[j];
            if (u < acc) {
                g = j;
                break;
            }
        }
        t.group = static_cast<int>(g);

        t.age = std::clamp(static_cast<int>(std::lround(demo.normal(62.0, 15.5))), 18, 95);
        t.bmi = std::clamp(demo.normal(29.6, 8.7), 13.0, 70.0);
        t.severe_comorbidity = demo.bernoulli(cfg.comorbidity_rate);

        int len = std::clamp(static_cast<int>(std::lround(demo.normal(cfg.mean_length, cfg.sd_length))), 1, 30);

        // latent severity chain
        std::vector<double> severity(static_cast<std::size_t>(len));
        double s = walk.uniform(cfg.severity_start_min, cfg.severity_start_max);
        const double drift = cfg.severity_drift + cfg.group_drift_delta[g];
        for (int d = 0; d < len; ++d) {
            severity[static_cast<std::size_t>(d)] = s;
            s = std::clamp(s + drift + cfg.severity_step_sd * walk.normal(), 0.0, 1.0);
        }

        t.sofa_total.resize(static_cast<std::size_t>(len));
        for (int d = 0; d < len; ++d)
            t.sofa_total[static_cast<std::size_t>(d)] =
                static_cast<int>(std::lround(24.0 * severity[static_cast<std::size_t>(d)]));

        double p_death =
            std::clamp(cfg.base_mortality[g] * cfg.mortality_severity_gain * severity.back(), 0.0, 1.0);
        t.outcome = fate.bernoulli(p_death) ? Outcome::Dead : Outcome::Survived;

        detail::embed_conditions(t, severity, cfg, feat);
        out.trajectories.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cohort CSV + sidecar manifest
//
// Header: patient_id,day,group,age,bmi,severe_comorbidity,sofa_total,f1..fk,outcome
// One row per patient-day, day starting at 1; outcome only on the final row.
// The manifest declares each feature's min/max; the loader rescales raw
// feature values into [0,1] with them.
// ---------------------------------------------------------------------------

struct FeatureManifest {
    std::vector<double> feature_min;
    std::vector<double> feature_max;
    std::vector<std::string> group_names = default_group_names();

    static FeatureManifest identity(int k, std::vector<std::string> groups) {
        FeatureManifest m;
        m.feature_min.assign(static_cast<std::size_t>(k), 0.0);
        m.feature_max.assign(static_cast<std::size_t>(k), 1.0);
        m.group_names = std::move(groups);
        return m;
    }
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

} // namespace detail

inline void save_manifest(const FeatureManifest& m, const std::string& path) {
    nlohmann::json j;
    j["groups"] = m.group_names;
    auto& feats = j["features"];
    feats = nlohmann::json::array();
    for (std::size_t i = 0; i < m.feature_min.size(); ++i) {
        feats.push_back({{"name", "f" + std::to_string(i + 1)},
                         {"min", m.feature_min[i]},
                         {"max", m.feature_max[i]}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open manifest for writing: " + path);
    out << j.dump(2) << "\n";
}

inline FeatureManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest " + path + ": " + e.what());
    }
    FeatureManifest m;
    m.group_names.clear();
    for (const auto& g : j.at("groups")) m.group_names.push_back(g.get<std::string>());
    for (const auto& f : j.at("features")) {
        m.feature_min.push_back(f.at("min").get<double>());
        m.feature_max.push_back(f.at("max").get<double>());
        if (!(m.feature_max.back() > m.feature_min.back()))
            throw ParseError("manifest " + path + ": feature max must exceed min");
    }
    return m;
}

inline std::string manifest_path_for(const std::string& csv_path) {
    return csv_path + ".manifest.json";
}

inline void save_cohort(const CohortDataset& ds, const std::string& csv_path) {
    const int k = ds.trajectories.empty() ? 0 : static_cast<int>(ds.trajectories.front().conditions.front().size());
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw ParseError("cannot open cohort file for writing: " + csv_path);
    out << "patient_id,day,group,age,bmi,severe_comorbidity,sofa_total";
    for (int j = 1; j <= k; ++j) out << ",f" << j;
    out << ",outcome\n";
    for (const auto& t : ds.trajectories) {
        for (int d = 0; d < t.length(); ++d) {
            out << t.patient_id << ',' << (d + 1) << ',' << ds.group_names.at(static_cast<std::size_t>(t.group))
                << ',' << t.age << ',' << detail::fmt_double(t.bmi) << ',' << (t.severe_comorbidity ? 1 : 0)
                << ',' << t.sofa_total[static_cast<std::size_t>(d)];
            for (double v : t.conditions[static_cast<std::size_t>(d)]) out << ',' << detail::fmt_double(v);
            out << ',' << (d + 1 == t.length() ? to_string(t.outcome) : "") << '\n';
        }
    }
    save_manifest(FeatureManifest::identity(k, ds.group_names), manifest_path_for(csv_path));
}

inline CohortDataset load_cohort(const std::string& csv_path) {
    FeatureManifest manifest = load_manifest(manifest_path_for(csv_path));
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw ParseError("cannot open cohort file: " + csv_path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError(csv_path + ": empty file");
    auto header = detail::split_csv_line(line);
    const std::vector<std::string> fixed = {"patient_id", "day",        "group",
                                            "age",        "bmi",        "severe_comorbidity",
                                            "sofa_total"};
    if (header.size() < fixed.size() + 1)
        throw ParseError(csv_path + ": header too short");
    for (std::size_t i = 0; i < fixed.size(); ++i)
        if (header[i] != fixed[i])
            throw ParseError(csv_path + ": missing column '" + fixed[i] + "'");
    if (header.back() != "outcome") throw ParseError(csv_path + ": missing column 'outcome'");
    const std::size_t k = header.size() - fixed.size() - 1;
    for (std::size_t j = 0; j < k; ++j)
        if (header[fixed.size() + j] != "f" + std::to_string(j + 1))
            throw ParseError(csv_path + ": missing column 'f" + std::to_string(j + 1) + "'");
    if (manifest.feature_min.size() != k)
        throw ParseError(csv_path + ": manifest declares " + std::to_string(manifest.feature_min.size()) +
                         " features, file has " + std::to_string(k));

    CohortDataset ds;
    ds.group_names = manifest.group_names;
    ClinicalTrajectory cur;
    int last_day = 0;
    bool open = false;
    std::size_t row = 1;

    auto flush = [&]() {
        if (!open) return;
        cur.validate();
        ds.trajectories.push_back(std::move(cur));
        cur = ClinicalTrajectory{};
        open = false;
    };

    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != header.size())
            throw ParseError(csv_path + " row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
        const std::string& pid = f[0];
        int day = 0;
        try {
            day = std::stoi(f[1]);
        } catch (...) {
            throw ParseError(csv_path + " row " + std::to_string(row) + " column 'day': not an integer");
        }
        if (!open || pid != cur.patient_id) {
            flush();
            open = true;
            cur.patient_id = pid;
            auto it = std::find(ds.group_names.begin(), ds.group_names.end(), f[2]);
            if (it == ds.group_names.end())
                throw ParseError(csv_path + " row " + std::to_string(row) + " column 'group': unknown group '" +
                                 f[2] + "'");
            cur.group = static_cast<int>(it - ds.group_names.begin());
            cur.age = std::stoi(f[3]);
            cur.bmi = std::stod(f[4]);
            cur.severe_comorbidity = f[5] == "1" || f[5] == "true";
            last_day = 0;
        }
        if (day != last_day + 1)
            throw ParseError(csv_path + " row " + std::to_string(row) + " column 'day': non-monotone day for patient " +
                             pid);
        last_day = day;
        cur.sofa_total.push_back(std::stoi(f[6]));
        std::vector<double> x(k);
        for (std::size_t j = 0; j < k; ++j) {
            double raw = std::stod(f[7 + j]);
            double span = manifest.feature_max[j] - manifest.feature_min[j];
            double v = (raw - manifest.feature_min[j]) / span;
            if (!(v >= -1e-12 && v <= 1.0 + 1e-12))
                throw ParseError(csv_path + " row " + std::to_string(row) + " column 'f" + std::to_string(j + 1) +
                                 "': normalized value outside [0,1]");
            x[j] = std::clamp(v, 0.0, 1.0);
        }
        cur.conditions.push_back(std::move(x));
        const std::string& oc = f.back();
        if (!oc.empty()) {
            if (oc == "survived")
                cur.outcome = Outcome::Survived;
            else if (oc == "dead")
                cur.outcome = Outcome::Dead;
            else
                throw ParseError(csv_path + " row " + std::to_string(row) + " column 'outcome': unknown value '" + oc +
                                 "'");
        }
    }
    flush();
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

struct SplitResult {
    CohortDataset train, val, test;
};

inline SplitResult split_cohort(const CohortDataset& ds, std::array<double, 3> fractions,
                                std::uint64_t seed) {
    double sum = fractions[0] + fractions[1] + fractions[2];
    for (double f : fractions)
        if (f < 0) throw ConfigError("split fractions must be non-negative");
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

    const std::size_t n = ds.size();
    // Global targets via largest remainder, exact partition of n.
    std::array<std::size_t, 3> target{};
    {
        std::array<double, 3> quota{};
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            quota[static_cast<std::size_t>(s)] = fractions[static_cast<std::size_t>(s)] * static_cast<double>(n);
            target[static_cast<std::size_t>(s)] = static_cast<std::size_t>(quota[static_cast<std::size_t>(s)]);
            assigned += target[static_cast<std::size_t>(s)];
        }
        std::array<int, 3> order = {0, 1, 2};
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            double ra = quota[static_cast<std::size_t>(a)] - std::floor(quota[static_cast<std::size_t>(a)]);
            double rb = quota[static_cast<std::size_t>(b)] - std::floor(quota[static_cast<std::size_t>(b)]);
            return ra > rb;
        });
        for (std::size_t i = 0; assigned < n; ++i, ++assigned)
            target[static_cast<std::size_t>(order[i % 3])]++;
    }

    // Shuffle within each group, then deal group members across splits in
    // proportion, respecting global targets exactly.
    RandomStream rng = RandomStream(seed).fork("split");
    std::vector<std::vector<std::size_t>> by_group(ds.n_groups());
    for (std::size_t i = 0; i < n; ++i)
        by_group[static_cast<std::size_t>(ds.trajectories[i].group)].push_back(i);
    for (auto& g : by_group) rng.shuffle(g);

    std::array<std::vector<std::size_t>, 3> picks;
    std::array<std::size_t, 3> remaining = target;
    for (auto& g : by_group) {
        std::size_t ng = g.size();
        std::array<std::size_t, 3> want{};
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            want[static_cast<std::size_t>(s)] =
                std::min(remaining[static_cast<std::size_t>(s)],
                         static_cast<std::size_t>(fractions[static_cast<std::size_t>(s)] * static_cast<double>(ng)));
            assigned += want[static_cast<std::size_t>(s)];
        }
        // Hand the rounding remainder to whichever split is furthest behind
        // its global target.
        while (assigned < ng) {
            int best = -1;
            double best_deficit = -1;
            for (int s = 0; s < 3; ++s) {
                std::size_t have = want[static_cast<std::size_t>(s)];
                std::size_t room = remaining[static_cast<std::size_t>(s)] - have;
                if (room == 0) continue;
                double deficit = static_cast<double>(room);
                if (deficit > best_deficit) {
                    best_deficit = deficit;
                    best = s;
                }
            }
            if (best < 0) throw ContractError("split bookkeeping overflow");
            want[static_cast<std::size_t>(best)]++;
            ++assigned;
        }
        std::size_t cursor = 0;
        for (int s = 0; s < 3; ++s) {
            for (std::size_t c = 0; c < want[static_cast<std::size_t>(s)]; ++c)
                picks[static_cast<std::size_t>(s)].push_back(g[cursor++]);
            remaining[static_cast<std::size_t>(s)] -= want[static_cast<std::size_t>(s)];
        }
    }

    SplitResult out;
    const char* tags[3] = {"train", "val", "test"};
    CohortDataset* dsets[3] = {&out.train, &out.val, &out.test};
    for (int s = 0; s < 3; ++s) {
        auto& part = *dsets[s];
        part.group_names = ds.group_names;
        part.split_tag = tags[s];
        auto idx = picks[static_cast<std::size_t>(s)];
        std::sort(idx.begin(), idx.end()); // stable member order
        part.trajectories.reserve(idx.size());
        for (std::size_t i : idx) part.trajectories.push_back(ds.trajectories[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Descriptive statistics (population std)
// ---------------------------------------------------------------------------

struct CohortStats {
    std::size_t n = 0;
    std::vector<std::size_t> group_counts;
    std::vector<double> group_pct;
    double age_mean = 0, age_std = 0;
    double vent_days_mean = 0, vent_days_std = 0;
    std::size_t deaths = 0;
    double death_rate = 0;
    std::vector<std::size_t> group_deaths;

    nlohmann::json to_json(const std::vector<std::string>& group_names) const {
        nlohmann::json j;
        j["n"] = n;
        j["age_mean"] = age_mean;
        j["age_std"] = age_std;
        j["vent_days_mean"] = vent_days_mean;
        j["vent_days_std"] = vent_days_std;
        j["deaths"] = deaths;
        j["death_rate"] = death_rate;
        for (std::size_t g = 0; g < group_names.size(); ++g) {
            j["groups"][group_names[g]] = {{"count", group_counts[g]},
                                           {"pct", group_pct[g]},
                                           {"deaths", group_deaths[g]}};
        }
        return j;
    }
};

inline CohortStats cohort_stats(const CohortDataset& ds) {
    if (ds.trajectories.empty()) throw EvalError("cohort_stats: empty dataset");
    CohortStats st;
    st.n = ds.size();
    st.group_counts = ds.group_counts();
    st.group_deaths.assign(ds.n_groups(), 0);
    st.group_pct.resize(ds.n_groups());
    for (std::size_t g = 0; g < ds.n_groups(); ++g)
        st.group_pct[g] = 100.0 * static_cast<double>(st.group_counts[g]) / static_cast<double>(st.n);

    double age_sum = 0, age_sq = 0, len_sum = 0, len_sq = 0;
    for (const auto& t : ds.trajectories) {
        age_sum += t.age;
        age_sq += static_cast<double>(t.age) * t.age;
        len_sum += t.length();
        len_sq += static_cast<double>(t.length()) * t.length();
        if (t.outcome == Outcome::Dead) {
            st.deaths++;
            st.group_deaths[static_cast<std::size_t>(t.group)]++;
        }
    }
    const double dn = static_cast<double>(st.n);
    st.age_mean = age_sum / dn;
    st.age_std = std::sqrt(std::max(0.0, age_sq / dn - st.age_mean * st.age_mean));
    st.vent_days_mean = len_sum / dn;
    st.vent_days_std = std::sqrt(std::max(0.0, len_sq / dn - st.vent_days_mean * st.vent_days_mean));
    st.death_rate = static_cast<double>(st.deaths) / dn;
    return st;
}

} // namespace triage
