// triage: cohort generation, policy training, evaluation sweeps and the
// classical-vs-transformer comparison behind one reproducible CLI.
//
// Every command is a pure function of (config file, flags, seed): re-running
// with the same inputs rewrites the same bytes. Exit codes: 0 success,
// 2 usage/config error, 3 runtime/numeric error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "triage/evaluation.hpp"
#include "triage/qnet.hpp"
#include "triage/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace triage;

namespace {

// config-file fallback: CLI flag > config file > built-in default
struct ConfigMerge {
    json file;

    template <typename T>
    void apply(CLI::Option* opt, const std::string& key, T& value) const {
        if (opt != nullptr && opt->count() > 0) return;
        if (!file.contains(key)) return;
        try {
            value = file.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }

    template <typename T>
    void apply(CLI::Option* opt, const std::string& key, std::optional<T>& value) const {
        if (opt != nullptr && opt->count() > 0) return;
        if (!file.contains(key)) return;
        try {
            value = file.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    return out;
}

// "0:100:10" (inclusive range) or "0,25,50"
std::vector<double> parse_capacity_grid(const std::string& s) {
    if (s.find(':') != std::string::npos) {
        double start = 0, stop = 0, step = 0;
        if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &start, &stop, &step) != 3 || step <= 0)
            throw ConfigError("bad capacity range '" + s + "' (expected start:stop:step)");
        std::vector<double> out;
        for (double v = start; v <= stop + 1e-9; v += step) out.push_back(v);
        return out;
    }
    return parse_double_list(s);
}

std::string sanitize_label(const std::string& raw) {
    std::string out;
    for (char c : raw)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

std::string protocol_label(const std::string& spec) {
    if (spec.rfind("learned:", 0) != 0) return spec;
    return "learned_" + sanitize_label(fs::path(spec.substr(8)).stem().string());
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

void require_seed(const std::optional<std::uint64_t>& seed) {
    if (!seed)
        throw CLI::RequiredError("--seed (wall-clock seeding is not supported)");
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------
struct GenerateArgs {
    std::string config_path;
    std::string out = "cohort.csv";
    int patients = 1000;
    int features = 38;
    std::string group_props;
    std::string base_mortality;
    std::string drift_delta;
    double outcome_signal = 0.5;
    double group_signal = 1.0;
    double mean_length = 5.0;
    double sd_length = 3.0;
    std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a, const ConfigMerge&) {
    require_seed(a.seed);
    SyntheticCohortConfig cfg;
    cfg.n_patients = a.patients;
    cfg.n_features = a.features;
    cfg.outcome_signal = a.outcome_signal;
    cfg.group_signal = a.group_signal;
    cfg.mean_length = a.mean_length;
    cfg.sd_length = a.sd_length;
    cfg.seed = *a.seed;
    if (!a.group_props.empty()) {
        auto props = parse_double_list(a.group_props);
        double sum = 0;
        for (double p : props) {
            if (p < 0) throw ConfigError("group proportions must be non-negative");
            sum += p;
        }
        if (!(sum > 0)) throw ConfigError("group proportions must have positive mass");
        for (double& p : props) p /= sum; // accept un-normalized shares
        cfg.group_proportions = props;
    }
    if (!a.base_mortality.empty()) cfg.base_mortality = parse_double_list(a.base_mortality);
    if (!a.drift_delta.empty()) cfg.group_drift_delta = parse_double_list(a.drift_delta);

    auto cohort = generate_cohort(cfg);
    save_cohort(cohort, a.out);
    auto stats = cohort_stats(cohort);
    write_json(stats.to_json(cohort.group_names), a.out + ".stats.json");

    json echo;
    echo["command"] = "generate";
    echo["patients"] = cfg.n_patients;
    echo["features"] = cfg.n_features;
    echo["group_proportions"] = cfg.group_proportions;
    echo["base_mortality"] = cfg.base_mortality;
    echo["group_drift_delta"] = cfg.group_drift_delta;
    echo["outcome_signal"] = cfg.outcome_signal;
    echo["group_signal"] = cfg.group_signal;
    echo["mean_length"] = cfg.mean_length;
    echo["sd_length"] = cfg.sd_length;
    echo["seed"] = cfg.seed;
    echo["out"] = a.out;
    write_json(echo, a.out + ".config.json");

    std::cout << "wrote " << a.out << " (" << cohort.size() << " patients)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------
struct TrainArgs {
    std::string config_path;
    std::string cohort;
    std::string out_dir = "train_out";
    int capacity = 8;
    double arrival_rate = 12.0;
    int bed_count = 0;
    bool reassessment = false;
    double death_prob = 1.0;
    double lambda = 1e3;
    double mu = -0.1;
    bool no_terminal = false;
    bool no_cost = false;
    std::string mode = "off-policy";
    std::string behavior = "mp";
    trainer::TrainConfig tc;
    bool paper_scale = false;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, const ConfigMerge&) {
    require_seed(a.seed);
    auto cohort = load_cohort(a.cohort);

    sim::SimConfig sc;
    sc.capacity = a.capacity;
    sc.arrival_rate = a.arrival_rate;
    sc.bed_count = a.bed_count;
    sc.withdrawal_on = !a.reassessment;
    sc.death_prob = a.death_prob;
    sc.reward.lambda = a.lambda;
    sc.reward.mu = a.mu;
    sc.reward.enable_fairness = a.lambda != 0.0;
    sc.reward.enable_terminal = !a.no_terminal;
    sc.reward.enable_cost = !a.no_cost;

    trainer::TrainConfig tc = a.tc;
    tc.mode = a.mode == "off-policy" ? "off_policy" : a.mode;
    tc.behavior = a.behavior;
    tc.seed = *a.seed;
    if (a.paper_scale) {
        tc.embed_dim = 1024;
        tc.num_heads = 16;
        tc.hidden_dim = 1024;
    }

    fs::create_directories(a.out_dir);
    auto result = trainer::train(cohort, sc, tc);
    fs::path out(a.out_dir);
    qnet::save_model(result.model, (out / "model.bin").string());
    trainer::write_history_csv(result.history, (out / "history_loss.csv").string(),
                               (out / "history_epoch.csv").string());

    json echo;
    echo["command"] = "train";
    echo["cohort"] = a.cohort;
    echo["capacity"] = sc.capacity;
    echo["arrival_rate"] = sc.arrival_rate;
    echo["bed_count"] = sc.beds();
    echo["withdrawal_on"] = sc.withdrawal_on;
    echo["death_prob"] = sc.death_prob;
    echo["lambda"] = sc.reward.lambda;
    echo["mu"] = sc.reward.mu;
    echo["mode"] = tc.mode;
    echo["behavior"] = tc.behavior;
    echo["batch_size"] = tc.batch_size;
    echo["learning_rate"] = tc.learning_rate;
    echo["update_freq"] = tc.update_freq;
    echo["epochs"] = tc.epochs;
    echo["gradient_steps"] = tc.gradient_steps;
    echo["discount"] = tc.discount;
    echo["target_mix"] = tc.target_mix;
    echo["epsilon"] = tc.epsilon;
    echo["buffer_capacity"] = tc.buffer_capacity;
    echo["steps_per_epoch"] = tc.steps_per_epoch;
    echo["offline_fill_steps"] = tc.offline_fill_steps;
    echo["cohort_fraction"] = tc.cohort_fraction;
    echo["embed_dim"] = tc.embed_dim;
    echo["num_heads"] = tc.num_heads;
    echo["hidden_dim"] = tc.hidden_dim;
    echo["num_layers"] = tc.num_layers;
    echo["attention_off"] = tc.attention_off;
    echo["single_network"] = tc.single_network;
    echo["force_fill"] = tc.force_fill;
    echo["seed"] = tc.seed;
    write_json(echo, out / "config.json");

    std::cout << "model written to " << (out / "model.bin").string();
    if (result.history.best_epoch >= 0)
        std::cout << " (best epoch " << result.history.best_epoch << ")";
    std::cout << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------
struct EvaluateArgs {
    std::string config_path;
    std::string cohort;
    std::string out_dir = "eval_out";
    std::string protocols_list = "lottery,youngest,sofa,mp,dt";
    std::string capacities = "0:100:10";
    int seeds = 30;
    int horizon = 365;
    double arrival_rate = 12.0;
    int bed_count = 0;
    bool reassessment = false;
    double death_prob = 1.0;
    int dt_sofa_max = 10;
    int dt_age_max = 70;
    double dt_bmi_max = 40;
    std::optional<std::uint64_t> seed;
};

int cmd_evaluate(const EvaluateArgs& a, const ConfigMerge&) {
    require_seed(a.seed);
    auto cohort = load_cohort(a.cohort);

    eval::EvalConfig cfg;
    cfg.capacity_grid_pct = parse_capacity_grid(a.capacities);
    cfg.seeds = a.seeds;
    cfg.horizon = a.horizon;
    cfg.arrival_rate = a.arrival_rate;
    cfg.withdrawal_on = !a.reassessment;
    cfg.death_prob = a.death_prob;
    cfg.bed_count = a.bed_count;
    cfg.seed_base = *a.seed;
    cfg.validate();

    protocols::DtThresholds dt{a.dt_sofa_max, a.dt_age_max, a.dt_bmi_max};
    std::vector<std::string> specs;
    {
        std::stringstream ss(a.protocols_list);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) specs.push_back(item);
    }
    if (specs.empty()) throw ConfigError("no protocols requested");

    fs::create_directories(a.out_dir);
    fs::path out(a.out_dir);

    auto ref = eval::measure_reference(cohort, cfg);
    eval::EvalReport report;
    report.group_names = cohort.group_names;
    report.max_daily_demand = ref.max_daily_demand;
    std::vector<std::string> used_labels;
    for (const auto& spec : specs) {
        auto policy = qnet::make_protocol(spec, dt);
        auto label = protocol_label(spec);
        while (std::find(used_labels.begin(), used_labels.end(), label) != used_labels.end())
            label += "_";
        used_labels.push_back(label);
        auto sweep = eval::capacity_sweep(*policy, label, cohort, ref, cfg);
        eval::write_curve_csv(sweep, true, (out / ("scc_" + label + ".csv")).string());
        eval::write_curve_csv(sweep, false, (out / ("acc_" + label + ".csv")).string());
        report.sweeps.push_back(std::move(sweep));
    }
    write_json(report.to_json(), out / "report.json");
    eval::write_report_csv(report, (out / "report.csv").string());

    json echo;
    echo["command"] = "evaluate";
    echo["cohort"] = a.cohort;
    echo["protocols"] = specs;
    echo["capacities_pct"] = cfg.capacity_grid_pct;
    echo["seeds"] = cfg.seeds;
    echo["horizon"] = cfg.horizon;
    echo["arrival_rate"] = cfg.arrival_rate;
    echo["withdrawal_on"] = cfg.withdrawal_on;
    echo["death_prob"] = cfg.death_prob;
    echo["bed_count"] = cfg.bed_count;
    echo["dt_thresholds"] = {{"sofa_max", dt.sofa_max}, {"age_max", dt.age_max}, {"bmi_max", dt.bmi_max}};
    echo["max_daily_demand"] = ref.max_daily_demand;
    echo["seed"] = *a.seed;
    write_json(echo, out / "config.json");

    std::cout << "report written to " << (out / "report.json").string() << " (full capacity = "
              << ref.max_daily_demand << " ventilators)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// pareto
// ---------------------------------------------------------------------------
struct ParetoArgs {
    std::string config_path;
    std::string cohort;
    std::string out_dir = "pareto_out";
    std::string lambdas = "0,1,1e2,1e3,1e6";
    double capacity_pct = 50;
    int seeds = 10;
    int horizon = 365;
    double arrival_rate = 12.0;
    double train_fraction = 0.7;
    trainer::TrainConfig tc;
    std::optional<std::uint64_t> seed;
};

int cmd_pareto(const ParetoArgs& a, const ConfigMerge&) {
    require_seed(a.seed);
    auto lambdas = parse_double_list(a.lambdas);
    if (lambdas.empty()) throw ConfigError("--lambdas must name at least one value");
    auto cohort = load_cohort(a.cohort);
    if (a.train_fraction <= 0 || a.train_fraction > 1)
        throw ConfigError("train fraction must lie in (0,1]");

    auto split = split_cohort(cohort, {a.train_fraction, 0.0, 1.0 - a.train_fraction}, *a.seed);
    const CohortDataset& train_set = split.train;
    const CohortDataset& eval_set = split.test.trajectories.empty() ? split.train : split.test;

    eval::EvalConfig cfg;
    cfg.capacity_grid_pct = {a.capacity_pct};
    cfg.seeds = a.seeds;
    cfg.horizon = a.horizon;
    cfg.arrival_rate = a.arrival_rate;
    cfg.seed_base = *a.seed;

    trainer::TrainConfig tc = a.tc;
    tc.seed = *a.seed;

    sim::SimConfig sim_base;
    auto result = eval::pareto_sweep(train_set, eval_set, lambdas, a.capacity_pct, sim_base, tc, cfg);

    fs::create_directories(a.out_dir);
    fs::path out(a.out_dir);
    eval::write_pareto_csv(result, (out / "pareto.csv").string());

    json echo;
    echo["command"] = "pareto";
    echo["cohort"] = a.cohort;
    echo["lambdas"] = lambdas;
    echo["capacity_pct"] = a.capacity_pct;
    echo["capacity"] = result.capacity;
    echo["seeds"] = cfg.seeds;
    echo["horizon"] = cfg.horizon;
    echo["train_fraction"] = a.train_fraction;
    echo["epochs"] = tc.epochs;
    echo["gradient_steps"] = tc.gradient_steps;
    echo["seed"] = *a.seed;
    write_json(echo, out / "config.json");

    std::cout << "pareto frontier written to " << (out / "pareto.csv").string()
              << " (turning point lambda = " << result.points[result.turning_index].lambda << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// compare-qnets
// ---------------------------------------------------------------------------
struct CompareArgs {
    std::string config_path;
    std::string cohort;
    std::string out_dir = "compare_out";
    std::string rows = "6:4:1,8:4:2,10:6:2,12:6:3";
    int seeds = 10;
    int horizon = 120;
    trainer::TrainConfig tc;
    std::optional<std::uint64_t> seed;
};

struct CompareRow {
    int n_beds, capacity;
    double arrival_rate;
};

std::vector<CompareRow> parse_rows(const std::string& s) {
    std::vector<CompareRow> rows;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        CompareRow r{};
        if (std::sscanf(item.c_str(), "%d:%d:%lf", &r.n_beds, &r.capacity, &r.arrival_rate) != 3)
            throw ConfigError("bad row '" + item + "' (expected N:C:Lambda)");
        rows.push_back(r);
    }
    if (rows.empty()) throw ConfigError("--rows must name at least one N:C:Lambda triple");
    return rows;
}

int cmd_compare_qnets(const CompareArgs& a, const ConfigMerge&) {
    require_seed(a.seed);
    auto rows = parse_rows(a.rows);
    auto cohort = load_cohort(a.cohort);

    fs::create_directories(a.out_dir);
    fs::path out(a.out_dir);
    std::ofstream csv(out / "compare_qnets.csv", std::ios::binary);
    if (!csv) throw ParseError("cannot open compare_qnets.csv");
    csv << "n_beds,capacity,arrival_rate,classical_params,classical_survival,transformer_survival\n";

    trainer::TrainConfig tc = a.tc;
    tc.seed = *a.seed;

    for (const auto& row : rows) {
        sim::SimConfig sc;
        sc.capacity = row.capacity;
        sc.bed_count = row.n_beds;
        sc.arrival_rate = row.arrival_rate;
        sc.reward.lambda = 0;
        sc.reward.enable_fairness = false;

        eval::EvalConfig ecfg;
        ecfg.capacity_grid_pct = {100.0 * row.capacity};
        ecfg.seeds = a.seeds;
        ecfg.horizon = a.horizon;
        ecfg.arrival_rate = row.arrival_rate;
        ecfg.seed_base = *a.seed;
        auto ref = eval::measure_reference(cohort, ecfg);
        const double pct = 100.0 * row.capacity / ref.max_daily_demand;

        auto tx = trainer::train(cohort, sc, tc);
        qnet::LearnedPolicy tx_policy(std::move(tx.model));
        auto tx_point = eval::sweep_point(tx_policy, cohort, ref, pct, ecfg);

        std::string classical_params = "-", classical_survival = "capability_error";
        try {
            auto cl = trainer::train_classical(cohort, sc, tc);
            classical_params = std::to_string(
                qnet::classical_param_count(cl.model.classical->config));
            qnet::LearnedPolicy cl_policy(std::move(cl.model));
            auto cl_point = eval::sweep_point(cl_policy, cohort, ref, pct, ecfg);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", cl_point.survival_mean / 100.0);
            classical_survival = buf;
        } catch (const CapabilityError&) {
            // reported as-is in the table
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", tx_point.survival_mean / 100.0);
        csv << row.n_beds << ',' << row.capacity << ',' << row.arrival_rate << ','
            << classical_params << ',' << classical_survival << ',' << buf << "\n";
    }
    csv.close();

    json echo;
    echo["command"] = "compare-qnets";
    echo["cohort"] = a.cohort;
    echo["rows"] = a.rows;
    echo["seeds"] = a.seeds;
    echo["horizon"] = a.horizon;
    echo["epochs"] = tc.epochs;
    echo["gradient_steps"] = tc.gradient_steps;
    echo["seed"] = *a.seed;
    write_json(echo, out / "config.json");

    std::cout << "comparison written to " << (out / "compare_qnets.csv").string() << "\n";
    return 0;
}

void add_train_knobs(CLI::App* cmd, trainer::TrainConfig& tc, ConfigMerge& merge,
                     std::vector<std::function<void()>>& merges) {
    auto opt = [&merges, &merge](CLI::Option* o, const std::string& key, auto& value) {
        merges.push_back([o, key, &value, &merge] { merge.apply(o, key, value); });
    };
    opt(cmd->add_option("--batch-size", tc.batch_size), "batch_size", tc.batch_size);
    opt(cmd->add_option("--lr", tc.learning_rate), "learning_rate", tc.learning_rate);
    opt(cmd->add_option("--update-freq", tc.update_freq), "update_freq", tc.update_freq);
    opt(cmd->add_option("--epochs", tc.epochs), "epochs", tc.epochs);
    opt(cmd->add_option("--gradient-steps", tc.gradient_steps), "gradient_steps", tc.gradient_steps);
    opt(cmd->add_option("--gamma", tc.discount), "discount", tc.discount);
    opt(cmd->add_option("--tau", tc.target_mix), "target_mix", tc.target_mix);
    opt(cmd->add_option("--epsilon", tc.epsilon), "epsilon", tc.epsilon);
    opt(cmd->add_option("--buffer", tc.buffer_capacity), "buffer_capacity", tc.buffer_capacity);
    opt(cmd->add_option("--steps-per-epoch", tc.steps_per_epoch), "steps_per_epoch", tc.steps_per_epoch);
    opt(cmd->add_option("--offline-fill", tc.offline_fill_steps), "offline_fill_steps",
        tc.offline_fill_steps);
    opt(cmd->add_option("--cohort-fraction", tc.cohort_fraction), "cohort_fraction", tc.cohort_fraction);
    opt(cmd->add_option("--embed", tc.embed_dim), "embed_dim", tc.embed_dim);
    opt(cmd->add_option("--heads", tc.num_heads), "num_heads", tc.num_heads);
    opt(cmd->add_option("--hidden", tc.hidden_dim), "hidden_dim", tc.hidden_dim);
    opt(cmd->add_option("--layers", tc.num_layers), "num_layers", tc.num_layers);
    opt(cmd->add_flag("--attention-off", tc.attention_off), "attention_off", tc.attention_off);
    opt(cmd->add_flag("--single-network", tc.single_network), "single_network", tc.single_network);
    opt(cmd->add_flag("--force-fill,!--exact-argmax", tc.force_fill), "force_fill", tc.force_fill);
    opt(cmd->add_option("--bootstrap-behavior", tc.bootstrap_behavior), "bootstrap_behavior",
        tc.bootstrap_behavior);
    opt(cmd->add_option("--validation-episodes", tc.validation_episodes), "validation_episodes",
        tc.validation_episodes);
    opt(cmd->add_option("--validation-horizon", tc.validation_horizon), "validation_horizon",
        tc.validation_horizon);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ventilator triage policies: simulate, train, evaluate"};
    app.require_subcommand(1);

    GenerateArgs ga;
    TrainArgs ta;
    EvaluateArgs ea;
    ParetoArgs pa;
    CompareArgs ca;
    ConfigMerge merge;
    std::vector<std::function<void()>> merges;
    auto opt = [&merges, &merge](CLI::Option* o, const std::string& key, auto& value) {
        merges.push_back([o, key, &value, &merge] { merge.apply(o, key, value); });
    };

    // generate -----------------------------------------------------------
    auto* gen = app.add_subcommand("generate", "generate a synthetic cohort CSV + manifest");
    gen->add_option("--config", ga.config_path, "JSON config file");
    opt(gen->add_option("-o,--out", ga.out), "out", ga.out);
    opt(gen->add_option("--patients", ga.patients), "patients", ga.patients);
    opt(gen->add_option("--features", ga.features), "features", ga.features);
    opt(gen->add_option("--group-props", ga.group_props), "group_props", ga.group_props);
    opt(gen->add_option("--base-mortality", ga.base_mortality), "base_mortality", ga.base_mortality);
    opt(gen->add_option("--drift-delta", ga.drift_delta), "drift_delta", ga.drift_delta);
    opt(gen->add_option("--outcome-signal", ga.outcome_signal), "outcome_signal", ga.outcome_signal);
    opt(gen->add_option("--group-signal", ga.group_signal), "group_signal", ga.group_signal);
    opt(gen->add_option("--mean-length", ga.mean_length), "mean_length", ga.mean_length);
    opt(gen->add_option("--sd-length", ga.sd_length), "sd_length", ga.sd_length);
    opt(gen->add_option("--seed", ga.seed), "seed", ga.seed);

    // train ----------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train a capacity-specific allocation model");
    tr->add_option("--config", ta.config_path, "JSON config file");
    opt(tr->add_option("--cohort", ta.cohort), "cohort", ta.cohort);
    opt(tr->add_option("-o,--out-dir", ta.out_dir), "out_dir", ta.out_dir);
    opt(tr->add_option("--capacity", ta.capacity), "capacity", ta.capacity);
    opt(tr->add_option("--arrival-rate", ta.arrival_rate), "arrival_rate", ta.arrival_rate);
    opt(tr->add_option("--beds", ta.bed_count), "bed_count", ta.bed_count);
    opt(tr->add_flag("--reassessment", ta.reassessment), "reassessment", ta.reassessment);
    opt(tr->add_option("--death-prob", ta.death_prob), "death_prob", ta.death_prob);
    opt(tr->add_option("--lambda", ta.lambda), "lambda", ta.lambda);
    opt(tr->add_option("--mu", ta.mu), "mu", ta.mu);
    opt(tr->add_flag("--no-terminal", ta.no_terminal), "no_terminal", ta.no_terminal);
    opt(tr->add_flag("--no-cost", ta.no_cost), "no_cost", ta.no_cost);
    opt(tr->add_option("--mode", ta.mode)->check(CLI::IsMember({"off-policy", "offline"})), "mode",
        ta.mode);
    opt(tr->add_option("--behavior", ta.behavior), "behavior", ta.behavior);
    opt(tr->add_flag("--paper-scale", ta.paper_scale), "paper_scale", ta.paper_scale);
    opt(tr->add_option("--seed", ta.seed), "seed", ta.seed);
    add_train_knobs(tr, ta.tc, merge, merges);

    // evaluate ---------------------------------------------------------------
    auto* ev = app.add_subcommand("evaluate", "capacity sweep across protocols");
    ev->add_option("--config", ea.config_path, "JSON config file");
    opt(ev->add_option("--cohort", ea.cohort), "cohort", ea.cohort);
    opt(ev->add_option("-o,--out-dir", ea.out_dir), "out_dir", ea.out_dir);
    opt(ev->add_option("--protocols", ea.protocols_list), "protocols", ea.protocols_list);
    opt(ev->add_option("--capacities", ea.capacities), "capacities", ea.capacities);
    opt(ev->add_option("--seeds", ea.seeds), "seeds", ea.seeds);
    opt(ev->add_option("--horizon", ea.horizon), "horizon", ea.horizon);
    opt(ev->add_option("--arrival-rate", ea.arrival_rate), "arrival_rate", ea.arrival_rate);
    opt(ev->add_option("--beds", ea.bed_count), "bed_count", ea.bed_count);
    opt(ev->add_flag("--reassessment", ea.reassessment), "reassessment", ea.reassessment);
    opt(ev->add_option("--death-prob", ea.death_prob), "death_prob", ea.death_prob);
    opt(ev->add_option("--dt-sofa-max", ea.dt_sofa_max), "dt_sofa_max", ea.dt_sofa_max);
    opt(ev->add_option("--dt-age-max", ea.dt_age_max), "dt_age_max", ea.dt_age_max);
    opt(ev->add_option("--dt-bmi-max", ea.dt_bmi_max), "dt_bmi_max", ea.dt_bmi_max);
    opt(ev->add_option("--seed", ea.seed), "seed", ea.seed);

    // pareto ----------------------------------------------------------------
    auto* pr = app.add_subcommand("pareto", "survival-fairness frontier over lambda");
    pr->add_option("--config", pa.config_path, "JSON config file");
    opt(pr->add_option("--cohort", pa.cohort), "cohort", pa.cohort);
    opt(pr->add_option("-o,--out-dir", pa.out_dir), "out_dir", pa.out_dir);
    opt(pr->add_option("--lambdas", pa.lambdas), "lambdas", pa.lambdas);
    opt(pr->add_option("--capacity-pct", pa.capacity_pct), "capacity_pct", pa.capacity_pct);
    opt(pr->add_option("--seeds", pa.seeds), "seeds", pa.seeds);
    opt(pr->add_option("--horizon", pa.horizon), "horizon", pa.horizon);
    opt(pr->add_option("--arrival-rate", pa.arrival_rate), "arrival_rate", pa.arrival_rate);
    opt(pr->add_option("--train-fraction", pa.train_fraction), "train_fraction", pa.train_fraction);
    opt(pr->add_option("--seed", pa.seed), "seed", pa.seed);
    add_train_knobs(pr, pa.tc, merge, merges);

    // compare-qnets -----------------------------------------------------------
    auto* cq = app.add_subcommand("compare-qnets",
                                  "classical vs transformer heads on small units");
    cq->add_option("--config", ca.config_path, "JSON config file");
    opt(cq->add_option("--cohort", ca.cohort), "cohort", ca.cohort);
    opt(cq->add_option("-o,--out-dir", ca.out_dir), "out_dir", ca.out_dir);
    opt(cq->add_option("--rows", ca.rows), "rows", ca.rows);
    opt(cq->add_option("--seeds", ca.seeds), "seeds", ca.seeds);
    opt(cq->add_option("--horizon", ca.horizon), "horizon", ca.horizon);
    opt(cq->add_option("--seed", ca.seed), "seed", ca.seed);
    add_train_knobs(cq, ca.tc, merge, merges);

    try {
        app.parse(argc, argv);
        const std::string cfg_path = gen->parsed()   ? ga.config_path
                                     : tr->parsed()  ? ta.config_path
                                     : ev->parsed()  ? ea.config_path
                                     : pr->parsed()  ? pa.config_path
                                                     : ca.config_path;
        merge.file = load_config_file(cfg_path);
        for (auto& fn : merges) fn();

        if (gen->parsed()) return cmd_generate(ga, merge);
        if (tr->parsed()) return cmd_train(ta, merge);
        if (ev->parsed()) return cmd_evaluate(ea, merge);
        if (pr->parsed()) return cmd_pareto(pa, merge);
        if (cq->parsed()) return cmd_compare_qnets(ca, merge);
        throw ConfigError("no command given");
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
