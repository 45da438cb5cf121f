#include <coepg/loop.hpp>

#include <coepg/errors.hpp>
#include <coepg/jsonl.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace coepg {

namespace fs = std::filesystem;

std::string_view to_string(ArmMode m)
{
    switch (m) {
    case ArmMode::Cdrem: return "cdrem";
    case ArmMode::PriorOnly: return "prior_only";
    case ArmMode::Average: return "average";
    case ArmMode::Single: return "single";
    case ArmMode::NoGrpo: return "no_grpo";
    }
    throw std::logic_error("bad arm mode");
}

ArmMode parse_arm_mode(std::string_view s)
{
    for (auto m : kArmModes)
        if (to_string(m) == s)
            return m;
    throw ConfigError("unknown mode '" + std::string(s) +
                      "' (expected cdrem, prior_only, average, single or no_grpo)");
}

Priors parse_priors(std::string_view s)
{
    Priors p{};
    std::size_t i = 0, start = 0;
    for (; i < 3; ++i) {
        const auto end = s.find(':', start);
        const auto part = std::string(s.substr(start, end == std::string_view::npos ? s.size() - start : end - start));
        std::size_t used = 0;
        try {
            p[i] = std::stod(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != part.size() || !(p[i] > 0.0) || !std::isfinite(p[i]))
            throw ConfigError("priors must look like 1:1:2 with positive numbers, got '" + std::string(s) + "'");
        if (end == std::string_view::npos) {
            ++i;
            break;
        }
        start = end + 1;
    }
    if (i != 3 || start > s.size() || s.find(':', start) != std::string_view::npos)
        throw ConfigError("priors need exactly three ratios, got '" + std::string(s) + "'");
    return p;
}

std::string priors_label(const Priors& p)
{
    std::string out;
    for (std::size_t i = 0; i < p.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", p[i]);
        out += (i ? ":" : "") + std::string(buf);
    }
    return out;
}

void RunConfig::validate() const
{
    grpo.validate();
    for (const auto* s : {&planner_sft, &grounder_sft, &distill_sft})
        if (s->epochs < 0 || !(s->learning_rate >= 0.0) || !std::isfinite(s->learning_rate))
            throw ConfigError("sft epochs and learning_rate must be >= 0");
    for (double p : priors)
        if (!(p > 0.0) || !std::isfinite(p))
            throw ConfigError("priors must be positive");
    if (single_member >= priors.size())
        throw ConfigError("single_member must index one of the 3 ensemble members");
    if (seeds.empty())
        throw ConfigError("at least one seed is required");
    if (iterations < 0)
        throw ConfigError("iterations must be >= 0");
    if (buckets < 1)
        throw ConfigError("buckets must be >= 1");
    if (plans_per_step < 1)
        throw ConfigError("plans_per_step must be >= 1");
    if (!(proposal_temperature > 0.0))
        throw ConfigError("proposal_temperature must be > 0");
    if (!(seed_noise >= 0.0 && seed_noise <= 1.0))
        throw ConfigError("seed_noise must lie in [0, 1]");
    if (!(reference.strong_sigma >= 0.0) || !(reference.noisy_sigma >= 0.0) || !std::isfinite(reference.identity))
        throw ConfigError("reference noise must be finite and non-negative");
    if (jobs < 1)
        throw ConfigError("jobs must be >= 1");
}

// ---------------------------------------------------------------------------
// Evaluation

Metrics aggregate(std::span<const StepEval> log)
{
    Metrics m;
    m.steps = log.size();
    if (log.empty())
        return m;
    for (const auto& e : log) {
        m.ele_acc += e.element_hit ? 1.0 : 0.0;
        m.op_f1 += e.op_f1;
        m.step_sr += e.success ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(log.size());
    m.ele_acc /= n;
    m.op_f1 /= n;
    m.step_sr /= n;
    return m;
}

Metrics evaluate(const PlannerModel& planner, const GrounderModel& grounder, const Benchmark& bench, Split split,
                 Exec exec, std::vector<StepEval>* log)
{
    const auto ids = bench.task_ids(split);
    if (ids.empty())
        throw std::invalid_argument("split " + std::string(to_string(split)) + " has no tasks");
    auto steps = evaluate_steps(planner, grounder, bench, ids, exec);
    const auto m = aggregate(steps);
    if (log)
        *log = std::move(steps);
    return m;
}

std::vector<std::pair<std::string, Metrics>> evaluate_all(const PlannerModel& planner, const GrounderModel& grounder,
                                                          const Benchmark& bench, Exec exec)
{
    std::vector<std::pair<std::string, Metrics>> out;
    std::vector<StepEval> held_out;
    for (Split s : kSplits) {
        if (bench.task_ids(s).empty())
            continue;
        std::vector<StepEval> log;
        out.emplace_back(std::string(to_string(s)), evaluate(planner, grounder, bench, s, exec, &log));
        if (s != Split::Train)
            held_out.insert(held_out.end(), log.begin(), log.end());
    }
    out.emplace_back("held_out", aggregate(held_out));
    return out;
}

const Metrics& IterationReport::split(const std::string& name) const
{
    for (const auto& [n, m] : metrics)
        if (n == name)
            return m;
    throw std::out_of_range("report has no split '" + name + "'");
}

// ---------------------------------------------------------------------------
// Iteration

IterationState bootstrap(const Benchmark& bench, const RunConfig& cfg, std::uint64_t seed, DataStats* stats)
{
    const auto V = bench.vocab.size();
    IterationState s;
    s.k = 0;
    s.seed = seed;
    s.planner = make_planner(bench, cfg.buckets, "planner");
    s.planner.iteration = 0;
    s.grounder = make_grounder(V, "grounder");
    s.grounder.iteration = 0;
    s.planners.seed.noise = cfg.seed_noise;
    s.verifiers.rule = cfg.verify_rule;
    s.verifiers.references = {reference_grounder(GrounderQuality::Strong, seed, V, cfg.reference),
                              reference_grounder(GrounderQuality::Noisy, seed, V, cfg.reference)};
    auto d0 = seed_dataset(bench, s.planners.seed, s.verifiers, cfg.plans_per_step, cfg.buckets, seed,
                           Exec{cfg.jobs});
    s.data = std::move(d0.data);
    if (stats)
        *stats = d0.stats;
    return s;
}

Ensemble make_ensemble(const IterationState& s, const GrounderModel& trained, const RunConfig& cfg)
{
    Ensemble e;
    e.members = {{s.verifiers.references.at(0), cfg.priors[0], "ref_strong"},
                 {s.verifiers.references.at(1), cfg.priors[1], "ref_noisy"},
                 {trained, cfg.priors[2], "trained"}};
    switch (cfg.mode) {
    case ArmMode::Cdrem:
    case ArmMode::NoGrpo: e.mode = WeightingMode::Cdrem; break;
    case ArmMode::PriorOnly: e.mode = WeightingMode::PriorOnly; break;
    case ArmMode::Average: e.mode = WeightingMode::Average; break;
    case ArmMode::Single:
        e.mode = WeightingMode::Single;
        e.designated = cfg.single_member;
        break;
    }
    return e;
}

namespace {

template <class Fn>
auto phase(const char* name, int k, Fn&& fn)
{
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw std::runtime_error("iteration " + std::to_string(k) + ", phase " + name + ": " + e.what());
    }
}

} // namespace

std::pair<IterationState, IterationReport> run_iteration(const IterationState& prev, const Benchmark& bench,
                                                         const RunConfig& cfg)
{
    const auto t0 = std::chrono::steady_clock::now();
    if (prev.data.empty())
        throw std::runtime_error("iteration " + std::to_string(prev.k + 1) + ": dataset D_" + std::to_string(prev.k) +
                                 " is empty");
    const int k = prev.k + 1;
    const Exec exec{cfg.jobs};
    IterationState s = prev;
    s.k = k;
    IterationReport rep;
    rep.k = k;

    auto pi = phase("sft_planner", k, [&] { return sft_planner(prev.planner, bench, prev.data, cfg.planner_sft); });
    rep.log.push_back({"sft_planner"});
    auto phi = phase("sft_grounder", k, [&] { return sft_grounder(prev.grounder, bench, prev.data, cfg.grounder_sft); });
    rep.log.push_back({"sft_grounder"});

    GrpoConfig gcfg = cfg.grpo;
    if (cfg.mode == ArmMode::NoGrpo)
        gcfg.epochs = 0;
    const auto train = bench.task_ids(Split::Train);
    auto grpo = phase("grpo", k, [&] {
        return collaborative_grpo(pi, make_ensemble(prev, phi, cfg), bench, train, gcfg, s.seed, k, exec);
    });
    for (const auto& e : grpo.log)
        rep.log.push_back({"grpo", e.epoch, e.mean_reward, e.mean_abs_advantage, e.kl, e.clip_fraction});
    rep.distilled = grpo.distilled.size();

    if (!grpo.distilled.empty())
        phi = phase("distill", k, [&] { return sft_grounder(phi, bench, grpo.distilled, cfg.distill_sft); });
    rep.log.push_back({"distill"});

    s.planner = std::move(grpo.planner);
    s.planner.iteration = k;
    s.planner.tag = "planner_" + std::to_string(k);
    s.grounder = std::move(phi);
    s.grounder.iteration = k;
    s.grounder.tag = "grounder_" + std::to_string(k);

    rotate_pool(s.planners.members, s.planner);
    rotate_pool(s.verifiers.members, s.grounder);
    rep.log.push_back({"rotate"});

    const EnhanceOptions opt{cfg.plans_per_step, cfg.proposal_temperature, cfg.reverify_previous};
    auto round = phase("enhance", k, [&] {
        return enhance_dataset(prev.data, s.planners, s.verifiers, bench, opt, k, s.seed, exec);
    });
    s.data = std::move(round.data);
    rep.data = round.stats;
    rep.log.push_back({"enhance"});

    rep.metrics = phase("evaluate", k, [&] { return evaluate_all(s.planner, s.grounder, bench, exec); });
    rep.log.push_back({"evaluate"});

    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(s), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Loop

namespace {

std::string iter_dir(const std::string& run_dir, int k)
{
    return (fs::path(run_dir) / "checkpoints" / ("iter_" + std::to_string(k))).string();
}

void write_text_atomic(const std::string& path, const std::string& text)
{
    jsonl::write_file_atomic(path, [&](std::ostream& out) { out << text; });
}

// The config minus the fields that cannot change results: where the run is
// written and how many threads it uses.
std::string results_config(RunConfig c)
{
    c.out_dir.clear();
    c.jobs = 1;
    return config_json(c);
}

IterationReport seed_report(const DataStats& stats)
{
    IterationReport r;
    r.k = 0;
    r.data = stats;
    return r;
}

} // namespace

LoopResult run_loop(const Benchmark& bench, const RunConfig& cfg, std::uint64_t seed, const std::string& dir,
                    bool resume)
{
    cfg.validate();
    const auto cfg_text = config_json(cfg);
    const auto cfg_path = (fs::path(dir) / "config_resolved.json").string();

    LoopResult res;
    IterationState state;
    if (resume) {
        const int latest = latest_checkpoint(dir);
        if (latest < 0)
            throw ConfigError("nothing to resume: no complete checkpoint under " + dir);
        if (fs::exists(cfg_path) &&
            results_config(config_from_json(jsonl::read_file(cfg_path), cfg_path)) != results_config(cfg))
            throw ConfigError("resume config differs from " + cfg_path);
        state = load_state(iter_dir(dir, latest));
        if (state.seed != seed)
            throw ConfigError("checkpoint seed " + std::to_string(state.seed) + " differs from requested seed " +
                              std::to_string(seed));
        res.seed_stats = report_from_json(jsonl::read_file(iter_dir(dir, 0) + "/report.json"), "report.json").data;
        for (int k = 1; k <= latest && k <= cfg.iterations; ++k) {
            const auto path = iter_dir(dir, k) + "/report.json";
            res.reports.push_back(report_from_json(jsonl::read_file(path), path));
        }
    } else {
        fs::create_directories(dir);
        write_text_atomic(cfg_path, cfg_text);
        state = bootstrap(bench, cfg, seed, &res.seed_stats);
        if (state.data.empty())
            throw std::runtime_error("bootstrap produced an empty D_0 (" + std::to_string(res.seed_stats.generated) +
                                     " proposals, none verified); loosen verify_rule or seed_noise");
        const auto r0 = seed_report(res.seed_stats);
        save_state(state, &r0, iter_dir(dir, 0));
    }

    while (state.k < cfg.iterations) {
        auto [next, rep] = run_iteration(state, bench, cfg);
        save_state(next, &rep, iter_dir(dir, next.k));
        res.reports.push_back(std::move(rep));
        state = std::move(next);
    }

    const auto mode = to_string(cfg.mode);
    jsonl::write_file_atomic((fs::path(dir) / "reports.csv").string(), [&](std::ostream& out) {
        write_reports_header(out);
        for (const auto& r : res.reports)
            write_report_rows(out, r, mode, seed);
    });
    jsonl::write_file_atomic((fs::path(dir) / "train_log.csv").string(),
                             [&](std::ostream& out) { write_train_log(out, res.reports); });
    jsonl::write_file_atomic((fs::path(dir) / "data_stats.csv").string(), [&](std::ostream& out) {
        std::vector<DataStats> stats{res.seed_stats};
        for (const auto& r : res.reports)
            stats.push_back(r.data);
        write_stats_csv(stats, out);
    });
    res.final_state = std::move(state);
    return res;
}

// ---------------------------------------------------------------------------
// Ablations

std::vector<AblationArm> mode_arms(const RunConfig& base, std::span<const ArmMode> modes)
{
    std::vector<AblationArm> arms;
    for (auto m : modes) {
        RunConfig c = base;
        c.mode = m;
        arms.push_back({std::string(to_string(m)), c});
    }
    return arms;
}

std::vector<AblationArm> prior_arms(const RunConfig& base, std::span<const Priors> priors)
{
    std::vector<AblationArm> arms;
    for (const auto& p : priors) {
        RunConfig c = base;
        c.priors = p;
        arms.push_back({"priors_" + priors_label(p), c});
    }
    return arms;
}

std::vector<AblationResult> ablation_run(const Benchmark& bench, std::span<const AblationArm> arms,
                                         const std::string& out_dir)
{
    std::vector<AblationResult> results;
    for (const auto& arm : arms)
        for (auto seed : arm.cfg.seeds) {
            const auto dir = (fs::path(out_dir) / arm.label / ("seed_" + std::to_string(seed))).string();
            auto lr = run_loop(bench, arm.cfg, seed, dir);
            results.push_back({arm.label, seed, std::move(lr.reports)});
        }

    jsonl::write_file_atomic((fs::path(out_dir) / "ablation_long.csv").string(), [&](std::ostream& out) {
        write_reports_header(out);
        for (const auto& r : results)
            for (const auto& rep : r.reports)
                write_report_rows(out, rep, r.label, r.seed);
    });

    // mean over seeds of each (arm, k, split)
    jsonl::write_file_atomic((fs::path(out_dir) / "ablation_summary.csv").string(), [&](std::ostream& out) {
        out << "mode,k,split,seeds,ele_acc,op_f1,step_sr,purity,diversity\n";
        for (const auto& arm : arms) {
            std::map<std::pair<int, std::string>, std::array<double, 5>> sums;
            std::map<std::pair<int, std::string>, int> counts;
            std::vector<std::pair<int, std::string>> order;
            for (const auto& r : results) {
                if (r.label != arm.label)
                    continue;
                for (const auto& rep : r.reports)
                    for (const auto& [split, m] : rep.metrics) {
                        const auto key = std::make_pair(rep.k, split);
                        if (!counts.count(key))
                            order.push_back(key);
                        auto& s = sums[key];
                        s[0] += m.ele_acc;
                        s[1] += m.op_f1;
                        s[2] += m.step_sr;
                        s[3] += rep.data.purity;
                        s[4] += rep.data.diversity;
                        ++counts[key];
                    }
            }
            for (const auto& key : order) {
                const auto& s = sums[key];
                const double n = counts[key];
                char buf[256];
                std::snprintf(buf, sizeof buf, "%s,%d,%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", arm.label.c_str(), key.first,
                              key.second.c_str(), counts[key], s[0] / n, s[1] / n, s[2] / n, s[3] / n, s[4] / n);
                out << buf;
            }
        }
    });
    return results;
}

} // namespace coepg
