#include <coepg/cli.hpp>

#include <coepg/errors.hpp>
#include <coepg/jsonl.hpp>
#include <coepg/loop.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace coepg {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string seeds;
    std::string out;
    bool resume = false;
    std::string mode;
    std::string priors;
    std::string modes;
    std::optional<int> jobs;
    std::optional<int> iterations;
    std::string benchmark;
    std::string checkpoint;
    std::string split;
};

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto end = s.find(',', start);
        auto item = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
        if (item.empty())
            throw ConfigError("empty item in list '" + s + "'");
        out.push_back(std::move(item));
        if (end == std::string::npos)
            break;
        start = end + 1;
    }
    return out;
}

std::uint64_t parse_seed(const std::string& s)
{
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || s.front() == '-')
        throw ConfigError("invalid seed '" + s + "'");
    return v;
}

RunConfig resolve_config(const Common& c)
{
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    if (c.seed)
        cfg.seeds = {*c.seed};
    if (!c.seeds.empty()) {
        cfg.seeds.clear();
        for (const auto& s : split_list(c.seeds))
            cfg.seeds.push_back(parse_seed(s));
    }
    if (!c.out.empty())
        cfg.out_dir = c.out;
    if (!c.mode.empty())
        cfg.mode = parse_arm_mode(c.mode);
    if (!c.priors.empty() && c.priors.find(',') == std::string::npos)
        cfg.priors = parse_priors(c.priors);
    if (c.jobs)
        cfg.jobs = *c.jobs;
    if (c.iterations)
        cfg.iterations = *c.iterations;
    cfg.validate();
    return cfg;
}

Benchmark resolve_benchmark(const Common& c, const RunConfig& cfg)
{
    if (!c.benchmark.empty())
        return load_benchmark(c.benchmark);
    return build_benchmark(cfg.benchmark_seed, cfg.benchmark);
}

void write_resolved(const RunConfig& cfg)
{
    fs::create_directories(cfg.out_dir);
    jsonl::write_file_atomic((fs::path(cfg.out_dir) / "config_resolved.json").string(),
                             [&](std::ostream& o) { o << config_json(cfg); });
}

void print_metrics(std::ostream& out, const std::string& split, const Metrics& m)
{
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-16s steps=%-4zu ele_acc=%.4f op_f1=%.4f step_sr=%.4f\n", split.c_str(), m.steps,
                  m.ele_acc, m.op_f1, m.step_sr);
    out << buf;
}

int cmd_gen_benchmark(const Common& c, std::ostream& out)
{
    RunConfig cfg = resolve_config(c);
    if (c.seed)
        cfg.benchmark_seed = *c.seed;
    const auto bench = build_benchmark(cfg.benchmark_seed, cfg.benchmark);
    const auto path = (fs::path(cfg.out_dir) / "benchmark.jsonl").string();
    save_benchmark(bench, path);
    out << "wrote " << path << " (" << bench.screens.size() << " screens, " << bench.tasks.size() << " tasks, "
        << bench.vocab.size() << " tokens)\n";
    for (Split s : kSplits)
        out << "  " << to_string(s) << ": " << bench.task_ids(s).size() << " tasks\n";
    return 0;
}

void write_combined_reports(const std::string& path, const std::vector<std::pair<std::uint64_t, LoopResult>>& runs,
                            std::string_view mode)
{
    jsonl::write_file_atomic(path, [&](std::ostream& o) {
        write_reports_header(o);
        for (const auto& [seed, r] : runs)
            for (const auto& rep : r.reports)
                write_report_rows(o, rep, mode, seed);
    });
}

int cmd_run(const Common& c, std::ostream& out)
{
    const auto cfg = resolve_config(c);
    if (c.resume && latest_checkpoint((fs::path(cfg.out_dir) / ("seed_" + std::to_string(cfg.seeds.front()))).string()) < 0)
        throw ConfigError("--resume: no checkpoint found under " + cfg.out_dir);
    const auto bench = resolve_benchmark(c, cfg);
    write_resolved(cfg);
    save_benchmark(bench, (fs::path(cfg.out_dir) / "benchmark.jsonl").string());

    std::vector<std::pair<std::uint64_t, LoopResult>> runs;
    for (auto seed : cfg.seeds) {
        const auto dir = (fs::path(cfg.out_dir) / ("seed_" + std::to_string(seed))).string();
        auto r = run_loop(bench, cfg, seed, dir, c.resume);
        out << "seed " << seed << ": D_0 " << r.seed_stats.dataset_size << " records, purity "
            << r.seed_stats.purity << "\n";
        for (const auto& rep : r.reports)
            for (const auto& [split, m] : rep.metrics)
                if (split == "held_out" || split == "train")
                    print_metrics(out, "  k=" + std::to_string(rep.k) + " " + split, m);
        runs.emplace_back(seed, std::move(r));
    }
    write_combined_reports((fs::path(cfg.out_dir) / "reports.csv").string(), runs, to_string(cfg.mode));
    out << "reports: " << (fs::path(cfg.out_dir) / "reports.csv").string() << "\n";
    return 0;
}

int cmd_ablate(const Common& c, std::ostream& out)
{
    Common base = c;
    base.priors.clear();
    const auto cfg = resolve_config(base);
    const auto bench = resolve_benchmark(c, cfg);

    std::vector<AblationArm> arms;
    if (!c.modes.empty() || c.priors.empty()) {
        std::vector<ArmMode> modes;
        if (c.modes.empty())
            modes.assign(kArmModes.begin(), kArmModes.end());
        else
            for (const auto& m : split_list(c.modes))
                modes.push_back(parse_arm_mode(m));
        arms = mode_arms(cfg, modes);
    }
    if (!c.priors.empty()) {
        std::vector<Priors> ps;
        for (const auto& p : split_list(c.priors))
            ps.push_back(parse_priors(p));
        RunConfig sweep = cfg;
        sweep.mode = ArmMode::Cdrem;
        const auto more = prior_arms(sweep, ps);
        arms.insert(arms.end(), more.begin(), more.end());
    }
    write_resolved(cfg);
    ablation_run(bench, arms, cfg.out_dir);

    // final-iteration held-out Step SR per arm, averaged over seeds
    std::ifstream in(fs::path(cfg.out_dir) / "ablation_summary.csv");
    std::string line;
    std::getline(in, line);
    out << "arm, k, held-out step_sr (mean over " << cfg.seeds.size() << " seeds)\n";
    while (std::getline(in, line)) {
        const auto fields = split_list(line);
        if (fields.size() >= 7 && fields[2] == "held_out" && std::stoi(fields[1]) == cfg.iterations)
            out << "  " << fields[0] << ", " << fields[1] << ", " << fields[6] << "\n";
    }
    out << "wrote " << (fs::path(cfg.out_dir) / "ablation_summary.csv").string() << "\n";
    return 0;
}

int cmd_eval(const Common& c, std::ostream& out)
{
    if (c.checkpoint.empty())
        throw ConfigError("eval needs --checkpoint <dir>");
    const auto cfg = resolve_config(c);
    const auto bench = resolve_benchmark(c, cfg);
    const auto planner = load_planner((fs::path(c.checkpoint) / "planner.jsonl").string());
    const auto grounder = load_grounder((fs::path(c.checkpoint) / "grounder.jsonl").string());
    if (planner.vocab_size != bench.vocab.size() || grounder.vocab_size != bench.vocab.size())
        throw ConfigError("checkpoint vocabulary size does not match the benchmark");

    std::vector<Split> splits;
    if (c.split.empty())
        splits.assign(kSplits.begin(), kSplits.end());
    else
        try {
            splits.push_back(parse_split(c.split));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }

    fs::create_directories(cfg.out_dir);
    const auto log_path = (fs::path(cfg.out_dir) / "eval_steps.csv").string();
    jsonl::write_file_atomic(log_path, [&](std::ostream& o) {
        o << "split,task,step,plan,type,value,x,y,element,element_hit,type_hit,value_hit,op_f1,success\n";
        for (Split s : splits) {
            std::vector<StepEval> log;
            const auto m = evaluate(planner, grounder, bench, s, Exec{cfg.jobs}, &log);
            print_metrics(out, std::string(to_string(s)), m);
            for (const auto& e : log) {
                std::string plan, value;
                for (auto t : e.plan)
                    plan += (plan.empty() ? "" : " ") + bench.vocab.name(t);
                for (const auto& v : e.value)
                    value += (value.empty() ? "" : " ") + v;
                char buf[160];
                std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%d,%d,%d,%d,%.6f,%d\n", e.coor.x, e.coor.y,
                              e.chosen_element, e.element_hit, e.type_hit, e.value_hit, e.op_f1, e.success);
                o << to_string(s) << ',' << e.task_id << ',' << e.step_index << ',' << plan << ','
                  << to_string(e.type) << ',' << (value.empty() ? "NONE" : value) << buf;
            }
        }
    });
    out << "per-step log: " << log_path << "\n";
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Co-evolving planner/grounder simulator", "coepg"};
    app.require_subcommand(1);
    Common c;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", c.config, "JSON config file");
        sub->add_option("--out", c.out, "output directory");
        sub->add_option("--jobs", c.jobs, "OpenMP threads")->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("gen-benchmark", "generate a benchmark JSONL file");
    common(gen);
    gen->add_option("--seed", c.seed, "benchmark seed");

    auto* run = app.add_subcommand("run", "run the co-evolution loop");
    common(run);
    run->add_option("--seed", c.seed, "run seed (replaces the config's seed list)");
    run->add_option("--seeds", c.seeds, "comma-separated run seeds");
    run->add_flag("--resume", c.resume, "continue from the latest checkpoint");
    run->add_option("--mode", c.mode, "cdrem, prior_only, average, single or no_grpo");
    run->add_option("--priors", c.priors, "static priors, e.g. 1:1:2");
    run->add_option("--iterations", c.iterations, "number of iterations K")->check(CLI::NonNegativeNumber);
    run->add_option("--benchmark", c.benchmark, "benchmark JSONL (default: generate from config)");

    auto* ablate = app.add_subcommand("ablate", "compare weighting modes or prior ratios");
    common(ablate);
    ablate->add_option("--seed", c.seed, "single run seed");
    ablate->add_option("--seeds", c.seeds, "comma-separated run seeds");
    ablate->add_option("--modes", c.modes, "comma-separated modes (default: all five)");
    ablate->add_option("--priors", c.priors, "comma-separated prior ratios, e.g. 1:1:1,1:1:2");
    ablate->add_option("--iterations", c.iterations, "number of iterations K")->check(CLI::NonNegativeNumber);
    ablate->add_option("--benchmark", c.benchmark, "benchmark JSONL (default: generate from config)");

    auto* eval = app.add_subcommand("eval", "evaluate a saved checkpoint");
    common(eval);
    eval->add_option("--checkpoint", c.checkpoint, "checkpoint directory (planner.jsonl, grounder.jsonl)");
    eval->add_option("--split", c.split, "train, held_out_task, held_out_screen or held_out_domain");
    eval->add_option("--benchmark", c.benchmark, "benchmark JSONL (default: generate from config)");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed())
            return cmd_gen_benchmark(c, out);
        if (run->parsed())
            return cmd_run(c, out);
        if (ablate->parsed())
            return cmd_ablate(c, out);
        return cmd_eval(c, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace coepg
