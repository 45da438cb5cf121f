// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.
//
//   coepg_acceptance [artifact_dir]
//
// Without an argument the artifacts go to a temporary directory that is
// removed afterwards.

#include "grpo_fixtures.hpp"
#include "support.hpp"

#include <coepg/cdrem.hpp>
#include <coepg/cli.hpp>
#include <coepg/datapool.hpp>
#include <coepg/grpo.hpp>
#include <coepg/jsonl.hpp>
#include <coepg/loop.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

using namespace coepg;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed checks for one criterion.
struct Checks {
    std::vector<std::string> failed;
    int total = 0;

    void operator()(bool ok, const std::string& what)
    {
        ++total;
        if (!ok)
            failed.push_back(what);
    }
    bool ok() const { return failed.empty(); }
    std::string first() const { return failed.empty() ? "" : "; first failure: " + failed.front(); }
};

int g_failures = 0;

void report(int n, bool pass, const std::string& detail)
{
    std::printf("criterion %d: %s  %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    g_failures += !pass;
}

std::string fmt(const char* f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

std::string slurp(const fs::path& p) { return jsonl::read_file(p.string()); }

const std::vector<TrainStep>& train_steps()
{
    static const auto s = [] {
        const auto& b = testsupport::default_bench();
        return make_train_steps(b, b.task_ids(Split::Train), RunConfig{}.buckets);
    }();
    return s;
}

// --- 1 ----------------------------------------------------------------------

GrounderModel picker(int element, double margin)
{
    auto g = make_grounder(4);
    g.affinity[0 * 4 + 1] = element == 1 ? margin : -margin;
    return g;
}

Ensemble two_element_ensemble(std::vector<int> picks, WeightingMode mode)
{
    Ensemble e;
    e.mode = mode;
    const double priors[] = {1.0, 1.0, 2.0};
    for (std::size_t i = 0; i < picks.size(); ++i)
        e.members.push_back({picker(picks[i], 1.0 + static_cast<double>(i)), priors[i], "m" + std::to_string(i)});
    if (mode == WeightingMode::Single)
        e.designated = 0;
    return e;
}

void formula_suite()
{
    const auto t0 = Clock::now();
    Checks c;

    const BBox box{0.4, 0.4, 0.6, 0.6};
    c(acc_plan({0.5, 0.5}, box) == 1, "acc inside");
    c(acc_plan({0.39, 0.5}, box) == 0, "acc outside");
    c(acc_plan({0.4, 0.5}, box) == 1, "acc on edge");

    const std::vector<double> sigma{1, 1, 2};
    const auto w0 = ensemble_weights(sigma, std::vector<double>{0, 0, 0});
    c(std::all_of(w0.begin(), w0.end(), [](double w) { return near(w, 1.0 / 3.0, 1e-12); }), "equal exponents");
    const auto w1 = ensemble_weights(sigma, std::vector<double>{-1, -1, -1});
    c(near(w1[0], 0.42232, 1e-4) && near(w1[1], 0.42232, 1e-4) && near(w1[2], 0.15536, 1e-4),
      "weights (0.42232, 0.42232, 0.15536)");
    c(ensemble_weights(std::vector<double>{2.0}, std::vector<double>{-3.0}) == std::vector<double>{1.0}, "N = 1");

    const auto o = testsupport::two_elements();
    const BBox target = o.elements[0].bbox;
    const std::vector<TokenId> plan{0};
    for (auto mode : {WeightingMode::Cdrem, WeightingMode::PriorOnly, WeightingMode::Average, WeightingMode::Single}) {
        c(plan_reward(two_element_ensemble({0, 0, 0}, mode), o, plan, target).r_plan == 1.0, "all hit");
        c(plan_reward(two_element_ensemble({1, 1, 1}, mode), o, plan, target).r_plan == 0.0, "all miss");
    }
    c(near(plan_reward(two_element_ensemble({0, 1, 0}, WeightingMode::Average), o, plan, target).r_plan, 2.0 / 3.0,
           1e-15),
      "average (1, 0, 1)");

    c(type_reward(ActionType::Click, ActionType::Click) == 1, "click/click");
    c(type_reward(ActionType::Click, ActionType::Type) == 0, "click/type");
    c(type_reward(ActionType::Select, ActionType::Select) == 1, "select/select");

    const TokenSeq ny{"new", "york"}, nyc{"new", "york", "city"}, none{};
    c(token_f1(ny, ny) == 1.0, "f1 equal");
    c(token_f1(ny, TokenSeq{"paris"}) == 0.0, "f1 disjoint");
    c(token_f1(ny, nyc) == 0.8, "f1 0.8");
    c(token_f1(none, none) == 1.0, "f1 both NONE");
    c(token_f1(none, ny) == 0.0, "f1 one NONE");
    c(value_reward(ny, nyc) == 1, "value 0.8");
    c(value_reward(TokenSeq{"a", "x"}, TokenSeq{"a", "y"}) == 0, "value 0.5");
    c(value_reward(none, none) == 1, "value NONE");

    c(final_reward(0.42, 0, 1) == 0.0, "gate type");
    c(final_reward(0.42, 1, 0) == 0.0, "gate value");
    c(final_reward(0.42, 0, 0) == 0.0, "gate both");
    c(final_reward(0.42, 1, 1) == 0.42, "pass through");

    TaskStep gt;
    gt.target_element_id = 0;
    gt.gt_type = ActionType::Type;
    gt.gt_value = ny;
    PlannerOutput out;
    out.plan = {0, plan, {0, 1}};
    out.a_type = ActionType::Type;
    out.a_value = ny;
    const auto perfect = score_rollout(two_element_ensemble({0, 0, 0}, WeightingMode::Cdrem), o, gt, out);
    c(perfect.r_final == 1.0, "perfect rollout");
    out.a_type = ActionType::Click;
    const auto wrong = score_rollout(two_element_ensemble({0, 0, 0}, WeightingMode::Cdrem), o, gt, out);
    c(wrong.r_final == 0.0 && wrong.per_member.size() == 3, "wrong type keeps members");

    const auto a = group_advantages(std::vector<double>{1, 0, 0, 1}, 1e-8);
    c(a == std::vector<double>{1, -1, -1, 1}, "advantages (1, 0, 0, 1)");
    const auto flat = group_advantages(std::vector<double>{0.3, 0.3, 0.3}, 1e-8);
    c(std::all_of(flat.begin(), flat.end(), [](double v) { return v == 0.0; }), "degenerate group");
    const auto a7 = group_advantages(std::vector<double>{1, 0, 0, 1, 0, 1, 0}, 1e-8);
    c(near(a7[0], 1.1547, 1e-4) && near(a7[1], -0.8660, 1e-4), "advantages G = 7");

    auto m = make_planner(testsupport::default_bench(), RunConfig{}.buckets);
    GrpoConfig cfg;
    cfg.kl_beta = 0.0;
    m.temperature = cfg.temperature;
    const auto& s = train_steps().front();
    RolloutGroup g;
    g.rollouts.push_back(testsupport::forced_rollout(m, s, 0));
    g.rollouts[0].output.logprob_plan -= std::log(2.0);
    g.advantages = {1.0};
    c(near(3.0 * grpo_objective(m, m, g, cfg) - 2.0, 1.2, 1e-12), "clip 1.2");

    auto f = testsupport::random_fixture(testsupport::default_bench(), train_steps(), 3, 0.01, 0.0);
    c(near(grpo_objective(f.policy, f.policy, f.groups, f.cfg), 0.0, 1e-12), "policy = sampler = ref");
    for (auto& grp : f.groups)
        std::fill(grp.advantages.begin(), grp.advantages.end(), 0.0);
    f.cfg.kl_beta = 0.0;
    c(grpo_objective(f.policy, f.ref, f.groups, f.cfg) == 0.0, "beta 0, A = 0");

    const double t = seconds_since(t0);
    c(t < 1.0, "runtime");
    report(1, c.ok(), std::to_string(c.total - static_cast<int>(c.failed.size())) + "/" + std::to_string(c.total) +
                          " formula checks, " + fmt("%.3f s", t) + c.first());
}

// --- 2 ----------------------------------------------------------------------

void advantage_property()
{
    Rng rng = Rng::stream(2, {0xad});
    Checks c;
    int degenerate = 0;
    double worst_mean = 0.0, worst_std = 0.0;
    for (int n = 0; n < 1000; ++n) {
        const int G = 2 + static_cast<int>(rng.below(15));
        std::vector<double> r(static_cast<std::size_t>(G));
        const int kind = static_cast<int>(rng.below(4));
        for (auto& v : r)
            v = kind == 0 ? 0.5 : kind == 1 ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.uniform();
        const auto A = group_advantages(r, GrpoConfig{}.std_eps);
        const double mean_r = std::accumulate(r.begin(), r.end(), 0.0) / G;
        double var_r = 0.0;
        for (double v : r)
            var_r += (v - mean_r) * (v - mean_r);
        if (std::sqrt(var_r / G) < GrpoConfig{}.std_eps) {
            ++degenerate;
            c(std::all_of(A.begin(), A.end(), [](double v) { return v == 0.0; }), "degenerate group is zero");
            continue;
        }
        const double mean_a = std::accumulate(A.begin(), A.end(), 0.0) / G;
        double var_a = 0.0;
        for (double v : A)
            var_a += (v - mean_a) * (v - mean_a);
        const double sd = std::sqrt(var_a / G);
        worst_mean = std::max(worst_mean, std::abs(mean_a));
        worst_std = std::max(worst_std, std::abs(sd - 1.0));
        c(std::abs(mean_a) <= 1e-9, "group " + std::to_string(n) + " mean");
        c(std::abs(sd - 1.0) <= 1e-9, "group " + std::to_string(n) + " std");
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "1000 groups (%d degenerate), max |mean A| %.2e, max |std - 1| %.2e", degenerate,
                  worst_mean, worst_std);
    report(2, c.ok(), buf + c.first());
}

// --- 3 ----------------------------------------------------------------------

void gradient_check()
{
    const auto t0 = Clock::now();
    Checks c;
    std::map<double, int> done;
    int skipped = 0;
    double worst = 0.0;
    for (double beta : {0.0, 0.01}) {
        for (std::uint64_t seed = 1; done[beta] < 100; ++seed) {
            const auto f = testsupport::random_fixture(testsupport::default_bench(), train_steps(), seed * 7919, beta);
            if (testsupport::kink_distance(f.policy, f.groups, f.cfg) < 1e-3) {
                ++skipped;
                continue;
            }
            const auto rep = finite_diff_check(f.policy, f.ref, f.groups, f.cfg, 1e-5, 1e-4);
            worst = std::max(worst, rep.max_rel_error);
            c(rep.passed && rep.entries_checked > 0, "beta " + fmt("%g", beta) + " seed " + std::to_string(seed));
            ++done[beta];
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "100 configs each at beta 0 and 0.01 (%d near a clip kink skipped), max rel err %.2e, %.1f s",
                  skipped, worst, seconds_since(t0));
    report(3, c.ok(), buf + c.first());
}

// --- 4 to 6 -----------------------------------------------------------------

struct Means {
    std::map<int, double> step_sr, purity, diversity;
    int seeds = 0;
    bool complete = false;
};

Means arm_means(const std::vector<AblationResult>& results, const std::string& label, int K)
{
    Means m;
    std::map<int, int> n;
    for (const auto& r : results) {
        if (r.label != label)
            continue;
        ++m.seeds;
        for (const auto& rep : r.reports) {
            m.step_sr[rep.k] += rep.split("held_out").step_sr;
            m.purity[rep.k] += rep.data.purity;
            m.diversity[rep.k] += rep.data.diversity;
            ++n[rep.k];
        }
    }
    m.complete = m.seeds > 0;
    for (int k = 1; k <= K; ++k) {
        if (n[k] != m.seeds)
            m.complete = false;
        if (n[k] == 0)
            continue;
        m.step_sr[k] /= n[k];
        m.purity[k] /= n[k];
        m.diversity[k] /= n[k];
    }
    return m;
}

std::string series(const std::map<int, double>& s)
{
    std::string out;
    for (const auto& [k, v] : s)
        out += (out.empty() ? "" : "/") + fmt("%.4f", v);
    return out;
}

void trends(const Benchmark& bench, const RunConfig& base, const fs::path& dir)
{
    const auto t0 = Clock::now();
    const std::vector<ArmMode> modes(kArmModes.begin(), kArmModes.end());
    const auto arms = mode_arms(base, modes);
    fs::create_directories(dir);
    save_benchmark(bench, (dir / "benchmark.jsonl").string());
    const auto results = ablation_run(bench, arms, dir.string());
    const double elapsed = seconds_since(t0);
    const int K = base.iterations;

    std::map<std::string, Means> means;
    for (const auto& arm : arms)
        means[arm.label] = arm_means(results, arm.label, K);

    {
        const auto& m = means.at("cdrem");
        const double gain = m.step_sr.at(K) - m.step_sr.at(1);
        bool mono = m.complete;
        for (int k = 2; k <= K && mono; ++k)
            mono = m.purity.at(k) >= m.purity.at(k - 1) && m.diversity.at(k) >= m.diversity.at(k - 1);
        const bool pass = m.complete && gain >= 0.05 && mono && elapsed <= 600.0;
        char buf[256];
        std::snprintf(buf, sizeof buf, "held-out step_sr %s (M%d - M1 = %+.4f), purity %s, diversity %s, %d seeds, %.1f s",
                      series(m.step_sr).c_str(), K, gain, series(m.purity).c_str(), series(m.diversity).c_str(),
                      m.seeds, elapsed);
        report(4, pass, buf);
    }
    {
        const double full = means.at("cdrem").step_sr.at(K), ablated = means.at("no_grpo").step_sr.at(K);
        char buf[160];
        std::snprintf(buf, sizeof buf, "final held-out step_sr cdrem %.4f vs no_grpo %.4f", full, ablated);
        report(5, means.at("no_grpo").complete && full >= ablated, buf);
    }
    {
        bool all = true;
        std::string finals;
        for (const char* label : {"cdrem", "prior_only", "average", "single"}) {
            all = all && means.at(label).complete;
            finals += std::string(finals.empty() ? "" : ", ") + label + " " + fmt("%.4f", means.at(label).step_sr[K]);
        }
        const bool pass = all && means.at("cdrem").step_sr.at(K) >= means.at("single").step_sr.at(K);
        report(6, pass, "final held-out step_sr " + finals + (all ? "" : "; an arm did not complete"));
    }
}

// --- 7 ----------------------------------------------------------------------

int cli(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    if (code != 0)
        std::cerr << err.str();
    return code;
}

void reproducibility(const fs::path& dir)
{
    Checks c;
    const auto a = (dir / "a").string(), b = (dir / "b").string(), r = (dir / "resumed").string();
    c(cli({"run", "--out", a, "--seed", "1"}) == 0, "first run");
    c(cli({"run", "--out", b, "--seed", "1"}) == 0, "second run");
    if (c.ok()) {
        c(slurp(fs::path(a) / "reports.csv") == slurp(fs::path(b) / "reports.csv"), "reports.csv bytes");
        fs::copy(a, r, fs::copy_options::recursive);
        fs::remove_all(fs::path(r) / "seed_1/checkpoints/iter_3");
        fs::remove_all(fs::path(r) / "seed_1/checkpoints/iter_2");
        fs::remove(fs::path(r) / "reports.csv");
        c(cli({"run", "--out", r, "--seed", "1", "--resume"}) == 0, "resumed run");
        c(slurp(fs::path(a) / "reports.csv") == slurp(fs::path(r) / "reports.csv"), "resumed reports.csv");
        for (const char* f : {"planner.jsonl", "grounder.jsonl", "dataset.jsonl", "pools.jsonl"})
            c(slurp(fs::path(a) / "seed_1/checkpoints/iter_3" / f) == slurp(fs::path(r) / "seed_1/checkpoints/iter_3" / f),
              std::string("resumed ") + f);
    }
    report(7, c.ok(), "identical reports.csv from two runs; resume from k=1 matches the uninterrupted run" + c.first());
}

// --- 8 ----------------------------------------------------------------------

void persistence(const fs::path& dir)
{
    Checks c;
    int datasets = 0, checkpoints = 0;
    const auto tmp = dir / "resaved";

    const auto bench_path = dir / "benchmark.jsonl";
    const auto bench = load_benchmark(bench_path.string());
    std::ostringstream bench_out;
    write_benchmark(bench, bench_out);
    c(bench_out.str() == slurp(bench_path), "benchmark bytes");
    c(bench.screens == testsupport::default_bench().screens && bench.tasks == testsupport::default_bench().tasks,
      "benchmark content");

    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_directory() || entry.path().filename().string().rfind("iter_", 0) != 0)
            continue;
        const auto& ck = entry.path();
        const auto name = ck.parent_path().parent_path().string() + "/" + ck.filename().string();
        try {
            const auto d = load_dataset((ck / "dataset.jsonl").string());
            std::ostringstream out;
            write_dataset(d, out);
            c(out.str() == slurp(ck / "dataset.jsonl"), name + " dataset bytes");
            ++datasets;

            const auto state = load_state(ck.string());
            const auto rep = report_from_json(slurp(ck / "report.json"), (ck / "report.json").string());
            fs::remove_all(tmp);
            save_state(state, &rep, tmp.string());
            for (const char* f : {"planner.jsonl", "grounder.jsonl", "dataset.jsonl", "pools.jsonl", "rng.json", "report.json"})
                c(slurp(tmp / f) == slurp(ck / f), name + " " + f);
            const auto again = load_state(tmp.string());
            c(again.planner == state.planner && again.grounder == state.grounder && again.data == state.data &&
                  again.planners.members == state.planners.members &&
                  again.verifiers.references == state.verifiers.references &&
                  again.verifiers.members == state.verifiers.members,
              name + " reload");
            ++checkpoints;
        } catch (const std::exception& e) {
            c(false, name + ": " + e.what());
        }
    }
    fs::remove_all(tmp);
    c(checkpoints > 0, "no checkpoints found");
    report(8, c.ok(),
           "benchmark, " + std::to_string(datasets) + " datasets and " + std::to_string(checkpoints) +
               " checkpoints re-serialize byte-identically" + c.first());
}

template <class Fn>
void guarded(int n, Fn&& fn)
{
    try {
        fn();
    } catch (const std::exception& e) {
        report(n, false, std::string("threw: ") + e.what());
    }
}

} // namespace

int main(int argc, char** argv)
{
    const bool keep = argc > 1;
    const fs::path root = keep ? fs::path(argv[1]) : fs::path(testsupport::scratch("acceptance"));
    if (keep)
        fs::create_directories(root);

    RunConfig cfg;
    cfg.seeds = {1, 2, 3, 4, 5};
    const auto& bench = testsupport::default_bench();

    guarded(1, formula_suite);
    guarded(2, advantage_property);
    guarded(3, gradient_check);
    bool trends_ran = false;
    try {
        trends(bench, cfg, root / "ablation");
        trends_ran = true;
    } catch (const std::exception& e) {
        for (int n = 4; n <= 6; ++n)
            report(n, false, std::string("threw: ") + e.what());
    }
    guarded(7, [&] { reproducibility(root / "repro"); });
    if (trends_ran)
        guarded(8, [&] { persistence(root / "ablation"); });
    else
        report(8, false, "no artifacts from criteria 4-6");

    if (!keep)
        fs::remove_all(root);
    std::printf("%d of 8 criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
