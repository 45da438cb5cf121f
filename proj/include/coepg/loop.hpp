#pragma once

// The co-evolution loop: SFT on D_{k-1}, collaborative GRPO, grounder
// distillation, pool rotation, data enhancement, evaluation. Checkpoints every
// iteration and resumes from the latest one.

#include <coepg/cdrem.hpp>
#include <coepg/datapool.hpp>
#include <coepg/grpo.hpp>
#include <coepg/kernels.hpp>
#include <coepg/policy.hpp>

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace coepg {

enum class ArmMode { Cdrem, PriorOnly, Average, Single, NoGrpo };
std::string_view to_string(ArmMode m);
ArmMode parse_arm_mode(std::string_view s);
inline constexpr std::array kArmModes{ArmMode::Cdrem, ArmMode::PriorOnly, ArmMode::Average, ArmMode::Single,
                                      ArmMode::NoGrpo};

using Priors = std::array<double, 3>; // strong reference : noisy reference : trained grounder
Priors parse_priors(std::string_view s);
std::string priors_label(const Priors& p);

struct RunConfig {
    BenchmarkSpec benchmark;
    std::uint64_t benchmark_seed = 2025;
    std::vector<std::uint64_t> seeds{1};
    int iterations = 3;
    int buckets = 1 << 20;
    GrpoConfig grpo;
    SftConfig planner_sft;
    SftConfig grounder_sft{5, 0.05}; // fine-tunes from the previous iteration
    SftConfig distill_sft;
    ArmMode mode = ArmMode::Cdrem;
    Priors priors{1.0, 1.0, 2.0};
    std::size_t single_member = 2; // ensemble index kept by the single arm
    VerifyRule verify_rule = VerifyRule::Majority;
    int plans_per_step = 3;
    double proposal_temperature = 1.0;
    bool reverify_previous = true;
    double seed_noise = 0.7;
    ReferenceNoise reference;
    std::string out_dir = "out";
    int jobs = 1;

    void validate() const;
};

struct Metrics {
    double ele_acc = 0.0;
    double op_f1 = 0.0;
    double step_sr = 0.0;
    std::size_t steps = 0;
    bool operator==(const Metrics&) const = default;
};

Metrics aggregate(std::span<const StepEval> log);

/// Greedy, teacher-forced evaluation of (planner, grounder) on a split.
Metrics evaluate(const PlannerModel& planner, const GrounderModel& grounder, const Benchmark& bench, Split split,
                 Exec exec = {}, std::vector<StepEval>* log = nullptr);

/// Evaluation rows: the four splits plus "held_out", pooled over the three
/// held-out splits.
std::vector<std::pair<std::string, Metrics>> evaluate_all(const PlannerModel& planner, const GrounderModel& grounder,
                                                          const Benchmark& bench, Exec exec = {});

struct PhaseLog {
    std::string phase;
    int epoch = -1;
    double mean_reward = 0.0;
    double mean_abs_advantage = 0.0;
    double kl = 0.0;
    double clip_fraction = 0.0;
};

struct IterationReport {
    int k = 0;
    std::vector<std::pair<std::string, Metrics>> metrics;
    DataStats data;
    std::size_t distilled = 0;
    std::vector<PhaseLog> log;
    double wall_seconds = 0.0; // informational, excluded from reports.csv

    const Metrics& split(const std::string& name) const;
};

struct IterationState {
    int k = 0;
    std::uint64_t seed = 0;
    PlannerModel planner;   // pi'_k
    GrounderModel grounder; // phi_k
    PlannerPool planners;
    VerifierPool verifiers;
    Dataset data; // D_k
};

/// Fixed reference grounders plus D_0 from the seed generator.
IterationState bootstrap(const Benchmark& bench, const RunConfig& cfg, std::uint64_t seed, DataStats* stats = nullptr);

Ensemble make_ensemble(const IterationState& s, const GrounderModel& trained, const RunConfig& cfg);

std::pair<IterationState, IterationReport> run_iteration(const IterationState& prev, const Benchmark& bench,
                                                         const RunConfig& cfg);

struct LoopResult {
    DataStats seed_stats;
    std::vector<IterationReport> reports;
    IterationState final_state;
};

/// Runs K = cfg.iterations iterations for one seed under `dir`, writing
/// checkpoints/iter_<k>/, reports.csv and train_log.csv. With `resume`,
/// continues from the newest complete checkpoint in `dir`.
LoopResult run_loop(const Benchmark& bench, const RunConfig& cfg, std::uint64_t seed, const std::string& dir,
                    bool resume = false);

// Checkpoints
void save_state(const IterationState& s, const IterationReport* report, const std::string& dir);
IterationState load_state(const std::string& dir);
int latest_checkpoint(const std::string& run_dir); // -1 when none

std::string report_json(const IterationReport& r);
IterationReport report_from_json(const std::string& text, const std::string& source);

void write_reports_header(std::ostream& out);
void write_report_rows(std::ostream& out, const IterationReport& r, std::string_view mode, std::uint64_t seed);
void write_train_log(std::ostream& out, std::span<const IterationReport> reports);

struct AblationArm {
    std::string label;
    RunConfig cfg;
};

struct AblationResult {
    std::string label;
    std::uint64_t seed = 0;
    std::vector<IterationReport> reports;
};

/// Runs every arm for every seed on a shared benchmark; writes per-arm run
/// directories plus long-format and summary CSVs under `out_dir`.
std::vector<AblationResult> ablation_run(const Benchmark& bench, std::span<const AblationArm> arms,
                                         const std::string& out_dir);

std::vector<AblationArm> mode_arms(const RunConfig& base, std::span<const ArmMode> modes);
std::vector<AblationArm> prior_arms(const RunConfig& base, std::span<const Priors> priors);

std::string config_json(const RunConfig& cfg);
/// Parses a JSON config on top of the defaults; unknown keys are rejected.
RunConfig config_from_json(const std::string& text, const std::string& source);
RunConfig load_config(const std::string& path);

} // namespace coepg
