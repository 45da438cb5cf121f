#pragma once

// Group-relative policy optimization for the tabular planner: advantage
// normalization, clipped surrogate with an exact categorical KL penalty,
// analytic gradients, and a finite-difference check of those gradients.

#include <coepg/cdrem.hpp>
#include <coepg/dataset.hpp>
#include <coepg/parallel.hpp>
#include <coepg/policy.hpp>

#include <memory>
#include <span>
#include <vector>

namespace coepg {

struct GrpoConfig {
    int group_size = 7;
    double clip = 0.2;
    double kl_beta = 0.01;
    double learning_rate = 1e-2;
    double temperature = 0.9;
    int epochs = 3;
    double std_eps = 1e-8;
    int batch_groups = 42;
    double distill_threshold = 1.0;

    void validate() const;
};

struct Rollout {
    std::shared_ptr<const PlannerContext> ctx;
    PlannerOutput output; // log-probs are those of the sampling policy
    RewardBreakdown breakdown;
    int task_id = 0;
    int step_index = 0;
};

struct RolloutGroup {
    std::vector<Rollout> rollouts;
    std::vector<double> advantages;
};

/// (r - mean) / population std; all zeros when std < std_eps.
std::vector<double> group_advantages(std::span<const double> rewards, double std_eps);

/// Fills group.advantages from the rollouts' final rewards.
void assign_advantages(RolloutGroup& group, double std_eps);

/// Mean over all rollouts and the three heads of
/// min(rho A, clip(rho) A) - beta KL(policy || ref).
double grpo_objective(const PlannerModel& policy, const PlannerModel& ref, std::span<const RolloutGroup> groups,
                      const GrpoConfig& cfg);
double grpo_objective(const PlannerModel& policy, const PlannerModel& ref, const RolloutGroup& group,
                      const GrpoConfig& cfg);

struct GrpoStats {
    double objective = 0.0;
    double kl = 0.0;            // mean per head
    double clip_fraction = 0.0; // share of (rollout, head) terms on the clipped branch
};

/// d objective / d table entries, same layout as the planner tables.
PlannerTables grpo_gradient(const PlannerModel& policy, const PlannerModel& ref, std::span<const RolloutGroup> groups,
                            const GrpoConfig& cfg, GrpoStats* stats = nullptr);

/// One ascent step: policy + lr * gradient.
PlannerModel grpo_step(const PlannerModel& policy, const PlannerModel& ref, std::span<const RolloutGroup> groups,
                       const GrpoConfig& cfg, GrpoStats* stats = nullptr);

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    double max_abs_analytic = 0.0;
    double max_abs_numeric = 0.0;
    std::size_t entries_checked = 0;
    bool passed = false;
};

/// Central differences of grpo_objective over every entry the gradient touches.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
FiniteDiffReport finite_diff_check(const PlannerModel& policy, const PlannerModel& ref,
                                   std::span<const RolloutGroup> groups, const GrpoConfig& cfg, double h, double tol);

/// One train-split decision point with its cached planner context.
struct TrainStep {
    int task_id = 0;
    int step_index = 0;
    Observation obs;
    TaskStep gt;
    std::shared_ptr<const PlannerContext> ctx;
};

std::vector<TrainStep> make_train_steps(const Benchmark& bench, std::span<const int> task_ids, int buckets);

/// Record for a rollout of `step`, as used by SFT and the datasets.
DatasetRecord rollout_record(const Benchmark& bench, const TrainStep& step, const PlannerOutput& out, Provenance prov,
                             int iter);

struct GrpoEpochLog {
    int epoch = 0;
    double mean_reward = 0.0;
    double mean_abs_advantage = 0.0;
    double kl = 0.0;
    double clip_fraction = 0.0;
};

struct GrpoResult {
    PlannerModel planner;
    Dataset distilled; // sorted by key, deduplicated
    std::vector<GrpoEpochLog> log;
};

/// Samples G rollouts per train step at cfg.temperature each epoch, scores them
/// with the ensemble, and applies minibatched grpo_step updates against a
/// reference frozen at entry. epochs = 0 still runs one rollout pass so that
/// distillation has data, but leaves the planner unchanged.
GrpoResult collaborative_grpo(const PlannerModel& planner, const Ensemble& ensemble, const Benchmark& bench,
                              std::span<const int> task_ids, const GrpoConfig& cfg, std::uint64_t seed, int iter,
                              Exec exec = {});

} // namespace coepg
