#pragma once

// Per-item kernels that fan out over independent decision points. Every item
// draws from its own RNG stream, so the serial and OpenMP versions produce
// identical results; the serial ones are kept as the reference.

#include <coepg/cdrem.hpp>
#include <coepg/grpo.hpp>
#include <coepg/parallel.hpp>
#include <coepg/policy.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace coepg {

// --- rollout groups ---------------------------------------------------------

RolloutGroup sample_group(const PlannerModel& sampler, const Ensemble& ensemble, const TrainStep& step, int G,
                          std::uint64_t seed, std::uint64_t tag, std::size_t index);

std::vector<RolloutGroup> sample_groups_serial(const PlannerModel& sampler, const Ensemble& ensemble,
                                               std::span<const TrainStep> steps, int G, std::uint64_t seed,
                                               std::uint64_t tag);
std::vector<RolloutGroup> sample_groups_parallel(const PlannerModel& sampler, const Ensemble& ensemble,
                                                 std::span<const TrainStep> steps, int G, std::uint64_t seed,
                                                 std::uint64_t tag, int jobs);
std::vector<RolloutGroup> sample_groups(const PlannerModel& sampler, const Ensemble& ensemble,
                                        std::span<const TrainStep> steps, int G, std::uint64_t seed, std::uint64_t tag,
                                        Exec exec);

// --- plan proposals and verification ----------------------------------------

enum class VerifyRule { All, Majority, Any };

/// Accept iff the number of hits satisfies the rule; majority means
/// hits >= ceil(n / 2).
bool verify_hits(std::span<const int> hits, VerifyRule rule);

struct Proposal {
    std::vector<TokenId> plan;
    bool verified = false;
};

/// Draws one plan for a step. Must only use the given stream.
using Proposer = std::function<std::vector<TokenId>(const TrainStep&, Rng&)>;

/// True iff the verifiers' greedy groundings of `plan` satisfy the rule.
bool verify_plan(std::span<const GrounderModel* const> verifiers, const Observation& o, std::span<const TokenId> plan,
                 const BBox& gt_bbox, VerifyRule rule);

/// Distinct plans from m draws of each proposer for one step, in first-seen
/// order, each verified.
std::vector<Proposal> propose_step(std::span<const Proposer> proposers, std::span<const GrounderModel* const> verifiers,
                                   const TrainStep& step, int m, VerifyRule rule, std::uint64_t seed,
                                   std::uint64_t tag, std::size_t index);

std::vector<std::vector<Proposal>> propose_serial(std::span<const Proposer> proposers,
                                                  std::span<const GrounderModel* const> verifiers,
                                                  std::span<const TrainStep> steps, int m, VerifyRule rule,
                                                  std::uint64_t seed, std::uint64_t tag);
std::vector<std::vector<Proposal>> propose_parallel(std::span<const Proposer> proposers,
                                                    std::span<const GrounderModel* const> verifiers,
                                                    std::span<const TrainStep> steps, int m, VerifyRule rule,
                                                    std::uint64_t seed, std::uint64_t tag, int jobs);
std::vector<std::vector<Proposal>> propose(std::span<const Proposer> proposers,
                                           std::span<const GrounderModel* const> verifiers,
                                           std::span<const TrainStep> steps, int m, VerifyRule rule,
                                           std::uint64_t seed, std::uint64_t tag, Exec exec);

// --- evaluation -------------------------------------------------------------

struct StepEval {
    int task_id = 0;
    int step_index = 0;
    std::vector<TokenId> plan;
    ActionType type = ActionType::Click;
    TokenSeq value;
    Point coor;
    int chosen_element = -1;
    bool element_hit = false;
    bool type_hit = false;
    bool value_hit = false;
    double op_f1 = 0.0;
    bool success = false;
};

StepEval evaluate_step(const PlannerModel& planner, const GrounderModel& grounder, const Benchmark& bench,
                       const Task& task, int step);

std::vector<StepEval> evaluate_steps_serial(const PlannerModel& planner, const GrounderModel& grounder,
                                            const Benchmark& bench, std::span<const int> task_ids);
std::vector<StepEval> evaluate_steps_parallel(const PlannerModel& planner, const GrounderModel& grounder,
                                              const Benchmark& bench, std::span<const int> task_ids, int jobs);
std::vector<StepEval> evaluate_steps(const PlannerModel& planner, const GrounderModel& grounder,
                                     const Benchmark& bench, std::span<const int> task_ids, Exec exec);

} // namespace coepg
