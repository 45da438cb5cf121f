#pragma once

// Plan reward from a confidence-weighted ensemble of grounders, the type and
// value rewards, and the gated final reward for one planner rollout.

#include <coepg/gui_env.hpp>
#include <coepg/policy.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coepg {

enum class WeightingMode { Cdrem, PriorOnly, Average, Single };
std::string_view to_string(WeightingMode m);
WeightingMode parse_weighting_mode(std::string_view s);

struct EnsembleMember {
    GrounderModel grounder;
    double prior = 1.0;
    std::string tag;
};

struct Ensemble {
    std::vector<EnsembleMember> members;
    WeightingMode mode = WeightingMode::Cdrem;
    std::optional<std::size_t> designated; // required in Single mode

    void validate() const;
};

struct MemberResult {
    int acc = 0;              // 1 iff the member's greedy coordinate is inside the target bbox
    double confidence = 0.0;  // log-likelihood of the member's choice
    double weight = 0.0;
    int chosen_element = -1;
};

struct PlanReward {
    double r_plan = 0.0;
    std::vector<MemberResult> per_member;
};

struct RewardBreakdown {
    double r_plan = 0.0;
    int r_type = 0;
    int r_value = 0;
    double r_final = 0.0;
    std::vector<MemberResult> per_member;
};

/// 1 iff coor lies in bbox, edges included.
int acc_plan(Point coor, const BBox& bbox);

/// w_j = exp(sigma_j c_j) / sum_n exp(sigma_n c_n), max-subtracted.
std::vector<double> ensemble_weights(std::span<const double> priors, std::span<const double> confidences);

/// Weights for the ensemble's mode given the gathered member confidences.
std::vector<double> mode_weights(const Ensemble& e, std::span<const double> confidences);

PlanReward plan_reward(const Ensemble& e, const Observation& o, std::span<const TokenId> plan, const BBox& bbox);

int type_reward(ActionType predicted, ActionType gt);

/// Bag-of-tokens F1. Both NONE -> 1; exactly one NONE -> 0.
double token_f1(const TokenSeq& pred, const TokenSeq& gt);

/// 1 iff token_f1 > 0.5 (strict).
int value_reward(const TokenSeq& pred, const TokenSeq& gt);

/// 0 when the type or value reward is 0, otherwise r_plan.
double final_reward(double r_plan, int r_type, int r_value);

RewardBreakdown score_rollout(const Ensemble& e, const Observation& o, const TaskStep& gt, const PlannerOutput& out);

} // namespace coepg

