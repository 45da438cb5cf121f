#include <coepg/cdrem.hpp>

#include <coepg/errors.hpp>
#include <coepg/softmax.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace coepg {

std::string_view to_string(WeightingMode m)
{
    switch (m) {
    case WeightingMode::Cdrem: return "cdrem";
    case WeightingMode::PriorOnly: return "prior_only";
    case WeightingMode::Average: return "average";
    case WeightingMode::Single: return "single";
    }
    throw std::logic_error("bad weighting mode");
}

WeightingMode parse_weighting_mode(std::string_view s)
{
    for (auto m : {WeightingMode::Cdrem, WeightingMode::PriorOnly, WeightingMode::Average, WeightingMode::Single})
        if (to_string(m) == s)
            return m;
    throw ConfigError("unknown weighting mode '" + std::string(s) + "'");
}

void Ensemble::validate() const
{
    if (members.empty())
        throw ConfigError("ensemble needs at least one member");
    for (const auto& m : members)
        if (!(m.prior > 0.0) || !std::isfinite(m.prior))
            throw ConfigError("ensemble prior for '" + m.tag + "' must be positive");
    if (mode == WeightingMode::Single && (!designated || *designated >= members.size()))
        throw ConfigError("single weighting mode needs a designated member");
}

int acc_plan(Point coor, const BBox& bbox) { return contains(bbox, coor) ? 1 : 0; }

std::vector<double> ensemble_weights(std::span<const double> priors, std::span<const double> confidences)
{
    if (priors.size() != confidences.size())
        throw std::invalid_argument("ensemble_weights: " + std::to_string(priors.size()) + " priors vs " +
                                    std::to_string(confidences.size()) + " confidences");
    if (priors.empty())
        throw std::invalid_argument("ensemble_weights: no members");
    std::vector<double> z(priors.size());
    for (std::size_t j = 0; j < z.size(); ++j)
        z[j] = priors[j] * confidences[j];
    return softmax(z);
}

std::vector<double> mode_weights(const Ensemble& e, std::span<const double> confidences)
{
    const std::size_t n = e.members.size();
    std::vector<double> priors(n);
    for (std::size_t j = 0; j < n; ++j)
        priors[j] = e.members[j].prior;
    switch (e.mode) {
    case WeightingMode::Cdrem: return ensemble_weights(priors, confidences);
    case WeightingMode::PriorOnly: return softmax(priors);
    case WeightingMode::Average: return std::vector<double>(n, 1.0 / static_cast<double>(n));
    case WeightingMode::Single: {
        std::vector<double> w(n, 0.0);
        w.at(e.designated.value()) = 1.0;
        return w;
    }
    }
    throw std::logic_error("bad weighting mode");
}

PlanReward plan_reward(const Ensemble& e, const Observation& o, std::span<const TokenId> plan, const BBox& bbox)
{
    e.validate();
    PlanReward out;
    out.per_member.resize(e.members.size());
    std::vector<double> conf(e.members.size());
    for (std::size_t j = 0; j < e.members.size(); ++j) {
        const auto g = ground_greedy(e.members[j].grounder, o, plan);
        auto& mr = out.per_member[j];
        mr.acc = acc_plan(g.coor, bbox);
        mr.confidence = g.confidence;
        mr.chosen_element = g.chosen_element;
        conf[j] = g.confidence;
    }
    const auto w = mode_weights(e, conf);
    bool weighted_miss = false;
    for (std::size_t j = 0; j < w.size(); ++j) {
        out.per_member[j].weight = w[j];
        out.r_plan += w[j] * out.per_member[j].acc;
        weighted_miss |= w[j] > 0.0 && out.per_member[j].acc == 0;
    }
    // rounding in the weight sum must not cost a unanimous hit its full reward
    out.r_plan = weighted_miss ? std::clamp(out.r_plan, 0.0, 1.0) : 1.0;
    return out;
}

int type_reward(ActionType predicted, ActionType gt) { return predicted == gt ? 1 : 0; }

double token_f1(const TokenSeq& pred, const TokenSeq& gt)
{
    if (pred.empty() && gt.empty())
        return 1.0;
    if (pred.empty() || gt.empty())
        return 0.0;
    std::map<std::string_view, int> bag;
    for (const auto& t : gt)
        ++bag[t];
    int common = 0;
    for (const auto& t : pred) {
        auto it = bag.find(t);
        if (it != bag.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0)
        return 0.0;
    const double p = static_cast<double>(common) / static_cast<double>(pred.size());
    const double r = static_cast<double>(common) / static_cast<double>(gt.size());
    return 2.0 * p * r / (p + r);
}

int value_reward(const TokenSeq& pred, const TokenSeq& gt) { return token_f1(pred, gt) > 0.5 ? 1 : 0; }

double final_reward(double r_plan, int r_type, int r_value) { return (r_type == 0 || r_value == 0) ? 0.0 : r_plan; }

RewardBreakdown score_rollout(const Ensemble& e, const Observation& o, const TaskStep& gt, const PlannerOutput& out)
{
    const auto& target = o.element(gt.target_element_id);
    auto pr = plan_reward(e, o, out.plan.tokens, target.bbox);
    RewardBreakdown b;
    b.r_plan = pr.r_plan;
    b.r_type = type_reward(out.a_type, gt.gt_type);
    b.r_value = value_reward(out.a_value, gt.gt_value);
    b.r_final = final_reward(b.r_plan, b.r_type, b.r_value);
    b.per_member = std::move(pr.per_member);
    return b;
}

} // namespace coepg
