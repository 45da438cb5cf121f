#include <coepg/kernels.hpp>

#include <coepg/softmax.hpp>

#include <algorithm>
#include <stdexcept>

namespace coepg {

RolloutGroup sample_group(const PlannerModel& sampler, const Ensemble& ensemble, const TrainStep& step, int G,
                          std::uint64_t seed, std::uint64_t tag, std::size_t index)
{
    auto rng = Rng::stream(seed, {tag, index});
    RolloutGroup g;
    g.rollouts.reserve(static_cast<std::size_t>(G));
    for (int r = 0; r < G; ++r) {
        Rollout ro;
        ro.ctx = step.ctx;
        ro.task_id = step.task_id;
        ro.step_index = step.step_index;
        ro.output = plan_step(sampler, *step.ctx, rng);
        ro.breakdown = score_rollout(ensemble, step.obs, step.gt, ro.output);
        g.rollouts.push_back(std::move(ro));
    }
    return g;
}

std::vector<RolloutGroup> sample_groups_serial(const PlannerModel& sampler, const Ensemble& ensemble,
                                               std::span<const TrainStep> steps, int G, std::uint64_t seed,
                                               std::uint64_t tag)
{
    std::vector<RolloutGroup> out(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i)
        out[i] = sample_group(sampler, ensemble, steps[i], G, seed, tag, i);
    return out;
}

std::vector<RolloutGroup> sample_groups_parallel(const PlannerModel& sampler, const Ensemble& ensemble,
                                                 std::span<const TrainStep> steps, int G, std::uint64_t seed,
                                                 std::uint64_t tag, int jobs)
{
    std::vector<RolloutGroup> out(steps.size());
    parallel_for(steps.size(), jobs,
                 [&](std::size_t i) { out[i] = sample_group(sampler, ensemble, steps[i], G, seed, tag, i); });
    return out;
}

std::vector<RolloutGroup> sample_groups(const PlannerModel& sampler, const Ensemble& ensemble,
                                        std::span<const TrainStep> steps, int G, std::uint64_t seed, std::uint64_t tag,
                                        Exec exec)
{
    if (exec.jobs <= 1)
        return sample_groups_serial(sampler, ensemble, steps, G, seed, tag);
    return sample_groups_parallel(sampler, ensemble, steps, G, seed, tag, exec.jobs);
}

bool verify_hits(std::span<const int> hits, VerifyRule rule)
{
    if (hits.empty())
        throw std::invalid_argument("verify: verifier pool is empty");
    const auto n = hits.size();
    const auto k = static_cast<std::size_t>(std::count(hits.begin(), hits.end(), 1));
    switch (rule) {
    case VerifyRule::All: return k == n;
    case VerifyRule::Majority: return k >= (n + 1) / 2;
    case VerifyRule::Any: return k >= 1;
    }
    throw std::logic_error("bad verify rule");
}

bool verify_plan(std::span<const GrounderModel* const> verifiers, const Observation& o, std::span<const TokenId> plan,
                 const BBox& gt_bbox, VerifyRule rule)
{
    std::vector<int> hits;
    hits.reserve(verifiers.size());
    for (const auto* g : verifiers)
        hits.push_back(acc_plan(ground_greedy(*g, o, plan).coor, gt_bbox));
    return verify_hits(hits, rule);
}

std::vector<Proposal> propose_step(std::span<const Proposer> proposers, std::span<const GrounderModel* const> verifiers,
                                   const TrainStep& step, int m, VerifyRule rule, std::uint64_t seed,
                                   std::uint64_t tag, std::size_t index)
{
    std::vector<Proposal> out;
    for (std::size_t p = 0; p < proposers.size(); ++p) {
        auto rng = Rng::stream(seed, {tag, index, p});
        for (int d = 0; d < m; ++d) {
            auto plan = proposers[p](step, rng);
            if (std::none_of(out.begin(), out.end(), [&](const Proposal& x) { return x.plan == plan; }))
                out.push_back({std::move(plan), false});
        }
    }
    const auto& bbox = step.obs.element(step.gt.target_element_id).bbox;
    for (auto& pr : out)
        pr.verified = verify_plan(verifiers, step.obs, pr.plan, bbox, rule);
    return out;
}

std::vector<std::vector<Proposal>> propose_serial(std::span<const Proposer> proposers,
                                                  std::span<const GrounderModel* const> verifiers,
                                                  std::span<const TrainStep> steps, int m, VerifyRule rule,
                                                  std::uint64_t seed, std::uint64_t tag)
{
    std::vector<std::vector<Proposal>> out(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i)
        out[i] = propose_step(proposers, verifiers, steps[i], m, rule, seed, tag, i);
    return out;
}

std::vector<std::vector<Proposal>> propose_parallel(std::span<const Proposer> proposers,
                                                    std::span<const GrounderModel* const> verifiers,
                                                    std::span<const TrainStep> steps, int m, VerifyRule rule,
                                                    std::uint64_t seed, std::uint64_t tag, int jobs)
{
    std::vector<std::vector<Proposal>> out(steps.size());
    parallel_for(steps.size(), jobs,
                 [&](std::size_t i) { out[i] = propose_step(proposers, verifiers, steps[i], m, rule, seed, tag, i); });
    return out;
}

std::vector<std::vector<Proposal>> propose(std::span<const Proposer> proposers,
                                           std::span<const GrounderModel* const> verifiers,
                                           std::span<const TrainStep> steps, int m, VerifyRule rule,
                                           std::uint64_t seed, std::uint64_t tag, Exec exec)
{
    if (exec.jobs <= 1)
        return propose_serial(proposers, verifiers, steps, m, rule, seed, tag);
    return propose_parallel(proposers, verifiers, steps, m, rule, seed, tag, exec.jobs);
}

namespace {

TokenSeq operation_bag(ActionType t, const TokenSeq& value)
{
    TokenSeq bag{std::string(to_string(t))};
    bag.insert(bag.end(), value.begin(), value.end());
    return bag;
}

} // namespace

StepEval evaluate_step(const PlannerModel& planner, const GrounderModel& grounder, const Benchmark& bench,
                       const Task& task, int step)
{
    const auto o = observe(bench, task, step);
    const auto& gt = task.steps[static_cast<std::size_t>(step)];
    const auto ctx = make_context(planner.buckets, task.q_feature, o, static_cast<std::size_t>(step));
    const auto z = head_logits(planner, ctx);

    StepEval ev;
    ev.task_id = task.task_id;
    ev.step_index = step;
    ev.plan = ctx.candidates[argmax(z.plan)].tokens;
    ev.type = kActionTypes[argmax(z.type)];
    ev.value = planner.value_pool[argmax(z.value)];

    const auto g = ground_greedy(grounder, o, ev.plan);
    ev.coor = g.coor;
    ev.chosen_element = g.chosen_element;
    ev.element_hit = acc_plan(g.coor, o.element(gt.target_element_id).bbox) == 1;
    ev.type_hit = type_reward(ev.type, gt.gt_type) == 1;
    ev.value_hit = value_reward(ev.value, gt.gt_value) == 1;
    ev.op_f1 = token_f1(operation_bag(ev.type, ev.value), operation_bag(gt.gt_type, gt.gt_value));
    ev.success = ev.element_hit && ev.type_hit && ev.value_hit;
    return ev;
}

namespace {

std::vector<std::pair<const Task*, int>> eval_items(const Benchmark& bench, std::span<const int> task_ids)
{
    std::vector<std::pair<const Task*, int>> items;
    for (int id : task_ids) {
        const auto& t = bench.task(id);
        for (int j = 0; j < static_cast<int>(t.steps.size()); ++j)
            items.emplace_back(&t, j);
    }
    return items;
}

} // namespace

std::vector<StepEval> evaluate_steps_serial(const PlannerModel& planner, const GrounderModel& grounder,
                                            const Benchmark& bench, std::span<const int> task_ids)
{
    const auto items = eval_items(bench, task_ids);
    std::vector<StepEval> out(items.size());
    for (std::size_t i = 0; i < items.size(); ++i)
        out[i] = evaluate_step(planner, grounder, bench, *items[i].first, items[i].second);
    return out;
}

std::vector<StepEval> evaluate_steps_parallel(const PlannerModel& planner, const GrounderModel& grounder,
                                              const Benchmark& bench, std::span<const int> task_ids, int jobs)
{
    const auto items = eval_items(bench, task_ids);
    std::vector<StepEval> out(items.size());
    parallel_for(items.size(), jobs, [&](std::size_t i) {
        out[i] = evaluate_step(planner, grounder, bench, *items[i].first, items[i].second);
    });
    return out;
}

std::vector<StepEval> evaluate_steps(const PlannerModel& planner, const GrounderModel& grounder,
                                     const Benchmark& bench, std::span<const int> task_ids, Exec exec)
{
    if (exec.jobs <= 1)
        return evaluate_steps_serial(planner, grounder, bench, task_ids);
    return evaluate_steps_parallel(planner, grounder, bench, task_ids, exec.jobs);
}

} // namespace coepg
