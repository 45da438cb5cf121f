#include <coepg/dataset.hpp>

#include <coepg/errors.hpp>
#include <coepg/rng.hpp>

#include <stdexcept>
#include <string>

namespace coepg {

std::string_view to_string(Provenance p)
{
    switch (p) {
    case Provenance::SeedPool: return "seed_pool";
    case Provenance::PlannerIter: return "planner_iter";
    case Provenance::GrpoDistilled: return "grpo_distilled";
    }
    throw std::logic_error("bad provenance");
}

Provenance parse_provenance(std::string_view s)
{
    for (auto p : {Provenance::SeedPool, Provenance::PlannerIter, Provenance::GrpoDistilled})
        if (to_string(p) == s)
            return p;
    throw std::invalid_argument("unknown provenance '" + std::string(s) + "'");
}

std::uint64_t history_digest(const Task& task, int step_index)
{
    if (step_index < 0 || static_cast<std::size_t>(step_index) > task.steps.size())
        throw std::out_of_range("history_digest: step out of range");
    std::uint64_t h = hash_values({0x4157, static_cast<std::uint64_t>(task.task_id)});
    for (int j = 0; j < step_index; ++j) {
        const auto& st = task.steps[static_cast<std::size_t>(j)];
        h = hash_combine(h, static_cast<std::uint64_t>(st.target_element_id));
        h = hash_combine(h, static_cast<std::uint64_t>(st.gt_type));
        for (const auto& tok : st.gt_value)
            h = hash_combine(h, std::hash<std::string>{}(tok));
        h = hash_combine(h, st.gt_value.size());
    }
    return h;
}

} // namespace coepg
