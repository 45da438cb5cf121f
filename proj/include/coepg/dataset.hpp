#pragma once

#include <coepg/gui_env.hpp>

#include <cstdint>
#include <string_view>
#include <tuple>
#include <vector>

namespace coepg {

enum class Provenance { SeedPool, PlannerIter, GrpoDistilled };
std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view s);

/// One verified (observation, history, plan, action) tuple.
struct DatasetRecord {
    int task_id = 0;
    int step_index = 0;
    int state_feature = 0;
    int screen_id = 0;
    std::uint64_t history_digest = 0;
    std::vector<TokenId> plan;
    ActionType type = ActionType::Click;
    TokenSeq value;
    BBox bbox;
    Provenance provenance = Provenance::SeedPool;
    int iter = 0;

    /// Identity used for deduplication and the canonical dataset order.
    auto key() const { return std::tie(task_id, step_index, plan, type, value); }
    bool operator==(const DatasetRecord&) const = default;
};

using Dataset = std::vector<DatasetRecord>;

/// Digest of the teacher-forced history before `step_index` of a task.
std::uint64_t history_digest(const Task& task, int step_index);

} // namespace coepg
