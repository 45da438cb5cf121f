#pragma once

// Synthetic GUI world: screens of non-overlapping elements described by
// descriptor tokens, scripted multi-step tasks, and the finite plan space a
// planner chooses from.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coepg {

using TokenId = int;
/// Action value tokens. An empty sequence is the NONE sentinel.
using TokenSeq = std::vector<std::string>;

enum class ActionType { Click = 0, Type = 1, Select = 2 };
inline constexpr std::array kActionTypes{ActionType::Click, ActionType::Type, ActionType::Select};
inline constexpr std::size_t kNumActionTypes = kActionTypes.size();

std::string_view to_string(ActionType t);
ActionType parse_action_type(std::string_view s);
inline bool has_value_semantics(ActionType t) { return t != ActionType::Click; }

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

struct BBox {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    bool valid() const { return 0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0; }
    Point center() const { return {(x0 + x1) / 2.0, (y0 + y1) / 2.0}; }
    bool overlaps(const BBox& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
    bool operator==(const BBox&) const = default;
};

/// Edge-inclusive containment.
inline bool contains(const BBox& b, Point p) { return b.x0 <= p.x && p.x <= b.x1 && b.y0 <= p.y && p.y <= b.y1; }

struct Element {
    int id = 0;
    BBox bbox;
    TokenId role = 0;
    std::vector<TokenId> labels; // sorted, distinct
    std::vector<ActionType> affordances;

    /// Role token first, then labels in ascending id order.
    std::vector<TokenId> attributes() const;
    bool has_token(TokenId t) const;
    bool operator==(const Element&) const = default;
};

struct Screen {
    int screen_id = 0;
    std::vector<Element> elements;
    const Element& element(int id) const;
    bool operator==(const Screen&) const = default;
};

struct Observation {
    int screen_id = 0;
    std::vector<Element> elements;
    int step_index = 0;
    const Element& element(int id) const;
    bool operator==(const Observation&) const = default;
};

struct TaskStep {
    int screen_id = 0;
    int target_element_id = 0;
    ActionType gt_type = ActionType::Click;
    TokenSeq gt_value;
    bool operator==(const TaskStep&) const = default;
};

enum class Split { Train, HeldOutTask, HeldOutScreen, HeldOutDomain };
inline constexpr std::array kSplits{Split::Train, Split::HeldOutTask, Split::HeldOutScreen, Split::HeldOutDomain};
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct Task {
    int task_id = 0;
    int q_feature = 0;
    Split split = Split::Train;
    std::vector<TaskStep> steps;
    bool operator==(const Task&) const = default;
};

struct Action {
    Point coor;
    ActionType type = ActionType::Click;
    TokenSeq value;
};
using History = std::vector<Action>;

struct PlanCandidate {
    int candidate_id = 0;
    std::vector<TokenId> tokens;
    std::vector<int> matching_elements;
    bool operator==(const PlanCandidate&) const = default;
};

class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    const std::string& name(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::optional<TokenId> find(std::string_view name) const;
    TokenId id(std::string_view name) const;
    const std::vector<std::string>& tokens() const { return tokens_; }
    bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, TokenId, std::less<>> index_;
};

struct BenchmarkSpec {
    int screens = 60;
    int elements_per_screen = 6;
    int tasks = 60;
    int steps_per_task = 3;
    int role_tokens = 8;
    int label_tokens = 32;
    int labels_per_element = 2;
    int domains = 4;
    int value_tokens = 12;
    int tasks_per_intent = 3;
    double held_out_task = 0.2;
    double held_out_screen = 0.15;
    double held_out_domain = 0.15;
};

struct SplitCounts {
    int train = 0, held_out_task = 0, held_out_screen = 0, held_out_domain = 0;
};
/// Task counts per split implied by the held-out fractions (rounded to nearest).
SplitCounts split_counts(const BenchmarkSpec& spec);

struct Benchmark {
    std::uint64_t seed = 0;
    std::vector<Screen> screens; // indexed by screen_id
    std::vector<Task> tasks;     // indexed by task_id
    Vocabulary vocab;
    std::vector<TokenSeq> value_pool; // index 0 is NONE

    const Screen& screen(int id) const { return screens.at(static_cast<std::size_t>(id)); }
    const Task& task(int id) const { return tasks.at(static_cast<std::size_t>(id)); }
    std::vector<int> task_ids(Split split) const;
    std::optional<std::size_t> value_index(const TokenSeq& v) const;

    /// Content equality (screens, tasks, vocabulary, value pool).
    bool same_content(const Benchmark& o) const;
};

Benchmark build_benchmark(std::uint64_t seed, const BenchmarkSpec& spec);

Observation observe(const Benchmark& bench, const Task& task, int step_index);

struct StepOutcome {
    bool element_hit = false;
    bool type_hit = false;
    bool value_hit = false;
    bool step_success = false;
    int next_step = 0;
};

/// Teacher-forced transition: the next step is always step_index + 1.
StepOutcome transition(const Benchmark& bench, const Task& task, int step_index, const Action& action);

/// Elements whose attribute set is a superset of `tokens`, in element order.
std::vector<int> matching_elements(std::span<const Element> elements, std::span<const TokenId> tokens);

/// Deterministic candidate list: for each element in order, [role],
/// [role, label] for each label, then the full attribute set; duplicates of an
/// earlier token set are dropped. With a hint, only candidates whose tokens
/// describe the hinted element are returned (ids still index the full list).
std::vector<PlanCandidate> enumerate_plan_candidates(const Observation& o, std::optional<int> target_hint = std::nullopt);

/// NONE, the gt values, their single tokens, and their drop-last prefixes,
/// sorted and deduplicated. A pure function of the task set.
std::vector<TokenSeq> derive_value_pool(std::span<const Task> tasks);

void write_benchmark(const Benchmark& bench, std::ostream& out);
void save_benchmark(const Benchmark& bench, const std::string& path);
Benchmark read_benchmark(std::istream& in, const std::string& source = "<stream>");
Benchmark load_benchmark(const std::string& path);

namespace detail {
/// Structural invariants of a benchmark; throws ParseError naming `source`.
void check_benchmark_content(const Benchmark& b, const std::string& source);
} // namespace detail

} // namespace coepg
