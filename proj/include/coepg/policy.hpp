#pragma once

// Tabular stand-ins for the planning model (task, observation, history) ->
// (plan, action type, action value) and the grounding model
// (observation, plan) -> coordinates, with their supervised fine-tuning.

#include <coepg/dataset.hpp>
#include <coepg/gui_env.hpp>
#include <coepg/rng.hpp>

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace coepg {

/// Sparse rows of logits keyed by a feature bucket. Missing rows and columns
/// read as zero, so an untouched state is a uniform policy.
class LogitTable {
public:
    using Rows = std::map<int, std::vector<double>>;

    double at(int key, std::size_t col) const;
    const std::vector<double>* find(int key) const;
    /// Row for `key`, created or zero-extended to at least `width` columns.
    std::vector<double>& row(int key, std::size_t width);
    void add_scaled(const LogitTable& other, double scale);
    bool all_finite() const;
    bool empty() const { return rows_.empty(); }

    const Rows& rows() const { return rows_; }
    Rows& rows() { return rows_; }
    /// Value equality: absent rows and columns compare as zeros.
    bool operator==(const LogitTable& o) const;

private:
    Rows rows_;
};

enum class Head { Plan = 0, Type = 1, Value = 2 };
inline constexpr std::array kHeads{Head::Plan, Head::Type, Head::Value};

struct PlannerTables {
    LogitTable plan;         // state feature -> candidate slot
    LogitTable type;         // state feature -> action type
    LogitTable value;        // state feature -> value pool index
    LogitTable plan_tokens;  // intent feature -> descriptor token
    LogitTable intent_type;  // intent feature -> action type
    LogitTable intent_value; // intent feature -> value pool index

    void add_scaled(const PlannerTables& other, double scale);
    bool all_finite() const;
    bool operator==(const PlannerTables&) const = default;

    /// fn(name, table) over all six tables in serialization order.
    template <class Fn>
    void for_each(Fn&& fn)
    {
        fn("plan", plan);
        fn("type", type);
        fn("value", value);
        fn("plan_tokens", plan_tokens);
        fn("intent_type", intent_type);
        fn("intent_value", intent_value);
    }
    template <class Fn>
    void for_each(Fn&& fn) const
    {
        const_cast<PlannerTables*>(this)->for_each(
            [&](const char* name, LogitTable& t) { fn(name, static_cast<const LogitTable&>(t)); });
    }
};

struct PlannerModel {
    int buckets = 1 << 20;
    double temperature = 1.0; // 0 selects greedy decoding
    std::size_t vocab_size = 0;
    std::vector<TokenSeq> value_pool;
    PlannerTables tables;
    std::string tag;
    int iteration = -1;

    bool operator==(const PlannerModel&) const = default;
};

PlannerModel make_planner(const Benchmark& bench, int buckets, std::string tag = "planner");

/// Hash bucket of (Q, screen, step, |history|).
int state_feature(int q_feature, int screen_id, int step_index, std::size_t history_len, int buckets);
/// Hash bucket of (Q, step): shared by every screen the same intent step visits.
int intent_feature(int q_feature, int step_index, int buckets);

/// Everything the planner conditions on for one decision.
struct PlannerContext {
    int buckets = 0;
    int state_feature = 0;
    int intent_feature = 0;
    std::vector<PlanCandidate> candidates;
};

PlannerContext make_context(int buckets, int q_feature, const Observation& o, std::size_t history_len);

struct HeadLogits {
    std::vector<double> plan, type, value;
    const std::vector<double>& operator[](Head h) const;
};

HeadLogits head_logits(const PlannerModel& m, const PlannerContext& ctx);

struct PlannerOutput {
    PlanCandidate plan;
    std::size_t plan_index = 0;
    ActionType a_type = ActionType::Click;
    TokenSeq a_value;
    std::size_t value_index = 0;
    double logprob_plan = 0.0;
    double logprob_type = 0.0;
    double logprob_value = 0.0;

    std::size_t index(Head h) const;
    double logprob(Head h) const;
};

/// Samples each head from softmax(logits / temperature); temperature 0 takes
/// the argmax (lowest index on ties) and reports log softmax(logits).
PlannerOutput plan_step(const PlannerModel& m, const PlannerContext& ctx, Rng& rng);
PlannerOutput plan_step(const PlannerModel& m, int q_feature, const Observation& o, const History& h, Rng& rng);

/// Chain rule from one head's logit gradient into both table families.
void accumulate_head_gradient(PlannerTables& grad, const PlannerModel& m, const PlannerContext& ctx, Head head,
                              std::span<const double> dlogits);

struct GrounderModel {
    std::size_t vocab_size = 0;
    std::vector<double> affinity; // [plan token][attribute token], row-major
    std::vector<double> bias;     // indexed by role token
    std::string tag;
    int iteration = -1;

    double aff(TokenId plan_token, TokenId attr) const
    {
        return affinity[static_cast<std::size_t>(plan_token) * vocab_size + static_cast<std::size_t>(attr)];
    }
    bool operator==(const GrounderModel&) const = default;
};

GrounderModel make_grounder(std::size_t vocab_size, std::string tag = "grounder");

/// score(e) = sum over (plan token, attribute of e) of affinity + bias[role(e)].
std::vector<double> element_scores(const GrounderModel& g, const Observation& o, std::span<const TokenId> plan);

enum class GroundMode { Greedy, Sample };

struct GrounderOutput {
    Point coor;
    int chosen_element = 0;
    double confidence = 0.0; // log-likelihood of the single element token
};

GrounderOutput ground_step(const GrounderModel& g, const Observation& o, std::span<const TokenId> plan, GroundMode mode,
                           Rng* rng = nullptr);
inline GrounderOutput ground_greedy(const GrounderModel& g, const Observation& o, std::span<const TokenId> plan)
{
    return ground_step(g, o, plan, GroundMode::Greedy);
}

struct SftConfig {
    int epochs = 20;
    double learning_rate = 0.05;
};

PlannerModel sft_planner(const PlannerModel& m, const Benchmark& bench, std::span<const DatasetRecord> data,
                         const SftConfig& cfg);
GrounderModel sft_grounder(const GrounderModel& g, const Benchmark& bench, std::span<const DatasetRecord> data,
                           const SftConfig& cfg);

enum class GrounderQuality { Strong, Noisy };

struct ReferenceNoise {
    double identity = 2.0;
    double strong_sigma = 0.3;
    double noisy_sigma = 1.0;
};

/// Fixed reference grounders: identity affinity plus seeded Gaussian noise.
GrounderModel reference_grounder(GrounderQuality quality, std::uint64_t seed, std::size_t vocab_size,
                                 const ReferenceNoise& noise = {});

/// Agents built from ground truth, used as evaluation fixtures.
PlannerModel oracle_planner(const Benchmark& bench, int buckets);
GrounderModel oracle_grounder(std::size_t vocab_size);

// Checkpoints: a header record followed by one record per table row.
using JsonRecord = nlohmann::ordered_json;
std::vector<JsonRecord> planner_records(const PlannerModel& m);
std::vector<JsonRecord> grounder_records(const GrounderModel& g);
PlannerModel planner_from_records(std::span<const std::pair<JsonRecord, std::size_t>> records, const std::string& source);
GrounderModel grounder_from_records(std::span<const std::pair<JsonRecord, std::size_t>> records, const std::string& source);

void save_planner(const PlannerModel& m, const std::string& path);
PlannerModel load_planner(const std::string& path);
void save_grounder(const GrounderModel& g, const std::string& path);
GrounderModel load_grounder(const std::string& path);

} // namespace coepg
