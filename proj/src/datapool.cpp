#include <coepg/datapool.hpp>

#include <coepg/errors.hpp>
#include <coepg/jsonl.hpp>
#include <coepg/softmax.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace coepg {

using jsonl::Json;

std::string_view to_string(VerifyRule r)
{
    switch (r) {
    case VerifyRule::All: return "all";
    case VerifyRule::Majority: return "majority";
    case VerifyRule::Any: return "any";
    }
    throw std::logic_error("bad verify rule");
}

VerifyRule parse_verify_rule(std::string_view s)
{
    for (auto r : {VerifyRule::All, VerifyRule::Majority, VerifyRule::Any})
        if (to_string(r) == s)
            return r;
    throw ConfigError("unknown verification rule '" + std::string(s) + "'");
}

Proposer seed_proposer(const SeedGenerator& g)
{
    if (!(g.noise >= 0.0 && g.noise <= 1.0))
        throw ConfigError("seed generator noise must lie in [0, 1]");
    const double noise = g.noise;
    return [noise](const TrainStep& step, Rng& rng) {
        const auto& all = step.ctx->candidates;
        if (rng.bernoulli(noise))
            return all[rng.below(all.size())].tokens;
        const int target = step.gt.target_element_id;
        std::vector<std::size_t> hinted;
        for (std::size_t i = 0; i < all.size(); ++i)
            if (std::find(all[i].matching_elements.begin(), all[i].matching_elements.end(), target) !=
                all[i].matching_elements.end())
                hinted.push_back(i);
        return all[hinted[rng.below(hinted.size())]].tokens;
    };
}

Proposer planner_proposer(const PlannerModel& m, double temperature)
{
    if (!(temperature > 0.0))
        throw ConfigError("proposal temperature must be > 0");
    const PlannerModel* pm = &m;
    return [pm, temperature](const TrainStep& step, Rng& rng) {
        const auto z = head_logits(*pm, *step.ctx);
        return step.ctx->candidates[rng.categorical(softmax(z.plan, temperature))].tokens;
    };
}

std::vector<const GrounderModel*> VerifierPool::verifiers() const
{
    std::vector<const GrounderModel*> out;
    for (const auto& g : references)
        out.push_back(&g);
    for (const auto& g : members)
        out.push_back(&g);
    return out;
}

namespace {

template <class Model>
void rotate_members(std::vector<Model>& members, Model m, std::size_t capacity)
{
    const int k = m.iteration;
    std::erase_if(members, [&](const Model& x) { return x.iteration == k || x.iteration < k - 1; });
    members.push_back(std::move(m));
    std::sort(members.begin(), members.end(), [](const Model& a, const Model& b) { return a.iteration < b.iteration; });
    while (members.size() > capacity)
        members.erase(members.begin());
}

} // namespace

void rotate_pool(std::vector<PlannerModel>& members, PlannerModel m)
{
    rotate_members(members, std::move(m), PlannerPool::kCapacity);
}

void rotate_pool(std::vector<GrounderModel>& members, GrounderModel m)
{
    rotate_members(members, std::move(m), VerifierPool::kCapacity);
}

double dataset_diversity(std::span<const DatasetRecord> d, std::size_t* covered)
{
    std::set<std::pair<int, int>> steps;
    for (const auto& r : d)
        steps.emplace(r.task_id, r.step_index);
    if (covered)
        *covered = steps.size();
    return steps.empty() ? 0.0 : static_cast<double>(d.size()) / static_cast<double>(steps.size());
}

void canonicalize(Dataset& d)
{
    std::stable_sort(d.begin(), d.end(), [](const DatasetRecord& a, const DatasetRecord& b) { return a.key() < b.key(); });
    d.erase(std::unique(d.begin(), d.end(), [](const DatasetRecord& a, const DatasetRecord& b) { return a.key() == b.key(); }),
            d.end());
}

namespace {

DatasetRecord proposal_record(const Benchmark& bench, const TrainStep& step, const std::vector<TokenId>& plan,
                              Provenance prov, int k)
{
    PlannerOutput out;
    out.plan.tokens = plan;
    out.a_type = step.gt.gt_type;
    out.a_value = step.gt.gt_value;
    return rollout_record(bench, step, out, prov, k);
}

void finish_stats(DataStats& s, const Dataset& d)
{
    s.purity = s.generated ? static_cast<double>(s.retained) / static_cast<double>(s.generated) : 0.0;
    s.dataset_size = d.size();
    s.diversity = dataset_diversity(d, &s.covered_steps);
}

void collect(const Benchmark& bench, std::span<const TrainStep> steps,
             const std::vector<std::vector<Proposal>>& proposals, Provenance prov, int k, Dataset& out, DataStats& s)
{
    for (std::size_t i = 0; i < steps.size(); ++i)
        for (const auto& p : proposals[i]) {
            ++s.generated;
            if (!p.verified)
                continue;
            ++s.retained;
            out.push_back(proposal_record(bench, steps[i], p.plan, prov, k));
        }
}

} // namespace

DataRound seed_dataset(const Benchmark& bench, const SeedGenerator& gen, const VerifierPool& verifiers, int m,
                       int buckets, std::uint64_t seed, Exec exec)
{
    if (m < 1)
        throw ConfigError("plans per step must be >= 1");
    const auto vs = verifiers.verifiers();
    if (vs.empty())
        throw std::invalid_argument("seed_dataset: verifier pool is empty");
    const auto ids = bench.task_ids(Split::Train);
    const auto steps = make_train_steps(bench, ids, buckets);
    const std::vector<Proposer> proposers{seed_proposer(gen)};
    const auto props = propose(proposers, vs, steps, m, verifiers.rule, seed, 0x5eed, exec);

    DataRound r;
    r.stats.k = 0;
    collect(bench, steps, props, Provenance::SeedPool, 0, r.data, r.stats);
    canonicalize(r.data);
    finish_stats(r.stats, r.data);
    return r;
}

DataRound enhance_dataset(std::span<const DatasetRecord> prev, const PlannerPool& planners,
                          const VerifierPool& verifiers, const Benchmark& bench, const EnhanceOptions& opt, int k,
                          std::uint64_t seed, Exec exec)
{
    if (planners.members.empty())
        throw std::invalid_argument("enhance_dataset: planner pool has no members");
    if (opt.m < 1)
        throw ConfigError("plans per step must be >= 1");
    const auto vs = verifiers.verifiers();
    if (vs.empty())
        throw std::invalid_argument("enhance_dataset: verifier pool is empty");
    const int buckets = planners.members.front().buckets;
    for (const auto& p : planners.members)
        if (p.buckets != buckets)
            throw std::invalid_argument("enhance_dataset: planner pool members disagree on bucket count");

    const auto ids = bench.task_ids(Split::Train);
    const auto steps = make_train_steps(bench, ids, buckets);
    std::vector<Proposer> proposers;
    for (const auto& p : planners.members)
        proposers.push_back(planner_proposer(p, opt.temperature));
    const auto props = propose(proposers, vs, steps, opt.m, verifiers.rule, seed,
                               hash_values({0xe4a, static_cast<std::uint64_t>(k)}), exec);

    DataRound r;
    r.stats.k = k;
    Dataset kept;
    if (opt.reverify_previous) {
        std::map<std::pair<int, int>, const TrainStep*> by_step;
        for (const auto& s : steps)
            by_step[{s.task_id, s.step_index}] = &s;
        for (const auto& rec : prev) {
            const auto it = by_step.find({rec.task_id, rec.step_index});
            if (it == by_step.end())
                continue;
            if (verify_plan(vs, it->second->obs, rec.plan, rec.bbox, verifiers.rule))
                kept.push_back(rec);
        }
    } else {
        kept.assign(prev.begin(), prev.end());
    }
    // earlier records keep their provenance on collision
    collect(bench, steps, props, Provenance::PlannerIter, k, kept, r.stats);
    canonicalize(kept);
    r.data = std::move(kept);
    finish_stats(r.stats, r.data);
    return r;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

Json record_json(const DatasetRecord& r)
{
    return Json{{"task", r.task_id},
                {"step", r.step_index},
                {"state_feature", r.state_feature},
                {"screen_id", r.screen_id},
                {"history_digest", r.history_digest},
                {"plan", r.plan},
                {"type", std::string(to_string(r.type))},
                {"value", r.value.empty() ? Json(nullptr) : Json(r.value)},
                {"bbox", {r.bbox.x0, r.bbox.y0, r.bbox.x1, r.bbox.y1}},
                {"provenance", std::string(to_string(r.provenance))},
                {"iter", r.iter}};
}

DatasetRecord record_from_json(const Json& j)
{
    using jsonl::field;
    DatasetRecord r;
    r.task_id = field(j, "task").get<int>();
    r.step_index = field(j, "step").get<int>();
    r.state_feature = field(j, "state_feature").get<int>();
    r.screen_id = field(j, "screen_id").get<int>();
    r.history_digest = field(j, "history_digest").get<std::uint64_t>();
    r.plan = field(j, "plan").get<std::vector<TokenId>>();
    r.type = parse_action_type(field(j, "type").get<std::string>());
    const auto& v = field(j, "value");
    if (!v.is_null())
        r.value = v.get<TokenSeq>();
    const auto& b = field(j, "bbox");
    if (!b.is_array() || b.size() != 4)
        throw std::invalid_argument("bbox must be an array of 4 numbers");
    r.bbox = BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    r.provenance = parse_provenance(field(j, "provenance").get<std::string>());
    r.iter = field(j, "iter").get<int>();

    if (r.task_id < 0 || r.step_index < 0 || r.state_feature < 0 || r.screen_id < 0 || r.iter < 0)
        throw std::invalid_argument("negative index in dataset record");
    if (r.plan.empty())
        throw std::invalid_argument("empty plan");
    if (std::any_of(r.plan.begin(), r.plan.end(), [](TokenId t) { return t < 0; }))
        throw std::invalid_argument("negative plan token");
    if (!r.bbox.valid())
        throw std::invalid_argument("invalid bbox");
    return r;
}

} // namespace

void write_dataset(std::span<const DatasetRecord> d, std::ostream& out)
{
    for (const auto& r : d)
        jsonl::write_record(out, record_json(r));
}

Dataset read_dataset(std::istream& in, const std::string& source)
{
    Dataset d;
    std::set<std::tuple<int, int, std::vector<TokenId>, ActionType, TokenSeq>> seen;
    jsonl::for_each_record(in, source, [&](const Json& j, std::size_t) {
        auto r = record_from_json(j);
        if (!seen.emplace(r.task_id, r.step_index, r.plan, r.type, r.value).second)
            throw std::invalid_argument("duplicate record for task " + std::to_string(r.task_id) + " step " +
                                        std::to_string(r.step_index));
        d.push_back(std::move(r));
    });
    return d;
}

void save_dataset(std::span<const DatasetRecord> d, const std::string& path)
{
    jsonl::write_file_atomic(path, [&](std::ostream& out) { write_dataset(d, out); });
}

Dataset load_dataset(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    return read_dataset(in, path);
}

void write_stats_csv(std::span<const DataStats> stats, std::ostream& out)
{
    out << "iter,generated,retained,purity,diversity\n";
    char buf[160];
    for (const auto& s : stats) {
        std::snprintf(buf, sizeof buf, "%d,%zu,%zu,%.6f,%.6f\n", s.k, s.generated, s.retained, s.purity, s.diversity);
        out << buf;
    }
}

} // namespace coepg
