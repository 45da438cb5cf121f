#include <coepg/policy.hpp>

#include <coepg/softmax.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coepg {

// ---------------------------------------------------------------------------
// LogitTable

double LogitTable::at(int key, std::size_t col) const
{
    auto it = rows_.find(key);
    if (it == rows_.end() || col >= it->second.size())
        return 0.0;
    return it->second[col];
}

const std::vector<double>* LogitTable::find(int key) const
{
    auto it = rows_.find(key);
    return it == rows_.end() ? nullptr : &it->second;
}

std::vector<double>& LogitTable::row(int key, std::size_t width)
{
    auto& r = rows_[key];
    if (r.size() < width)
        r.resize(width, 0.0);
    return r;
}

void LogitTable::add_scaled(const LogitTable& other, double scale)
{
    if (scale == 0.0)
        return;
    for (const auto& [key, src] : other.rows_) {
        auto& dst = row(key, src.size());
        for (std::size_t i = 0; i < src.size(); ++i)
            dst[i] += scale * src[i];
    }
}

bool LogitTable::operator==(const LogitTable& o) const
{
    auto covered = [](const Rows& a, const LogitTable& b) {
        for (const auto& [key, r] : a) {
            const auto* other = b.find(key);
            const std::size_t n = std::max(r.size(), other ? other->size() : 0);
            for (std::size_t i = 0; i < n; ++i)
                if ((i < r.size() ? r[i] : 0.0) != b.at(key, i))
                    return false;
        }
        return true;
    };
    return covered(rows_, o) && covered(o.rows_, *this);
}

bool LogitTable::all_finite() const
{
    for (const auto& [key, r] : rows_)
        for (double v : r)
            if (!std::isfinite(v))
                return false;
    return true;
}

void PlannerTables::add_scaled(const PlannerTables& o, double scale)
{
    plan.add_scaled(o.plan, scale);
    type.add_scaled(o.type, scale);
    value.add_scaled(o.value, scale);
    plan_tokens.add_scaled(o.plan_tokens, scale);
    intent_type.add_scaled(o.intent_type, scale);
    intent_value.add_scaled(o.intent_value, scale);
}

bool PlannerTables::all_finite() const
{
    bool ok = true;
    for_each([&](const char*, const LogitTable& t) { ok = ok && t.all_finite(); });
    return ok;
}

// ---------------------------------------------------------------------------
// Planner

PlannerModel make_planner(const Benchmark& bench, int buckets, std::string tag)
{
    if (buckets < 1)
        throw std::invalid_argument("planner bucket count must be >= 1");
    PlannerModel m;
    m.buckets = buckets;
    m.vocab_size = bench.vocab.size();
    m.value_pool = bench.value_pool;
    m.tag = std::move(tag);
    return m;
}

int state_feature(int q_feature, int screen_id, int step_index, std::size_t history_len, int buckets)
{
    const auto h = hash_values({0x57a7e, static_cast<std::uint64_t>(q_feature), static_cast<std::uint64_t>(screen_id),
                                static_cast<std::uint64_t>(step_index), history_len});
    return static_cast<int>(h % static_cast<std::uint64_t>(buckets));
}

int intent_feature(int q_feature, int step_index, int buckets)
{
    const auto h = hash_values({0x1e7e, static_cast<std::uint64_t>(q_feature), static_cast<std::uint64_t>(step_index)});
    return static_cast<int>(h % static_cast<std::uint64_t>(buckets));
}

PlannerContext make_context(int buckets, int q_feature, const Observation& o, std::size_t history_len)
{
    PlannerContext ctx;
    ctx.buckets = buckets;
    ctx.state_feature = state_feature(q_feature, o.screen_id, o.step_index, history_len, buckets);
    ctx.intent_feature = intent_feature(q_feature, o.step_index, buckets);
    ctx.candidates = enumerate_plan_candidates(o);
    if (ctx.candidates.empty())
        throw std::invalid_argument("observation has no plan candidates");
    return ctx;
}

const std::vector<double>& HeadLogits::operator[](Head h) const
{
    switch (h) {
    case Head::Plan: return plan;
    case Head::Type: return type;
    case Head::Value: return value;
    }
    throw std::logic_error("bad head");
}

HeadLogits head_logits(const PlannerModel& m, const PlannerContext& ctx)
{
    const auto& t = m.tables;
    const int s = ctx.state_feature;
    const int q = ctx.intent_feature;
    HeadLogits out;
    out.plan.resize(ctx.candidates.size());
    const auto* tok_row = t.plan_tokens.find(q);
    for (std::size_t i = 0; i < ctx.candidates.size(); ++i) {
        double z = t.plan.at(s, i);
        if (tok_row)
            for (TokenId tok : ctx.candidates[i].tokens)
                if (static_cast<std::size_t>(tok) < tok_row->size())
                    z += (*tok_row)[static_cast<std::size_t>(tok)];
        out.plan[i] = z;
    }
    out.type.resize(kNumActionTypes);
    for (std::size_t i = 0; i < kNumActionTypes; ++i)
        out.type[i] = t.type.at(s, i) + t.intent_type.at(q, i);
    out.value.resize(m.value_pool.size());
    for (std::size_t i = 0; i < m.value_pool.size(); ++i)
        out.value[i] = t.value.at(s, i) + t.intent_value.at(q, i);
    return out;
}

std::size_t PlannerOutput::index(Head h) const
{
    switch (h) {
    case Head::Plan: return plan_index;
    case Head::Type: return static_cast<std::size_t>(a_type);
    case Head::Value: return value_index;
    }
    throw std::logic_error("bad head");
}

double PlannerOutput::logprob(Head h) const
{
    switch (h) {
    case Head::Plan: return logprob_plan;
    case Head::Type: return logprob_type;
    case Head::Value: return logprob_value;
    }
    throw std::logic_error("bad head");
}

namespace {

std::pair<std::size_t, double> pick(std::span<const double> logits, double temperature, Rng& rng)
{
    if (temperature <= 0.0) {
        const auto lp = log_softmax(logits);
        const auto i = argmax(logits);
        return {i, lp[i]};
    }
    const auto lp = log_softmax(logits, temperature);
    std::vector<double> p(lp.size());
    std::transform(lp.begin(), lp.end(), p.begin(), [](double v) { return std::exp(v); });
    const auto i = rng.categorical(p);
    return {i, lp[i]};
}

} // namespace

PlannerOutput plan_step(const PlannerModel& m, const PlannerContext& ctx, Rng& rng)
{
    const auto logits = head_logits(m, ctx);
    PlannerOutput out;
    std::tie(out.plan_index, out.logprob_plan) = pick(logits.plan, m.temperature, rng);
    out.plan = ctx.candidates[out.plan_index];
    std::size_t ti = 0;
    std::tie(ti, out.logprob_type) = pick(logits.type, m.temperature, rng);
    out.a_type = kActionTypes[ti];
    std::tie(out.value_index, out.logprob_value) = pick(logits.value, m.temperature, rng);
    out.a_value = m.value_pool[out.value_index];
    return out;
}

PlannerOutput plan_step(const PlannerModel& m, int q_feature, const Observation& o, const History& h, Rng& rng)
{
    return plan_step(m, make_context(m.buckets, q_feature, o, h.size()), rng);
}

void accumulate_head_gradient(PlannerTables& grad, const PlannerModel& m, const PlannerContext& ctx, Head head,
                              std::span<const double> dlogits)
{
    const int s = ctx.state_feature;
    const int q = ctx.intent_feature;
    switch (head) {
    case Head::Plan: {
        auto& fine = grad.plan.row(s, dlogits.size());
        auto& coarse = grad.plan_tokens.row(q, m.vocab_size);
        for (std::size_t i = 0; i < dlogits.size(); ++i) {
            fine[i] += dlogits[i];
            for (TokenId t : ctx.candidates[i].tokens)
                coarse[static_cast<std::size_t>(t)] += dlogits[i];
        }
        break;
    }
    case Head::Type: {
        auto& fine = grad.type.row(s, kNumActionTypes);
        auto& coarse = grad.intent_type.row(q, kNumActionTypes);
        for (std::size_t i = 0; i < dlogits.size(); ++i) {
            fine[i] += dlogits[i];
            coarse[i] += dlogits[i];
        }
        break;
    }
    case Head::Value: {
        auto& fine = grad.value.row(s, dlogits.size());
        auto& coarse = grad.intent_value.row(q, dlogits.size());
        for (std::size_t i = 0; i < dlogits.size(); ++i) {
            fine[i] += dlogits[i];
            coarse[i] += dlogits[i];
        }
        break;
    }
    }
}

// ---------------------------------------------------------------------------
// Grounder

GrounderModel make_grounder(std::size_t vocab_size, std::string tag)
{
    GrounderModel g;
    g.vocab_size = vocab_size;
    g.affinity.assign(vocab_size * vocab_size, 0.0);
    g.bias.assign(vocab_size, 0.0);
    g.tag = std::move(tag);
    return g;
}

std::vector<double> element_scores(const GrounderModel& g, const Observation& o, std::span<const TokenId> plan)
{
    std::vector<double> scores;
    scores.reserve(o.elements.size());
    for (const auto& e : o.elements) {
        double s = g.bias[static_cast<std::size_t>(e.role)];
        const auto attrs = e.attributes();
        for (TokenId t : plan)
            for (TokenId a : attrs)
                s += g.aff(t, a);
        scores.push_back(s);
    }
    return scores;
}

GrounderOutput ground_step(const GrounderModel& g, const Observation& o, std::span<const TokenId> plan, GroundMode mode,
                           Rng* rng)
{
    if (o.elements.empty())
        throw std::invalid_argument("ground_step: observation has no elements");
    const auto scores = element_scores(g, o, plan);
    const auto lp = log_softmax(scores);
    std::size_t idx = 0;
    if (mode == GroundMode::Greedy) {
        idx = argmax(scores);
    } else {
        if (!rng)
            throw std::invalid_argument("ground_step: sample mode needs an rng stream");
        std::vector<double> p(lp.size());
        std::transform(lp.begin(), lp.end(), p.begin(), [](double v) { return std::exp(v); });
        idx = rng->categorical(p);
    }
    const auto& e = o.elements[idx];
    return {e.bbox.center(), e.id, lp[idx]};
}

// ---------------------------------------------------------------------------
// SFT

namespace {

struct PlannerExample {
    PlannerContext ctx;
    std::array<std::size_t, 3> target{};
};

PlannerExample planner_example(const PlannerModel& m, const Benchmark& bench, const DatasetRecord& r)
{
    const auto& task = bench.task(r.task_id);
    const auto o = observe(bench, task, r.step_index);
    PlannerExample ex{make_context(m.buckets, task.q_feature, o, static_cast<std::size_t>(r.step_index)), {}};
    if (ex.ctx.state_feature != r.state_feature)
        throw std::invalid_argument("record for task " + std::to_string(r.task_id) + " step " +
                                    std::to_string(r.step_index) + " has a state feature from a different bucket count");
    const auto it = std::find_if(ex.ctx.candidates.begin(), ex.ctx.candidates.end(),
                                 [&](const PlanCandidate& c) { return c.tokens == r.plan; });
    if (it == ex.ctx.candidates.end())
        throw std::invalid_argument("record plan is not a candidate of its observation");
    ex.target[0] = static_cast<std::size_t>(it - ex.ctx.candidates.begin());
    ex.target[1] = static_cast<std::size_t>(r.type);
    const auto vit = std::find(m.value_pool.begin(), m.value_pool.end(), r.value);
    if (vit == m.value_pool.end())
        throw std::invalid_argument("record value is not in the planner's value pool");
    ex.target[2] = static_cast<std::size_t>(vit - m.value_pool.begin());
    return ex;
}

} // namespace

PlannerModel sft_planner(const PlannerModel& m, const Benchmark& bench, std::span<const DatasetRecord> data,
                         const SftConfig& cfg)
{
    if (data.empty())
        throw std::invalid_argument("sft_planner: empty dataset");
    PlannerModel out = m;
    if (cfg.learning_rate == 0.0 || cfg.epochs <= 0)
        return out;

    std::vector<PlannerExample> examples;
    examples.reserve(data.size());
    for (const auto& r : data)
        examples.push_back(planner_example(m, bench, r));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        PlannerTables grad;
        for (const auto& ex : examples) {
            const auto logits = head_logits(out, ex.ctx);
            for (Head h : kHeads) {
                auto d = softmax(logits[h]);
                for (auto& v : d)
                    v = -v;
                d[ex.target[static_cast<std::size_t>(h)]] += 1.0;
                accumulate_head_gradient(grad, out, ex.ctx, h, d);
            }
        }
        out.tables.add_scaled(grad, cfg.learning_rate);
    }
    return out;
}

GrounderModel sft_grounder(const GrounderModel& g, const Benchmark& bench, std::span<const DatasetRecord> data,
                           const SftConfig& cfg)
{
    if (data.empty())
        throw std::invalid_argument("sft_grounder: empty dataset");
    GrounderModel out = g;
    if (cfg.learning_rate == 0.0 || cfg.epochs <= 0)
        return out;

    struct Example {
        Observation o;
        std::vector<TokenId> plan;
        std::size_t target;
    };
    std::vector<Example> examples;
    for (const auto& r : data) {
        const auto& task = bench.task(r.task_id);
        auto o = observe(bench, task, r.step_index);
        const int target_id = task.steps[static_cast<std::size_t>(r.step_index)].target_element_id;
        std::size_t target = 0;
        while (o.elements[target].id != target_id)
            ++target;
        examples.push_back({std::move(o), r.plan, target});
    }

    const std::size_t V = out.vocab_size;
    std::vector<double> daff(V * V), dbias(V);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::fill(daff.begin(), daff.end(), 0.0);
        std::fill(dbias.begin(), dbias.end(), 0.0);
        for (const auto& ex : examples) {
            auto d = softmax(element_scores(out, ex.o, ex.plan));
            for (auto& v : d)
                v = -v;
            d[ex.target] += 1.0;
            for (std::size_t e = 0; e < ex.o.elements.size(); ++e) {
                const auto& el = ex.o.elements[e];
                dbias[static_cast<std::size_t>(el.role)] += d[e];
                const auto attrs = el.attributes();
                for (TokenId t : ex.plan)
                    for (TokenId a : attrs)
                        daff[static_cast<std::size_t>(t) * V + static_cast<std::size_t>(a)] += d[e];
            }
        }
        for (std::size_t i = 0; i < daff.size(); ++i)
            out.affinity[i] += cfg.learning_rate * daff[i];
        for (std::size_t i = 0; i < dbias.size(); ++i)
            out.bias[i] += cfg.learning_rate * dbias[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference and oracle models

GrounderModel reference_grounder(GrounderQuality quality, std::uint64_t seed, std::size_t vocab_size,
                                 const ReferenceNoise& noise)
{
    const bool strong = quality == GrounderQuality::Strong;
    GrounderModel g = make_grounder(vocab_size, strong ? "ref_strong" : "ref_noisy");
    auto rng = Rng::stream(seed, {0x4ef, strong ? 1u : 2u});
    const double sigma = strong ? noise.strong_sigma : noise.noisy_sigma;
    for (std::size_t t = 0; t < vocab_size; ++t)
        for (std::size_t a = 0; a < vocab_size; ++a)
            g.affinity[t * vocab_size + a] = (t == a ? noise.identity : 0.0) + sigma * rng.normal();
    for (auto& b : g.bias)
        b = 0.5 * sigma * rng.normal();
    return g;
}

PlannerModel oracle_planner(const Benchmark& bench, int buckets)
{
    constexpr double kSure = 50.0;
    PlannerModel m = make_planner(bench, buckets, "oracle");
    m.temperature = 0.0;
    for (const auto& task : bench.tasks)
        for (int j = 0; j < static_cast<int>(task.steps.size()); ++j) {
            const auto& st = task.steps[static_cast<std::size_t>(j)];
            const auto ctx = make_context(buckets, task.q_feature, observe(bench, task, j), static_cast<std::size_t>(j));
            std::size_t best = 0, best_len = 0;
            for (std::size_t i = 0; i < ctx.candidates.size(); ++i) {
                const auto& c = ctx.candidates[i];
                if (c.matching_elements == std::vector<int>{st.target_element_id} && c.tokens.size() > best_len) {
                    best = i;
                    best_len = c.tokens.size();
                }
            }
            m.tables.plan.row(ctx.state_feature, ctx.candidates.size())[best] = kSure;
            m.tables.type.row(ctx.state_feature, kNumActionTypes)[static_cast<std::size_t>(st.gt_type)] = kSure;
            m.tables.value.row(ctx.state_feature, m.value_pool.size())[*bench.value_index(st.gt_value)] = kSure;
        }
    return m;
}

GrounderModel oracle_grounder(std::size_t vocab_size)
{
    GrounderModel g = make_grounder(vocab_size, "oracle");
    for (std::size_t t = 0; t < vocab_size; ++t)
        g.affinity[t * vocab_size + t] = 10.0;
    return g;
}

} // namespace coepg
