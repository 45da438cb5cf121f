#include <coepg/grpo.hpp>

#include <coepg/errors.hpp>
#include <coepg/kernels.hpp>
#include <coepg/softmax.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace coepg {

void GrpoConfig::validate() const
{
    if (group_size < 2)
        throw ConfigError("grpo.group_size must be >= 2");
    if (!(clip > 0.0 && clip < 1.0))
        throw ConfigError("grpo.clip must lie in (0, 1)");
    if (!(kl_beta >= 0.0))
        throw ConfigError("grpo.kl_beta must be >= 0");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("grpo.learning_rate must be finite and >= 0");
    if (!(temperature > 0.0))
        throw ConfigError("grpo.temperature must be > 0");
    if (epochs < 0)
        throw ConfigError("grpo.epochs must be >= 0");
    if (!(std_eps >= 0.0))
        throw ConfigError("grpo.std_eps must be >= 0");
    if (batch_groups < 1)
        throw ConfigError("grpo.batch_groups must be >= 1");
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_eps)
{
    if (rewards.size() < 2)
        throw std::invalid_argument("group_advantages: need at least 2 rewards, got " + std::to_string(rewards.size()));
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards)
        var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> a(rewards.size(), 0.0);
    if (sd < std_eps || sd == 0.0)
        return a;
    for (std::size_t i = 0; i < a.size(); ++i)
        a[i] = (rewards[i] - mean) / sd;
    return a;
}

void assign_advantages(RolloutGroup& group, double std_eps)
{
    std::vector<double> r;
    r.reserve(group.rollouts.size());
    for (const auto& ro : group.rollouts)
        r.push_back(ro.breakdown.r_final);
    group.advantages = group_advantages(r, std_eps);
}

namespace {

std::size_t rollout_count(std::span<const RolloutGroup> groups)
{
    std::size_t n = 0;
    for (const auto& g : groups) {
        if (g.advantages.size() != g.rollouts.size())
            throw std::invalid_argument("rollout group has " + std::to_string(g.rollouts.size()) + " rollouts but " +
                                        std::to_string(g.advantages.size()) + " advantages");
        n += g.rollouts.size();
    }
    return n;
}

// Log-probs of policy and reference at one context, cached across the
// rollouts of a group (they share the context object).
struct HeadCache {
    const PlannerContext* ctx = nullptr;
    std::array<std::vector<double>, 3> lp, lq;

    void update(const PlannerModel& policy, const PlannerModel& ref, const PlannerContext& c, double T)
    {
        if (ctx == &c)
            return;
        if (c.buckets != policy.buckets || c.buckets != ref.buckets)
            throw std::invalid_argument("rollout state features use " + std::to_string(c.buckets) +
                                        " buckets but the policy tables use " + std::to_string(policy.buckets));
        ctx = &c;
        const auto zp = head_logits(policy, c);
        const auto zq = head_logits(ref, c);
        for (Head h : kHeads) {
            lp[static_cast<std::size_t>(h)] = log_softmax(zp[h], T);
            lq[static_cast<std::size_t>(h)] = log_softmax(zq[h], T);
        }
    }
};

struct Term {
    double surr = 0.0;
    double kl = 0.0;
    double dsurr = 0.0; // d surr / d logp_chosen
    bool clipped = false;
};

Term head_term(std::span<const double> lp, std::span<const double> lq, std::size_t chosen, double logp_old, double A,
               double eps)
{
    Term t;
    const double rho = std::exp(lp[chosen] - logp_old);
    const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps);
    t.surr = std::min(rho * A, clipped * A);
    const bool active = (A >= 0.0 && rho <= 1.0 + eps) || (A < 0.0 && rho >= 1.0 - eps);
    t.dsurr = active ? rho * A : 0.0;
    t.clipped = !active && A != 0.0;
    t.kl = categorical_kl(lp, lq);
    return t;
}

} // namespace

double grpo_objective(const PlannerModel& policy, const PlannerModel& ref, std::span<const RolloutGroup> groups,
                      const GrpoConfig& cfg)
{
    const std::size_t R = rollout_count(groups);
    if (R == 0)
        return 0.0;
    HeadCache cache;
    double total = 0.0;
    for (const auto& g : groups)
        for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
            const auto& ro = g.rollouts[i];
            cache.update(policy, ref, *ro.ctx, cfg.temperature);
            for (Head h : kHeads) {
                const auto k = static_cast<std::size_t>(h);
                const auto t = head_term(cache.lp[k], cache.lq[k], ro.output.index(h), ro.output.logprob(h),
                                         g.advantages[i], cfg.clip);
                total += t.surr - cfg.kl_beta * t.kl;
            }
        }
    return total / (3.0 * static_cast<double>(R));
}

double grpo_objective(const PlannerModel& policy, const PlannerModel& ref, const RolloutGroup& group,
                      const GrpoConfig& cfg)
{
    return grpo_objective(policy, ref, std::span<const RolloutGroup>(&group, 1), cfg);
}

PlannerTables grpo_gradient(const PlannerModel& policy, const PlannerModel& ref, std::span<const RolloutGroup> groups,
                            const GrpoConfig& cfg, GrpoStats* stats)
{
    PlannerTables grad;
    const std::size_t R = rollout_count(groups);
    if (R == 0) {
        if (stats)
            *stats = {};
        return grad;
    }
    const double T = cfg.temperature;
    const double scale = 1.0 / (3.0 * static_cast<double>(R));
    HeadCache cache;
    double objective = 0.0, kl_sum = 0.0;
    std::size_t clipped = 0;
    std::vector<double> dz;
    for (const auto& g : groups)
        for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
            const auto& ro = g.rollouts[i];
            cache.update(policy, ref, *ro.ctx, T);
            for (Head h : kHeads) {
                const auto k = static_cast<std::size_t>(h);
                const auto& lp = cache.lp[k];
                const auto& lq = cache.lq[k];
                const std::size_t c = ro.output.index(h);
                const auto t = head_term(lp, lq, c, ro.output.logprob(h), g.advantages[i], cfg.clip);
                objective += t.surr - cfg.kl_beta * t.kl;
                kl_sum += t.kl;
                clipped += t.clipped ? 1 : 0;

                dz.assign(lp.size(), 0.0);
                for (std::size_t j = 0; j < lp.size(); ++j) {
                    const double p = std::exp(lp[j]);
                    double d = t.dsurr * ((j == c ? 1.0 : 0.0) - p);
                    if (cfg.kl_beta != 0.0)
                        d -= cfg.kl_beta * p * (lp[j] - lq[j] - t.kl);
                    dz[j] = d * scale / T;
                }
                accumulate_head_gradient(grad, policy, *ro.ctx, h, dz);
            }
        }
    if (stats) {
        stats->objective = objective * scale;
        stats->kl = kl_sum / (3.0 * static_cast<double>(R));
        stats->clip_fraction = static_cast<double>(clipped) / (3.0 * static_cast<double>(R));
    }
    return grad;
}

PlannerModel grpo_step(const PlannerModel& policy, const PlannerModel& ref, std::span<const RolloutGroup> groups,
                       const GrpoConfig& cfg, GrpoStats* stats)
{
    const auto grad = grpo_gradient(policy, ref, groups, cfg, stats);
    PlannerModel out = policy;
    out.tables.add_scaled(grad, cfg.learning_rate);
    return out;
}

FiniteDiffReport finite_diff_check(const PlannerModel& policy, const PlannerModel& ref,
                                   std::span<const RolloutGroup> groups, const GrpoConfig& cfg, double h, double tol)
{
    if (!(h > 0.0))
        throw std::invalid_argument("finite_diff_check: step must be positive");
    const auto grad = grpo_gradient(policy, ref, groups, cfg);
    PlannerModel work = policy;
    FiniteDiffReport rep;
    grad.for_each([&](const char* name, const LogitTable& gt) {
        LogitTable* table = nullptr;
        work.tables.for_each([&](const char* n, LogitTable& t) {
            if (std::string_view(n) == name)
                table = &t;
        });
        for (const auto& [key, grow] : gt.rows())
            for (std::size_t col = 0; col < grow.size(); ++col) {
                const double orig = table->at(key, col);
                table->row(key, col + 1)[col] = orig + h;
                const double fp = grpo_objective(work, ref, groups, cfg);
                table->row(key, col + 1)[col] = orig - h;
                const double fm = grpo_objective(work, ref, groups, cfg);
                table->row(key, col + 1)[col] = orig;
                const double numeric = (fp - fm) / (2.0 * h);
                const double analytic = grow[col];
                const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
                rep.max_rel_error = std::max(rep.max_rel_error, std::abs(analytic - numeric) / denom);
                rep.max_abs_analytic = std::max(rep.max_abs_analytic, std::abs(analytic));
                rep.max_abs_numeric = std::max(rep.max_abs_numeric, std::abs(numeric));
                ++rep.entries_checked;
            }
    });
    rep.passed = rep.max_rel_error <= tol;
    return rep;
}

std::vector<TrainStep> make_train_steps(const Benchmark& bench, std::span<const int> task_ids, int buckets)
{
    std::vector<TrainStep> out;
    for (int id : task_ids) {
        const auto& task = bench.task(id);
        for (int j = 0; j < static_cast<int>(task.steps.size()); ++j) {
            TrainStep s;
            s.task_id = id;
            s.step_index = j;
            s.obs = observe(bench, task, j);
            s.gt = task.steps[static_cast<std::size_t>(j)];
            s.ctx = std::make_shared<const PlannerContext>(
                make_context(buckets, task.q_feature, s.obs, static_cast<std::size_t>(j)));
            out.push_back(std::move(s));
        }
    }
    return out;
}

DatasetRecord rollout_record(const Benchmark& bench, const TrainStep& step, const PlannerOutput& out, Provenance prov,
                             int iter)
{
    DatasetRecord r;
    r.task_id = step.task_id;
    r.step_index = step.step_index;
    r.state_feature = step.ctx->state_feature;
    r.screen_id = step.obs.screen_id;
    r.history_digest = history_digest(bench.task(step.task_id), step.step_index);
    r.plan = out.plan.tokens;
    r.type = out.a_type;
    r.value = out.a_value;
    r.bbox = step.obs.element(step.gt.target_element_id).bbox;
    r.provenance = prov;
    r.iter = iter;
    return r;
}

GrpoResult collaborative_grpo(const PlannerModel& planner, const Ensemble& ensemble, const Benchmark& bench,
                              std::span<const int> task_ids, const GrpoConfig& cfg, std::uint64_t seed, int iter,
                              Exec exec)
{
    cfg.validate();
    ensemble.validate();
    if (task_ids.empty())
        throw std::invalid_argument("collaborative_grpo: empty task list");

    const auto steps = make_train_steps(bench, task_ids, planner.buckets);
    PlannerModel ref = planner;
    ref.temperature = cfg.temperature;
    PlannerModel policy = ref;

    using Key = std::tuple<int, int, std::vector<TokenId>, ActionType, TokenSeq>;
    std::map<Key, DatasetRecord> distilled;
    GrpoResult res;

    const int passes = std::max(cfg.epochs, 1);
    for (int epoch = 0; epoch < passes; ++epoch) {
        const auto tag = hash_values({0x6870, static_cast<std::uint64_t>(iter), static_cast<std::uint64_t>(epoch)});
        auto groups = sample_groups(policy, ensemble, steps, cfg.group_size, seed, tag, exec);

        GrpoEpochLog log;
        log.epoch = epoch;
        std::size_t n = 0;
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            auto& g = groups[gi];
            assign_advantages(g, cfg.std_eps);
            for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
                const auto& ro = g.rollouts[i];
                log.mean_reward += ro.breakdown.r_final;
                log.mean_abs_advantage += std::abs(g.advantages[i]);
                ++n;
                if (ro.breakdown.r_final >= cfg.distill_threshold) {
                    auto rec = rollout_record(bench, steps[gi], ro.output, Provenance::GrpoDistilled, iter);
                    Key key{rec.task_id, rec.step_index, rec.plan, rec.type, rec.value};
                    distilled.try_emplace(std::move(key), std::move(rec));
                }
            }
        }
        log.mean_reward /= static_cast<double>(n);
        log.mean_abs_advantage /= static_cast<double>(n);

        if (cfg.epochs > 0) {
            std::vector<std::size_t> order(groups.size());
            std::iota(order.begin(), order.end(), 0);
            auto rng = Rng::stream(seed, {0x5b0f, static_cast<std::uint64_t>(iter), static_cast<std::uint64_t>(epoch)});
            rng.shuffle(order);
            std::vector<RolloutGroup> shuffled;
            shuffled.reserve(groups.size());
            for (auto i : order)
                shuffled.push_back(std::move(groups[i]));

            const auto B = static_cast<std::size_t>(cfg.batch_groups);
            std::size_t batches = 0;
            for (std::size_t b = 0; b < shuffled.size(); b += B) {
                const auto batch = std::span<const RolloutGroup>(shuffled).subspan(b, std::min(B, shuffled.size() - b));
                GrpoStats st;
                policy = grpo_step(policy, ref, batch, cfg, &st);
                log.kl += st.kl;
                log.clip_fraction += st.clip_fraction;
                ++batches;
            }
            log.kl /= static_cast<double>(batches);
            log.clip_fraction /= static_cast<double>(batches);
        }
        res.log.push_back(log);
    }

    policy.temperature = planner.temperature;
    res.planner = std::move(policy);
    res.distilled.reserve(distilled.size());
    for (auto& [k, r] : distilled)
        res.distilled.push_back(std::move(r));
    return res;
}

} // namespace coepg
