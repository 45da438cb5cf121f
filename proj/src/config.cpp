#include <coepg/loop.hpp>

#include <coepg/errors.hpp>
#include <coepg/jsonl.hpp>

#include <functional>
#include <map>

namespace coepg {

using jsonl::Json;

namespace {

// Applies a JSON object to bound fields, rejecting unknown keys and values of
// the wrong JSON type.
class Binder {
public:
    explicit Binder(std::string path) : path_(std::move(path)) {}

    template <class T>
    Binder& bind(const char* key, T& ref)
    {
        fields_[key] = [this, &ref, key](const Json& j) { ref = get<T>(j, key); };
        return *this;
    }

    Binder& custom(const char* key, std::function<void(const Json&, const std::string&)> fn)
    {
        fields_[key] = [this, key, fn = std::move(fn)](const Json& j) { fn(j, name(key)); };
        return *this;
    }

    void apply(const Json& obj) const
    {
        if (!obj.is_object())
            throw ConfigError(where() + "expected an object");
        for (const auto& [key, value] : obj.items()) {
            const auto it = fields_.find(key);
            if (it == fields_.end())
                throw ConfigError("unknown config key '" + name(key) + "'");
            it->second(value);
        }
    }

    std::string name(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

private:
    std::string where() const { return path_.empty() ? "" : path_ + ": "; }

    template <class T>
    T get(const Json& j, const char* key) const
    {
        bool ok = false;
        if constexpr (std::is_same_v<T, bool>)
            ok = j.is_boolean();
        else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>)
            ok = j.is_number_unsigned();
        else if constexpr (std::is_integral_v<T>)
            ok = j.is_number_integer();
        else if constexpr (std::is_floating_point_v<T>)
            ok = j.is_number();
        else if constexpr (std::is_same_v<T, std::string>)
            ok = j.is_string();
        if (!ok)
            throw ConfigError("config key '" + name(key) + "' has the wrong type");
        return j.get<T>();
    }

    std::string path_;
    std::map<std::string, std::function<void(const Json&)>, std::less<>> fields_;
};

Json sft_json(const SftConfig& s) { return Json{{"epochs", s.epochs}, {"learning_rate", s.learning_rate}}; }

std::function<void(const Json&, const std::string&)> sft_binder(SftConfig& s)
{
    return [&s](const Json& j, const std::string& path) {
        Binder(path).bind("epochs", s.epochs).bind("learning_rate", s.learning_rate).apply(j);
    };
}

} // namespace

std::string config_json(const RunConfig& c)
{
    const auto& b = c.benchmark;
    const auto& g = c.grpo;
    Json seeds = Json::array();
    for (auto s : c.seeds)
        seeds.push_back(s);
    Json j{{"benchmark",
            {{"screens", b.screens},
             {"elements_per_screen", b.elements_per_screen},
             {"tasks", b.tasks},
             {"steps_per_task", b.steps_per_task},
             {"role_tokens", b.role_tokens},
             {"label_tokens", b.label_tokens},
             {"labels_per_element", b.labels_per_element},
             {"domains", b.domains},
             {"value_tokens", b.value_tokens},
             {"tasks_per_intent", b.tasks_per_intent},
             {"held_out_task", b.held_out_task},
             {"held_out_screen", b.held_out_screen},
             {"held_out_domain", b.held_out_domain}}},
           {"benchmark_seed", c.benchmark_seed},
           {"seeds", std::move(seeds)},
           {"iterations", c.iterations},
           {"buckets", c.buckets},
           {"grpo",
            {{"group_size", g.group_size},
             {"clip", g.clip},
             {"kl_beta", g.kl_beta},
             {"learning_rate", g.learning_rate},
             {"temperature", g.temperature},
             {"epochs", g.epochs},
             {"std_eps", g.std_eps},
             {"batch_groups", g.batch_groups},
             {"distill_threshold", g.distill_threshold}}},
           {"planner_sft", sft_json(c.planner_sft)},
           {"grounder_sft", sft_json(c.grounder_sft)},
           {"distill_sft", sft_json(c.distill_sft)},
           {"mode", std::string(to_string(c.mode))},
           {"priors", priors_label(c.priors)},
           {"single_member", c.single_member},
           {"verify_rule", std::string(to_string(c.verify_rule))},
           {"plans_per_step", c.plans_per_step},
           {"proposal_temperature", c.proposal_temperature},
           {"reverify_previous", c.reverify_previous},
           {"seed_noise", c.seed_noise},
           {"reference",
            {{"identity", c.reference.identity},
             {"strong_sigma", c.reference.strong_sigma},
             {"noisy_sigma", c.reference.noisy_sigma}}},
           {"out_dir", c.out_dir},
           {"jobs", c.jobs}};
    return j.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text, const std::string& source)
{
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(source + ": invalid JSON: " + e.what());
    }
    RunConfig c;
    auto& b = c.benchmark;
    auto& g = c.grpo;
    Binder root("");
    root.custom("benchmark",
                [&b](const Json& v, const std::string& path) {
                    Binder(path)
                        .bind("screens", b.screens)
                        .bind("elements_per_screen", b.elements_per_screen)
                        .bind("tasks", b.tasks)
                        .bind("steps_per_task", b.steps_per_task)
                        .bind("role_tokens", b.role_tokens)
                        .bind("label_tokens", b.label_tokens)
                        .bind("labels_per_element", b.labels_per_element)
                        .bind("domains", b.domains)
                        .bind("value_tokens", b.value_tokens)
                        .bind("tasks_per_intent", b.tasks_per_intent)
                        .bind("held_out_task", b.held_out_task)
                        .bind("held_out_screen", b.held_out_screen)
                        .bind("held_out_domain", b.held_out_domain)
                        .apply(v);
                })
        .bind("benchmark_seed", c.benchmark_seed)
        .custom("seeds",
                [&c](const Json& v, const std::string& path) {
                    if (!v.is_array())
                        throw ConfigError("config key '" + path + "' must be an array of seeds");
                    c.seeds.clear();
                    for (const auto& s : v) {
                        if (!s.is_number_unsigned())
                            throw ConfigError("config key '" + path + "' must hold non-negative integers");
                        c.seeds.push_back(s.get<std::uint64_t>());
                    }
                })
        .bind("iterations", c.iterations)
        .bind("buckets", c.buckets)
        .custom("grpo",
                [&g](const Json& v, const std::string& path) {
                    Binder(path)
                        .bind("group_size", g.group_size)
                        .bind("clip", g.clip)
                        .bind("kl_beta", g.kl_beta)
                        .bind("learning_rate", g.learning_rate)
                        .bind("temperature", g.temperature)
                        .bind("epochs", g.epochs)
                        .bind("std_eps", g.std_eps)
                        .bind("batch_groups", g.batch_groups)
                        .bind("distill_threshold", g.distill_threshold)
                        .apply(v);
                })
        .custom("planner_sft", sft_binder(c.planner_sft))
        .custom("grounder_sft", sft_binder(c.grounder_sft))
        .custom("distill_sft", sft_binder(c.distill_sft))
        .custom("mode",
                [&c](const Json& v, const std::string& path) {
                    if (!v.is_string())
                        throw ConfigError("config key '" + path + "' must be a string");
                    c.mode = parse_arm_mode(v.get<std::string>());
                })
        .custom("priors",
                [&c](const Json& v, const std::string& path) {
                    if (v.is_string()) {
                        c.priors = parse_priors(v.get<std::string>());
                    } else if (v.is_array() && v.size() == 3 &&
                               std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_number(); })) {
                        for (std::size_t i = 0; i < 3; ++i)
                            c.priors[i] = v[i].get<double>();
                    } else {
                        throw ConfigError("config key '" + path + "' must be \"a:b:c\" or an array of 3 numbers");
                    }
                })
        .bind("single_member", c.single_member)
        .custom("verify_rule",
                [&c](const Json& v, const std::string& path) {
                    if (!v.is_string())
                        throw ConfigError("config key '" + path + "' must be a string");
                    c.verify_rule = parse_verify_rule(v.get<std::string>());
                })
        .bind("plans_per_step", c.plans_per_step)
        .bind("proposal_temperature", c.proposal_temperature)
        .bind("reverify_previous", c.reverify_previous)
        .bind("seed_noise", c.seed_noise)
        .custom("reference",
                [&c](const Json& v, const std::string& path) {
                    Binder(path)
                        .bind("identity", c.reference.identity)
                        .bind("strong_sigma", c.reference.strong_sigma)
                        .bind("noisy_sigma", c.reference.noisy_sigma)
                        .apply(v);
                })
        .bind("out_dir", c.out_dir)
        .bind("jobs", c.jobs);
    try {
        root.apply(j);
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::string text;
    try {
        text = jsonl::read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return config_from_json(text, path);
}

} // namespace coepg
