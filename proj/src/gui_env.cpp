#include <coepg/gui_env.hpp>

#include <coepg/cdrem.hpp>
#include <coepg/errors.hpp>
#include <coepg/rng.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

namespace coepg {

std::string_view to_string(ActionType t)
{
    switch (t) {
    case ActionType::Click: return "CLICK";
    case ActionType::Type: return "TYPE";
    case ActionType::Select: return "SELECT";
    }
    throw std::logic_error("bad ActionType");
}

ActionType parse_action_type(std::string_view s)
{
    for (auto t : kActionTypes)
        if (to_string(t) == s)
            return t;
    throw std::invalid_argument("unknown action type '" + std::string(s) + "'");
}

std::string_view to_string(Split s)
{
    switch (s) {
    case Split::Train: return "train";
    case Split::HeldOutTask: return "held_out_task";
    case Split::HeldOutScreen: return "held_out_screen";
    case Split::HeldOutDomain: return "held_out_domain";
    }
    throw std::logic_error("bad Split");
}

Split parse_split(std::string_view s)
{
    for (auto sp : kSplits)
        if (to_string(sp) == s)
            return sp;
    throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

std::vector<TokenId> Element::attributes() const
{
    std::vector<TokenId> out;
    out.reserve(labels.size() + 1);
    out.push_back(role);
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

bool Element::has_token(TokenId t) const
{
    return t == role || std::find(labels.begin(), labels.end(), t) != labels.end();
}

namespace {

template <class Elements>
const Element& find_element(const Elements& elements, int id)
{
    for (const auto& e : elements)
        if (e.id == id)
            return e;
    throw std::out_of_range("no element with id " + std::to_string(id));
}

} // namespace

const Element& Screen::element(int id) const { return find_element(elements, id); }
const Element& Observation::element(int id) const { return find_element(elements, id); }

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens))
{
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
            throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
}

std::optional<TokenId> Vocabulary::find(std::string_view name) const
{
    auto it = index_.find(name);
    if (it == index_.end())
        return std::nullopt;
    return it->second;
}

TokenId Vocabulary::id(std::string_view name) const
{
    if (auto t = find(name))
        return *t;
    throw std::invalid_argument("token '" + std::string(name) + "' not in vocabulary");
}

std::vector<int> Benchmark::task_ids(Split split) const
{
    std::vector<int> out;
    for (const auto& t : tasks)
        if (t.split == split)
            out.push_back(t.task_id);
    return out;
}

std::optional<std::size_t> Benchmark::value_index(const TokenSeq& v) const
{
    auto it = std::find(value_pool.begin(), value_pool.end(), v);
    if (it == value_pool.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - value_pool.begin());
}

bool Benchmark::same_content(const Benchmark& o) const
{
    return screens == o.screens && tasks == o.tasks && vocab == o.vocab && value_pool == o.value_pool;
}

SplitCounts split_counts(const BenchmarkSpec& spec)
{
    SplitCounts c;
    c.held_out_task = static_cast<int>(std::lround(spec.held_out_task * spec.tasks));
    c.held_out_screen = static_cast<int>(std::lround(spec.held_out_screen * spec.tasks));
    c.held_out_domain = static_cast<int>(std::lround(spec.held_out_domain * spec.tasks));
    c.train = spec.tasks - c.held_out_task - c.held_out_screen - c.held_out_domain;
    return c;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

constexpr int kGridSide = 4;

constexpr std::array<std::string_view, 12> kRoleNames{
    "button", "link", "input", "dropdown", "checkbox", "tab", "icon", "menu", "image", "slider", "toggle", "radio"};

std::string numbered(std::string_view prefix, int i)
{
    std::string n = std::to_string(i);
    if (n.size() < 2)
        n.insert(0, 2 - n.size(), '0');
    return std::string(prefix) + n;
}

std::string role_name(int i)
{
    return i < static_cast<int>(kRoleNames.size()) ? std::string(kRoleNames[static_cast<std::size_t>(i)]) : numbered("role", i);
}

double choose(int n, int k)
{
    if (k < 0 || k > n)
        return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i)
        r = r * (n - k + i) / i;
    return r;
}

struct DraftElement {
    int role = 0;            // generation role id
    std::vector<int> labels; // generation label ids, sorted
    BBox bbox;
    std::vector<ActionType> affordances{ActionType::Click};
    bool target = false;
    bool reserved = false; // ambiguity partner of some target

    bool free() const { return !target && !reserved; }
    bool same_attrs(const DraftElement& o) const { return role == o.role && labels == o.labels; }
};

struct DraftScreen {
    int group = 0; // 0 train screens, 1 held-out screens, 2 held-out domain
    int domain = 0;
    int stage = 0;
    std::vector<DraftElement> elements;
    // (role, label, element) of every placed target: no other element may
    // carry both that role and that label
    std::vector<std::tuple<int, int, std::size_t>> claims;
};

struct StepIntent {
    int role = 0;
    int label = 0;
    ActionType type = ActionType::Click;
    TokenSeq value;
};

class Generator {
public:
    Generator(std::uint64_t seed, const BenchmarkSpec& spec) : spec_(spec), seed_(seed), rng_(Rng::stream(seed, {0xbe7c})) {}

    Benchmark run();

private:
    void validate();
    void make_label_pools();
    void make_screens();
    void make_intents();
    void make_tasks();
    Benchmark finish();

    std::vector<int> draw_labels(int domain, std::optional<int> must_include);
    bool distinct_from_others(const std::vector<DraftElement>& els, std::size_t idx) const;
    bool place_target(DraftScreen& screen, const StepIntent& intent, int& element_index);

    const BenchmarkSpec& spec_;
    std::uint64_t seed_;
    Rng rng_;
    SplitCounts counts_;
    int train_domains_ = 1;
    int held_out_domain_ = -1;
    std::vector<int> common_labels_;
    std::vector<std::vector<int>> domain_labels_;
    std::vector<DraftScreen> screens_;
    std::vector<std::vector<StepIntent>> intents_;

    struct DraftTask {
        int intent = 0;
        Split split = Split::Train;
        std::vector<std::pair<int, int>> steps; // (screen, element index)
    };
    std::vector<DraftTask> tasks_;
};

void Generator::validate()
{
    const auto& s = spec_;
    auto require = [](bool ok, const char* name, const std::string& detail) {
        if (!ok)
            throw SpecConstraintError(name, detail);
    };
    require(s.screens >= 1 && s.elements_per_screen >= 1 && s.tasks >= 1 && s.steps_per_task >= 1 && s.role_tokens >= 1 &&
                s.label_tokens >= 1 && s.labels_per_element >= 1 && s.domains >= 1 && s.value_tokens >= 1 &&
                s.tasks_per_intent >= 1,
            "positive_counts", "all counts must be >= 1");
    require(s.elements_per_screen <= kGridSide * kGridSide, "grid_capacity",
            "elements_per_screen must be <= " + std::to_string(kGridSide * kGridSide));
    for (double f : {s.held_out_task, s.held_out_screen, s.held_out_domain})
        require(f >= 0.0 && f < 1.0, "split_fractions", "each held-out fraction must be in [0, 1)");
    counts_ = split_counts(s);
    require(counts_.train >= 1, "split_fractions", "held-out fractions leave no train tasks");
    require(counts_.held_out_domain == 0 || s.domains >= 2, "held_out_domain_needs_two_domains",
            "a held-out domain requires domains >= 2");
    train_domains_ = s.domains - (counts_.held_out_domain > 0 ? 1 : 0);
    held_out_domain_ = counts_.held_out_domain > 0 ? s.domains - 1 : -1;

    const int per_domain = s.label_tokens / (2 * s.domains);
    const int common = s.label_tokens - per_domain * s.domains;
    const int pool = common + per_domain;
    require(pool >= s.labels_per_element, "labels_per_element",
            "labels_per_element exceeds the per-domain label pool (" + std::to_string(pool) + ")");
    require(s.role_tokens * choose(pool, s.labels_per_element) >= s.elements_per_screen, "distinct_attribute_sets",
            "role_tokens * C(label pool, labels_per_element) must be >= elements_per_screen so every element has a "
            "uniquely identifying description");
    require(s.value_tokens >= 3, "value_tokens", "value_tokens must be >= 3");

    const int hd_screens = counts_.held_out_domain > 0
                               ? std::max(s.steps_per_task, static_cast<int>(std::lround(s.held_out_domain * s.screens)))
                               : 0;
    const int hs_screens = counts_.held_out_screen > 0
                               ? std::max(s.steps_per_task, static_cast<int>(std::lround(s.held_out_screen * s.screens)))
                               : 0;
    require(s.screens - hd_screens - hs_screens >= s.steps_per_task, "screens_per_split",
            "need at least steps_per_task screens in every screen group");
}

void Generator::make_label_pools()
{
    const int per_domain = spec_.label_tokens / (2 * spec_.domains);
    std::vector<int> labels(static_cast<std::size_t>(spec_.label_tokens));
    std::iota(labels.begin(), labels.end(), 0);
    rng_.shuffle(labels);
    domain_labels_.assign(static_cast<std::size_t>(spec_.domains), {});
    std::size_t next = 0;
    for (int d = 0; d < spec_.domains; ++d)
        for (int i = 0; i < per_domain; ++i)
            domain_labels_[static_cast<std::size_t>(d)].push_back(labels[next++]);
    common_labels_.assign(labels.begin() + static_cast<std::ptrdiff_t>(next), labels.end());
    std::sort(common_labels_.begin(), common_labels_.end());
}

std::vector<int> Generator::draw_labels(int domain, std::optional<int> must_include)
{
    std::vector<int> pool = common_labels_;
    const auto& own = domain_labels_[static_cast<std::size_t>(domain)];
    pool.insert(pool.end(), own.begin(), own.end());
    std::vector<int> out;
    if (must_include) {
        out.push_back(*must_include);
        pool.erase(std::remove(pool.begin(), pool.end(), *must_include), pool.end());
    }
    rng_.shuffle(pool);
    for (std::size_t i = 0; out.size() < static_cast<std::size_t>(spec_.labels_per_element); ++i)
        out.push_back(pool.at(i));
    std::sort(out.begin(), out.end());
    return out;
}

bool Generator::distinct_from_others(const std::vector<DraftElement>& els, std::size_t idx) const
{
    for (std::size_t j = 0; j < els.size(); ++j)
        if (j != idx && els[j].same_attrs(els[idx]))
            return false;
    return true;
}

void Generator::make_screens()
{
    const auto& s = spec_;
    const int hd = counts_.held_out_domain > 0
                       ? std::max(s.steps_per_task, static_cast<int>(std::lround(s.held_out_domain * s.screens)))
                       : 0;
    const int hs = counts_.held_out_screen > 0
                       ? std::max(s.steps_per_task, static_cast<int>(std::lround(s.held_out_screen * s.screens)))
                       : 0;
    const int tr = s.screens - hd - hs;
    const std::array<int, 3> group_sizes{tr, hs, hd};

    for (int g = 0; g < 3; ++g) {
        for (int i = 0; i < group_sizes[static_cast<std::size_t>(g)]; ++i) {
            DraftScreen scr;
            scr.group = g;
            scr.stage = i % s.steps_per_task;
            scr.domain = g == 2 ? held_out_domain_ : (i / s.steps_per_task) % train_domains_;

            std::vector<int> cells(kGridSide * kGridSide);
            std::iota(cells.begin(), cells.end(), 0);
            rng_.shuffle(cells);
            const double side = 1.0 / kGridSide;
            for (int e = 0; e < s.elements_per_screen; ++e) {
                DraftElement el;
                const int c = cells[static_cast<std::size_t>(e)];
                const double cx = (c % kGridSide) * side;
                const double cy = (c / kGridSide) * side;
                el.bbox = {cx + side * (0.02 + 0.2 * rng_.uniform()), cy + side * (0.02 + 0.2 * rng_.uniform()),
                           cx + side * (0.98 - 0.2 * rng_.uniform()), cy + side * (0.98 - 0.2 * rng_.uniform())};
                scr.elements.push_back(std::move(el));
            }
            // sort by reading order so element ids follow the layout
            std::sort(scr.elements.begin(), scr.elements.end(), [](const DraftElement& a, const DraftElement& b) {
                return std::pair(a.bbox.y0, a.bbox.x0) < std::pair(b.bbox.y0, b.bbox.x0);
            });
            for (std::size_t e = 0; e < scr.elements.size(); ++e) {
                auto& el = scr.elements[e];
                do {
                    el.role = static_cast<int>(rng_.below(static_cast<std::size_t>(s.role_tokens)));
                    el.labels = draw_labels(scr.domain, std::nullopt);
                } while (!distinct_from_others(scr.elements, e)); // unassigned elements have no labels yet
            }
            screens_.push_back(std::move(scr));
        }
    }
}

void Generator::make_intents()
{
    const int n = std::max(1, (counts_.train + spec_.tasks_per_intent - 1) / spec_.tasks_per_intent);
    for (int i = 0; i < n; ++i) {
        std::vector<StepIntent> steps;
        for (int j = 0; j < spec_.steps_per_task; ++j) {
            StepIntent si;
            si.role = static_cast<int>(rng_.below(static_cast<std::size_t>(spec_.role_tokens)));
            si.label = common_labels_[rng_.below(common_labels_.size())];
            const double u = rng_.uniform();
            si.type = u < 0.5 ? ActionType::Click : (u < 0.8 ? ActionType::Type : ActionType::Select);
            if (si.type != ActionType::Click) {
                const std::size_t len = 1 + rng_.below(si.type == ActionType::Type ? 3 : 2);
                std::vector<int> toks(static_cast<std::size_t>(spec_.value_tokens));
                std::iota(toks.begin(), toks.end(), 0);
                rng_.shuffle(toks);
                for (std::size_t t = 0; t < len; ++t)
                    si.value.push_back(numbered("v", toks[t]));
            }
            steps.push_back(std::move(si));
        }
        intents_.push_back(std::move(steps));
    }
}

namespace {

bool has_label(const DraftElement& e, int label) { return std::binary_search(e.labels.begin(), e.labels.end(), label); }

bool breaks_claim(const std::vector<DraftElement>& els, std::size_t idx,
                  const std::vector<std::tuple<int, int, std::size_t>>& claims)
{
    for (const auto& [role, label, owner] : claims)
        if (owner != idx && els[idx].role == role && has_label(els[idx], label))
            return true;
    return false;
}

} // namespace

bool Generator::place_target(DraftScreen& screen, const StepIntent& intent, int& element_index)
{
    auto els = screen.elements; // work on a copy, commit on success
    auto claims = screen.claims;
    const bool need_partner = els.size() >= 2;

    // relabel a free element until it is distinct, honours the claims and
    // (optionally) avoids `avoid_label`
    auto relabel = [&](std::size_t idx, std::optional<int> must, std::optional<int> avoid) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            els[idx].labels = draw_labels(screen.domain, must);
            if (avoid && has_label(els[idx], *avoid))
                continue;
            if (distinct_from_others(els, idx) && !breaks_claim(els, idx, claims))
                return true;
        }
        return false;
    };

    std::vector<std::size_t> matches;
    for (std::size_t i = 0; i < els.size(); ++i)
        if (els[i].role == intent.role && has_label(els[i], intent.label))
            matches.push_back(i);

    std::optional<std::size_t> target;
    if (!matches.empty()) {
        // keep one match (a committed target if there is one) and relabel the rest
        auto keep = std::find_if(matches.begin(), matches.end(), [&](std::size_t i) { return !els[i].free(); });
        target = keep != matches.end() ? *keep : matches.front();
        for (std::size_t i : matches)
            if (i != *target && (!els[i].free() || !relabel(i, std::nullopt, intent.label)))
                return false;
    } else {
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < els.size(); ++i)
            if (els[i].free())
                free.push_back(i);
        if (free.empty())
            return false;
        const std::size_t idx = free[rng_.below(free.size())];
        els[idx].role = intent.role;
        if (!relabel(idx, intent.label, std::nullopt))
            return false;
        els[idx].affordances = {ActionType::Click};
        target = idx;
    }
    claims.emplace_back(intent.role, intent.label, *target);
    if (breaks_claim(els, *target, claims))
        return false;
    els[*target].target = true;
    auto& aff = els[*target].affordances;
    if (std::find(aff.begin(), aff.end(), intent.type) == aff.end()) {
        aff.push_back(intent.type);
        std::sort(aff.begin(), aff.end());
    }

    if (need_partner) {
        bool has_partner = false;
        for (std::size_t i = 0; i < els.size(); ++i)
            if (i != *target && els[i].role == intent.role)
                has_partner = true;
        if (!has_partner) {
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < els.size(); ++i)
                if (i != *target && els[i].free())
                    free.push_back(i);
            if (free.empty())
                return false;
            const std::size_t idx = free[rng_.below(free.size())];
            els[idx].role = intent.role;
            if (!relabel(idx, std::nullopt, intent.label))
                return false;
            els[idx].reserved = true;
        }
        // the partner of a reused target must never be rewritten later
        for (std::size_t i = 0; i < els.size(); ++i)
            if (i != *target && els[i].role == intent.role && !els[i].target) {
                els[i].reserved = true;
                break;
            }
    }
    screen.elements = std::move(els);
    screen.claims = std::move(claims);
    element_index = static_cast<int>(*target);
    return true;
}

void Generator::make_tasks()
{
    std::vector<Split> splits;
    splits.insert(splits.end(), static_cast<std::size_t>(counts_.train), Split::Train);
    splits.insert(splits.end(), static_cast<std::size_t>(counts_.held_out_task), Split::HeldOutTask);
    splits.insert(splits.end(), static_cast<std::size_t>(counts_.held_out_screen), Split::HeldOutScreen);
    splits.insert(splits.end(), static_cast<std::size_t>(counts_.held_out_domain), Split::HeldOutDomain);
    rng_.shuffle(splits);

    int train_seen = 0;
    for (Split split : splits) {
        DraftTask task;
        task.split = split;
        task.intent = split == Split::Train ? train_seen++ % static_cast<int>(intents_.size())
                                            : static_cast<int>(rng_.below(intents_.size()));
        const int group = split == Split::HeldOutScreen ? 1 : (split == Split::HeldOutDomain ? 2 : 0);
        const int domain = group == 2 ? held_out_domain_ : static_cast<int>(rng_.below(static_cast<std::size_t>(train_domains_)));

        for (int j = 0; j < spec_.steps_per_task; ++j) {
            std::vector<int> preferred, fallback;
            for (std::size_t si = 0; si < screens_.size(); ++si) {
                const auto& scr = screens_[si];
                if (scr.group != group || scr.stage != j)
                    continue;
                (scr.domain == domain ? preferred : fallback).push_back(static_cast<int>(si));
            }
            rng_.shuffle(preferred);
            rng_.shuffle(fallback);
            preferred.insert(preferred.end(), fallback.begin(), fallback.end());
            const auto& intent = intents_[static_cast<std::size_t>(task.intent)][static_cast<std::size_t>(j)];
            bool placed = false;
            for (int si : preferred) {
                int el = 0;
                if (place_target(screens_[static_cast<std::size_t>(si)], intent, el)) {
                    task.steps.emplace_back(si, el);
                    placed = true;
                    break;
                }
            }
            if (!placed)
                throw SpecConstraintError("target_capacity",
                                          "could not place a target with a unique and an ambiguous description; "
                                          "increase screens or elements_per_screen, or reduce tasks");
        }
        tasks_.push_back(std::move(task));
    }
}

Benchmark Generator::finish()
{
    // canonical vocabulary: sorted names of the tokens actually used
    std::set<std::string> used;
    auto label_name = [](int l) { return numbered("w", l); };
    for (const auto& scr : screens_)
        for (const auto& el : scr.elements) {
            used.insert(role_name(el.role));
            for (int l : el.labels)
                used.insert(label_name(l));
        }
    Benchmark b;
    b.seed = seed_;
    b.vocab = Vocabulary(std::vector<std::string>(used.begin(), used.end()));

    for (std::size_t si = 0; si < screens_.size(); ++si) {
        Screen scr;
        scr.screen_id = static_cast<int>(si);
        const auto& draft = screens_[si];
        for (std::size_t e = 0; e < draft.elements.size(); ++e) {
            const auto& d = draft.elements[e];
            Element el;
            el.id = static_cast<int>(e);
            el.bbox = d.bbox;
            el.role = b.vocab.id(role_name(d.role));
            for (int l : d.labels)
                el.labels.push_back(b.vocab.id(label_name(l)));
            std::sort(el.labels.begin(), el.labels.end());
            el.affordances = d.affordances;
            scr.elements.push_back(std::move(el));
        }
        b.screens.push_back(std::move(scr));
    }
    for (std::size_t ti = 0; ti < tasks_.size(); ++ti) {
        const auto& d = tasks_[ti];
        Task t;
        t.task_id = static_cast<int>(ti);
        t.q_feature = d.intent;
        t.split = d.split;
        for (std::size_t j = 0; j < d.steps.size(); ++j) {
            const auto& intent = intents_[static_cast<std::size_t>(d.intent)][j];
            TaskStep st;
            st.screen_id = d.steps[j].first;
            st.target_element_id = d.steps[j].second;
            st.gt_type = intent.type;
            st.gt_value = intent.value;
            t.steps.push_back(std::move(st));
        }
        b.tasks.push_back(std::move(t));
    }
    b.value_pool = derive_value_pool(b.tasks);
    return b;
}

Benchmark Generator::run()
{
    validate();
    make_label_pools();
    make_screens();
    make_intents();
    make_tasks();
    return finish();
}

void check_benchmark(const Benchmark& b, const std::string& source)
{
    auto fail = [&](const std::string& what) { throw ParseError(source, 0, what); };
    for (std::size_t si = 0; si < b.screens.size(); ++si) {
        const auto& scr = b.screens[si];
        if (scr.elements.empty())
            fail("screen " + std::to_string(si) + " has no elements");
        std::set<int> ids;
        for (std::size_t i = 0; i < scr.elements.size(); ++i) {
            const auto& e = scr.elements[i];
            if (!e.bbox.valid())
                fail("screen " + std::to_string(si) + " element " + std::to_string(e.id) + " has a degenerate bbox");
            if (!ids.insert(e.id).second)
                fail("screen " + std::to_string(si) + " repeats element id " + std::to_string(e.id));
            for (std::size_t j = i + 1; j < scr.elements.size(); ++j)
                if (e.bbox.overlaps(scr.elements[j].bbox))
                    fail("screen " + std::to_string(si) + " has overlapping elements");
        }
    }
    for (const auto& t : b.tasks) {
        if (t.steps.empty())
            fail("task " + std::to_string(t.task_id) + " has no steps");
        for (const auto& st : t.steps) {
            if (st.screen_id < 0 || static_cast<std::size_t>(st.screen_id) >= b.screens.size())
                fail("task " + std::to_string(t.task_id) + " references unknown screen");
            (void)b.screen(st.screen_id).element(st.target_element_id);
            if (has_value_semantics(st.gt_type) == st.gt_value.empty())
                fail("task " + std::to_string(t.task_id) + " value must be NONE iff the type is CLICK");
        }
    }
}

} // namespace

Benchmark build_benchmark(std::uint64_t seed, const BenchmarkSpec& spec)
{
    return Generator(seed, spec).run();
}

Observation observe(const Benchmark& bench, const Task& task, int step_index)
{
    if (step_index < 0 || static_cast<std::size_t>(step_index) >= task.steps.size())
        throw std::out_of_range("step_index " + std::to_string(step_index) + " outside task " +
                                std::to_string(task.task_id) + " with " + std::to_string(task.steps.size()) + " steps");
    const auto& scr = bench.screen(task.steps[static_cast<std::size_t>(step_index)].screen_id);
    return Observation{scr.screen_id, scr.elements, step_index};
}

StepOutcome transition(const Benchmark& bench, const Task& task, int step_index, const Action& action)
{
    const auto o = observe(bench, task, step_index);
    const auto& gt = task.steps[static_cast<std::size_t>(step_index)];
    StepOutcome out;
    out.element_hit = contains(o.element(gt.target_element_id).bbox, action.coor);
    out.type_hit = type_reward(action.type, gt.gt_type) == 1;
    out.value_hit = value_reward(action.value, gt.gt_value) == 1;
    out.step_success = out.element_hit && out.type_hit && out.value_hit;
    out.next_step = step_index + 1;
    return out;
}

std::vector<int> matching_elements(std::span<const Element> elements, std::span<const TokenId> tokens)
{
    std::vector<int> out;
    for (const auto& e : elements)
        if (std::all_of(tokens.begin(), tokens.end(), [&](TokenId t) { return e.has_token(t); }))
            out.push_back(e.id);
    return out;
}

std::vector<PlanCandidate> enumerate_plan_candidates(const Observation& o, std::optional<int> target_hint)
{
    std::vector<PlanCandidate> out;
    std::set<std::vector<TokenId>> seen;
    auto push = [&](std::vector<TokenId> toks) {
        if (!seen.insert(toks).second)
            return;
        PlanCandidate c;
        c.candidate_id = static_cast<int>(out.size());
        c.matching_elements = matching_elements(o.elements, toks);
        c.tokens = std::move(toks);
        out.push_back(std::move(c));
    };
    for (const auto& e : o.elements) {
        push({e.role});
        for (TokenId l : e.labels)
            push({e.role, l});
        push(e.attributes());
    }
    if (target_hint) {
        std::erase_if(out, [&](const PlanCandidate& c) {
            return std::find(c.matching_elements.begin(), c.matching_elements.end(), *target_hint) ==
                   c.matching_elements.end();
        });
    }
    return out;
}

std::vector<TokenSeq> derive_value_pool(std::span<const Task> tasks)
{
    std::set<TokenSeq> pool{TokenSeq{}};
    for (const auto& t : tasks)
        for (const auto& st : t.steps) {
            const auto& v = st.gt_value;
            if (v.empty())
                continue;
            pool.insert(v);
            for (const auto& tok : v)
                pool.insert(TokenSeq{tok});
            if (v.size() >= 2)
                pool.insert(TokenSeq(v.begin(), v.end() - 1));
        }
    return {pool.begin(), pool.end()};
}

namespace detail {
void check_benchmark_content(const Benchmark& b, const std::string& source) { check_benchmark(b, source); }
} // namespace detail

} // namespace coepg
