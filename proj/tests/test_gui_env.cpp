#include "support.hpp"

#include <coepg/errors.hpp>
#include <coepg/gui_env.hpp>

#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace coepg;
using testsupport::default_bench;

namespace {

std::string serialize(const Benchmark& b)
{
    std::ostringstream s;
    write_benchmark(b, s);
    return s.str();
}

bool has_candidate(const Observation& o, const std::vector<TokenId>& tokens, std::vector<int>* matches = nullptr)
{
    for (const auto& c : enumerate_plan_candidates(o))
        if (c.tokens == tokens) {
            if (matches)
                *matches = c.matching_elements;
            return true;
        }
    return false;
}

} // namespace

TEST_SUITE("gui_env") {

TEST_CASE("same seed and settings regenerate the same bytes")
{
    const auto a = build_benchmark(7, BenchmarkSpec{});
    const auto b = build_benchmark(7, BenchmarkSpec{});
    CHECK(a.same_content(b));
    CHECK(serialize(a) == serialize(b));
    CHECK(serialize(a) != serialize(build_benchmark(8, BenchmarkSpec{})));
}

TEST_CASE("one element per screen leaves nothing ambiguous")
{
    BenchmarkSpec spec;
    spec.elements_per_screen = 1;
    spec.screens = 200;
    spec.tasks = 20;
    const auto b = build_benchmark(7, spec);
    for (const auto& t : b.tasks)
        for (int s = 0; s < static_cast<int>(t.steps.size()); ++s)
            for (const auto& c : enumerate_plan_candidates(observe(b, t, s)))
                CHECK(c.matching_elements.size() == 1);
}

TEST_CASE("split sizes follow the configured fractions")
{
    const BenchmarkSpec spec;
    const auto& b = default_bench();
    const auto task = static_cast<int>(std::lround(spec.tasks * spec.held_out_task));
    const auto screen = static_cast<int>(std::lround(spec.tasks * spec.held_out_screen));
    const auto domain = static_cast<int>(std::lround(spec.tasks * spec.held_out_domain));
    CHECK(task == 12);
    CHECK(screen == 9);
    CHECK(domain == 9);
    CHECK(b.task_ids(Split::HeldOutTask).size() == 12);
    CHECK(b.task_ids(Split::HeldOutScreen).size() == 9);
    CHECK(b.task_ids(Split::HeldOutDomain).size() == 9);
    CHECK(b.task_ids(Split::Train).size() == 30);
    const auto counts = split_counts(spec);
    CHECK(counts.train == 30);
    CHECK(counts.held_out_task == 12);
}

TEST_CASE("every target has a unique and an ambiguous description")
{
    const auto& b = default_bench();
    for (const auto& t : b.tasks)
        for (int s = 0; s < static_cast<int>(t.steps.size()); ++s) {
            const auto o = observe(b, t, s);
            const int target = t.steps[static_cast<std::size_t>(s)].target_element_id;
            bool unique = false, ambiguous = false;
            for (const auto& c : enumerate_plan_candidates(o)) {
                const auto& m = c.matching_elements;
                if (m.size() == 1 && m[0] == target)
                    unique = true;
                if (m.size() > 1 && std::find(m.begin(), m.end(), target) != m.end())
                    ambiguous = true;
            }
            CHECK_MESSAGE(unique, "task " << t.task_id << " step " << s);
            CHECK_MESSAGE(ambiguous, "task " << t.task_id << " step " << s);
        }
}

TEST_CASE("splits are disjoint in tasks and held-out screens")
{
    const auto& b = default_bench();
    std::set<int> train_screens, held_screens;
    for (const auto& t : b.tasks)
        for (const auto& s : t.steps) {
            if (t.split == Split::Train)
                train_screens.insert(s.screen_id);
            if (t.split == Split::HeldOutScreen)
                held_screens.insert(s.screen_id);
        }
    for (int s : held_screens)
        CHECK(train_screens.count(s) == 0);
    std::size_t total = 0;
    for (Split s : kSplits)
        total += b.task_ids(s).size();
    CHECK(total == b.tasks.size());
}

TEST_CASE("screens are valid: boxes inside the canvas and pairwise disjoint")
{
    for (const auto& s : default_bench().screens) {
        for (std::size_t i = 0; i < s.elements.size(); ++i) {
            CHECK(s.elements[i].bbox.valid());
            CHECK_FALSE(s.elements[i].attributes().empty());
            for (std::size_t j = i + 1; j < s.elements.size(); ++j)
                CHECK_FALSE(s.elements[i].bbox.overlaps(s.elements[j].bbox));
        }
    }
}

TEST_CASE("gt value is NONE exactly for clicks")
{
    for (const auto& t : default_bench().tasks)
        for (const auto& s : t.steps)
            CHECK(s.gt_value.empty() == !has_value_semantics(s.gt_type));
}

TEST_CASE("impossible specs name the constraint")
{
    BenchmarkSpec spec;
    spec.role_tokens = 1;
    spec.label_tokens = 2;
    CHECK_THROWS_AS(build_benchmark(1, spec), SpecConstraintError);
    try {
        build_benchmark(1, spec);
    } catch (const SpecConstraintError& e) {
        CHECK(e.constraint() == "distinct_attribute_sets");
    }
}

TEST_CASE("observe")
{
    const auto& b = default_bench();
    const auto& t = b.task(0);
    const auto o = observe(b, t, 0);
    CHECK(o.screen_id == t.steps[0].screen_id);
    CHECK(o.elements == b.screen(o.screen_id).elements);
    CHECK(o == observe(b, t, 0));
    CHECK_THROWS_AS(observe(b, t, static_cast<int>(t.steps.size())), std::out_of_range);
    CHECK_THROWS_AS(observe(b, t, -1), std::out_of_range);
}

TEST_CASE("transition flags")
{
    const auto& b = default_bench();
    // pick a step with a value so all three flags are exercised
    const Task* task = nullptr;
    int step = 0;
    for (const auto& t : b.tasks)
        for (int s = 0; s < static_cast<int>(t.steps.size()) && !task; ++s)
            if (!t.steps[static_cast<std::size_t>(s)].gt_value.empty()) {
                task = &t;
                step = s;
            }
    REQUIRE(task);
    const auto& gt = task->steps[static_cast<std::size_t>(step)];
    const auto box = b.screen(gt.screen_id).element(gt.target_element_id).bbox;

    const auto exact = transition(b, *task, step, {box.center(), gt.gt_type, gt.gt_value});
    CHECK(exact.element_hit);
    CHECK(exact.type_hit);
    CHECK(exact.value_hit);
    CHECK(exact.step_success);
    CHECK(exact.next_step == step + 1);

    const auto wrong = gt.gt_type == ActionType::Type ? ActionType::Select : ActionType::Type;
    const auto wrong_type = transition(b, *task, step, {box.center(), wrong, gt.gt_value});
    CHECK(wrong_type.element_hit);
    CHECK_FALSE(wrong_type.type_hit);
    CHECK_FALSE(wrong_type.step_success);

    const auto corner = transition(b, *task, step, {{box.x0, box.y0}, gt.gt_type, gt.gt_value});
    CHECK(corner.element_hit);
    CHECK(corner.step_success);

    const auto miss = transition(b, *task, step, {{box.x0 - 1e-9, box.y0}, gt.gt_type, gt.gt_value});
    CHECK_FALSE(miss.element_hit);
    CHECK(miss.next_step == step + 1); // teacher forced
}

TEST_CASE("containment includes every edge")
{
    const BBox b{0.25, 0.5, 0.75, 0.625};
    CHECK(contains(b, {b.x0, b.y0}));
    CHECK(contains(b, {b.x1, b.y1}));
    CHECK(contains(b, {b.x0, b.y1}));
    CHECK(contains(b, {b.x1, b.y0}));
    CHECK_FALSE(contains(b, {std::nextafter(b.x0, 0.0), b.y0}));
}

TEST_CASE("candidate matching uses superset semantics")
{
    const auto o = testsupport::two_elements(); // A{button}, B{button, search}
    std::vector<int> m;
    REQUIRE(has_candidate(o, {0}, &m));
    CHECK(m == std::vector<int>{0, 1});
    REQUIRE(has_candidate(o, {0, 1}, &m));
    CHECK(m == std::vector<int>{1});
    CHECK(enumerate_plan_candidates(o) == enumerate_plan_candidates(o));
}

TEST_CASE("candidate lists are recomputed and consistent on the benchmark")
{
    const auto& b = default_bench();
    const auto& t = b.task(3);
    const auto o = observe(b, t, 1);
    const auto all = enumerate_plan_candidates(o);
    for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(all[i].candidate_id == static_cast<int>(i));
        CHECK_FALSE(all[i].tokens.empty());
        CHECK(all[i].matching_elements == matching_elements(o.elements, all[i].tokens));
    }
    const int target = t.steps[1].target_element_id;
    for (const auto& c : enumerate_plan_candidates(o, target)) {
        CHECK(all[static_cast<std::size_t>(c.candidate_id)] == c);
        CHECK(std::find(c.matching_elements.begin(), c.matching_elements.end(), target) != c.matching_elements.end());
    }
}

TEST_CASE("benchmark file round trip")
{
    const auto& b = default_bench();
    std::istringstream in(serialize(b));
    const auto back = read_benchmark(in);
    CHECK(back.same_content(b));
    CHECK(serialize(back) == serialize(b));
}

TEST_CASE("corrupt benchmark lines are reported with their number")
{
    auto text = serialize(default_bench());
    const auto first_nl = text.find('\n');
    const auto second_nl = text.find('\n', first_nl + 1);
    text.replace(first_nl + 1, second_nl - first_nl - 1, "{\"screen_id\": ");
    std::istringstream in(text);
    try {
        read_benchmark(in, "bench.jsonl");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.file() == "bench.jsonl");
        CHECK(e.line() == 2);
    }
}

TEST_CASE("value pool starts with NONE and holds every gt value")
{
    const auto& b = default_bench();
    REQUIRE_FALSE(b.value_pool.empty());
    CHECK(b.value_pool[0].empty());
    for (const auto& t : b.tasks)
        for (const auto& s : t.steps)
            CHECK(b.value_index(s.gt_value).has_value());
}

}
