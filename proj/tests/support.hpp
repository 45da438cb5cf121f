#pragma once

#include <coepg/gui_env.hpp>
#include <coepg/loop.hpp>
#include <coepg/policy.hpp>

#include <filesystem>
#include <string>
#include <unistd.h>

namespace testsupport {

inline const coepg::Benchmark& default_bench()
{
    static const coepg::Benchmark b = coepg::build_benchmark(2025, coepg::BenchmarkSpec{});
    return b;
}

inline coepg::Element make_element(int id, coepg::BBox box, int role, std::vector<int> labels = {})
{
    coepg::Element e;
    e.id = id;
    e.bbox = box;
    e.role = role;
    e.labels = std::move(labels);
    e.affordances = {coepg::ActionType::Click};
    return e;
}

// Two side-by-side elements: A{0} on the left, B{0, 1} on the right.
inline coepg::Observation two_elements()
{
    coepg::Observation o;
    o.screen_id = 0;
    o.elements = {make_element(0, {0.0, 0.0, 0.4, 0.4}, 0), make_element(1, {0.5, 0.5, 0.9, 0.9}, 0, {1})};
    return o;
}

// Fresh scratch directory per test name.
inline std::string scratch(const std::string& name)
{
    namespace fs = std::filesystem;
    const auto p = fs::temp_directory_path() / ("coepg_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

// A grounder that prefers elements sharing the fewest tokens with the plan.
inline coepg::GrounderModel anti_grounder(std::size_t vocab)
{
    auto g = coepg::make_grounder(vocab, "anti");
    for (std::size_t t = 0; t < vocab; ++t)
        g.affinity[t * vocab + t] = -10.0;
    return g;
}

} // namespace testsupport
