#include "support.hpp"

#include <coepg/datapool.hpp>
#include <coepg/errors.hpp>

#include <doctest.h>

#include <set>
#include <sstream>

using namespace coepg;
using testsupport::default_bench;

namespace {

constexpr int kBuckets = 1 << 20;

VerifierPool pool_of(std::vector<GrounderModel> refs, VerifyRule rule = VerifyRule::Majority)
{
    VerifierPool p;
    p.references = std::move(refs);
    p.rule = rule;
    return p;
}

PlannerModel tagged(int iteration)
{
    PlannerModel m;
    m.iteration = iteration;
    m.tag = "pi" + std::to_string(iteration);
    return m;
}

DatasetRecord record(int task, int step, std::vector<TokenId> plan)
{
    DatasetRecord r;
    r.task_id = task;
    r.step_index = step;
    r.plan = std::move(plan);
    r.bbox = {0.1, 0.1, 0.2, 0.2};
    return r;
}

} // namespace

TEST_SUITE("datapool") {

TEST_CASE("verifiers that always ground correctly keep everything")
{
    BenchmarkSpec spec;
    spec.elements_per_screen = 1;
    spec.screens = 200;
    spec.tasks = 20;
    const auto b = build_benchmark(7, spec);
    const auto V = b.vocab.size();
    const auto round = seed_dataset(b, SeedGenerator{0.7}, pool_of({make_grounder(V), make_grounder(V)}), 3, kBuckets, 1);
    CHECK(round.stats.generated > 0);
    CHECK(round.stats.retained == round.stats.generated);
    CHECK(round.stats.purity == 1.0);
}

TEST_CASE("verifiers that never hit leave D_0 empty")
{
    const auto& b = default_bench();
    const auto anti = testsupport::anti_grounder(b.vocab.size());
    const auto round = seed_dataset(b, SeedGenerator{0.0}, pool_of({anti, anti}, VerifyRule::Any), 3, kBuckets, 1);
    CHECK(round.stats.generated > 0);
    CHECK(round.data.empty());
    CHECK(round.stats.retained == 0);
    CHECK(round.stats.purity == 0.0);
}

TEST_CASE("diversity is records per covered step")
{
    Dataset d;
    // 10 steps, 17 retained plans
    for (int i = 0; i < 10; ++i)
        d.push_back(record(i, 0, {1}));
    for (int i = 0; i < 7; ++i)
        d.push_back(record(i, 0, {1, 2}));
    std::size_t covered = 0;
    CHECK(dataset_diversity(d, &covered) == doctest::Approx(1.7).epsilon(1e-15));
    CHECK(covered == 10);
    CHECK(dataset_diversity(Dataset{}) == 0.0);
}

TEST_CASE("verification quorum")
{
    CHECK(verify_hits(std::vector<int>{1, 1, 0}, VerifyRule::Majority));
    CHECK_FALSE(verify_hits(std::vector<int>{1, 0, 0}, VerifyRule::Majority));
    CHECK_FALSE(verify_hits(std::vector<int>{1, 1, 0}, VerifyRule::All));
    CHECK(verify_hits(std::vector<int>{1, 1, 1}, VerifyRule::All));
    CHECK(verify_hits(std::vector<int>{0, 0, 1}, VerifyRule::Any));
    // ties round up to accept
    CHECK(verify_hits(std::vector<int>{1, 0}, VerifyRule::Majority));
    CHECK(verify_hits(std::vector<int>{1, 1, 0, 0}, VerifyRule::Majority));
    CHECK_FALSE(verify_hits(std::vector<int>{1, 0, 0, 0}, VerifyRule::Majority));
    CHECK_THROWS(verify_hits(std::vector<int>{}, VerifyRule::Majority));
}

TEST_CASE("verify_plan grounds every verifier")
{
    const auto o = testsupport::two_elements();
    auto hit = make_grounder(4), miss = make_grounder(4);
    hit.affinity[0 * 4 + 1] = -1.0;
    miss.affinity[0 * 4 + 1] = 1.0;
    const std::vector<TokenId> plan{0};
    const BBox target = o.elements[0].bbox;
    const std::vector<const GrounderModel*> hhm{&hit, &hit, &miss}, hmm{&hit, &miss, &miss};
    CHECK(verify_plan(hhm, o, plan, target, VerifyRule::Majority));
    CHECK_FALSE(verify_plan(hmm, o, plan, target, VerifyRule::Majority));
    CHECK_FALSE(verify_plan(hhm, o, plan, target, VerifyRule::All));
}

TEST_CASE("proposals already in D_prev change nothing")
{
    const auto& b = default_bench();
    const auto V = b.vocab.size();
    PlannerPool planners;
    planners.members = {oracle_planner(b, kBuckets)};
    const auto verifiers = pool_of({oracle_grounder(V), oracle_grounder(V)});
    const EnhanceOptions opt{1, 1.0, true};
    const auto first = enhance_dataset(Dataset{}, planners, verifiers, b, opt, 1, 5);
    CHECK(first.data.size() == b.task_ids(Split::Train).size() * 3);
    const auto second = enhance_dataset(first.data, planners, verifiers, b, opt, 2, 6);
    CHECK(second.data == first.data);
}

TEST_CASE("enhancement is deterministic and sorted")
{
    const auto& b = default_bench();
    const auto V = b.vocab.size();
    PlannerPool planners;
    planners.members = {make_planner(b, kBuckets)};
    const auto verifiers = pool_of({reference_grounder(GrounderQuality::Strong, 1, V),
                                    reference_grounder(GrounderQuality::Noisy, 1, V)});
    const auto a = enhance_dataset(Dataset{}, planners, verifiers, b, EnhanceOptions{}, 1, 9);
    const auto c = enhance_dataset(Dataset{}, planners, verifiers, b, EnhanceOptions{}, 1, 9);
    CHECK(a.data == c.data);
    auto sorted = a.data;
    canonicalize(sorted);
    CHECK(sorted == a.data);
    CHECK(a.stats.retained <= a.stats.generated);
    CHECK(a.stats.purity == doctest::Approx(static_cast<double>(a.stats.retained) / static_cast<double>(a.stats.generated)));
    CHECK(a.stats.diversity == doctest::Approx(dataset_diversity(a.data)));
}

TEST_CASE("a stronger verifier pool keeps at least as much")
{
    const auto& b = default_bench();
    const auto V = b.vocab.size();
    PlannerPool planners;
    planners.members = {make_planner(b, kBuckets)};
    const auto strong = reference_grounder(GrounderQuality::Strong, 3, V);
    const auto weak = pool_of({strong, reference_grounder(GrounderQuality::Noisy, 3, V)}, VerifyRule::All);
    const auto better = pool_of({strong, oracle_grounder(V)}, VerifyRule::All);
    const auto rw = enhance_dataset(Dataset{}, planners, weak, b, EnhanceOptions{}, 1, 21);
    const auto rs = enhance_dataset(Dataset{}, planners, better, b, EnhanceOptions{}, 1, 21);
    CHECK(rs.stats.generated == rw.stats.generated);
    CHECK(rs.stats.retained >= rw.stats.retained);
}

TEST_CASE("enhancement needs planners")
{
    const auto V = default_bench().vocab.size();
    CHECK_THROWS_AS(enhance_dataset(Dataset{}, PlannerPool{}, pool_of({make_grounder(V)}), default_bench(),
                                    EnhanceOptions{}, 1, 1),
                    std::invalid_argument);
}

TEST_CASE("rotation keeps the two latest iterations")
{
    std::vector<PlannerModel> pool;
    rotate_pool(pool, tagged(1));
    REQUIRE(pool.size() == 1);
    rotate_pool(pool, tagged(2));
    REQUIRE(pool.size() == 2);
    CHECK(pool[0].iteration == 1);
    CHECK(pool[1].iteration == 2);
    rotate_pool(pool, tagged(3));
    REQUIRE(pool.size() == 2);
    CHECK(pool[0].iteration == 2);
    CHECK(pool[1].iteration == 3);
    auto again = tagged(3);
    again.tag = "replacement";
    rotate_pool(pool, again);
    REQUIRE(pool.size() == 2);
    CHECK(pool[1].tag == "replacement");

    std::vector<GrounderModel> gs;
    for (int k = 1; k <= 6; ++k) {
        GrounderModel g;
        g.iteration = k;
        rotate_pool(gs, g);
        CHECK(gs.size() <= VerifierPool::kCapacity);
        for (std::size_t i = 1; i < gs.size(); ++i)
            CHECK(gs[i].iteration == gs[i - 1].iteration + 1);
        CHECK(gs.back().iteration == k);
    }
}

TEST_CASE("dataset persistence")
{
    const auto dir = testsupport::scratch("datapool_io");
    SUBCASE("empty")
    {
        save_dataset(Dataset{}, dir + "/empty.jsonl");
        CHECK(std::filesystem::file_size(dir + "/empty.jsonl") == 0);
        CHECK(load_dataset(dir + "/empty.jsonl").empty());
    }
    SUBCASE("generated round trip")
    {
        const auto& b = default_bench();
        const auto V = b.vocab.size();
        const auto d = seed_dataset(b, SeedGenerator{}, pool_of({reference_grounder(GrounderQuality::Strong, 1, V),
                                                                 reference_grounder(GrounderQuality::Noisy, 1, V)}),
                                    3, kBuckets, 4)
                           .data;
        REQUIRE_FALSE(d.empty());
        save_dataset(d, dir + "/d.jsonl");
        CHECK(load_dataset(dir + "/d.jsonl") == d);
    }
    SUBCASE("missing bbox names the line")
    {
        Dataset d{record(0, 0, {1}), record(0, 1, {2}), record(1, 0, {3})};
        d[0].value = {"v01"};
        std::ostringstream out;
        write_dataset(d, out);
        auto text = out.str();
        const auto line3 = text.find('\n', text.find('\n') + 1) + 1;
        const auto pos = text.find("\"bbox\"", line3);
        text.erase(pos, text.find(']', pos) + 2 - pos);
        std::istringstream in(text);
        try {
            read_dataset(in, "d.jsonl");
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
            CHECK(std::string(e.what()).find("bbox") != std::string::npos);
        }
    }
    SUBCASE("duplicates are rejected")
    {
        std::ostringstream out;
        write_dataset(Dataset{record(0, 0, {1}), record(0, 0, {1})}, out);
        std::istringstream in(out.str());
        CHECK_THROWS_AS(read_dataset(in), ParseError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("canonical order and dedup")
{
    Dataset d{record(2, 0, {1}), record(0, 1, {2}), record(0, 1, {2}), record(0, 0, {5}), record(0, 0, {1, 2})};
    d[2].iter = 7; // later duplicate is dropped
    canonicalize(d);
    REQUIRE(d.size() == 4);
    CHECK(d[0].plan == std::vector<TokenId>{1, 2});
    CHECK(d[1].plan == std::vector<TokenId>{5});
    CHECK(d[2].iter == 0);
    CHECK(d[3].task_id == 2);
}

TEST_CASE("stats csv")
{
    DataStats s;
    s.k = 2;
    s.generated = 10;
    s.retained = 4;
    s.purity = 0.4;
    s.diversity = 1.25;
    std::ostringstream out;
    write_stats_csv(std::vector<DataStats>{s}, out);
    CHECK(out.str() == "iter,generated,retained,purity,diversity\n2,10,4,0.400000,1.250000\n");
}

TEST_CASE("rule names")
{
    for (auto r : {VerifyRule::All, VerifyRule::Majority, VerifyRule::Any})
        CHECK(parse_verify_rule(to_string(r)) == r);
    CHECK_THROWS_AS(parse_verify_rule("most"), ConfigError);
}

}
