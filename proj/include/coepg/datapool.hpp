#pragma once

// Data enhancement: planner and verifier pools, verified plan datasets,
// pool rotation, purity/diversity statistics, dataset persistence.

#include <coepg/dataset.hpp>
#include <coepg/grpo.hpp>
#include <coepg/kernels.hpp>
#include <coepg/policy.hpp>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coepg {

std::string_view to_string(VerifyRule r);
VerifyRule parse_verify_rule(std::string_view s);

/// Frozen bootstrap planner: proposes a uniformly drawn candidate that
/// describes the target element, or with probability `noise` any candidate.
struct SeedGenerator {
    double noise = 0.7;
};

Proposer seed_proposer(const SeedGenerator& g);
/// Samples the plan head of `m` at `temperature` (type and value come from
/// ground truth during data production).
Proposer planner_proposer(const PlannerModel& m, double temperature);

struct PlannerPool {
    static constexpr std::size_t kCapacity = 2;
    SeedGenerator seed;
    std::vector<PlannerModel> members; // ascending iteration
};

struct VerifierPool {
    static constexpr std::size_t kCapacity = 2;
    std::vector<GrounderModel> references; // fixed, never evicted
    std::vector<GrounderModel> members;    // trained, ascending iteration
    VerifyRule rule = VerifyRule::Majority;

    std::vector<const GrounderModel*> verifiers() const;
};

/// Adds `m` (tagged with iteration k) replacing any member of the same
/// iteration, then evicts members older than k - 1.
void rotate_pool(std::vector<PlannerModel>& members, PlannerModel m);
void rotate_pool(std::vector<GrounderModel>& members, GrounderModel m);

struct DataStats {
    int k = 0;
    std::size_t generated = 0; // distinct proposals this round
    std::size_t retained = 0;  // of which verified
    double purity = 0.0;
    double diversity = 0.0; // |D_k| / train steps with at least one record
    std::size_t dataset_size = 0;
    std::size_t covered_steps = 0;
};

/// Diversity of a dataset: records per covered (task, step).
double dataset_diversity(std::span<const DatasetRecord> d, std::size_t* covered = nullptr);

struct DataRound {
    Dataset data;
    DataStats stats;
};

DataRound seed_dataset(const Benchmark& bench, const SeedGenerator& gen, const VerifierPool& verifiers, int m,
                       int buckets, std::uint64_t seed, Exec exec = {});

struct EnhanceOptions {
    int m = 3;
    double temperature = 1.0;
    bool reverify_previous = true;
};

/// Proposals of every planner-pool member, verified, merged with the (re-verified)
/// previous dataset, deduplicated and sorted by record key.
DataRound enhance_dataset(std::span<const DatasetRecord> prev, const PlannerPool& planners,
                          const VerifierPool& verifiers, const Benchmark& bench, const EnhanceOptions& opt, int k,
                          std::uint64_t seed, Exec exec = {});

/// Sorts by key and drops later duplicates.
void canonicalize(Dataset& d);

void write_dataset(std::span<const DatasetRecord> d, std::ostream& out);
Dataset read_dataset(std::istream& in, const std::string& source = "<stream>");
void save_dataset(std::span<const DatasetRecord> d, const std::string& path);
Dataset load_dataset(const std::string& path);

void write_stats_csv(std::span<const DataStats> stats, std::ostream& out);

} // namespace coepg
