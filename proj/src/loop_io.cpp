#include <coepg/loop.hpp>

#include <coepg/errors.hpp>
#include <coepg/jsonl.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace coepg {

namespace fs = std::filesystem;
using jsonl::Json;

namespace {

void write_json_file(const std::string& path, const Json& j)
{
    jsonl::write_file_atomic(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

void write_jsonl_file(const std::string& path, const std::vector<Json>& records)
{
    jsonl::write_file_atomic(path, [&](std::ostream& out) {
        for (const auto& r : records)
            jsonl::write_record(out, r);
    });
}

std::vector<std::pair<Json, std::size_t>> read_jsonl_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<Json, std::size_t>> out;
    jsonl::for_each_record(in, path, [&](const Json& r, std::size_t line) { out.emplace_back(r, line); });
    return out;
}

Json parse_json_file(const std::string& path)
{
    const auto text = jsonl::read_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(path, 1, std::string("invalid JSON: ") + e.what());
    }
}

} // namespace

void save_state(const IterationState& s, const IterationReport* report, const std::string& dir)
{
    fs::create_directories(dir);
    write_jsonl_file(dir + "/planner.jsonl", planner_records(s.planner));
    write_jsonl_file(dir + "/grounder.jsonl", grounder_records(s.grounder));
    save_dataset(s.data, dir + "/dataset.jsonl");

    std::vector<Json> pools;
    pools.push_back(Json{{"kind", "pools"},
                         {"version", 1},
                         {"verify_rule", std::string(to_string(s.verifiers.rule))},
                         {"seed_noise", s.planners.seed.noise}});
    auto add = [&](const char* pool, std::size_t member, const std::vector<Json>& records) {
        for (const auto& r : records)
            pools.push_back(Json{{"pool", pool}, {"member", member}, {"record", r}});
    };
    for (std::size_t i = 0; i < s.planners.members.size(); ++i)
        add("planner", i, planner_records(s.planners.members[i]));
    for (std::size_t i = 0; i < s.verifiers.references.size(); ++i)
        add("reference", i, grounder_records(s.verifiers.references[i]));
    for (std::size_t i = 0; i < s.verifiers.members.size(); ++i)
        add("verifier", i, grounder_records(s.verifiers.members[i]));
    write_jsonl_file(dir + "/pools.jsonl", pools);

    write_json_file(dir + "/rng.json", Json{{"seed", s.seed}, {"k", s.k}});
    // written last: its presence marks the checkpoint complete
    if (report)
        jsonl::write_file_atomic(dir + "/report.json", [&](std::ostream& out) { out << report_json(*report); });
}

IterationState load_state(const std::string& dir)
{
    IterationState s;
    const auto rng_path = dir + "/rng.json";
    const auto rng = parse_json_file(rng_path);
    try {
        s.seed = jsonl::field(rng, "seed").get<std::uint64_t>();
        s.k = jsonl::field(rng, "k").get<int>();
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception& e) {
        throw ParseError(rng_path, 1, e.what());
    }
    s.planner = load_planner(dir + "/planner.jsonl");
    s.grounder = load_grounder(dir + "/grounder.jsonl");
    s.data = load_dataset(dir + "/dataset.jsonl");

    const auto pools_path = dir + "/pools.jsonl";
    const auto records = read_jsonl_file(pools_path);
    if (records.empty())
        throw ParseError(pools_path, 1, "empty pools file");
    const auto& [h, hline] = records.front();
    try {
        if (!h.contains("kind") || h["kind"] != "pools")
            throw std::invalid_argument("expected a 'pools' header record");
        s.verifiers.rule = parse_verify_rule(jsonl::field(h, "verify_rule").get<std::string>());
        s.planners.seed.noise = jsonl::field(h, "seed_noise").get<double>();
    } catch (const std::exception& e) {
        throw ParseError(pools_path, hline, e.what());
    }

    std::map<std::pair<std::string, std::size_t>, std::vector<std::pair<Json, std::size_t>>> members;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& [r, line] = records[i];
        try {
            const auto pool = jsonl::field(r, "pool").get<std::string>();
            if (pool != "planner" && pool != "reference" && pool != "verifier")
                throw std::invalid_argument("unknown pool '" + pool + "'");
            members[{pool, jsonl::field(r, "member").get<std::size_t>()}].emplace_back(jsonl::field(r, "record"), line);
        } catch (const std::exception& e) {
            throw ParseError(pools_path, line, e.what());
        }
    }
    for (const auto& [key, recs] : members) {
        const auto& [pool, idx] = key;
        const auto dst_size = pool == "planner"     ? s.planners.members.size()
                         : pool == "reference" ? s.verifiers.references.size()
                                               : s.verifiers.members.size();
        if (idx != dst_size)
            throw ParseError(pools_path, recs.front().second, "pool members are not numbered consecutively");
        if (pool == "planner")
            s.planners.members.push_back(planner_from_records(recs, pools_path));
        else if (pool == "reference")
            s.verifiers.references.push_back(grounder_from_records(recs, pools_path));
        else
            s.verifiers.members.push_back(grounder_from_records(recs, pools_path));
    }
    if (s.verifiers.references.size() != 2)
        throw ParseError(pools_path, records.back().second, "expected 2 reference grounders");
    return s;
}

int latest_checkpoint(const std::string& run_dir)
{
    const fs::path root = fs::path(run_dir) / "checkpoints";
    if (!fs::is_directory(root))
        return -1;
    int best = -1;
    for (const auto& entry : fs::directory_iterator(root)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("iter_", 0) != 0 || !fs::exists(entry.path() / "report.json"))
            continue;
        try {
            std::size_t used = 0;
            const int k = std::stoi(name.substr(5), &used);
            if (used == name.size() - 5 && k >= 0)
                best = std::max(best, k);
        } catch (const std::exception&) {
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Reports

std::string report_json(const IterationReport& r)
{
    Json metrics = Json::array();
    for (const auto& [split, m] : r.metrics)
        metrics.push_back(Json{{"split", split},
                               {"ele_acc", m.ele_acc},
                               {"op_f1", m.op_f1},
                               {"step_sr", m.step_sr},
                               {"steps", m.steps}});
    Json log = Json::array();
    for (const auto& p : r.log)
        log.push_back(Json{{"phase", p.phase},
                           {"epoch", p.epoch},
                           {"mean_reward", p.mean_reward},
                           {"mean_advantage_abs", p.mean_abs_advantage},
                           {"kl", p.kl},
                           {"clip_fraction", p.clip_fraction}});
    const auto& d = r.data;
    Json j{{"k", r.k},
           {"metrics", std::move(metrics)},
           {"data",
            {{"k", d.k},
             {"generated", d.generated},
             {"retained", d.retained},
             {"purity", d.purity},
             {"diversity", d.diversity},
             {"dataset_size", d.dataset_size},
             {"covered_steps", d.covered_steps}}},
           {"distilled", r.distilled},
           {"log", std::move(log)},
           {"wall_seconds", r.wall_seconds}};
    return j.dump(2) + "\n";
}

IterationReport report_from_json(const std::string& text, const std::string& source)
{
    IterationReport r;
    try {
        const auto j = Json::parse(text);
        using jsonl::field;
        r.k = field(j, "k").get<int>();
        for (const auto& m : field(j, "metrics"))
            r.metrics.emplace_back(field(m, "split").get<std::string>(),
                                   Metrics{field(m, "ele_acc").get<double>(), field(m, "op_f1").get<double>(),
                                           field(m, "step_sr").get<double>(), field(m, "steps").get<std::size_t>()});
        const auto& d = field(j, "data");
        r.data.k = field(d, "k").get<int>();
        r.data.generated = field(d, "generated").get<std::size_t>();
        r.data.retained = field(d, "retained").get<std::size_t>();
        r.data.purity = field(d, "purity").get<double>();
        r.data.diversity = field(d, "diversity").get<double>();
        r.data.dataset_size = field(d, "dataset_size").get<std::size_t>();
        r.data.covered_steps = field(d, "covered_steps").get<std::size_t>();
        r.distilled = field(j, "distilled").get<std::size_t>();
        for (const auto& p : field(j, "log"))
            r.log.push_back({field(p, "phase").get<std::string>(), field(p, "epoch").get<int>(),
                             field(p, "mean_reward").get<double>(), field(p, "mean_advantage_abs").get<double>(),
                             field(p, "kl").get<double>(), field(p, "clip_fraction").get<double>()});
        r.wall_seconds = field(j, "wall_seconds").get<double>();
    } catch (const std::exception& e) {
        throw ParseError(source, 1, e.what());
    }
    return r;
}

void write_reports_header(std::ostream& out) { out << "k,split,ele_acc,op_f1,step_sr,purity,diversity,mode,seed\n"; }

void write_report_rows(std::ostream& out, const IterationReport& r, std::string_view mode, std::uint64_t seed)
{
    char buf[256];
    for (const auto& [split, m] : r.metrics) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.*s,%llu\n", r.k, split.c_str(), m.ele_acc,
                      m.op_f1, m.step_sr, r.data.purity, r.data.diversity, static_cast<int>(mode.size()), mode.data(),
                      static_cast<unsigned long long>(seed));
        out << buf;
    }
}

void write_train_log(std::ostream& out, std::span<const IterationReport> reports)
{
    out << "iteration,phase,epoch,mean_reward,mean_advantage_abs,kl,clip_fraction\n";
    char buf[256];
    for (const auto& r : reports)
        for (const auto& p : r.log) {
            std::snprintf(buf, sizeof buf, "%d,%s,%d,%.6f,%.6f,%.6f,%.6f\n", r.k, p.phase.c_str(), p.epoch,
                          p.mean_reward, p.mean_abs_advantage, p.kl, p.clip_fraction);
            out << buf;
        }
}

} // namespace coepg
