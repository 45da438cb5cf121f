#include <coepg/policy.hpp>

#include <coepg/jsonl.hpp>

#include <fstream>

namespace coepg {

using jsonl::Json;

namespace {

constexpr int kCheckpointVersion = 1;

using Records = std::span<const std::pair<Json, std::size_t>>;

const Json& header_of(Records records, const std::string& source, const char* kind)
{
    if (records.empty())
        throw ParseError(source, 1, std::string("empty ") + kind + " checkpoint");
    const auto& [h, line] = records.front();
    if (!h.contains("kind") || h["kind"] != kind)
        throw ParseError(source, line, std::string("expected a '") + kind + "' header record");
    if (jsonl::field(h, "version").get<int>() != kCheckpointVersion)
        throw ParseError(source, line, "unsupported checkpoint version");
    return h;
}

std::vector<std::pair<Json, std::size_t>> read_records(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<Json, std::size_t>> out;
    jsonl::for_each_record(in, path, [&](const Json& r, std::size_t line) { out.emplace_back(r, line); });
    return out;
}

void write_records(const std::vector<Json>& records, const std::string& path)
{
    jsonl::write_file_atomic(path, [&](std::ostream& out) {
        for (const auto& r : records)
            jsonl::write_record(out, r);
    });
}

std::vector<double> finite_values(const Json& r)
{
    auto v = jsonl::field(r, "values").get<std::vector<double>>();
    for (double x : v)
        if (!std::isfinite(x))
            throw std::invalid_argument("non-finite value in table row");
    return v;
}

} // namespace

std::vector<JsonRecord> planner_records(const PlannerModel& m)
{
    std::vector<Json> out;
    Json pool = Json::array();
    for (const auto& v : m.value_pool)
        pool.push_back(v);
    out.push_back(Json{{"kind", "planner"},
                       {"version", kCheckpointVersion},
                       {"buckets", m.buckets},
                       {"temperature", m.temperature},
                       {"vocab_size", m.vocab_size},
                       {"value_pool", std::move(pool)},
                       {"tag", m.tag},
                       {"iteration", m.iteration}});
    m.tables.for_each([&](const char* name, const LogitTable& t) {
        for (const auto& [key, row] : t.rows())
            out.push_back(Json{{"table", name}, {"key", key}, {"values", row}});
    });
    return out;
}

PlannerModel planner_from_records(Records records, const std::string& source)
{
    const auto& h = header_of(records, source, "planner");
    PlannerModel m;
    try {
        m.buckets = jsonl::field(h, "buckets").get<int>();
        m.temperature = jsonl::field(h, "temperature").get<double>();
        m.vocab_size = jsonl::field(h, "vocab_size").get<std::size_t>();
        m.value_pool = jsonl::field(h, "value_pool").get<std::vector<TokenSeq>>();
        m.tag = jsonl::field(h, "tag").get<std::string>();
        m.iteration = jsonl::field(h, "iteration").get<int>();
    } catch (const std::exception& e) {
        throw ParseError(source, records.front().second, e.what());
    }
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& [r, line] = records[i];
        try {
            const auto name = jsonl::field(r, "table").get<std::string>();
            const int key = jsonl::field(r, "key").get<int>();
            LogitTable* table = nullptr;
            m.tables.for_each([&](const char* n, LogitTable& t) {
                if (name == n)
                    table = &t;
            });
            if (!table)
                throw std::invalid_argument("unknown planner table '" + name + "'");
            if (table->find(key))
                throw std::invalid_argument("duplicate row " + std::to_string(key) + " in table " + name);
            table->rows()[key] = finite_values(r);
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(source, line, e.what());
        }
    }
    return m;
}

std::vector<JsonRecord> grounder_records(const GrounderModel& g)
{
    std::vector<Json> out;
    out.push_back(Json{{"kind", "grounder"},
                       {"version", kCheckpointVersion},
                       {"vocab_size", g.vocab_size},
                       {"tag", g.tag},
                       {"iteration", g.iteration}});
    const std::size_t V = g.vocab_size;
    for (std::size_t t = 0; t < V; ++t) {
        std::vector<double> row(g.affinity.begin() + static_cast<std::ptrdiff_t>(t * V),
                                g.affinity.begin() + static_cast<std::ptrdiff_t>((t + 1) * V));
        out.push_back(Json{{"table", "affinity"}, {"key", t}, {"values", std::move(row)}});
    }
    out.push_back(Json{{"table", "bias"}, {"key", 0}, {"values", g.bias}});
    return out;
}

GrounderModel grounder_from_records(Records records, const std::string& source)
{
    const auto& h = header_of(records, source, "grounder");
    GrounderModel g;
    try {
        g = make_grounder(jsonl::field(h, "vocab_size").get<std::size_t>(), jsonl::field(h, "tag").get<std::string>());
        g.iteration = jsonl::field(h, "iteration").get<int>();
    } catch (const std::exception& e) {
        throw ParseError(source, records.front().second, e.what());
    }
    const std::size_t V = g.vocab_size;
    std::vector<bool> seen(V + 1, false);
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& [r, line] = records[i];
        try {
            const auto name = jsonl::field(r, "table").get<std::string>();
            const auto key = jsonl::field(r, "key").get<std::size_t>();
            const auto values = finite_values(r);
            if (values.size() != V)
                throw std::invalid_argument("row width " + std::to_string(values.size()) + " != vocab size " +
                                            std::to_string(V));
            if (name == "affinity" && key < V) {
                std::copy(values.begin(), values.end(), g.affinity.begin() + static_cast<std::ptrdiff_t>(key * V));
                seen[key] = true;
            } else if (name == "bias" && key == 0) {
                g.bias = values;
                seen[V] = true;
            } else {
                throw std::invalid_argument("unknown grounder row '" + name + "' " + std::to_string(key));
            }
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(source, line, e.what());
        }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw ParseError(source, records.back().second, "grounder checkpoint is missing rows");
    return g;
}

void save_planner(const PlannerModel& m, const std::string& path) { write_records(planner_records(m), path); }
PlannerModel load_planner(const std::string& path) { return planner_from_records(read_records(path), path); }
void save_grounder(const GrounderModel& g, const std::string& path) { write_records(grounder_records(g), path); }
GrounderModel load_grounder(const std::string& path) { return grounder_from_records(read_records(path), path); }

} // namespace coepg
