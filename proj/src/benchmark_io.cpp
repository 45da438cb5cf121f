#include <coepg/gui_env.hpp>
#include <coepg/jsonl.hpp>

#include <algorithm>
#include <fstream>
#include <set>

namespace coepg {

using jsonl::Json;

namespace {

Json value_to_json(const TokenSeq& v)
{
    if (v.empty())
        return nullptr;
    return Json(v);
}

TokenSeq value_from_json(const Json& j)
{
    if (j.is_null())
        return {};
    return j.get<TokenSeq>();
}

struct RawElement {
    int id;
    BBox bbox;
    std::vector<std::string> attrs;
    std::vector<ActionType> affordances;
};

} // namespace

void write_benchmark(const Benchmark& bench, std::ostream& out)
{
    for (const auto& scr : bench.screens) {
        Json elements = Json::array();
        for (const auto& e : scr.elements) {
            Json attrs = Json::array();
            for (TokenId t : e.attributes())
                attrs.push_back(bench.vocab.name(t));
            Json aff = Json::array();
            for (auto a : e.affordances)
                aff.push_back(std::string(to_string(a)));
            elements.push_back(Json{{"id", e.id},
                                    {"bbox", {e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1}},
                                    {"attrs", std::move(attrs)},
                                    {"affordances", std::move(aff)}});
        }
        jsonl::write_record(out, Json{{"screen_id", scr.screen_id}, {"elements", std::move(elements)}});
    }
    for (const auto& t : bench.tasks) {
        Json steps = Json::array();
        for (const auto& st : t.steps)
            steps.push_back(Json{{"screen_id", st.screen_id},
                                 {"target", st.target_element_id},
                                 {"type", std::string(to_string(st.gt_type))},
                                 {"value", value_to_json(st.gt_value)}});
        jsonl::write_record(out, Json{{"task_id", t.task_id},
                                      {"q_feature", t.q_feature},
                                      {"split", std::string(to_string(t.split))},
                                      {"steps", std::move(steps)}});
    }
}

void save_benchmark(const Benchmark& bench, const std::string& path)
{
    jsonl::write_file_atomic(path, [&](std::ostream& out) { write_benchmark(bench, out); });
}

Benchmark read_benchmark(std::istream& in, const std::string& source)
{
    std::vector<std::vector<RawElement>> raw_screens;
    std::vector<Task> tasks;
    bool seen_task = false;

    jsonl::for_each_record(in, source, [&](const Json& r, std::size_t line) {
        if (r.contains("screen_id") && r.contains("elements")) {
            if (seen_task)
                throw ParseError(source, line, "screen record after task records");
            const int id = jsonl::field(r, "screen_id").get<int>();
            if (id != static_cast<int>(raw_screens.size()))
                throw ParseError(source, line, "screen ids must be consecutive from 0");
            std::vector<RawElement> els;
            for (const auto& e : jsonl::field(r, "elements")) {
                RawElement re;
                re.id = jsonl::field(e, "id").get<int>();
                const auto b = jsonl::field(e, "bbox").get<std::vector<double>>();
                if (b.size() != 4)
                    throw ParseError(source, line, "bbox must have 4 numbers");
                re.bbox = {b[0], b[1], b[2], b[3]};
                re.attrs = jsonl::field(e, "attrs").get<std::vector<std::string>>();
                if (re.attrs.empty())
                    throw ParseError(source, line, "element attrs must be non-empty");
                for (const auto& a : jsonl::field(e, "affordances"))
                    re.affordances.push_back(parse_action_type(a.get<std::string>()));
                els.push_back(std::move(re));
            }
            raw_screens.push_back(std::move(els));
        } else if (r.contains("task_id")) {
            seen_task = true;
            Task t;
            t.task_id = jsonl::field(r, "task_id").get<int>();
            if (t.task_id != static_cast<int>(tasks.size()))
                throw ParseError(source, line, "task ids must be consecutive from 0");
            t.q_feature = jsonl::field(r, "q_feature").get<int>();
            t.split = parse_split(jsonl::field(r, "split").get<std::string>());
            for (const auto& s : jsonl::field(r, "steps")) {
                TaskStep st;
                st.screen_id = jsonl::field(s, "screen_id").get<int>();
                st.target_element_id = jsonl::field(s, "target").get<int>();
                st.gt_type = parse_action_type(jsonl::field(s, "type").get<std::string>());
                st.gt_value = value_from_json(jsonl::field(s, "value"));
                t.steps.push_back(std::move(st));
            }
            tasks.push_back(std::move(t));
        } else {
            throw ParseError(source, line, "record is neither a screen nor a task");
        }
    });

    std::set<std::string> names;
    for (const auto& els : raw_screens)
        for (const auto& e : els)
            names.insert(e.attrs.begin(), e.attrs.end());

    Benchmark b;
    b.vocab = Vocabulary(std::vector<std::string>(names.begin(), names.end()));
    for (std::size_t si = 0; si < raw_screens.size(); ++si) {
        Screen scr;
        scr.screen_id = static_cast<int>(si);
        for (const auto& re : raw_screens[si]) {
            Element e;
            e.id = re.id;
            e.bbox = re.bbox;
            e.role = b.vocab.id(re.attrs.front());
            for (std::size_t i = 1; i < re.attrs.size(); ++i)
                e.labels.push_back(b.vocab.id(re.attrs[i]));
            std::sort(e.labels.begin(), e.labels.end());
            e.affordances = re.affordances;
            scr.elements.push_back(std::move(e));
        }
        b.screens.push_back(std::move(scr));
    }
    b.tasks = std::move(tasks);
    b.value_pool = derive_value_pool(b.tasks);
    detail::check_benchmark_content(b, source);
    return b;
}

Benchmark load_benchmark(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    return read_benchmark(in, path);
}

} // namespace coepg
