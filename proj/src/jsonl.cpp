#include <coepg/jsonl.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace coepg::jsonl {

void for_each_record(std::istream& in, const std::string& source, const std::function<void(const Json&, std::size_t)>& fn)
{
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        Json record;
        try {
            record = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw ParseError(source, lineno, std::string("invalid JSON: ") + e.what());
        }
        try {
            fn(record, lineno);
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(source, lineno, e.what());
        }
    }
}

void write_record(std::ostream& out, const Json& record) { out << record.dump() << '\n'; }

void write_file_atomic(const std::string& path, const std::function<void(std::ostream&)>& writer)
{
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path())
        fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        writer(out);
        out.flush();
        if (!out)
            throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const Json& field(const Json& record, const char* name)
{
    auto it = record.find(name);
    if (it == record.end())
        throw std::invalid_argument(std::string("missing field '") + name + "'");
    return *it;
}

} // namespace coepg::jsonl
