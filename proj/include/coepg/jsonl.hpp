#pragma once

#include <coepg/errors.hpp>

#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <string>

namespace coepg::jsonl {

using Json = nlohmann::ordered_json;

/// Calls fn(record, line_number) for every non-blank line. Parse failures and
/// exceptions thrown by fn are rethrown as ParseError with the line number.
void for_each_record(std::istream& in, const std::string& source, const std::function<void(const Json&, std::size_t)>& fn);

void write_record(std::ostream& out, const Json& record);

/// Writes to `path.tmp` and renames over `path`, so readers never observe a
/// partially written file.
void write_file_atomic(const std::string& path, const std::function<void(std::ostream&)>& writer);

std::string read_file(const std::string& path);

/// Checked field access with a readable message.
const Json& field(const Json& record, const char* name);

} // namespace coepg::jsonl
