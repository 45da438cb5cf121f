#pragma once

#include <stdexcept>
#include <string>

namespace coepg {

/// Invalid configuration or spec values. The CLI maps these to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A benchmark spec whose counts cannot satisfy the generator's guarantees.
class SpecConstraintError : public ConfigError {
public:
    SpecConstraintError(std::string constraint, const std::string& detail)
        : ConfigError("benchmark spec violates constraint '" + constraint + "': " + detail),
          constraint_(std::move(constraint))
    {
    }
    const std::string& constraint() const noexcept { return constraint_; }

private:
    std::string constraint_;
};

/// Malformed JSONL input; carries the file and 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string file, std::size_t line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
          file_(std::move(file)), line_(line)
    {
    }
    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

} // namespace coepg
