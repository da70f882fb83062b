#pragma once

#include <stdexcept>
#include <string>

namespace fvb {

// Error categories are stable strings so the CLI can map them to exit codes
// and machine-readable diagnostics: io, schema, numeric, convergence.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}
    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error("io", what) {}
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& what) : Error("schema", what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

struct ConvergenceError : Error {
    explicit ConvergenceError(const std::string& what) : Error("convergence", what) {}
};

}  // namespace fvb
