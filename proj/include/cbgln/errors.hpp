#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cbgln {

/// Shape mismatch between two operands; the message carries both shapes.
class DimensionError : public std::invalid_argument {
public:
    DimensionError(const std::string& op, std::size_t lhs_rows, std::size_t lhs_cols,
                   std::size_t rhs_rows, std::size_t rhs_cols)
        : std::invalid_argument(op + ": incompatible shapes " + std::to_string(lhs_rows) + "x" +
                                std::to_string(lhs_cols) + " and " + std::to_string(rhs_rows) +
                                "x" + std::to_string(rhs_cols)) {}
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Violated precondition that is not a shape problem (non-scalar loss,
/// missing attention, query on a non-query model, ...).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Malformed input file; carries the position where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, std::size_t position, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(position) + ": " + what) {}
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cbgln
