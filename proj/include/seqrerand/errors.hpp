#pragma once

#include <stdexcept>
#include <string>

namespace seqrerand {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// bad numeric argument (probability outside (0,1), negative dof, ...)
struct DomainError : Error {
    using Error::Error;
};

// matrix/vector dimensions disagree
struct ShapeMismatch : Error {
    using Error::Error;
};

// covariance factorization hit a non-positive (or near-zero) pivot
struct RankDeficient : Error {
    RankDeficient(const std::string& msg, int pivot) : Error(msg), pivot_index(pivot) {}
    int pivot_index;  // row/column of the offending pivot
};

// total budget cannot cover the per-group floor
struct InfeasibleBudget : Error {
    using Error::Error;
};

// acceptance mass below representable range; failing loudly beats returning 0
struct UnderflowError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// malformed cell/row in an input file
struct ParseError : Error {
    ParseError(const std::string& msg, long row, const std::string& column)
        : Error(msg), row(row), column(column) {}
    long row;
    std::string column;
};

// input file does not match the declared column schema
struct SchemaError : Error {
    using Error::Error;
};

// a column with zero observed values cannot be imputed
struct AllMissingColumn : Error {
    using Error::Error;
};

}  // namespace seqrerand
