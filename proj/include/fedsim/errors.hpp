#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

/// Two parameter vectors (or optimizer states) with incompatible layouts.
struct LayoutError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Invalid experiment configuration; the message names the offending key/values.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file; the message carries the line number where known.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// API misuse, e.g. refilling an accuracy column or summarizing an incomplete matrix.
struct ProtocolError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Metric is not defined for the given shape (e.g. BWT with Q=1).
struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Distance undefined for the inputs (zero-norm vector in cosine distance).
struct UndefinedDistanceError : std::domain_error {
    using std::domain_error::domain_error;
};

struct MissingTaskError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct EmptyBatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace fedsim
