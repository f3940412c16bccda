#pragma once

#include <stdexcept>
#include <string>

namespace firecast {

// Error taxonomy used across the library. The CLI maps these onto its
// stable exit codes (usage 1, I/O 2, data format 3, consistency 4).

// Tensor/layer shape mismatches.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad function arguments (empty sequence, out-of-grid tile, ...).
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration values (non-positive lr, degenerate split, ...).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Operation called in the wrong order (backward before forward).
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

// Malformed file contents (bad magic, truncation, version).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unusable training data (region without records, single-class labels).
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failures (unreadable/unwritable paths).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cross-artifact mismatches (bundle fingerprint vs dataset, unknown region).
struct ConsistencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace firecast
