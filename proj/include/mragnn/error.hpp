#pragma once

#include <stdexcept>
#include <string>

namespace mragnn {

/// Invalid arguments, configuration or data. CLI exit code 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operand shapes do not agree.
class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Input data cannot be turned into a graph (too few minutiae, undersized gallery, ...).
class DataQualityError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Numeric or runtime failure (non-finite loss, I/O). CLI exit code 2.
class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sink for non-fatal diagnostics. Defaults to stderr; tests may replace it.
using DiagnosticSink = void (*)(const std::string&);
void set_diagnostic_sink(DiagnosticSink sink);
void diagnostic(const std::string& message);

} // namespace mragnn
