#include "mragnn/error.hpp"

#include <atomic>
#include <iostream>

namespace mragnn {

namespace {

void stderr_sink(const std::string& message) { std::cerr << "[mragnn] " << message << '\n'; }

std::atomic<DiagnosticSink> g_sink{&stderr_sink};

} // namespace

void set_diagnostic_sink(DiagnosticSink sink) { g_sink.store(sink ? sink : &stderr_sink); }

void diagnostic(const std::string& message) { g_sink.load()(message); }

} // namespace mragnn
