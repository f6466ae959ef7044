#pragma once

#include "spidl/common.hpp"

#include <vector>

namespace spidl {

struct TraceEntry {
  double data = 0.0;
  double physics = 0.0;
  double total = 0.0;
  double best = 0.0;
};

/// Training diverged; the trace up to the failure is attached.
struct TrainingError : NumericalError {
  TrainingError(const std::string& what, std::vector<TraceEntry> t) : NumericalError(what), trace(std::move(t)) {}
  std::vector<TraceEntry> trace;
};

}  // namespace spidl
