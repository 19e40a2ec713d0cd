#pragma once

// Certifies every hand-derived backward pass against central differences
// on seeded random instances.

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace wbc {

struct GradcheckOptions {
  std::uint64_t seed = 1;
  std::size_t instances = 20;
  std::size_t max_hw = 4;  // feature-map height/width
  std::size_t max_c = 6;
  std::size_t max_parts = 3;
  std::size_t max_d = 4;
  double eps = 1e-5;
  double tolerance = 1e-5;
  /// Test hook: scales the analytic gradient of the named op by 1.01.
  std::string corrupt_op;
};

struct GradcheckRow {
  std::string op;
  std::size_t instances = 0;
  double max_relative_error = 0.0;
  bool pass = false;
};

/// Operation names, in the order run_gradcheck reports them.
std::vector<std::string> gradcheck_ops();

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opts);

void print_gradcheck_table(std::ostream& os, const std::vector<GradcheckRow>& rows);

}  // namespace wbc
