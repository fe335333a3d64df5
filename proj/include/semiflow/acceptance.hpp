#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace semiflow {

struct CriterionResult {
  std::string id;  // "1".."11", or "D1".. for the doubling profile
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  std::string profile = "full";  // "full" (criteria 1-11) or "doubling" (closed-form checks)
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out_dir;           // CSV artifacts when nonempty
  std::vector<std::string> only;  // subset of ids; empty runs all
};

/// Runs the suite; `on_result` sees each criterion as it finishes.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt,
                                            const std::function<void(const CriterionResult&)>& on_result = {});

std::string format_result(const CriterionResult& r);

}  // namespace semiflow
