#include <cstdlib>
#include <iostream>
#include <string>

#include "semiflow/acceptance.hpp"

// usage: test_acceptance [profile] [id...]
int main(int argc, char** argv) {
  semiflow::AcceptanceOptions opt;
  if (argc > 1) opt.profile = argv[1];
  for (int i = 2; i < argc; ++i) opt.only.push_back(argv[i]);
  if (const char* dir = std::getenv("ACCEPTANCE_OUT")) opt.out_dir = dir;
  int failed = 0;
  semiflow::run_acceptance(opt, [&](const semiflow::CriterionResult& r) {
    std::cout << semiflow::format_result(r) << std::endl;
    failed += !r.pass;
  });
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << failed << " criteria failed" << std::endl;
  return failed ? 1 : 0;
}
