// Runs every acceptance criterion and prints one PASS/FAIL line each.

#include <algorithm>
#include <iostream>

#include "stratalloc/verification/acceptance.hpp"

int main() {
  using namespace stratalloc::acceptance;
  Options options;
  std::cout << "seed: " << options.seed << ", workers: " << options.workers << "\n";
  const auto results = run(options, group("all"), [](const Result& r) { std::cout << format_line(r) << std::endl; });
  const auto failed = std::count_if(results.begin(), results.end(), [](const Result& r) { return !r.passed; });
  std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
