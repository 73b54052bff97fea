#include <iostream>

#include "bsim/harness/acceptance.hpp"

int main() {
  bsim::AcceptanceSuite suite;
  const auto results = suite.run_all(&std::cout);
  int failed = 0;
  for (const auto& r : results) failed += r.pass ? 0 : 1;
  std::cout << (results.size() - failed) << "/" << results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
