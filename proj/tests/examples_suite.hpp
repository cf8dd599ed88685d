#ifndef CONDI_TESTS_EXAMPLES_SUITE_HPP
#define CONDI_TESTS_EXAMPLES_SUITE_HPP

#include <string>
#include <vector>

namespace condi::testing {

struct ExampleResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Runs every documented unit example across all modules. Shared between
// the unit tests and the acceptance gate.
std::vector<ExampleResult> run_example_suite();

} // namespace condi::testing

#endif
