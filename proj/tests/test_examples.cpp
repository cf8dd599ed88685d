#include <doctest.h>

#include "examples_suite.hpp"

TEST_SUITE("examples") {

TEST_CASE("documented unit examples all pass") {
    const auto results = condi::testing::run_example_suite();
    REQUIRE(!results.empty());
    for (const auto& r : results) {
        CAPTURE(r.name);
        CAPTURE(r.detail);
        CHECK_MESSAGE(r.pass, r.name, ": ", r.detail);
    }
}

} // TEST_SUITE
