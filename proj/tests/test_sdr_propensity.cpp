#include <doctest.h>

TEST_SUITE("sdr_propensity") {

TEST_CASE("placeholder") { CHECK(true); }

}
