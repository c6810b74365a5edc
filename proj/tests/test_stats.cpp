#include <catch2/catch_amalgamated.hpp>

#include "fetchplan/stats.hpp"

using namespace fetchplan;
using Catch::Approx;

TEST_CASE("mean and sample standard deviation", "[stats]") {
    std::vector<double> xs{1.0, 2.0, 3.0};
    CHECK(stats::mean(xs) == Approx(2.0));
    CHECK(stats::sample_sd(xs) == Approx(1.0));

    CHECK(stats::mean({}) == 0.0);
    CHECK(stats::sample_sd({}) == 0.0);
    CHECK(stats::sample_sd({42.0}) == 0.0);
    CHECK(stats::sample_sd({5.0, 5.0, 5.0}) == 0.0);
}

TEST_CASE("midranks average over ties", "[stats]") {
    auto ranks = stats::detail::midranks({1.0, 2.0, 2.0, 3.0});
    REQUIRE(ranks.size() == 4);
    CHECK(ranks[0] == Approx(1.0));
    CHECK(ranks[1] == Approx(2.5));
    CHECK(ranks[2] == Approx(2.5));
    CHECK(ranks[3] == Approx(4.0));
}

TEST_CASE("binomial coefficients used for the enumeration bound", "[stats]") {
    CHECK(stats::detail::binomial(10, 5) == Approx(252.0));
    CHECK(stats::detail::binomial(4, 0) == Approx(1.0));
    CHECK(stats::detail::binomial(4, 4) == Approx(1.0));
    CHECK(stats::detail::binomial(3, 7) == 0.0);
}

TEST_CASE("mann_whitney_p separates disjoint small samples exactly", "[stats]") {
    std::vector<double> zeros{0.0, 0.0, 0.0, 0.0, 0.0};
    std::vector<double> ones{1.0, 1.0, 1.0, 1.0, 1.0};

    auto p = stats::mann_whitney_p(zeros, ones);
    REQUIRE(p.has_value());
    // only the two fully separated assignments out of C(10,5) are as extreme
    CHECK(*p == Approx(2.0 / 252.0));
    CHECK(*p < 0.05);
}

TEST_CASE("mann_whitney_p returns 1.0 for identical samples", "[stats]") {
    std::vector<double> xs{3.0, 3.0, 3.0, 3.0};
    auto p = stats::mann_whitney_p(xs, xs);
    REQUIRE(p.has_value());
    CHECK(*p == Approx(1.0));
}

TEST_CASE("mann_whitney_p needs two values per side", "[stats]") {
    CHECK_FALSE(stats::mann_whitney_p({1.0}, {2.0, 3.0}).has_value());
    CHECK_FALSE(stats::mann_whitney_p({1.0, 2.0}, {}).has_value());
}

TEST_CASE("mann_whitney_p is symmetric in its arguments", "[stats]") {
    std::vector<double> a{1.0, 4.0, 2.0, 6.0, 3.0};
    std::vector<double> b{5.0, 7.0, 8.0, 2.5, 9.0};
    auto pab = stats::mann_whitney_p(a, b);
    auto pba = stats::mann_whitney_p(b, a);
    REQUIRE(pab.has_value());
    REQUIRE(pba.has_value());
    CHECK(*pab == Approx(*pba));
}

TEST_CASE("mann_whitney_p handles ties inside the exact enumeration", "[stats]") {
    std::vector<double> a{1.0, 1.0, 2.0, 3.0};
    std::vector<double> b{1.0, 2.0, 2.0, 4.0};
    auto p = stats::mann_whitney_p(a, b);
    REQUIRE(p.has_value());
    CHECK(*p > 0.0);
    CHECK(*p <= 1.0);
    // heavily overlapping samples are nowhere near significance
    CHECK(*p > 0.05);
}

TEST_CASE("large samples switch to the normal approximation", "[stats]") {
    std::vector<double> low;
    std::vector<double> high;
    for (int i = 0; i < 12; ++i) {
        low.push_back(static_cast<double>(i));
        high.push_back(static_cast<double>(i + 100));
    }
    REQUIRE(stats::detail::binomial(24, 12) > stats::kExactEnumerationLimit);

    auto p = stats::mann_whitney_p(low, high);
    REQUIRE(p.has_value());
    CHECK(*p < 0.001);

    // interleaved samples from the same distribution stay insignificant
    std::vector<double> even;
    std::vector<double> odd;
    for (int i = 0; i < 12; ++i) {
        even.push_back(static_cast<double>(2 * i));
        odd.push_back(static_cast<double>(2 * i + 1));
    }
    auto q = stats::mann_whitney_p(even, odd);
    REQUIRE(q.has_value());
    CHECK(*q > 0.5);

    // identical constant samples fall back to p = 1 via the variance guard
    std::vector<double> flat(13, 7.0);
    auto r = stats::mann_whitney_p(flat, flat);
    REQUIRE(r.has_value());
    CHECK(*r == Approx(1.0));
}
