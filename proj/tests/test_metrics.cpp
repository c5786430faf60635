#include "catch2/catch_amalgamated.hpp"

#include <cmath>

#include "pipe/metrics.hpp"
#include "pipe/prng.hpp"

using namespace pipeh;
using Catch::Matchers::WithinAbs;

namespace {

AliasUsage usage_of(std::vector<std::pair<long, long>> counts) {
    AliasUsage u;
    int i = 0;
    for (auto [ori, syn] : counts) {
        auto& c = u.per_task["t" + std::to_string(++i)];
        c.n_ori = ori;
        c.n_syn = syn;
    }
    return u;
}

// Direct log-sum evaluation, independent of the library implementation.
double direct_ir_log(const std::vector<std::pair<long, long>>& counts, double alpha) {
    double sum = 0;
    for (auto [ori, syn] : counts)
        sum += std::log((static_cast<double>(ori) + alpha) /
                        (static_cast<double>(syn) + alpha));
    return sum / static_cast<double>(counts.size());
}

} // namespace

TEST_CASE("score is the mean reward and empty input is undefined") {
    CHECK(*score({1, 0, 1, 1}) == 0.75);
    CHECK(*score({0}) == 0.0);
    CHECK_FALSE(score({}).has_value());
}

TEST_CASE("the robustness gap matches its definition") {
    CHECK_THAT(*delta(45.0, 55.0, 40.0), WithinAbs(2.5, 1e-9));
    CHECK_THAT(*delta(61.2, 4.44, 3.08), WithinAbs(-57.44, 1e-9));
    CHECK(*delta(0.5, 0.5, 0.5) == 0.0);
    CHECK_FALSE(delta(std::nullopt, 1.0, 1.0).has_value());
    CHECK_FALSE(delta(1.0, std::nullopt, 1.0).has_value());
    CHECK_FALSE(delta(1.0, 1.0, std::nullopt).has_value());
}

TEST_CASE("reliance ratios on the two-task worked example") {
    AliasUsage u = usage_of({{0, 1}, {20, 0}});

    // Per-task ratios at alpha = 1: (0+1)/(1+1) = 0.5 and (20+1)/(0+1) = 21.
    CHECK(*ir_naive(u, 1.0) == 10.75);
    CHECK_THAT(*ir_geometric(u, 1.0), WithinAbs(std::sqrt(10.5), 1e-9));
    CHECK_THAT(*ir_log(u, 1.0), WithinAbs(0.5 * std::log(10.5), 1e-12));

    SECTION("the arithmetic mean is dominated by the outlier task") {
        CHECK(*ir_naive(u, 1.0) > 3 * *ir_geometric(u, 1.0));
    }
    SECTION("library values agree with direct log-sum evaluation") {
        for (double alpha : {0.5, 1.0, 2.0})
            CHECK_THAT(*ir_log(u, alpha),
                       WithinAbs(direct_ir_log({{0, 1}, {20, 0}}, alpha), 1e-12));
    }
}

TEST_CASE("smoothing pulls the ratio toward 1 as alpha grows") {
    AliasUsage u = usage_of({{0, 1}, {20, 0}});
    double prev = 1e9;
    for (double alpha : {0.5, 1.0, 2.0}) {
        double mag = std::fabs(*ir_log(u, alpha));
        CHECK(mag < prev);
        prev = mag;
    }
}

TEST_CASE("the arithmetic mean never falls below the geometric mean") {
    RngStream rng(0x5EED);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<long, long>> counts;
        int k = 1 + static_cast<int>(rng.next_below(6));
        for (int i = 0; i < k; ++i)
            counts.push_back({static_cast<long>(rng.next_below(25)),
                              static_cast<long>(rng.next_below(25))});
        AliasUsage u = usage_of(counts);
        for (double alpha : {0.5, 1.0, 2.0}) {
            INFO("trial " << trial << " alpha " << alpha);
            CHECK(*ir_naive(u, alpha) >= *ir_geometric(u, alpha) - 1e-12);
        }
    }
}

TEST_CASE("swapping the count columns inverts the ratio") {
    AliasUsage u = usage_of({{3, 1}, {7, 2}, {0, 5}});
    AliasUsage swapped = usage_of({{1, 3}, {2, 7}, {5, 0}});
    for (double alpha : {0.5, 1.0, 2.0}) {
        CHECK_THAT(*ir_log(u, alpha) + *ir_log(swapped, alpha), WithinAbs(0.0, 1e-12));
        CHECK_THAT(*ir_geometric(u, alpha) * *ir_geometric(swapped, alpha),
                   WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("counterbalancing cancels order-symmetric preference exactly") {
    // Order 2 mirrors order 1 with the columns swapped, the signature of a
    // first-listed responder.
    AliasUsage order1 = usage_of({{4, 0}, {3, 0}, {5, 0}});
    AliasUsage order2 = usage_of({{0, 4}, {0, 3}, {0, 5}});
    CHECK_THAT(*ir_counterbalanced(order1, order2, 1.0, IrVariant::AverageLogs),
               WithinAbs(1.0, 1e-12));
    CHECK_THAT(*ir_counterbalanced(order1, order2, 1.0, IrVariant::AverageCounts),
               WithinAbs(1.0, 1e-12));
}

TEST_CASE("the two counterbalancing variants are distinct statistics") {
    // Asymmetric usage: avg-logs multiplies per-order ratios, avg-counts
    // averages the raw counts first.
    AliasUsage order1 = usage_of({{3, 1}});
    AliasUsage order2 = usage_of({{0, 2}});

    double logs = *ir_counterbalanced(order1, order2, 1.0, IrVariant::AverageLogs);
    // exp((ln(4/2) + ln(1/3)) / 2) = sqrt(2/3)
    CHECK_THAT(logs, WithinAbs(std::sqrt(2.0 / 3.0), 1e-12));

    double counts = *ir_counterbalanced(order1, order2, 1.0, IrVariant::AverageCounts);
    // Averaged counts: ori = 1.5, syn = 1.5, ratio (1.5+1)/(1.5+1) = 1.
    CHECK_THAT(counts, WithinAbs(1.0, 1e-12));

    CHECK(std::fabs(logs - counts) > 0.1);
}

TEST_CASE("counterbalancing refuses mismatched task sets") {
    AliasUsage a = usage_of({{1, 0}, {2, 0}});
    AliasUsage b = usage_of({{1, 0}});
    CHECK_THROWS_AS(ir_counterbalanced(a, b, 1.0, IrVariant::AverageLogs),
                    std::invalid_argument);

    AliasUsage c;
    c.per_task["t1"] = {1, 0};
    c.per_task["other"] = {2, 0};
    CHECK_THROWS_AS(ir_counterbalanced(a, c, 1.0, IrVariant::AverageLogs),
                    std::invalid_argument);
}

TEST_CASE("non-positive smoothing is rejected") {
    AliasUsage u = usage_of({{1, 1}});
    for (double alpha : {0.0, -1.0}) {
        CHECK_THROWS_AS(ir_log(u, alpha), std::invalid_argument);
        CHECK_THROWS_AS(ir_geometric(u, alpha), std::invalid_argument);
        CHECK_THROWS_AS(ir_naive(u, alpha), std::invalid_argument);
        CHECK_THROWS_AS(ir_counterbalanced(u, u, alpha, IrVariant::AverageLogs),
                        std::invalid_argument);
    }
}

TEST_CASE("empty usage tables are undefined, not zero") {
    AliasUsage empty;
    CHECK_FALSE(ir_log(empty, 1.0).has_value());
    CHECK_FALSE(ir_geometric(empty, 1.0).has_value());
    CHECK_FALSE(ir_naive(empty, 1.0).has_value());
    CHECK_FALSE(ir_counterbalanced(empty, empty, 1.0, IrVariant::AverageLogs).has_value());
}

TEST_CASE("legacy rate is the per-task mean of event counts") {
    CHECK(*legacy_rate({10, 10, 10}) == 10.0);
    CHECK(*legacy_rate({0, 0, 3}) == 1.0);
    CHECK_FALSE(legacy_rate({}).has_value());
}

TEST_CASE("variant labels round-trip") {
    CHECK(std::string(to_string(IrVariant::AverageLogs)) == "avg-logs");
    CHECK(std::string(to_string(IrVariant::AverageCounts)) == "avg-counts");
    CHECK(*parse_ir_variant("avg-logs") == IrVariant::AverageLogs);
    CHECK(*parse_ir_variant("avg-counts") == IrVariant::AverageCounts);
    CHECK_FALSE(parse_ir_variant("median").has_value());
}
