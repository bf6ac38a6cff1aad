#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include <ckoop/csv.hpp>
#include <ckoop/errors.hpp>
#include <ckoop/numeric.hpp>

using namespace ckoop;

TEST(Numeric, CompensatedSumRecoversSmallTerms) {
    std::vector<double> v = {1e16, 1.0, -1e16, 1.0};
    EXPECT_DOUBLE_EQ(compensated_sum(v), 2.0);
}

TEST(Numeric, FormatDoubleRoundTrips) {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.normal() * std::pow(10.0, static_cast<int>(rng.index(40)) - 20);
        EXPECT_EQ(parse_double(format_double(x)), x);
    }
    EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");
    EXPECT_TRUE(std::isnan(parse_double(format_double(std::nan("")))));
}

TEST(Numeric, ParseRejectsGarbage) {
    EXPECT_THROW((void)parse_double("1.5x"), InputError);
    EXPECT_THROW((void)parse_double(""), InputError);
    EXPECT_THROW((void)parse_int("3.0"), InputError);
    EXPECT_EQ(parse_int(" 42 "), 42);
}

TEST(Numeric, MixSeedIsDeterministicAndSeparatesStreams) {
    EXPECT_EQ(mix_seed(1, 2, 3), mix_seed(1, 2, 3));
    EXPECT_NE(mix_seed(1, 2, 3), mix_seed(1, 3, 2));
    EXPECT_NE(mix_seed(1, 2, 3), mix_seed(2, 2, 3));
}

TEST(Numeric, RngUniformRangeAndRepeatability) {
    Rng a(99);
    Rng b(99);
    for (int i = 0; i < 10000; ++i) {
        const double u = a.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_EQ(u, b.uniform());
    }
}

TEST(Numeric, RngNormalMoments) {
    Rng rng(3);
    double s = 0.0;
    double s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Numeric, SymmetricEigenvalues) {
    Mat s(2, 2);
    s << 2.0, 1.0, 1.0, 2.0;
    EXPECT_NEAR(max_symmetric_eigenvalue(s), 3.0, 1e-14);
    EXPECT_NEAR(min_symmetric_eigenvalue(s), 1.0, 1e-14);
}

TEST(Csv, RoundTripWithMetadata) {
    csv::Table t;
    t.metadata["alpha"] = "0.1";
    t.metadata["seed"] = "5";
    t.header = {"a", "b"};
    t.rows = {{"1", "2"}, {"3", "4"}};
    std::stringstream ss;
    csv::write(t, ss);
    const csv::Table r = csv::read(ss);
    EXPECT_EQ(r.metadata, t.metadata);
    EXPECT_EQ(r.header, t.header);
    EXPECT_EQ(r.rows, t.rows);
    EXPECT_EQ(r.column("b"), 1u);
    EXPECT_THROW((void)r.column("c"), InputError);
}

TEST(Csv, SplitKeepsEmptyFields) {
    EXPECT_EQ(csv::split("a,,b,"), (std::vector<std::string>{"a", "", "b", ""}));
}
