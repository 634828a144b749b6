#include <gtest/gtest.h>

#include <sstream>

#include "iontrap/io.hpp"
#include "iontrap/rng.hpp"

using namespace iontrap;

TEST(Io, TrimAndSplit) {
    EXPECT_EQ(io::trim("  a b \t\r"), "a b");
    EXPECT_EQ(io::trim("   "), "");
    const auto c = io::split_csv(" a, b ,,c ");
    ASSERT_EQ(c.size(), 4u);
    EXPECT_EQ(c[1], "b");
    EXPECT_EQ(c[2], "");
}

TEST(Io, ParseDouble) {
    EXPECT_DOUBLE_EQ(io::parse_double(" -0.1239 "), -0.1239);
    EXPECT_DOUBLE_EQ(io::parse_double("1e-3"), 1e-3);
    EXPECT_THROW(io::parse_double("0.1x"), ConfigError);
    EXPECT_THROW(io::parse_double(""), ConfigError);
    EXPECT_THROW(io::parse_double("1e999"), ConfigError);
}

TEST(Io, FormatIsStable) {
    EXPECT_EQ(io::fmt(-0.0), "0");
    EXPECT_EQ(io::fmt(-0.00001, 4, true), "0.0000");
    EXPECT_EQ(io::fmt(0.0959, 4, true), "0.0959");
    EXPECT_EQ(io::fmt(1.0 / 3.0, 4), "0.3333");
}

TEST(Io, RecordWritesKeyValueLines) {
    io::Record r;
    r.set("a", 1).set("b", 0.5).set("c", true).set("d", "x");
    std::ostringstream s;
    r.write(s);
    EXPECT_EQ(s.str(), "a = 1\nb = 0.5\nc = true\nd = x\n");
}

TEST(Io, CsvWriter) {
    std::ostringstream s;
    io::CsvWriter w(s);
    w.comment("hello");
    w.header({"x", "y"});
    w.row({1.0, 2.5});
    EXPECT_EQ(s.str(), "# hello\nx,y\n1,2.5\n");
}

TEST(Rng, DerivedSeedsAreDistinctAndStable) {
    EXPECT_EQ(derive_seed(1, 0), derive_seed(1, 0));
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}
