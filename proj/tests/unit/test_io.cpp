#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gfts/error.hpp"
#include "gfts/format.hpp"
#include "gfts/io.hpp"

using namespace gfts;

namespace {

const char* kTable =
    "Japan, Deaths (period 1x1)\n"
    "\n"
    "  Year      Age         Female           Male          Total\n"
    "  2000       98          12.5            8.25          20.75\n"
    "  2000       99           .              4.0            4.0\n"
    "  2000      100+         30.0           10.0           40.0\n"
    "  2001       98          11.0            9.0           20.0\n"
    "  2001       99           6.0            5.0           11.0\n"
    "  2001      100+         31.0           12.0           43.0\n";

}  // namespace

TEST(HmdTable, ParsesMissingAndOpenAge) {
  std::istringstream in(kTable);
  const HmdTable t = parse_hmd_table(in);
  EXPECT_EQ(t.years, (std::vector<int>{2000, 2001}));
  EXPECT_EQ(t.ages.size(), 3u);
  EXPECT_EQ(t.ages.label(2), "100+");
  EXPECT_TRUE(is_missing(t.female(0, 1)));
  EXPECT_EQ(t.male(0, 0), 8.25);
  EXPECT_EQ(t.total(1, 2), 43.0);
}

TEST(HmdTable, WriteThenParseRoundTrips) {
  std::istringstream in(kTable);
  const HmdTable t = parse_hmd_table(in);
  std::ostringstream out;
  write_hmd_table(out, t, "Round trip");
  std::istringstream back(out.str());
  const HmdTable u = parse_hmd_table(back);
  EXPECT_EQ(u.years, t.years);
  EXPECT_EQ(u.ages.label(2), "100+");
  EXPECT_TRUE(is_missing(u.female(0, 1)));
  EXPECT_EQ(u.male, t.male);
  EXPECT_EQ(u.total, t.total);
}

TEST(HmdTable, MalformedRowReportsTheLine) {
  std::string bad = kTable;
  bad.replace(bad.find("11.0            9.0"), 4, "x1.0");
  std::istringstream in(bad);
  try {
    parse_hmd_table(in, "f.txt");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("f.txt:7"), std::string::npos) << e.what();
  }
  std::istringstream none("no header here\n");
  EXPECT_THROW(parse_hmd_table(none), ParseError);
  std::istringstream neg("Year Age Female Male Total\n2000 1 -1 2 1\n2000 2 1 1 2\n");
  EXPECT_THROW(parse_hmd_table(neg), ParseError);
}

TEST(HmdTable, GapsAreStructuralErrors) {
  std::istringstream year_gap("Year Age Female Male Total\n2000 1 1 1 2\n2000 2 1 1 2\n2002 1 1 1 2\n2002 2 1 1 2\n");
  EXPECT_THROW(parse_hmd_table(year_gap), StructuralError);
  std::istringstream age_gap("Year Age Female Male Total\n2000 1 1 1 2\n2000 3 1 1 2\n");
  EXPECT_THROW(parse_hmd_table(age_gap), StructuralError);
  std::istringstream ragged("Year Age Female Male Total\n2000 1 1 1 2\n2000 2 1 1 2\n2001 1 1 1 2\n");
  EXPECT_THROW(parse_hmd_table(ragged), StructuralError);
}

TEST(HmdTable, CollapseAgesSumsTheOpenGroup) {
  HmdTable t;
  t.years = {2000};
  t.ages = AgeGrid::range(0, 110, true);
  t.female = Grid::Ones(1, 111);
  t.male = Grid::Constant(1, 111, 2.0);
  t.total = Grid::Constant(1, 111, 3.0);
  const HmdTable c = collapse_ages(t, 60, 100);
  EXPECT_EQ(c.ages.size(), 41u);
  EXPECT_EQ(c.female(0, 39), 1.0);
  EXPECT_EQ(c.female(0, 40), 11.0);
  EXPECT_EQ(c.total(0, 40), 33.0);
  EXPECT_THROW(collapse_ages(t, 60, 60), ValidationError);
  EXPECT_THROW(collapse_ages(t, 60, 120), StructuralError);
}

TEST(GroupStructureJson, RoundTripsJapan) {
  const GroupStructure g = japan_structure();
  const GroupStructure h = parse_group_structure(group_structure_to_json(g));
  EXPECT_EQ(h.series_ids(), g.series_ids());
  EXPECT_EQ(h.level_size("Region"), 8u);
  EXPECT_THROW(parse_group_structure("{"), ParseError);
  EXPECT_THROW(parse_group_structure(R"({"bottom": ["a"]})"), ParseError);
  EXPECT_THROW(parse_group_structure(R"({"bottom": ["a", "b"], "groups": [{"id": "T", "level": "L", "members": ["c"]}]})"),
               ReferenceError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.03), "0.03");
  EXPECT_EQ(format_double(1672980.0), "1672980");
  EXPECT_EQ(format_double(kMissing), "NA");
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::exp(u(rng)) * (i % 2 ? 1.0 : -1.0);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}
