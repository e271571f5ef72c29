#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "perclaw/config.hpp"
#include "perclaw/csv.hpp"

using namespace perclaw;

namespace {

RunConfig sample_config() {
  return RunConfig("sweep", {{"seed", "0", "master seed"},
                             {"n", "250,500", "DOF values"},
                             {"b_min", "-1.5", "lower b"},
                             {"verbose", "false", "chatty"}});
}

std::string expect_config_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.key();
  }
  ADD_FAILURE() << "expected ConfigError";
  return {};
}

}  // namespace

TEST(ConfigText, SectionsCommentsAndErrors) {
  const auto entries = parse_config_text("a = 1 # note\n\n[sweep]\n  b=two words \n# x = 3\n[other]\nc = 4\n");
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[0].section, "");
  EXPECT_EQ(entries[0].value, "1");
  EXPECT_EQ(entries[1].section, "sweep");
  EXPECT_EQ(entries[1].key, "b");
  EXPECT_EQ(entries[1].value, "two words");
  EXPECT_EQ(entries[2].line, 7u);
  EXPECT_THROW(parse_config_text("novalue\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[open\n"), ConfigError);
  EXPECT_THROW(parse_config_text("= 3\n"), ConfigError);
}

TEST(RunConfig, PrecedenceDefaultsFileFlags) {
  auto c = sample_config();
  EXPECT_EQ(c.source("seed"), ParamSource::default_value);
  c.apply_text("seed = 5\n[sweep]\nb_min = -1\n[calibrate]\nunknown_elsewhere = 1\n", "test.cfg");
  EXPECT_EQ(c.get_u64("seed"), 5u);
  EXPECT_EQ(c.source("seed"), ParamSource::file);
  EXPECT_DOUBLE_EQ(c.get_double("b_min"), -1.0);
  c.set("seed", "7", ParamSource::flag);
  EXPECT_EQ(c.get_u64("seed"), 7u);
  EXPECT_EQ(c.source("seed"), ParamSource::flag);
  EXPECT_EQ(c.to_json().dump(), R"({"seed":"7","n":"250,500","b_min":"-1","verbose":"false"})");
}

TEST(RunConfig, UnknownAndMalformedValuesNameTheKey) {
  auto c = sample_config();
  EXPECT_EQ(expect_config_error([&] { c.apply_text("bogus = 1\n", "x.cfg"); }), "bogus");
  EXPECT_EQ(expect_config_error([&] { c.set("nope", "1", ParamSource::flag); }), "nope");
  c.set("seed", "-3", ParamSource::flag);
  EXPECT_EQ(expect_config_error([&] { c.get_u64("seed"); }), "seed");
  c.set("seed", "1e3", ParamSource::flag);
  EXPECT_EQ(c.get_u64("seed"), 1000u);
  c.set("b_min", "abc", ParamSource::flag);
  EXPECT_EQ(expect_config_error([&] { c.get_double("b_min"); }), "b_min");
  c.set("verbose", "maybe", ParamSource::flag);
  EXPECT_EQ(expect_config_error([&] { c.get_bool("verbose"); }), "verbose");
  c.set("verbose", "Yes", ParamSource::flag);
  EXPECT_TRUE(c.get_bool("verbose"));
  EXPECT_EQ(expect_config_error([&] { c.load_file("/nonexistent/config.cfg"); }), "config");
}

TEST(RunConfig, ListsAndGrids) {
  auto c = sample_config();
  EXPECT_EQ(c.get_doubles("n"), (std::vector<double>{250, 500}));
  c.set("n", "1e1:1e4:4", ParamSource::flag);
  const auto g = c.get_grid("n", 10);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_DOUBLE_EQ(g[0], 10);
  EXPECT_NEAR(g[1], 100, 1e-9);
  EXPECT_DOUBLE_EQ(g[3], 1e4);
  c.set("n", "1e1:1e8", ParamSource::flag);
  EXPECT_EQ(c.get_grid("n", 29).size(), 29u);
  for (const char* bad : {"0:10", "10:1", "1:10:2.5", "1:x", "1:2:3:4"}) {
    c.set("n", bad, ParamSource::flag);
    EXPECT_EQ(expect_config_error([&] { c.get_grid("n", 5); }), "n") << bad;
  }
}

TEST(Csv, WriteThenReadRoundTrips) {
  const auto path = std::filesystem::temp_directory_path() / "perclaw_test_roundtrip.csv";
  {
    CsvWriter w(path, {"x", "y", "flag"});
    w.row(0.1, 1e-300, true);
    w.row(3, -2.5, false);
    EXPECT_THROW(w.row(1.0, 2.0), std::logic_error);
    w.close();
  }
  std::ifstream in(path, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(text, "x,y,flag\n0.1,1e-300,1\n3,-2.5,0\n");
  const auto cols = read_numeric_csv(path, 2);
  EXPECT_EQ(cols[0], (std::vector<double>{0.1, 3}));
  EXPECT_EQ(cols[1], (std::vector<double>{1e-300, -2.5}));
  std::filesystem::remove(path);
}

TEST(Csv, ReaderSkipsCommentsAndRejectsBadRows) {
  const auto path = std::filesystem::temp_directory_path() / "perclaw_test_read.csv";
  {
    std::ofstream out(path);
    out << "# comment\nP,d_model\r\n\n1e9,2048\n3.5e10,4096\n";
  }
  const auto cols = read_numeric_csv(path, 2);
  EXPECT_EQ(cols[0], (std::vector<double>{1e9, 3.5e10}));
  {
    std::ofstream out(path);
    out << "1,2\nx,3\n";
  }
  EXPECT_THROW(read_numeric_csv(path, 2), FormatError);
  {
    std::ofstream out(path);
    out << "1\n";
  }
  EXPECT_THROW(read_numeric_csv(path, 2), FormatError);
  std::filesystem::remove(path);
  EXPECT_DOUBLE_EQ(parse_double(" +2.5 "), 2.5);
  EXPECT_THROW(parse_double("2.5x"), FormatError);
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(RunConfig, RequiredParametersNameTheFlag) {
  RunConfig c("fit-powerlaw", {{"input", "", "CSV file", true}, {"x_col", "0", "column"}});
  EXPECT_EQ(flag_name("x_col"), "--x-col");
  try {
    c.check_required();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "input");
    EXPECT_NE(std::string(e.what()).find("--input"), std::string::npos);
  }
  c.set("input", "a.csv", ParamSource::flag);
  EXPECT_NO_THROW(c.check_required());
}
