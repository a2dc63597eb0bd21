#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>

#include <json.hpp>

#include "gfts/error.hpp"
#include "gfts/io.hpp"
#include "gfts/pipeline.hpp"

using namespace gfts;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gfts-test-" + name);
  fs::remove_all(p);
  return p;
}

RunConfig toy_config(const fs::path& out) {
  RunConfig c = parse_run_config(R"({
    "simulate": {"kind": "toy", "seed": 3, "years": 30},
    "horizon": 5,
    "bootstrap": {"replicates": 100, "paths": 20, "seed": 9},
    "evaluation": {"enabled": true, "initial_window": 22, "intervals": true},
    "annuity": {"series": ["Toy*F"], "ages": [60, 70], "maturities": [5]}
  })", ".");
  c.output = out;
  return c;
}

}  // namespace

TEST(Config, StrictKeysAndValidation) {
  EXPECT_THROW(parse_run_config(R"({"simulate": {"kind": "toy"}, "horizn": 3})", "."), ValidationError);
  EXPECT_THROW(parse_run_config(R"({"simulate": {"kind": "toy"}, "bootstrap": {"replicates": 50}})", "."),
               ValidationError);
  EXPECT_THROW(parse_run_config(R"({"horizon": 3})", "."), ValidationError);
  const RunConfig c = parse_run_config(
      R"({"data": [{"area": "A", "deaths": "d.txt", "exposures": "e.txt"}], "selector": {"fixed": 2},
          "methods": ["OLS"], "output": "out"})",
      "/base");
  EXPECT_EQ(c.data[0].deaths, fs::path("/base/d.txt"));
  EXPECT_EQ(c.output, fs::path("/base/out"));
  EXPECT_EQ(c.selector.kind, ComponentSelector::Kind::Fixed);
  EXPECT_EQ(c.methods, std::vector<Method>{Method::Ols});
}

TEST(ParallelFor, CoversEveryIndexAndRethrowsLowestFailure) {
  std::vector<int> hit(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hit[i] += 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 100);
  try {
    parallel_for(50, 3, [](std::size_t i) {
      if (i == 7 || i == 31) throw ValidationError("fail " + std::to_string(i));
    });
    FAIL() << "expected a throw";
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "fail 7");
  }
}

TEST(Pipeline, ToyRunWritesEveryOutput) {
  const fs::path out = scratch("toy");
  const PipelineResult r = run_pipeline(toy_config(out), Stage::Price);
  ASSERT_EQ(r.exit_code, kExitOk) << r.failed_stage << ": " << r.message;
  for (const char* f : {"smoothed.csv", "forecasts.csv", "intervals.csv", "evaluation.csv", "evaluation.json",
                        "annuities.csv", "diagnostics.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto diag = nlohmann::json::parse(read_text(out / "diagnostics.json"));
  EXPECT_LT(diag.at("aggregation_violation").at("ols").get<double>(), 1e-12);
  EXPECT_EQ(diag.at("series").size(), 3u);
  const auto ev = nlohmann::json::parse(read_text(out / "evaluation.json"));
  EXPECT_EQ(ev.at("counts")[0], 8);
}

TEST(Pipeline, SameSeedGivesIdenticalIntervals) {
  const fs::path a = scratch("seed-a"), b = scratch("seed-b");
  RunConfig ca = toy_config(a), cb = toy_config(b);
  ca.evaluate = cb.evaluate = false;
  cb.threads = 2;
  ASSERT_EQ(run_pipeline(ca, Stage::Reconcile).exit_code, kExitOk);
  ASSERT_EQ(run_pipeline(cb, Stage::Reconcile).exit_code, kExitOk);
  EXPECT_EQ(read_text(a / "intervals.csv"), read_text(b / "intervals.csv"));
}

TEST(Pipeline, LoadFailureIsQuarantined) {
  const fs::path out = scratch("bad");
  RunConfig c = parse_run_config(R"({"data": [{"area": "A", "deaths": "missing_d.txt", "exposures": "missing_e.txt"}]})",
                                 fs::temp_directory_path());
  c.output = out;
  const PipelineResult r = run_pipeline(c, Stage::Price);
  EXPECT_EQ(r.exit_code, kExitLoad);
  const auto err = nlohmann::json::parse(read_text(out / "quarantine" / "error.json"));
  EXPECT_EQ(err.at("exit_code"), kExitLoad);
  EXPECT_FALSE(fs::exists(out / "forecasts.csv"));
}

TEST(Stage, NamesRoundTrip) {
  for (Stage s : {Stage::Smooth, Stage::Fit, Stage::Forecast, Stage::Reconcile, Stage::Evaluate, Stage::Price}) {
    EXPECT_EQ(parse_stage(to_string(s)), s);
  }
}
