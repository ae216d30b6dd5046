#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "vmrt/harness.hpp"
#include "vmrt/presets.hpp"

using namespace vmrt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("vmrt_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small(std::string_view text, std::uint64_t iterations) {
  auto cfg = parse_config(std::string(text));
  cfg.iterations = iterations;
  return cfg;
}

}  // namespace

// Hand-computed: sorted 2 4 4 4 5 5 7 9 10 10, sum 60, squared deviations
// sum 72, so mean 6 and population variance 7.2.
TEST(Stats, TenValueFixture) {
  std::ifstream in(fs::path(VMRT_SOURCE_DIR) / "tests/data/stats_fixture.csv");
  ASSERT_TRUE(in);
  std::string line;
  std::getline(in, line);
  std::vector<Cycles> cycles;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    std::getline(ss, field, ',');
    cycles.push_back(std::stoull(field));
  }
  ASSERT_EQ(cycles.size(), 10U);
  const auto s = compute_stats(cycles);
  EXPECT_EQ(s.mean, 6.0);
  EXPECT_EQ(s.stddev, std::sqrt(7.2));
  EXPECT_EQ(s.min, 2U);
  EXPECT_EQ(s.max, 10U);
  EXPECT_EQ(s.q1, 4.0);
  EXPECT_EQ(s.median, 5.0);
  EXPECT_EQ(s.q3, 8.5);
  EXPECT_EQ(compute_stats({}).stddev, 0.0);
}

TEST(Stats, DeltaConvention) {
  EXPECT_EQ(delta_pct(100, 752), 652.0);
  EXPECT_EQ(delta_pct(50, 50), 0.0);
  EXPECT_FALSE(delta_pct(0, 5));
}

TEST(Layout, SpmWindowsAndWayCount) {
  const auto cfg = parse_config(std::string(preset_text::kSyntheticSpm));
  EXPECT_EQ(spm_way_count(cfg.cache), 4U);
  const auto m = memsys_config(cfg);
  EXPECT_EQ(spm_window(m.dcache, m.dspm_base, 4), std::make_pair(PhysAddr{0x1010'4000}, std::uint64_t{4}));
  EXPECT_EQ(spm_window(m.icache, m.ispm_base, 4), std::make_pair(PhysAddr{0x1000'2000}, std::uint64_t{2}));
}

TEST(Layout, SpmPlacementWholeObjectsLargestFirstThenPages) {
  VmSpec vm;
  vm.name = "v";
  vm.mems = {{"io", 1, MemType::data, true},
             {"table", 3, MemType::data, true},
             {"state", 2, MemType::data, true},
             {"cold", 2, MemType::data, false},
             {"code", 3, MemType::code, true}};
  const auto plan = plan_memory(vm, true, 2, 5);
  // table (3) fits, state (2) fits, io (1) has no room left.
  EXPECT_EQ(plan.objects[1].spm_pages, 3U);
  EXPECT_EQ(plan.objects[2].spm_pages, 2U);
  EXPECT_EQ(plan.objects[0].spm_pages, 0U);
  EXPECT_EQ(plan.objects[3].spm_pages, 0U);
  EXPECT_EQ(plan.dspm_pages_used, 5U);
  // Code does not fit whole; two of its three pages go to SPM.
  EXPECT_EQ(plan.objects[4].spm_pages, 2U);
  EXPECT_EQ(plan.objects[4].pages[0], 0x5000'0000U);
  EXPECT_EQ(plan.objects[4].pages[2] >> 28, 0x4U);
  EXPECT_EQ(plan.ispm_pages_used, 2U);
  const auto none = plan_memory(vm, false, 2, 5);
  EXPECT_EQ(none.dspm_pages_used + none.ispm_pages_used, 0U);
  vm.ram_bytes = 4 * kPageBytes;
  EXPECT_THROW(plan_memory(vm, false, 0, 0), ConfigError);
}

TEST(Presets, ShippedConfigsMatchEmbeddedText) {
  for (const auto& p : presets()) {
    const auto file = fs::path(VMRT_SOURCE_DIR) / "configs" / (std::string(p.name) + ".ini");
    EXPECT_EQ(slurp(file), p.text) << file;
  }
}

TEST(Presets, ScenarioNames) {
  auto names = [](std::string_view text) {
    std::vector<std::string> n;
    for (const auto& s : parse_config(std::string(text)).scenarios) n.push_back(s.name);
    return n;
  };
  EXPECT_EQ(names(preset_text::kSyntheticNoSpm),
            (std::vector<std::string>{"a_isolation", "b_interference", "c_partitioning", "d_locking",
                                      "e_partitioning_locking"}));
  EXPECT_EQ(names(preset_text::kPowerWindowLike).size(), 7U);
}

TEST(Matrix, EmptyScenarioListGivesEmptyBundle) {
  const auto dir = scratch("empty");
  const auto m = run_matrix(parse_config("[run]\niterations = 3\n"), {}, dir);
  EXPECT_TRUE(m.scenarios.empty());
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_TRUE(j.at("scenarios").empty());
}

TEST(Matrix, SummaryFieldsAndCsv) {
  const auto dir = scratch("summary");
  RunOptions opt;
  opt.dump_state = true;
  const auto cfg = small(preset_text::kSyntheticNoSpm, 20);
  (void)run_matrix(cfg, opt, dir);
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(j.at("tool"), "vmrt");
  EXPECT_EQ(j.at("version"), kVersion);
  EXPECT_EQ(j.at("config_hash"), "fnv1a64:" + hex64(fnv1a64(cfg.source_text)));
  EXPECT_EQ(j.at("stddev"), "population");
  EXPECT_EQ(j.at("baselines").at("isolation"), "a_isolation");
  EXPECT_EQ(j.at("baselines").at("unmitigated"), "b_interference");
  ASSERT_EQ(j.at("scenarios").size(), 5U);
  const auto& iso = j.at("scenarios")[0];
  EXPECT_EQ(iso.at("vs_isolation").at("mean_pct"), 0.0);
  EXPECT_EQ(iso.at("iterations"), 20);
  const auto csv = slurp(dir / "d_locking.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,cycles,tlb_misses,cache_misses");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
  EXPECT_NE(slurp(dir / "d_locking.state.txt").find("lock vm=bench"), std::string::npos);
}

TEST(Matrix, ZeroBaselineStdIsUndefined) {
  auto cfg = small(preset_text::kSyntheticNoSpm, 10);
  cfg.latency.jitter = 0;
  const auto dir = scratch("undefined");
  const auto m = run_matrix(cfg, {}, dir);
  ASSERT_EQ(m.find("a_isolation")->stats.stddev, 0.0);
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(j.at("scenarios")[1].at("vs_isolation").at("stddev_pct"), "undefined");
  const auto c = compare_bundle(dir, "a_isolation", "b_interference");
  EXPECT_FALSE(c.stddev_pct);
  ASSERT_TRUE(c.mean_pct);
  EXPECT_GT(*c.mean_pct, 0);
}

TEST(Matrix, CompareIdenticalIsZero) {
  const auto dir = scratch("compare");
  (void)run_matrix(small(preset_text::kSyntheticNoSpm, 10), {}, dir);
  const auto c = compare_bundle(dir / "summary.json", "b_interference", "b_interference");
  EXPECT_EQ(c.mean_pct, 0.0);
  EXPECT_EQ(c.stddev_pct, 0.0);
  EXPECT_THROW(compare_bundle(dir, "b_interference", "nope"), ConfigError);
  EXPECT_THROW(compare_bundle(scratch("missing"), "a", "b"), ConfigError);
}

TEST(Matrix, ByteIdenticalAcrossRunsAndWorkerCounts) {
  const auto cfg = small(preset_text::kPowerWindowLike, 40);
  const auto d1 = scratch("repro1"), d2 = scratch("repro2"), d3 = scratch("repro3");
  RunOptions serial, parallel;
  serial.workers = 1;
  parallel.workers = 4;
  (void)run_matrix(cfg, serial, d1);
  (void)run_matrix(cfg, serial, d2);
  (void)run_matrix(cfg, parallel, d3);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(d1)) {
    const auto name = e.path().filename();
    EXPECT_EQ(slurp(e.path()), slurp(d2 / name)) << name;
    EXPECT_EQ(slurp(e.path()), slurp(d3 / name)) << name;
    ++files;
  }
  EXPECT_EQ(files, 8U);
}

TEST(Matrix, SeedOverrideChangesResults) {
  const auto cfg = small(preset_text::kSyntheticNoSpm, 30);
  RunOptions a, b;
  a.seed = 1;
  b.seed = 2;
  const auto ra = run_matrix(cfg, a), rb = run_matrix(cfg, b);
  EXPECT_NE(ra.find("b_interference")->records, rb.find("b_interference")->records);
  EXPECT_EQ(rb.seed, 2U);
}
