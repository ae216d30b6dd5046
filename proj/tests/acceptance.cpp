// Acceptance suite. One PASS/FAIL line per criterion. Exit status 1 if any
// criterion fails, 2 if a run throws.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include "suites.hpp"
#include "vmrt/harness.hpp"
#include "vmrt/presets.hpp"
#include "vmrt/vectors.hpp"

using namespace vmrt;
namespace fs = std::filesystem;

namespace {

int failures = 0;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void report(int n, bool ok, const std::string& detail, double secs) {
  std::printf("criterion %2d: %s  %s (%.2f s)\n", n, ok ? "PASS" : "FAIL", detail.c_str(), secs);
  std::fflush(stdout);
  failures += !ok;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string preset(const char* name) { return std::string(find_preset(name)->text); }

std::string set_key(std::string text, const std::string& section, const std::string& key, const std::string& value) {
  const std::regex re("(\\[" + section + "\\][^\\[]*\\n" + key + " = )[^\\n]*");
  if (!std::regex_search(text, re)) throw std::runtime_error("no " + section + "." + key);
  return std::regex_replace(text, re, "$01" + value);
}

double sd(const MatrixResult& m, const char* name) { return m.find(name)->stats.stddev; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void c1() {
  Timer t;
  std::string detail;
  bool ok = true;
  for (const auto& r : run_plru_vectors()) {
    ok = ok && r.passed;
    detail += r.name + (r.passed ? " ok " : " FAILED ");
  }
  const double s = t.seconds();
  report(1, ok && s < 1.0, detail + "(limit 1 s)", s);
}

void c2() {
  Timer t;
  std::uint64_t cases = 0;
  const auto bad = suites::plru_exhaustive(&cases);
  const double s = t.seconds();
  report(2, bad == 0 && s < 10.0, fmt("%llu cases, %llu mismatches (limit 10 s)", (unsigned long long)cases, (unsigned long long)bad), s);
}

void c3() {
  Timer t;
  const auto bad = suites::partition_isolation(3, 10000);
  report(3, bad == 0, fmt("10000 streams, %llu violations", (unsigned long long)bad), t.seconds());
}

void c4() {
  Timer t;
  const auto bad = suites::vanilla_equivalence(4, 100000);
  report(4, bad == 0, fmt("100000 fills, %llu mismatches", (unsigned long long)bad), t.seconds());
}

void c5() {
  Timer t;
  const auto n = suites::fixed_walk_counts();
  const auto bad = suites::two_stage_walks(5, 1000);
  const bool ok = n[0] == 15 && n[1] == 7 && n[2] == 7 && bad == 0;
  report(5, ok, fmt("fetches %zu/%zu/%zu (want 15/7/7), 1000 random mappings, %llu mismatches", n[0], n[1], n[2],
                    (unsigned long long)bad), t.seconds());
}

// Critical VM: one code page and four data pages, all SPM-resident and
// lock-covered; jitter off; interference on.
void c6() {
  Timer t;
  std::string text = preset("synthetic-spm");
  text = set_key(text, "mem.bench.data", "pages", "4");
  text = set_key(text, "latency", "jitter", "none");
  auto cfg = parse_config(text);
  cfg.iterations = 1000;
  std::erase_if(cfg.scenarios, [](const ScenarioSpec& s) {
    return s.name != "d_locking" && s.name != "e_partitioning_locking";
  });
  bool ok = cfg.scenarios.size() == 2;
  std::string detail;
  for (std::uint64_t seed : {1, 2}) {
    RunOptions opt;
    opt.seed = seed;
    const auto m = run_matrix(cfg, opt);
    for (const auto& s : m.scenarios) {
      std::uint64_t interference = 0;
      for (const auto& r : s.records) interference += r.interference_accesses;
      ok = ok && s.stats.stddev == 0.0 && s.stats.min == s.stats.max && interference > 0;
      detail += fmt("%s seed %llu: cycles %llu..%llu std %g; ", s.spec.name.c_str(), (unsigned long long)seed,
                    (unsigned long long)s.stats.min, (unsigned long long)s.stats.max, s.stats.stddev);
    }
  }
  report(6, ok, detail + "1000 iterations each", t.seconds());
}

struct Ratios {
  double raise, lock, lock_spm, pw_all;
};

Ratios ratios(const std::string& nospm, const std::string& spm, const std::string& pw, std::uint64_t seed,
              std::uint64_t iterations) {
  RunOptions opt;
  opt.seed = seed;
  auto run = [&](const std::string& text) {
    auto cfg = parse_config(text);
    cfg.iterations = iterations;
    return run_matrix(cfg, opt);
  };
  const auto a = run(nospm), b = run(spm), c = run(pw);
  const double unm = sd(a, "b_interference");
  return {unm / sd(a, "a_isolation"), 1 - sd(a, "d_locking") / unm,
          1 - sd(b, "d_locking") / sd(b, "ref_interference_nospm"),
          1 - sd(c, "g_all") / sd(c, "b_interference")};
}

bool within(const Ratios& r) { return r.raise >= 3 && r.lock >= 0.5 && r.lock_spm >= 0.85 && r.pw_all >= 0.85; }

void c7() {
  Timer t;
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = ratios(preset("synthetic-nospm"), preset("synthetic-spm"), preset("powerwindow-like"), seed, 1000);
    ok = ok && within(r);
    detail += fmt("seed %llu: %.2fx / %+.1f%% / %+.1f%% / %+.1f%%; ", (unsigned long long)seed, r.raise,
                  -100 * r.lock, -100 * r.lock_spm, -100 * r.pw_all);
  }
  const double s = t.seconds();
  report(7, ok && s < 300, detail + "(want >=3x / <=-50% / <=-85% / <=-85%, limit 300 s)", s);
}

// Informational: interference touch rate (compute cycles between heap
// writes, and heap size) against the criterion-7 thresholds.
void touch_rate_sweep() {
  std::printf("touch-rate sweep (seed 1, 300 iterations; informational):\n");
  auto tweak = [](std::string text, const char* cycles, const char* pages) {
    text = set_key(text, "access.linux.heap", "compute_cycles", cycles);
    return set_key(text, "mem.linux.heap", "pages", pages);
  };
  for (const char* pages : {"32", "64", "96"}) {
    for (const char* cycles : {"300", "600", "1200", "2400", "4800"}) {
      const auto r = ratios(tweak(preset("synthetic-nospm"), cycles, pages), tweak(preset("synthetic-spm"), cycles, pages),
                            tweak(preset("powerwindow-like"), cycles, pages), 1, 300);
      std::printf("  heap %2s pages, %4s cycles/write: %6.2fx  %+7.1f%%  %+7.1f%%  %+7.1f%%  %s\n", pages, cycles,
                  r.raise, -100 * r.lock, -100 * r.lock_spm, -100 * r.pw_all, within(r) ? "in band" : "out of band");
    }
  }
  std::fflush(stdout);
}

void c8() {
  Timer t;
  std::uint64_t bad = 0, ops = 0;
  for (std::uint64_t seed : {8, 9, 10}) {
    const auto r = suites::spm_properties(seed, 10000);
    bad += r.total();
    ops += r.ops;
  }
  report(8, bad == 0, fmt("%llu random operations over 3 suites, %llu violations", (unsigned long long)ops,
                          (unsigned long long)bad), t.seconds());
}

void c9() {
  Timer t;
  const auto bad = suites::csr_protocol(9, 100000);
  report(9, bad == 0, fmt("100000 steps, %llu mismatches", (unsigned long long)bad), t.seconds());
}

void c10() {
  Timer t;
  const fs::path root = fs::temp_directory_path() / "vmrt_acceptance";
  bool ok = true;
  std::size_t files = 0;
  for (const auto& p : presets()) {
    auto cfg = parse_config(std::string(p.text));
    cfg.iterations = 100;
    RunOptions serial, parallel;
    serial.workers = 1;
    serial.dump_state = parallel.dump_state = true;
    parallel.workers = 4;
    const fs::path d[3] = {root / (std::string(p.name) + "_1"), root / (std::string(p.name) + "_2"),
                           root / (std::string(p.name) + "_par")};
    for (const auto& x : d) fs::remove_all(x);
    (void)run_matrix(cfg, serial, d[0]);
    (void)run_matrix(cfg, serial, d[1]);
    (void)run_matrix(cfg, parallel, d[2]);
    for (const auto& e : fs::directory_iterator(d[0])) {
      const auto body = slurp(e.path());
      ok = ok && body == slurp(d[1] / e.path().filename()) && body == slurp(d[2] / e.path().filename());
      ++files;
    }
  }
  fs::remove_all(root);
  report(10, ok && files > 0, fmt("%zu files compared, repeat and 1 vs 4 workers", files), t.seconds());
}

}  // namespace

int main() {
  try {
    c1();
    c2();
    c3();
    c4();
    c5();
    c6();
    c7();
    touch_rate_sweep();
    c8();
    c9();
    c10();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
