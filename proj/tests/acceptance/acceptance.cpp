// Acceptance checks AC1..AC8. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "mixedquant/analysis.hpp"
#include "mixedquant/fixture.hpp"
#include "mixedquant/inference.hpp"
#include "mixedquant/number_formats.hpp"
#include "mixedquant/tools/mac_oracle.hpp"
#include "support/temp_dir.hpp"
#include "support/test_oracles.hpp"

#ifndef MIXEDQUANT_CLI
#error "MIXEDQUANT_CLI must name the command-line binary"
#endif

namespace mq = mixedquant;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format(const char* fmt, auto... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string s(static_cast<std::size_t>(n), '\0');
  std::snprintf(s.data(), s.size() + 1, fmt, args...);
  return s;
}

const mq::Fixture& fixture() {
  static const mq::Fixture f = mq::generate_fixture(mq::kDefaultFixtureSeed);
  return f;
}

mq::SweepOptions sweep_options() {
  mq::SweepOptions o;
  o.workers = 0;
  return o;
}

Outcome ac1_datapath() {
  const auto t0 = Clock::now();
  const mq::oracle::MacVerifyResult r =
      mq::oracle::verify_all_products(mq::FixedFormat(8, 7), mq::MiniFloatFormat(3, 4));
  const double t = seconds_since(t0);
  const bool ok = r.cases == 65536 && r.exact == r.cases && t < 5.0;
  return {ok, format("fixed:8f7 x float:3m4e+i: %llu/%llu exact, %.2f s (limit 5 s)",
                     static_cast<unsigned long long>(r.exact), static_cast<unsigned long long>(r.cases), t)};
}

Outcome ac2_quantizer() {
  const auto t0 = Clock::now();
  constexpr int kSamples = 100000;
  const std::vector<mq::WeightFormat> formats = mq::testing::formats_up_to(10);
  std::size_t round_trip_bad = 0, monotone_bad = 0, gap_bad = 0, values = 0;
  std::uint64_t seed = 1;
  for (const mq::WeightFormat& f : formats) {
    const std::vector<double> table = mq::enumerate_values(f);
    values += table.size();
    for (const double v : table) round_trip_bad += mq::decode(mq::quantize(v, f), f) != v;
    const double limit = std::max(std::fabs(table.front()), std::fabs(table.back()));
    mq::testing::RealSampler sample(seed++, limit);
    std::vector<double> xs(kSamples);
    for (double& x : xs) x = std::clamp(sample(), table.front(), table.back());
    std::sort(xs.begin(), xs.end());
    double prev = -INFINITY;
    for (const double x : xs) {
      const double q = mq::decode(mq::quantize(x, f), f);
      monotone_bad += q < prev;
      gap_bad += std::fabs(q - x) > 0.5 * mq::testing::local_gap(x, table);
      prev = q;
    }
  }
  const double t = seconds_since(t0);
  const bool ok = round_trip_bad == 0 && monotone_bad == 0 && gap_bad == 0;
  return {ok, format("%zu formats <= 10 bits: round-trip %zu/%zu bad, %d samples each: monotonicity %zu bad, "
                     "half-gap %zu bad, %.1f s",
                     formats.size(), round_trip_bad, values, kSamples, monotone_bad, gap_bad, t)};
}

Outcome ac3_storage() {
  const std::uint64_t n = 1000000;
  const mq::StorageReport a = mq::storage_report(mq::FixedFormat(8, 7), mq::MiniFloatFormat(3, 3), n);
  const mq::StorageReport b = mq::storage_report(11, 7, n);
  const mq::StorageReport c = mq::storage_report(11, 8, n);
  // Saved bits are exact integers: n of 8n and 4n of 11n.
  const bool exact_a = a.bits_saved == static_cast<std::int64_t>(n) && a.percent_reduction == 12.5;
  const bool exact_b = b.bits_saved == static_cast<std::int64_t>(4 * n);
  const bool ok = exact_a && exact_b && std::fabs(b.percent_reduction - 36.0) <= 0.5;
  return {ok, format("8-bit fixed -> 3m3e+sign %.4f%% (target 12.5); 11 -> 7 bits %.4f%% (target 36 +-0.5); "
                     "for reference 11 -> 8 bits %.4f%%",
                     a.percent_reduction, b.percent_reduction, c.percent_reduction)};
}

Outcome ac4_sharp_rise() {
  const auto t0 = Clock::now();
  const mq::SweepReport r = mq::sweep(fixture().model, fixture().dataset, mq::fixed_grid(2, 12), sweep_options());
  const double t = seconds_since(t0);
  std::string curve;
  int last_low = -1;
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const int bits = 2 + static_cast<int>(i);
    const double a = r.records[i].normalized_accuracy;
    curve += format(" %d:%.3f", bits, a);
    if (a < 0.5) last_low = bits;
  }
  int first_high = -1;
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const int bits = 2 + static_cast<int>(i);
    if (bits > last_low && r.records[i].normalized_accuracy > 0.9) {
      first_high = bits;
      break;
    }
  }
  const bool ok = last_low > 0 && first_high > 0 && first_high - last_low + 1 <= 3 && t < 120.0;
  return {ok, format("last <0.5 at %d bits, first >0.9 at %d bits (window <= 3 widths); %.1f s (limit 120 s);%s",
                     last_low, first_high, t, curve.c_str())};
}

Outcome ac5_range_over_precision() {
  const std::vector<int> ranges{2, 4, 8, 16};
  const mq::SweepReport m2 =
      mq::sweep(fixture().model, fixture().dataset, mq::exponent_range_grid(2, ranges), sweep_options());
  const mq::SweepReport m6 =
      mq::sweep(fixture().model, fixture().dataset, mq::exponent_range_grid(6, ranges), sweep_options());
  // Reference accuracy is 1 on the fixture, so each normalized accuracy is
  // a count over n and the 0.05 bound is checked on counts: 20 |a - b| <= n.
  if (mq::evaluate(fixture().model, fixture().dataset, mq::ReferenceMode{}) != 1.0) {
    return {false, "fixture reference accuracy is not 1"};
  }
  const auto n = static_cast<long long>(fixture().dataset.size());
  const auto count = [&](double acc) { return std::llround(acc * static_cast<double>(n)); };
  bool ok = true;
  std::string rows;
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const double a = m2.records[i].normalized_accuracy;
    const double b = m6.records[i].normalized_accuracy;
    ok = ok && 20 * std::llabs(count(a) - count(b)) <= n;
    rows += format(" R=%d: m2 %.3f m6 %.3f diff %.3f;", ranges[i], a, b, std::fabs(a - b));
  }
  return {ok, "limit 0.05 per range;" + rows};
}

Outcome ac6_float_adequacy() {
  mq::QuantizedMode f34;
  f34.weight_format = mq::MiniFloatFormat(3, 4);
  f34.act_bits = 16;
  mq::QuantizedMode fx4 = f34;
  fx4.weight_format = mq::FixedFormat(4, 3);
  const double a = mq::normalized_accuracy(fixture().model, fixture().dataset, f34, 0);
  const double b = mq::normalized_accuracy(fixture().model, fixture().dataset, fx4, 0);
  return {a >= 0.99 && b < 0.9,
          format("float:3m4e+i with 16-bit activations %.4f (>= 0.99); fixed:4f3 %.4f (< 0.9)", a, b)};
}

Outcome ac7_range_equivalence() {
  bool ok = true;
  std::string bad;
  int checked = 0;
  for (int m = 1; m <= 6; ++m) {
    const std::vector<double> e2 = mq::enumerate_values(mq::MiniFloatFormat(m, 2));
    for (int e = 3; e <= 5; ++e) {
      const mq::MiniFloatFormat capped(m, e, true, 4);
      ++checked;
      if (mq::enumerate_values(capped) != e2) {
        ok = false;
        bad += " " + mq::to_string(capped);
      }
    }
  }
  return {ok, format("%d pairs Float(m, e=2) vs Float(m, e=3..5, R=4), m=1..6: %s", checked,
                     ok ? "all value sets identical" : ("differ:" + bad).c_str())};
}

struct Run {
  int status = -1;
  std::string out;
};

Run run_cli(const std::string& args) {
  const std::string cmd = "'" MIXEDQUANT_CLI "' " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

Outcome ac8_determinism() {
  mq::testing::TempDir dir;
  const std::string root = (dir.path() / "fixture").string();
  if (run_cli("gen-fixture -o '" + root + "'").status != 0) return {false, "gen-fixture failed"};
  const std::string base = "sweep -m '" + root + "/model' -d '" + root +
                           "/dataset.qds' -p fixed -p range-m2 -p range-m6 -f float:3m4e+i --seed 42";
  bool ok = true;
  std::string detail;
  for (const char* rounding : {"nearest", "stochastic"}) {
    const std::string args = base + " --rounding " + rounding;
    const Run a = run_cli(args);
    const Run b = run_cli(args);
    const bool same = a.status == 0 && b.status == 0 && !a.out.empty() && a.out == b.out;
    ok = ok && same;
    detail += format(" %s: %zu bytes, %s;", rounding, a.out.size(), same ? "identical" : "DIFFERENT");
  }
  return {ok, "two sweep runs per rounding mode, same seed:" + detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"AC1 datapath exactness", ac1_datapath},
      {"AC2 quantizer properties", ac2_quantizer},
      {"AC3 storage accounting", ac3_storage},
      {"AC4 sharp rise", ac4_sharp_rise},
      {"AC5 range over precision", ac5_range_over_precision},
      {"AC6 float adequacy", ac6_float_adequacy},
      {"AC7 exponent-range equivalence", ac7_range_equivalence},
      {"AC8 determinism", ac8_determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
