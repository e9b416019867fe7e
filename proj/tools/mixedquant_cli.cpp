// mixedquant command-line tool.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <iostream>
#include <string>
#include <vector>

#include "mixedquant/analysis.hpp"
#include "mixedquant/error.hpp"
#include "mixedquant/fixture.hpp"
#include "mixedquant/model_io.hpp"
#include "mixedquant/tools/mac_oracle.hpp"

namespace fs = std::filesystem;
using namespace mixedquant;

namespace {

constexpr std::uint64_t kDefaultSeed = kDefaultFixtureSeed;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kVerification = 4,
};

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 0;
  std::string rounding = "nearest";

  RoundingMode rounding_mode() const {
    return rounding == "stochastic" ? RoundingMode::stochastic(seed) : RoundingMode::nearest();
  }
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv("MIXEDQUANT_SEED")) {
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(env, &used, 0);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw CLI::ValidationError("MIXEDQUANT_SEED", fmt::format("not an unsigned integer: '{}'", env));
  }
  return kDefaultSeed;
}

std::string hex_id(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::string file_id(const fs::path& p) { return hex_id(fnv1a64(read_file(p))); }

std::vector<WeightFormat> parse_formats(const std::vector<std::string>& descriptors) {
  std::vector<WeightFormat> out;
  for (const std::string& d : descriptors) out.push_back(parse_format(d));
  return out;
}

std::vector<WeightFormat> preset_grid(const std::string& name) {
  if (name == "fixed") return fixed_grid(2, 12);
  if (name == "range-m2") return exponent_range_grid(2, {2, 4, 8, 16});
  if (name == "range-m6") return exponent_range_grid(6, {2, 4, 8, 16});
  if (name == "me") {
    std::vector<WeightFormat> grid;
    for (int m = 1; m <= 10; ++m) {
      for (int e = 0; e <= 5; ++e) grid.push_back(weight_format_from_me(m, e));
    }
    return grid;
  }
  throw CLI::ValidationError("--preset", fmt::format("unknown preset '{}'", name));
}

void write_output(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
    std::fflush(stdout);
    return;
  }
  write_file(path, std::as_bytes(std::span(text.data(), text.size())));
}

// gen-fixture

struct GenFixtureArgs {
  std::string out;
  FixtureSpec spec;
};

void run_gen_fixture(const GenFixtureArgs& a, const Common& c) {
  const Fixture f = generate_fixture(c.seed, a.spec);
  const fs::path root(a.out);
  fs::create_directories(root);
  save_model(f.model, root / "model");
  save_dataset(f.dataset, root / "dataset.qds");
  const std::string listing = checksum_listing(root, "CHECKSUMS");
  write_file(root / "CHECKSUMS", std::as_bytes(std::span(listing.data(), listing.size())));
  fmt::print("wrote {} ({} samples, {} classes, seed {})\n", root.string(), f.dataset.size(),
             f.dataset.class_count(), c.seed);
}

// inspect

struct InspectArgs {
  std::string model;
  std::vector<std::string> formats{"fixed:4f3", "fixed:8f7", "float:3m4e+i"};
};

void run_inspect(const InspectArgs& a) {
  const Model model = load_model(a.model);
  const std::vector<WeightFormat> formats = parse_formats(a.formats);
  for (const Layer& layer : model.layers()) {
    if (!layer.has_weights()) continue;
    const ExponentHistogram h = exponent_histogram(normalize_layer(*layer.weights).tensor);
    fmt::print("layer {} ({}, {} weights)\n", layer.name, kind_name(layer.kind), layer.weights->size());
    fmt::print("  exponent histogram (normalized):");
    for (auto it = h.bins.rbegin(); it != h.bins.rend(); ++it) {
      fmt::print(" {}:{}", it->first, it->second);
    }
    fmt::print(" zero:{}\n", h.zeros);
    for (const WeightFormat& fmt : formats) {
      fmt::print("  zero fraction {:<16} {:.6f}\n", to_string(fmt), zero_fraction(*layer.weights, fmt));
    }
  }
}

// quantize

struct QuantizeArgs {
  std::string model;
  std::string format;
  std::string out;
};

void run_quantize(const QuantizeArgs& a, const Common& c) {
  const Model model = load_model(a.model);
  const WeightFormat fmt = parse_format(a.format);
  save_model(quantize_model(model, fmt, c.rounding_mode()), a.out);
  fmt::print("wrote {} ({})\n", a.out, to_string(fmt));
}

// eval

struct EvalArgs {
  std::string model;
  std::string dataset;
  std::string format = "float:3m4e+i";
  bool reference = false;
  int act_bits = 16;
};

void run_eval(const EvalArgs& a, const Common& c) {
  const Model model = load_model(a.model);
  const LabeledSet data = load_dataset(a.dataset);
  if (a.reference) {
    const EvalResult r = evaluate_detailed(model, data, ReferenceMode{}, c.threads);
    const std::string norm = r.accuracy > 0.0 ? "1.000000" : "undefined";
    fmt::print("reference accuracy {:.6f} ({}/{}) normalized {}\n", r.accuracy, r.correct, r.samples,
               norm);
    return;
  }
  QuantizedMode mode;
  mode.weight_format = parse_format(a.format);
  mode.act_bits = a.act_bits;
  mode.rounding = c.rounding_mode();
  const double ref = evaluate(model, data, ReferenceMode{}, c.threads);
  const EvalResult r = evaluate_detailed(model, data, mode, c.threads);
  const std::string norm = ref > 0.0 ? fmt::format("{:.6f}", r.accuracy / ref) : "undefined";
  fmt::print("{} accuracy {:.6f} ({}/{}) normalized {} saturations {}\n", to_string(mode.weight_format),
             r.accuracy, r.correct, r.samples, norm, r.saturations);
}

// sweep

struct SweepArgs {
  std::string model;
  std::string dataset;
  std::vector<std::string> formats;
  std::vector<std::string> presets;
  std::string output = "-";
  bool json = false;
  int act_bits = 16;
};

void run_sweep(const SweepArgs& a, const Common& c) {
  std::vector<WeightFormat> grid = parse_formats(a.formats);
  for (const std::string& p : a.presets) {
    for (const WeightFormat& f : preset_grid(p)) grid.push_back(f);
  }
  if (grid.empty()) throw CLI::ValidationError("sweep", "give at least one --format or --preset");
  const Model model = load_model(a.model);
  const LabeledSet data = load_dataset(a.dataset);
  SweepOptions options;
  options.act_bits = a.act_bits;
  options.rounding = c.rounding_mode();
  options.workers = c.threads;
  options.metadata.model_id = file_id(fs::path(a.model) / kManifestFile);
  options.metadata.dataset_id = file_id(a.dataset);
  options.metadata.seed = c.seed;
  const SweepReport report = sweep(model, data, grid, options);
  write_output(a.output, a.json ? to_json(report) : to_csv(report));
}

// storage

struct StorageArgs {
  std::string baseline = "fixed:11f10";
  std::string proposed = "float:3m3e+i";
  std::uint64_t count = 1;
};

void run_storage(const StorageArgs& a) {
  const WeightFormat base = parse_format(a.baseline);
  const WeightFormat prop = parse_format(a.proposed);
  const StorageReport r = storage_report(base, prop, a.count);
  fmt::print("{} ({} bits) -> {} ({} bits): {} bits saved over {} weights, {:.1f}% reduction\n",
             to_string(base), r.baseline_bits, to_string(prop), r.proposed_bits, r.bits_saved, a.count,
             r.percent_reduction);
}

// mac-verify

struct MacVerifyArgs {
  std::string act = "fixed:8f7";
  std::string weight = "float:3m4e+i";
};

void run_mac_verify(const MacVerifyArgs& a) {
  const FixedFormat act = parse_fixed_format(a.act);
  const WeightFormat w = parse_format(a.weight);
  const oracle::MacVerifyResult r = oracle::verify_all_products(act, w);
  fmt::print("{} x {}: {}/{} exact\n", to_string(act), to_string(w), r.exact, r.cases);
  if (r.exact != r.cases) {
    throw VerificationFailure(fmt::format("first mismatch: activation code {}, weight code {}",
                                          *r.first_bad_act, *r.first_bad_weight));
  }
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for fixtures and stochastic rounding (env MIXEDQUANT_SEED)");
  sub->add_option("--threads", c.threads, "Worker threads, 0 for all processors");
  sub->add_option("--rounding", c.rounding, "Weight rounding")
      ->check(CLI::IsMember({"nearest", "stochastic"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed-point and minifloat quantization of CNN weights"};
  app.require_subcommand(1);
  Common common;

  GenFixtureArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-fixture", "Write a synthetic model, dataset and checksums");
  gen_cmd->add_option("-o,--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--samples", gen.spec.samples, "Dataset size");
  gen_cmd->add_option("--classes", gen.spec.classes, "Number of classes");
  add_common(gen_cmd, common);

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "Exponent histograms and zero fractions per layer");
  inspect_cmd->add_option("-m,--model", inspect.model, "Model directory")->required();
  inspect_cmd->add_option("-f,--format", inspect.formats, "Formats for the zero-fraction table");

  QuantizeArgs quant;
  auto* quant_cmd = app.add_subcommand("quantize", "Write a model with quantized weights");
  quant_cmd->add_option("-m,--model", quant.model, "Model directory")->required();
  quant_cmd->add_option("-f,--format", quant.format, "Weight format")->required();
  quant_cmd->add_option("-o,--out", quant.out, "Output model directory")->required();
  add_common(quant_cmd, common);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy of one weight format");
  eval_cmd->add_option("-m,--model", eval.model, "Model directory")->required();
  eval_cmd->add_option("-d,--dataset", eval.dataset, "Dataset file")->required();
  auto* eval_fmt = eval_cmd->add_option("-f,--format", eval.format, "Weight format");
  eval_cmd->add_flag("--reference", eval.reference, "Full-precision reference")->excludes(eval_fmt);
  eval_cmd->add_option("--act-bits", eval.act_bits, "Activation width")->check(CLI::Range(2, 32));
  add_common(eval_cmd, common);

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Normalized accuracy over a grid of weight formats");
  sweep_cmd->add_option("-m,--model", sw.model, "Model directory")->required();
  sweep_cmd->add_option("-d,--dataset", sw.dataset, "Dataset file")->required();
  sweep_cmd->add_option("-f,--format", sw.formats, "Grid format (repeatable)");
  sweep_cmd->add_option("-p,--preset", sw.presets, "Grid preset: fixed, range-m2, range-m6, me");
  sweep_cmd->add_option("-o,--output", sw.output, "Output file, - for stdout");
  sweep_cmd->add_flag("--json", sw.json, "JSON instead of CSV");
  sweep_cmd->add_option("--act-bits", sw.act_bits, "Activation width")->check(CLI::Range(2, 32));
  add_common(sweep_cmd, common);

  StorageArgs st;
  auto* storage_cmd = app.add_subcommand("storage", "Weight storage saved by a narrower format");
  storage_cmd->add_option("-b,--baseline", st.baseline, "Baseline format");
  storage_cmd->add_option("-p,--proposed", st.proposed, "Proposed format");
  storage_cmd->add_option("-n,--count", st.count, "Number of weights");

  MacVerifyArgs mv;
  auto* mac_cmd = app.add_subcommand("mac-verify", "Check every product against exact arithmetic");
  mac_cmd->add_option("-a,--act", mv.act, "Activation format");
  mac_cmd->add_option("-w,--weight", mv.weight, "Weight format");

  try {
    common.seed = default_seed();
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) run_gen_fixture(gen, common);
    if (*inspect_cmd) run_inspect(inspect);
    if (*quant_cmd) run_quantize(quant, common);
    if (*eval_cmd) run_eval(eval, common);
    if (*sweep_cmd) run_sweep(sw, common);
    if (*storage_cmd) run_storage(st);
    if (*mac_cmd) run_mac_verify(mv);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kVerification;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
