// Copyright 2026 The PSAL Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "psal/cli.h"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "psal/ann_field.h"
#include "psal/attention.h"
#include "psal/autodiff.h"
#include "psal/bench.h"
#include "psal/colorizer.h"
#include "psal/core.h"

namespace psal {

namespace {

struct ReconstructOptions {
  std::string image_a;
  std::string image_b;
  std::string output;
  std::string method = "psal-k";
  std::string metric = "l2";
  std::string dump_field;
  int patch = 7;
  int k = 3;
  int iterations = 5;
  double temperature = 0.1;
  std::uint64_t seed = 0;
  int threads = 1;
  int stride = 10;
  bool force = false;
};

struct BenchOptions {
  std::vector<int> sizes = {32, 64, 128, 256, 512};
  int k = 3;
  int patch = 7;
  int window = 50;
  std::string format = "text";
  bool measure = false;
  int iterations = 5;
  std::uint64_t seed = 0;
};

struct GradcheckOptions {
  std::string mode = "all";
  std::uint64_t seed = 0;
  int size = 6;
  int cases = 3;
  double tolerance = 1e-5;
  double inject_error = 0.0;
};

struct TrainOptions {
  std::string target;
  std::string reference;
  std::string output;
  std::string loss_csv;
  std::string mode = "soft_knn";
  std::string metric = "l2";
  std::string optimizer = "adam";
  int k = 3;
  int patch = 3;
  int steps = 500;
  int iterations = 5;
  double temperature = 0.1;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

double mean_squared_error(const FeatureMapF& a, const FeatureMapF& b) {
  const auto x = a.data();
  const auto y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

void write_field(const AnnField& field, const std::string& path) {
  const bool text = path.size() >= 4 && path.ends_with(".txt");
  std::ofstream f(path, text ? std::ios::out : std::ios::out | std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  if (text) {
    write_field_text(field, f);
  } else {
    write_field_binary(field, f);
  }
  if (!f) throw IoError("failed writing '" + path + "'");
}

std::string format_number(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

int cmd_reconstruct(const ReconstructOptions& o, std::ostream& out) {
  const FeatureMapF a = load_image(o.image_a);
  const FeatureMapF b = load_image(o.image_b);
  if (a.channels() != b.channels()) {
    throw ContractError("images differ in channel count");
  }
  const Metric metric = parse_metric(o.metric);
  if (o.patch < 1 || o.patch % 2 == 0) {
    throw ConfigError("--patch must be odd and positive");
  }
  if (o.threads < 1) throw ConfigError("--threads must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const PatchView<float> queries(a, o.patch);
  const PatchView<float> keys(b, o.patch);
  const PatchScorer<float> scorer(queries, keys, metric);

  FeatureMapF result;
  std::string label = o.method;
  int k = o.k;
  int iterations = o.iterations;
  if (o.method == "psal-k" || o.method == "psal-aggreg") {
    SearchParams params;
    params.iterations = o.iterations;
    params.k = o.k;
    params.seed = o.seed;
    params.threads = o.threads;
    const AnnField field = run(scorer, params);
    if (!o.dump_field.empty()) write_field(field, o.dump_field);
    if (o.method == "psal-k") {
      label = "psal-" + std::to_string(o.k);
      result = soft_knn_attention(scorer, b, field, o.temperature, o.threads);
    } else {
      result = aggregation_attention(scorer, b, field, o.temperature, o.threads);
    }
  } else if (o.method == "full") {
    if (a.width() != b.width() || a.height() != b.height()) {
      throw ContractError("full attention needs images of equal size, got " +
                          std::to_string(a.width()) + "x" +
                          std::to_string(a.height()) + " and " +
                          std::to_string(b.width()) + "x" +
                          std::to_string(b.height()));
    }
    if (!o.dump_field.empty()) {
      throw ConfigError("--dump-field is not available for the full method");
    }
    result = full_attention(scorer, b, o.temperature, o.stride, o.force,
                            o.threads);
    // k reports how many keys each query attends to.
    k = ((b.width() + o.stride - 1) / o.stride) *
        ((b.height() + o.stride - 1) / o.stride);
    iterations = 0;
  } else if (o.method == "exact-nn") {
    // Same attention as psal-k, on the exact top-k field.
    const AnnField field = exact_nn(scorer, o.k, o.force);
    if (!o.dump_field.empty()) write_field(field, o.dump_field);
    result = o.k == 1 ? hard_attention(field, b)
                      : soft_knn_attention(scorer, b, field, o.temperature,
                                           o.threads);
    iterations = 0;
  } else {
    throw ConfigError("unknown method '" + o.method +
                      "' (expected psal-k, psal-aggreg, full or exact-nn)");
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  const double loss = mean_squared_error(result, a);
  if (!o.output.empty()) save_image(result, o.output);
  out << label << ',' << a.pixel_count() << ',' << o.patch << ',' << k << ','
      << iterations << ',' << format_number("%.9g", loss) << ','
      << format_number("%.3f", seconds) << '\n';
  return kExitOk;
}

int cmd_bench(const BenchOptions& o, std::ostream& out) {
  const auto rows = memory_table(o.sizes, o.k, o.patch, o.window);
  if (o.format == "csv") {
    write_memory_table_csv(rows, out);
  } else if (o.format == "text") {
    write_memory_table_text(rows, out);
  } else {
    throw ConfigError("--format must be text or csv");
  }
  if (!o.measure) return kExitOk;
  // Measured search cost on uniform-noise images of each size.
  out << (o.format == "csv" ? "\nside,n,score_evaluations,peak_entries\n"
                            : "\nmeasured search (N=" +
                                  std::to_string(o.iterations) + ")\n");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  for (const int side : o.sizes) {
    std::vector<float> qa(static_cast<std::size_t>(side) * side * 3);
    std::vector<float> ka(qa.size());
    for (auto& v : qa) v = unit(rng);
    for (auto& v : ka) v = unit(rng);
    const FeatureMapF q(side, side, 3, std::move(qa));
    const FeatureMapF key(side, side, 3, std::move(ka));
    const PatchView<float> qv(q, o.patch);
    const PatchView<float> kv(key, o.patch);
    SearchParams params;
    params.iterations = o.iterations;
    params.k = o.k;
    params.seed = o.seed;
    const OpCounter c = count_ops(PatchScorer<float>(qv, kv, Metric::kNegL2),
                                  params);
    out << side << ',' << static_cast<std::uint64_t>(side) * side << ','
        << c.score_evaluations << ',' << c.peak_candidate_entries << '\n';
  }
  return kExitOk;
}

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  std::vector<AttentionMode> modes;
  if (o.mode == "all") {
    modes = {AttentionMode::kHard, AttentionMode::kSoftKnn,
             AttentionMode::kAggregation};
  } else {
    modes = {parse_attention_mode(o.mode)};
  }
  if (o.size < 2 || o.cases < 1) {
    throw ConfigError("--size must be >= 2 and --cases >= 1");
  }
  bool ok = true;
  const auto prec = out.precision(3);
  out << std::scientific;
  for (const AttentionMode mode : modes) {
    for (const Metric metric : {Metric::kNegL2, Metric::kDot, Metric::kCosine}) {
      for (int c = 0; c < o.cases; ++c) {
        GradCheckCase gc;
        gc.mode = mode;
        gc.metric = metric;
        gc.height = o.size;
        gc.width = o.size;
        gc.k = mode == AttentionMode::kHard ? 1 : 3;
        gc.seed = o.seed + static_cast<std::uint64_t>(c);
        const GradCheckResult r =
            check_attention_gradients(gc, 1e-5, o.inject_error);
        bool pass = r.max_rel_error() < o.tolerance;
        out << to_string(mode) << ' ' << to_string(metric)
            << " seed=" << gc.seed;
        if (mode == AttentionMode::kHard) {
          pass = pass && r.qk_exactly_zero;
          out << " dV=" << r.rel_error_dv
              << (r.qk_exactly_zero ? " dQ = dK = 0 confirmed"
                                    : " dQ/dK NOT zero");
        } else {
          out << " dQ=" << r.rel_error_dq << " dK=" << r.rel_error_dk
              << " dV=" << r.rel_error_dv;
        }
        out << (pass ? " PASS" : " FAIL") << '\n';
        ok = ok && pass;
      }
    }
  }
  if (o.mode == "all") {
    for (int c = 0; c < o.cases; ++c) {
      const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(c);
      const ConvCheckResult r =
          check_conv_gradients(o.size, o.size, 2, 3, seed, 1e-5, o.inject_error);
      const bool pass = r.max_rel_error() < o.tolerance;
      out << "conv3x3 seed=" << seed << " input=" << r.rel_error_input
          << " weights=" << r.rel_error_weights << " bias=" << r.rel_error_bias
          << (pass ? " PASS" : " FAIL") << '\n';
      ok = ok && pass;
    }
  }
  out << std::defaultfloat;
  out.precision(prec);
  out << (ok ? "all gradient checks passed\n" : "gradient check FAILED\n");
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
  const FeatureMapD target = load_image(o.target).cast<double>();
  const FeatureMapD reference = load_image(o.reference).cast<double>();
  ColorizerConfig config;
  config.attention.metric = parse_metric(o.metric);
  config.attention.mode = parse_attention_mode(o.mode);
  config.attention.temperature = o.temperature;
  config.attention.patch_size = o.patch;
  config.attention.k = config.attention.mode == AttentionMode::kHard ? 1 : o.k;
  config.steps = o.steps;
  config.search_iterations = o.iterations;
  config.learning_rate = o.learning_rate;
  config.seed = o.seed;
  if (o.optimizer == "adam") {
    config.optimizer = Optimizer::kAdam;
  } else if (o.optimizer == "momentum") {
    config.optimizer = Optimizer::kMomentum;
  } else {
    throw ConfigError("--optimizer must be adam or momentum");
  }
  const TrainResult result = train_toy_colorizer(target, reference, config);
  if (o.loss_csv.empty()) {
    write_loss_csv(result, out);
  } else {
    std::ofstream f(o.loss_csv);
    if (!f) throw IoError("cannot open '" + o.loss_csv + "' for writing");
    write_loss_csv(result, f);
    if (!f) throw IoError("failed writing '" + o.loss_csv + "'");
  }
  if (!o.output.empty()) save_image(result.prediction.cast<float>(), o.output);
  return kExitOk;
}

void add_threads(CLI::App* app, int& threads) {
  app->add_option("--threads", threads, "Worker threads (1 is deterministic)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Patch-based stochastic attention toolkit", "psal"};
  app.require_subcommand(1);

  ReconstructOptions rec;
  CLI::App* reconstruct = app.add_subcommand(
      "reconstruct", "Reconstruct image A from the pixels of image B");
  reconstruct->add_option("image_a", rec.image_a, "Query image (PNG)")
      ->required();
  reconstruct->add_option("image_b", rec.image_b, "Key/value image (PNG)")
      ->required();
  reconstruct->add_option("-o,--output", rec.output, "Output PNG");
  reconstruct
      ->add_option("--method", rec.method,
                   "psal-k, psal-aggreg, full or exact-nn")
      ->capture_default_str();
  reconstruct->add_option("--patch", rec.patch, "Patch size p (odd)")
      ->capture_default_str();
  reconstruct->add_option("--k", rec.k, "Candidates per query")
      ->capture_default_str();
  reconstruct->add_option("--iters", rec.iterations, "PatchMatch iterations N")
      ->capture_default_str();
  reconstruct->add_option("--metric", rec.metric, "dot, l2 or cosine")
      ->capture_default_str();
  reconstruct->add_option("--temp", rec.temperature, "Softmax temperature t")
      ->capture_default_str();
  reconstruct->add_option("--seed", rec.seed, "RNG seed")->capture_default_str();
  reconstruct->add_option("--stride", rec.stride, "Key stride for full")
      ->capture_default_str();
  reconstruct->add_flag("--force", rec.force,
                        "Run exhaustive methods above the work cap");
  reconstruct->add_option("--dump-field", rec.dump_field,
                          "Write the ANN field (.txt for text, else binary)");
  add_threads(reconstruct, rec.threads);

  BenchOptions bench;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "Attention memory model table");
  bench_cmd->add_option("--sizes", bench.sizes, "Image sides")
      ->delimiter(',')
      ->capture_default_str();
  bench_cmd->add_option("--k", bench.k)->capture_default_str();
  bench_cmd->add_option("--patch", bench.patch)->capture_default_str();
  bench_cmd->add_option("--window", bench.window, "Local attention window w")
      ->capture_default_str();
  bench_cmd->add_option("--format", bench.format, "text or csv")
      ->capture_default_str();
  bench_cmd->add_flag("--measure", bench.measure,
                      "Also count score evaluations of real searches");
  bench_cmd->add_option("--iters", bench.iterations)->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed)->capture_default_str();

  GradcheckOptions gc;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference check of every backward operation");
  gradcheck->add_option("--mode", gc.mode, "all, hard, soft_knn or aggregation")
      ->capture_default_str();
  gradcheck->add_option("--seed", gc.seed)->capture_default_str();
  gradcheck->add_option("--size", gc.size, "Instance side")
      ->capture_default_str();
  gradcheck->add_option("--cases", gc.cases, "Random instances per setting")
      ->capture_default_str();
  gradcheck->add_option("--tolerance", gc.tolerance)->capture_default_str();
  // Negative control for tests: biases every analytic gradient.
  gradcheck->add_option("--inject-error", gc.inject_error)->group("");

  TrainOptions tr;
  CLI::App* train = app.add_subcommand(
      "train-demo", "Train the toy guided colorization network");
  train->add_option("target", tr.target, "Color ground truth of the query")
      ->required();
  train->add_option("reference", tr.reference, "Color reference image")
      ->required();
  train->add_option("-o,--output", tr.output, "Colorized output PNG");
  train->add_option("--loss-csv", tr.loss_csv, "Loss curve (default stdout)");
  train->add_option("--mode", tr.mode, "hard, soft_knn or aggregation")
      ->capture_default_str();
  train->add_option("--k", tr.k)->capture_default_str();
  train->add_option("--patch", tr.patch)->capture_default_str();
  train->add_option("--steps", tr.steps)->capture_default_str();
  train->add_option("--iters", tr.iterations)->capture_default_str();
  train->add_option("--metric", tr.metric)->capture_default_str();
  train->add_option("--temp", tr.temperature)->capture_default_str();
  train->add_option("--lr", tr.learning_rate)->capture_default_str();
  train->add_option("--optimizer", tr.optimizer, "adam or momentum")
      ->capture_default_str();
  train->add_option("--seed", tr.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (reconstruct->parsed()) return cmd_reconstruct(rec, out);
    if (bench_cmd->parsed()) return cmd_bench(bench, out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc, out);
    if (train->parsed()) return cmd_train(tr, out);
  } catch (const IoError& e) {
    err << "psal: " << e.what() << '\n';
    return kExitIo;
  } catch (const TrainingError& e) {
    err << "psal: " << e.what() << '\n';
    return kExitCheckFailed;
  } catch (const Error& e) {
    err << "psal: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace psal
