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


// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.h"
#include "psal/ann_field.h"
#include "psal/attention.h"
#include "psal/autodiff.h"
#include "psal/bench.h"
#include "psal/cli.h"
#include "psal/colorizer.h"

namespace psal {
namespace {

namespace fs = std::filesystem;

const std::string kFixtures = PSAL_FIXTURE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

nlohmann::json goldens() {
  std::ifstream f(kFixtures + "/goldens.json");
  return nlohmann::json::parse(f);
}

struct CliRun {
  int code = 0;
  std::string out;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "psal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str()};
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> parts;
  std::stringstream s(line);
  std::string part;
  while (std::getline(s, part, ',')) parts.push_back(part);
  return parts;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

FeatureMapF crop(const FeatureMapF& m, int x0, int y0, int side) {
  FeatureMapF out(side, side, m.channels());
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < m.channels(); ++c) {
        out.at(x, y, c) = m.at(x0 + x, y0 + y, c);
      }
    }
  }
  return out;
}

// 1. Closed-form memory figures.
Outcome memory_model() {
  auto bytes = [](MemoryMethod method, std::uint64_t side) {
    MemoryModel m;
    m.method = method;
    m.n = side * side;
    m.k = 3;
    return model_bytes(m);
  };
  const bool ok = bytes(MemoryMethod::kFull, 256) == (std::uint64_t{16} << 30) &&
                  bytes(MemoryMethod::kFull, 512) == (std::uint64_t{256} << 30) &&
                  bytes(MemoryMethod::kPsalK, 256) == 786432 &&
                  bytes(MemoryMethod::kPsalK, 512) == 3145728;
  return {ok, "full 256^2 = " + format_iec(bytes(MemoryMethod::kFull, 256)) +
                  ", full 512^2 = " + format_iec(bytes(MemoryMethod::kFull, 512)) +
                  ", psal-3 256^2 = " +
                  std::to_string(bytes(MemoryMethod::kPsalK, 256)) +
                  " B, psal-3 512^2 = " +
                  std::to_string(bytes(MemoryMethod::kPsalK, 512)) + " B"};
}

// 2. Soft k-NN over every key equals dense attention.
Outcome attention_oracle() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  const Metric metrics[] = {Metric::kNegL2, Metric::kDot, Metric::kCosine};
  for (int n = 0; n < 50; ++n) {
    const int qh = 2 + rng() % 11, qw = 2 + rng() % 11;
    const int kh = 2 + rng() % 11, kw = 2 + rng() % 11;
    const int channels = 1 + rng() % 3;
    const int p = 1 + 2 * static_cast<int>(rng() % 3);
    const Metric metric = metrics[rng() % 3];
    const double t = 0.05 + static_cast<double>(rng() % 1000) / 500.0;
    const FeatureMapD q = oracle::random_map(qh, qw, channels, 1000 + n, 0.05, 1.0);
    const FeatureMapD k = oracle::random_map(kh, kw, channels, 2000 + n, 0.05, 1.0);
    const FeatureMapD v = oracle::random_map(kh, kw, 3, 3000 + n);
    const PatchView<double> qv(q, p), kv(k, p);
    const PatchScorer<double> sc(qv, kv, metric);
    const AnnField exhaustive = exact_nn(sc, kh * kw);
    const FeatureMapD soft = soft_knn_attention(sc, v, exhaustive, t);
    worst = std::max(worst, oracle::max_rel_diff(soft, full_attention(sc, v, t)));
    worst = std::max(worst, oracle::max_rel_diff(
                                soft, oracle::dense_attention(q, k, v, p, metric, t)));
  }
  return {worst < 1e-10, "50 instances, max relative error " + fmt("%.2e", worst)};
}

// 3. Aggregation equals the brute-force neighbourhood enumeration.
Outcome aggregation_oracle() {
  double worst = 0.0;
  int instances = 0;
  const Metric metrics[] = {Metric::kNegL2, Metric::kDot, Metric::kCosine};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const int qh = 2 + rng() % 7, qw = 2 + rng() % 7;
    const int kh = 2 + rng() % 7, kw = 2 + rng() % 7;
    const int p = 1 + 2 * static_cast<int>(rng() % 3);
    const int k = 1 + static_cast<int>(rng() % std::min(4, kh * kw));
    const double t = 0.05 + static_cast<double>(rng() % 100) / 50.0;
    const FeatureMapD q = oracle::random_map(qh, qw, 2, 100 + seed, 0.05, 1.0);
    const FeatureMapD key = oracle::random_map(kh, kw, 2, 200 + seed, 0.05, 1.0);
    const FeatureMapD v = oracle::random_map(kh, kw, 3, 300 + seed);
    const PatchView<double> qv(q, p), kv(key, p);
    for (const Metric metric : metrics) {
      const PatchScorer<double> sc(qv, kv, metric);
      SearchParams params;
      params.k = k;
      params.seed = seed;
      const AnnField field = run(sc, params);
      const FeatureMapD expect = oracle::aggregation(
          q, key, v, oracle::field_keys(field), p, metric, t);
      worst = std::max(worst, oracle::max_rel_diff(
                                  aggregation_attention(sc, v, field, t), expect));
      ++instances;
    }
  }
  return {worst < 1e-10, std::to_string(instances) +
                             " instances (20 seeds x 3 metrics), max relative error " +
                             fmt("%.2e", worst)};
}

// 4. PatchMatch against exact search.
Outcome patchmatch_quality() {
  double worst_match = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FeatureMapF m = oracle::random_map(24, 24, 3, 40 + seed).cast<float>();
    const PatchView<float> v(m, 3);
    const PatchScorer<float> sc(v, v, Metric::kNegL2);
    SearchParams params;
    params.iterations = 10;
    params.k = 1;
    params.seed = seed;
    const AnnField approx = run(sc, params);
    const AnnField exact = exact_nn(sc, 1);
    int same = 0;
    for (int i = 0; i < exact.query_count(); ++i) {
      same += approx.best(i).key == exact.best(i).key;
    }
    worst_match = std::min(worst_match,
                           static_cast<double>(same) / exact.query_count());
  }
  const FeatureMapF a = load_image(kFixtures + "/frame_a.png");
  const FeatureMapF b = load_image(kFixtures + "/frame_b.png");
  double worst_gap = 0.0;
  const int origins[][2] = {{96, 64}, {160, 96}, {300, 300}, {400, 200}};
  for (const auto& o : origins) {
    const FeatureMapF ca = crop(a, o[0], o[1], 64), cb = crop(b, o[0], o[1], 64);
    const PatchView<float> av(ca, 7), bv(cb, 7);
    const PatchScorer<float> sc(av, bv, Metric::kNegL2);
    const AnnField approx = run(sc, SearchParams{});
    const AnnField exact = exact_nn(sc, 1);
    double sa = 0.0, se = 0.0;
    for (int i = 0; i < exact.query_count(); ++i) {
      sa += approx.best(i).score;
      se += exact.best(i).score;
    }
    worst_gap = std::max(worst_gap, (se - sa) / std::abs(se));
  }
  return {worst_match >= 0.99 && worst_gap <= 0.05,
          "24x24 identity recovery min " + fmt("%.4f", worst_match) +
              " over 10 seeds; 64x64 fixture crops max best-score gap " +
              fmt("%.4f", worst_gap)};
}

// 5. Best scores never decrease across any search step.
Outcome monotonicity() {
  long violations = 0, checks = 0;
  auto watch = [&](const PatchScorer<float>& sc, const SearchParams& params) {
    std::vector<float> best(sc.queries().count(),
                            -std::numeric_limits<float>::infinity());
    run(sc, params, [&](SearchStep, int, const AnnField& f) {
      for (int i = 0; i < f.query_count(); ++i) {
        violations += f.best(i).score < best[i];
        best[i] = f.best(i).score;
        ++checks;
      }
    });
  };
  const Metric metrics[] = {Metric::kNegL2, Metric::kDot, Metric::kCosine};
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const int h = 8 + 5 * (seed % 4), w = 10 + 4 * (seed % 3);
    const FeatureMapF a = oracle::random_map(h, w, 3, 500 + seed, 0.05, 1.0).cast<float>();
    const FeatureMapF b =
        oracle::random_map(w, h, 3, 600 + seed, 0.05, 1.0).cast<float>();
    const PatchView<float> av(a, 1 + 2 * (seed % 4)), bv(b, 1 + 2 * (seed % 4));
    for (const Metric metric : metrics) {
      SearchParams params;
      params.seed = seed;
      params.k = 1 + seed % 4;
      params.threads = 1 + seed % 3;
      watch(PatchScorer<float>(av, bv, metric), params);
    }
  }
  const FeatureMapF fa = load_image(kFixtures + "/frame_a.png");
  const FeatureMapF fb = load_image(kFixtures + "/frame_b.png");
  const FeatureMapF ca = crop(fa, 128, 128, 96), cb = crop(fb, 128, 128, 96);
  const PatchView<float> av(ca, 7), bv(cb, 7);
  watch(PatchScorer<float>(av, bv, Metric::kNegL2), SearchParams{});
  const FeatureMapF ta = load_image(kFixtures + "/toy_target.png");
  const FeatureMapF tb = load_image(kFixtures + "/toy_reference.png");
  const PatchView<float> tav(ta, 3), tbv(tb, 3);
  watch(PatchScorer<float>(tav, tbv, Metric::kNegL2), SearchParams{});
  return {violations == 0, std::to_string(violations) + " violations in " +
                               std::to_string(checks) + " per-query checks"};
}

// 6. Backward passes against central differences.
Outcome gradients() {
  double worst = 0.0;
  bool hard_zero = true;
  int instances = 0;
  const Metric metrics[] = {Metric::kNegL2, Metric::kDot, Metric::kCosine};
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(seed);
    const int side = 4 + static_cast<int>(rng() % 5);
    const int channels = 1 + static_cast<int>(rng() % 4);
    const oracle::GradInstance in = oracle::grad_instance(side, channels, 70 + seed);
    for (const Metric metric : metrics) {
      worst = std::max(worst, oracle::fd_error(in, AttentionMode::kSoftKnn, metric,
                                               3, 3, 1.0, seed));
      worst = std::max(worst, oracle::fd_error(in, AttentionMode::kAggregation,
                                               metric, 3, 2, 0.7, seed));
      worst = std::max(worst, oracle::fd_error(in, AttentionMode::kHard, metric, 3,
                                               1, 1.0, seed));
      instances += 3;
      GradCheckCase c;
      c.mode = AttentionMode::kHard;
      c.metric = metric;
      c.k = 1;
      c.seed = seed;
      hard_zero = hard_zero && check_attention_gradients(c).qk_exactly_zero;
    }
    worst = std::max(worst,
                     check_conv_gradients(side, side, channels, 3, seed).max_rel_error());
  }
  return {worst < 1e-5 && hard_zero,
          std::to_string(instances) + " attention + 4 conv instances, max relative error " +
              fmt("%.2e", worst) + (hard_zero ? ", hard dQ = dK = 0" : ", hard dQ/dK NOT zero")};
}

// 7. Reconstruction ordering and goldens on the 512x512 frame pair.
Outcome reconstruction() {
  const auto g = goldens()["reconstruct_512"];
  const std::string a = kFixtures + "/frame_a.png", b = kFixtures + "/frame_b.png";
  auto loss = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = {"reconstruct", a, b};
    args.insert(args.end(), extra.begin(), extra.end());
    const CliRun r = cli(args);
    if (r.code != kExitOk) throw std::runtime_error("reconstruct exited with " +
                                                    std::to_string(r.code));
    return std::stod(split(r.out)[5]);
  };
  const double psal = loss({"--method", "psal-k"});
  const double agg = loss({"--method", "psal-aggreg"});
  const double full = loss({"--method", "full", "--stride", "10", "--force"});
  auto close = [](double v, double golden) {
    return std::abs(v - golden) <= 0.02 * golden;
  };
  const bool goldens_ok = close(psal, g["psal-3"]) && close(agg, g["psal-aggreg"]) &&
                          close(full, g["full-stride10"]);
  return {psal < full && agg <= psal && goldens_ok,
          "psal-3 " + fmt("%.6g", psal) + ", psal-aggreg " + fmt("%.6g", agg) +
              ", full/10 " + fmt("%.6g", full) +
              (goldens_ok ? ", goldens within 2%" : ", goldens OFF by > 2%")};
}

// 8. Colorizer: k = 3 beats k = 1, and k = 1 never trains Q/K.
Outcome colorizer() {
  const auto g = goldens()["colorizer_toy"];
  const FeatureMapD target = load_image(kFixtures + "/toy_target.png").cast<double>();
  const FeatureMapD reference =
      load_image(kFixtures + "/toy_reference.png").cast<double>();
  ColorizerConfig soft;
  soft.steps = 500;
  ColorizerConfig hard = soft;
  hard.attention.mode = AttentionMode::kHard;
  hard.attention.k = 1;
  const TrainResult r3 = train_toy_colorizer(target, reference, soft);
  const TrainResult r1 = train_toy_colorizer(target, reference, hard);
  bool zero = true;
  for (std::size_t s = 0; s + 1 < r1.history.size(); ++s) {
    zero = zero && r1.history[s].feature_grad_norm == 0.0;
  }
  const bool below = r3.final_loss() < static_cast<double>(g["soft_knn_k3_threshold"]);
  return {r3.final_loss() < r1.final_loss() && zero && below,
          "500 steps: loss(k=3) " + fmt("%.6g", r3.final_loss()) + ", loss(k=1) " +
              fmt("%.6g", r1.final_loss()) +
              (zero ? ", k=1 Q/K gradients zero at every step"
                    : ", k=1 Q/K gradients NONZERO") +
              (below ? "" : ", k=3 above committed threshold")};
}

// 9. Near-linear growth of search work and exact candidate storage.
Outcome scaling() {
  std::vector<double> xs, ys;
  bool peak_ok = true;
  for (const int side : {32, 64, 128}) {
    const FeatureMapF a = oracle::random_map(side, side, 3, 900 + side).cast<float>();
    const FeatureMapF b = oracle::random_map(side, side, 3, 901 + side).cast<float>();
    const PatchView<float> av(a, 7), bv(b, 7);
    SearchParams params;
    const OpCounter c = count_ops(PatchScorer<float>(av, bv, Metric::kNegL2), params);
    const std::uint64_t n = static_cast<std::uint64_t>(side) * side;
    peak_ok = peak_ok && c.peak_candidate_entries == 3 * n;
    xs.push_back(std::log(static_cast<double>(n)));
    ys.push_back(std::log(static_cast<double>(c.score_evaluations)));
  }
  const double mx = (xs[0] + xs[1] + xs[2]) / 3, my = (ys[0] + ys[1] + ys[2]) / 3;
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < 3; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx;
  return {slope >= 0.9 && slope <= 1.2 && peak_ok,
          "fitted exponent " + fmt("%.4f", slope) +
              (peak_ok ? ", peak entries = k*n" : ", peak entries != k*n")};
}

// 10. Repeated CLI invocations produce identical bytes.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "psal_acceptance";
  fs::create_directories(dir);
  const std::string img = (dir / "out.png").string();
  const std::string field = (dir / "field.bin").string();
  const std::string csv = (dir / "loss.csv").string();
  const std::string a = kFixtures + "/toy_target.png";
  const std::string b = kFixtures + "/toy_reference.png";
  const std::vector<std::vector<std::string>> invocations = {
      {"reconstruct", a, b, "--method", "psal-k", "-o", img, "--dump-field", field},
      {"reconstruct", a, b, "--method", "psal-aggreg", "--k", "5", "-o", img,
       "--dump-field", field},
      {"reconstruct", a, b, "--method", "exact-nn", "-o", img, "--dump-field", field},
      {"reconstruct", a, b, "--method", "full", "--stride", "2", "-o", img},
      {"reconstruct", a, b, "--metric", "dot", "--seed", "99", "-o", img},
      {"bench", "--measure", "--sizes", "16,32"},
      {"gradcheck", "--cases", "1"},
      {"train-demo", a, b, "--steps", "5", "--loss-csv", csv, "-o", img},
  };
  int identical = 0;
  for (auto args : invocations) {
    args.push_back("--threads");
    args.push_back("1");
    if (args[0] != "reconstruct") args.resize(args.size() - 2);
    std::vector<std::string> snapshots;
    for (int rep = 0; rep < 2; ++rep) {
      for (const auto& f : {img, field, csv}) fs::remove(f);
      const CliRun r = cli(args);
      std::string out = r.out;
      // The last metrics-line column is wall-clock time.
      if (args[0] == "reconstruct") out = out.substr(0, out.rfind(','));
      snapshots.push_back(std::to_string(r.code) + '\n' + out + slurp(img) +
                          slurp(field) + slurp(csv));
    }
    identical += snapshots[0] == snapshots[1];
  }
  const int total = static_cast<int>(invocations.size());
  return {identical == total, std::to_string(identical) + "/" + std::to_string(total) +
                                  " invocations byte-identical (--threads 1)"};
}

}  // namespace
}  // namespace psal

int main() {
  struct Criterion {
    const char* name;
    std::function<psal::Outcome()> run;
  };
  const Criterion criteria[] = {
      {"memory-model exactness", psal::memory_model},
      {"oracle equivalence (attention)", psal::attention_oracle},
      {"oracle equivalence (aggregation)", psal::aggregation_oracle},
      {"PatchMatch quality", psal::patchmatch_quality},
      {"monotonicity", psal::monotonicity},
      {"gradient correctness", psal::gradients},
      {"reconstruction ordering (512x512)", psal::reconstruction},
      {"colorizer ordering", psal::colorizer},
      {"scaling", psal::scaling},
      {"determinism", psal::determinism},
  };
  int failures = 0, id = 0;
  for (const auto& c : criteria) {
    ++id;
    const auto start = std::chrono::steady_clock::now();
    psal::Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, c.name,
                o.detail.c_str(), seconds);
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::printf("%d/%d criteria passed\n", id - failures, id);
  return failures == 0 ? 0 : 1;
}
