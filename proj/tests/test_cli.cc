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


#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "psal/ann_field.h"
#include "psal/cli.h"
#include "psal/core.h"

namespace psal {
namespace {

namespace fs = std::filesystem;

const std::string kFixtures = PSAL_FIXTURE_DIR;
const std::string kTarget = kFixtures + "/toy_target.png";
const std::string kReference = kFixtures + "/toy_reference.png";

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "psal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "psal_cli_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> parts;
  std::stringstream s(line);
  std::string part;
  while (std::getline(s, part, sep)) parts.push_back(part);
  return parts;
}

// Metrics line without the trailing newline and the seconds column.
std::string without_seconds(const std::string& line) {
  return line.substr(0, line.rfind(','));
}

double loss_of(const std::string& line) {
  const auto fields = split(line);
  REQUIRE(fields.size() == 7u);
  return std::stod(fields[5]);
}

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"reconstruct", kTarget}).code == kExitUsage);
  CHECK(cli({"reconstruct", kTarget, kTarget, "--metric", "l1"}).code == kExitUsage);
  CHECK(cli({"reconstruct", kTarget, kTarget, "--method", "magic"}).code ==
        kExitUsage);
  CHECK(cli({"reconstruct", kTarget, kTarget, "--threads", "0"}).code == kExitUsage);
  CHECK(cli({"reconstruct", kTarget, kTarget, "--patch", "4"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("missing files exit with 2") {
  const Result r = cli({"reconstruct", scratch("nope.png"), kTarget});
  CHECK(r.code == kExitIo);
  CHECK(r.err.find("nope.png") != std::string::npos);
  CHECK(cli({"train-demo", scratch("nope.png"), kTarget}).code == kExitIo);
}

TEST_CASE("full attention needs equal image sizes") {
  const Result r = cli({"reconstruct", kTarget, kFixtures + "/frame_b.png",
                        "--method", "full", "--force"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("equal size") != std::string::npos);
}

TEST_CASE("self reconstruction with exact-nn is lossless") {
  const std::string out = scratch("self.png");
  const Result r = cli({"reconstruct", kTarget, kTarget, "--method", "exact-nn",
                        "--k", "1", "-o", out});
  REQUIRE(r.code == kExitOk);
  const auto fields = split(r.out.substr(0, r.out.size() - 1));
  REQUIRE(fields.size() == 7u);
  CHECK(fields[0] == "exact-nn");
  CHECK(fields[1] == "1024");
  CHECK(fields[2] == "7");
  CHECK(fields[3] == "1");
  CHECK(fields[4] == "0");
  CHECK(std::stod(fields[5]) == 0.0);
  CHECK(load_image(out) == load_image(kTarget));
}

TEST_CASE("metrics line and method names") {
  const Result psal = cli({"reconstruct", kTarget, kReference});
  REQUIRE(psal.code == kExitOk);
  CHECK(psal.out.rfind("psal-3,1024,7,3,5,", 0) == 0);
  const Result agg = cli({"reconstruct", kTarget, kReference, "--method",
                          "psal-aggreg", "--k", "2", "--iters", "3"});
  CHECK(agg.out.rfind("psal-aggreg,1024,7,2,3,", 0) == 0);
  const Result full = cli({"reconstruct", kTarget, kReference, "--method", "full",
                           "--stride", "4"});
  REQUIRE(full.code == kExitOk);
  CHECK(full.out.rfind("full,1024,7,64,0,", 0) == 0);
}

TEST_CASE("exact-nn matches at least as well as psal-k") {
  // Exact search maximizes patch similarity, so each query's best score can
  // only be higher. Pixel reconstruction loss is not bound by this (the
  // reconstruction uses centre pixels), so it is only reported.
  const std::string exact_path = scratch("exact.bin");
  const std::string approx_path = scratch("approx.bin");
  for (const std::string metric : {"l2", "dot"}) {
    for (const std::string patch : {"3", "7"}) {
      for (const std::string k : {"1", "3"}) {
        const Result exact =
            cli({"reconstruct", kTarget, kReference, "--method", "exact-nn",
                 "--metric", metric, "--patch", patch, "--k", k,
                 "--dump-field", exact_path});
        const Result approx =
            cli({"reconstruct", kTarget, kReference, "--metric", metric,
                 "--patch", patch, "--k", k, "--dump-field", approx_path});
        REQUIRE(exact.code == kExitOk);
        REQUIRE(approx.code == kExitOk);
        std::ifstream fe(exact_path, std::ios::binary);
        std::ifstream fa(approx_path, std::ios::binary);
        const AnnField e = read_field_binary(fe);
        const AnnField a = read_field_binary(fa);
        int worse = 0;
        for (int i = 0; i < e.query_count(); ++i) {
          worse += e.best(i).score < a.best(i).score;
        }
        INFO(metric << " p=" << patch << " k=" << k);
        CHECK(worse == 0);
        MESSAGE(metric << " p=" << patch << " k=" << k << " loss exact "
                       << loss_of(exact.out) << " psal " << loss_of(approx.out));
      }
    }
  }
  // On a self pair the exact field reproduces the image.
  CHECK(loss_of(cli({"reconstruct", kTarget, kTarget, "--method", "exact-nn",
                     "--k", "1"})
                    .out) <=
        loss_of(cli({"reconstruct", kTarget, kTarget, "--k", "1"}).out));
}

TEST_CASE("field dumps are readable") {
  const std::string bin = scratch("field.bin");
  const std::string txt = scratch("field.txt");
  REQUIRE(cli({"reconstruct", kTarget, kReference, "--dump-field", bin}).code == 0);
  REQUIRE(cli({"reconstruct", kTarget, kReference, "--dump-field", txt}).code == 0);
  std::ifstream fb(bin, std::ios::binary), ft(txt);
  const AnnField a = read_field_binary(fb);
  const AnnField b = read_field_text(ft);
  CHECK(a == b);
  CHECK(a.k() == 3);
  CHECK(a.query_count() == 1024);
  CHECK(slurp(txt).rfind("# psal-ann-field 32 32 32 32 3\n", 0) == 0);
  CHECK(cli({"reconstruct", kTarget, kReference, "--method", "full",
             "--dump-field", txt})
            .code == kExitUsage);
}

TEST_CASE("bench prints the memory table") {
  const Result r = cli({"bench", "--sizes", "1,256,512", "--format", "csv"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("full,1,1,O(n^2),4,") != std::string::npos);
  CHECK(r.out.find("full,256,65536,O(n^2),17179869184,17.2 GB,16 GiB") !=
        std::string::npos);
  CHECK(r.out.find("full,512,262144,O(n^2),274877906944,275 GB,256 GiB") !=
        std::string::npos);
  CHECK(r.out.find("psal_3,256,65536,O(3n),786432,786 kB") != std::string::npos);
  CHECK(r.out.find("psal_3,512,262144,O(3n),3145728,3.15 MB") != std::string::npos);
  const Result text = cli({"bench", "--sizes", "256"});
  CHECK(text.out.find("16 GiB") != std::string::npos);
  CHECK(text.out.find("786 kB") != std::string::npos);
  const Result measured = cli({"bench", "--sizes", "16", "--measure", "--format",
                               "csv"});
  CHECK(measured.out.find("16,256,") != std::string::npos);
  CHECK(measured.out.find(",768\n") != std::string::npos);
  CHECK(cli({"bench", "--format", "xml"}).code == kExitUsage);
}

TEST_CASE("gradcheck passes, reports hard mode and fails when perturbed") {
  const Result all = cli({"gradcheck", "--cases", "1"});
  CHECK(all.code == kExitOk);
  CHECK(all.out.find("all gradient checks passed") != std::string::npos);
  const Result hard = cli({"gradcheck", "--mode", "hard", "--cases", "2"});
  CHECK(hard.code == kExitOk);
  CHECK(hard.out.find("dQ = dK = 0 confirmed") != std::string::npos);
  const Result bad = cli({"gradcheck", "--cases", "1", "--inject-error", "1e-3"});
  CHECK(bad.code == kExitCheckFailed);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("train-demo with zero steps") {
  const std::string csv = scratch("loss0.csv");
  const std::string img = scratch("color0.png");
  const Result r = cli({"train-demo", kTarget, kReference, "--steps", "0",
                        "--loss-csv", csv, "-o", img});
  REQUIRE(r.code == kExitOk);
  const std::string text = slurp(csv);
  CHECK(text.rfind("step,loss\n0,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(load_image(img).channels() == 3);
  CHECK(cli({"train-demo", kTarget, kReference, "--optimizer", "sgd"}).code ==
        kExitUsage);
}

TEST_CASE("identical invocations give identical bytes") {
  auto twice = [](std::vector<std::string> args, const std::string& file) {
    std::vector<std::string> outs;
    for (int run = 0; run < 2; ++run) {
      const Result r = cli(args);
      REQUIRE(r.code == kExitOk);
      outs.push_back(file.empty() ? r.out : slurp(file));
    }
    return outs;
  };
  const std::string img = scratch("det.png");
  const std::string field = scratch("det.bin");
  for (const std::string method : {"psal-k", "psal-aggreg", "exact-nn", "full"}) {
    const std::vector<std::string> args = {"reconstruct", kTarget, kReference,
                                           "--method", method, "--seed", "7",
                                           "--threads", "1", "-o", img};
    auto lines = twice(args, "");
    CHECK(without_seconds(lines[0]) == without_seconds(lines[1]));
    auto imgs = twice(args, img);
    CHECK(imgs[0] == imgs[1]);
  }
  auto fields = twice({"reconstruct", kTarget, kReference, "--dump-field", field},
                      field);
  CHECK(fields[0] == fields[1]);
  auto bench = twice({"bench", "--measure", "--sizes", "16,24"}, "");
  CHECK(bench[0] == bench[1]);
  auto grads = twice({"gradcheck", "--cases", "1"}, "");
  CHECK(grads[0] == grads[1]);
  const std::string csv = scratch("det.csv");
  auto curves = twice({"train-demo", kTarget, kReference, "--steps", "3",
                       "--loss-csv", csv, "-o", img},
                      csv);
  CHECK(curves[0] == curves[1]);
}

}  // namespace
}  // namespace psal
