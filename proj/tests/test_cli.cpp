// End-to-end tests that drive the installed command-line binary as a child
// process. The binary path arrives via the DIFFIQ_CLI environment variable
// (set by CTest); every run works inside a throwaway directory.

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "diffiq/errors.hpp"
#include "diffiq/image.hpp"
#include "diffiq/metrics.hpp"
#include "diffiq/synth.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace diffiq;
using njson = nlohmann::json;

namespace {

std::string cli_path() {
  const char* p = std::getenv("DIFFIQ_CLI");
  REQUIRE_MESSAGE(p != nullptr, "DIFFIQ_CLI must point at the built binary");
  return p;
}

struct CliRun {
  int code = -1;
  std::string output;  // stdout and stderr combined
};

CliRun run_cli(const std::string& args, const testutil::TempDir& dir, const char* tag) {
  const std::string log = dir.file(std::string("log_") + tag + ".txt");
  const std::string cmd = "\"" + cli_path() + "\" " + args + " >\"" + log + "\" 2>&1";
  int rc = std::system(cmd.c_str());
  CliRun r;
  if (rc != -1 && WIFEXITED(rc)) r.code = WEXITSTATUS(rc);
  std::ifstream f(log, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE_MESSAGE(f.good(), "missing file: " << path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

int line_count(const std::string& text) {
  int n = 0;
  for (char ch : text)
    if (ch == '\n') ++n;
  return n;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != '\n') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string first_line(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

std::string second_line(const std::string& text) {
  auto a = text.find('\n');
  auto b = text.find('\n', a + 1);
  return text.substr(a + 1, b - a - 1);
}

}  // namespace

TEST_CASE("cli score reports an identity image at the calibration point") {
  testutil::TempDir td("cli-score");
  const std::string ref = td.file("ref.pgm");
  save_pgm(ref, testutil::scene8(64, 64, 301));
  const std::string out = td.file("out");

  CliRun r = run_cli("score --ref \"" + ref + "\" --dist \"" + ref + "\" --out \"" + out + "\"",
                     td, "score");
  CHECK(r.code == 0);

  const njson rep = njson::parse(slurp(out + "/report.json"));
  CHECK(rep.at("fused_clipped").get<double>() == doctest::Approx(97.4).epsilon(1e-9));
  CHECK(rep.at("fused_unclipped").get<double>() ==
        doctest::Approx(rep.at("fused_clipped").get<double>()).epsilon(1e-12));
  CHECK(rep.at("psnr").get<std::string>() == "inf");
  CHECK(rep.at("features").at("vif0").get<double>() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rep.at("features").at("adm").get<double>() == 1.0);
  CHECK(rep.at("features").at("motion").get<double>() == 0.0);

  const njson man = njson::parse(slurp(out + "/manifest.json"));
  CHECK(man.at("subcommand").get<std::string>() == "score");
  CHECK(man.at("config").at("ref").get<std::string>() == ref);
  bool has_report = false;
  for (const auto& o : man.at("outputs")) has_report |= o.get<std::string>() == "report.json";
  CHECK(has_report);

  // Without --out the report still goes to stdout and nothing is written.
  CliRun r2 = run_cli("score --ref \"" + ref + "\" --dist \"" + ref + "\"", td, "score2");
  CHECK(r2.code == 0);
  const njson rep2 = njson::parse(r2.output);
  CHECK(rep2.contains("features"));
}

TEST_CASE("cli synth generates a deterministic corpus") {
  testutil::TempDir td("cli-synth");
  const std::string d1 = td.file("a"), d2 = td.file("b");
  CHECK(run_cli("synth --count 3 --width 40 --height 32 --seed 9 --out \"" + d1 + "\"", td,
                "synth1")
            .code == 0);
  CHECK(run_cli("synth --count 3 --width 40 --height 32 --seed 9 --out \"" + d2 + "\"", td,
                "synth2")
            .code == 0);
  for (const char* name : {"scene_000.pgm", "scene_001.pgm", "scene_002.pgm"}) {
    CHECK(file_exists(d1 + "/" + name));
    CHECK(slurp(d1 + "/" + name) == slurp(d2 + "/" + name));
  }
  const ImagePlane img = load_image(d1 + "/scene_000.pgm");
  CHECK(img.width == 40);
  CHECK(img.height == 32);
  CHECK(plane_min(img) >= 0.0);
  CHECK(plane_max(img) <= 255.0);
}

TEST_CASE("cli attack writes perturbed images, traces and a report table") {
  testutil::TempDir td("cli-attack");
  const std::string ref = td.file("ref.pgm");
  save_pgm(ref, testutil::scene8(48, 48, 302));
  const std::string out = td.file("out");

  CliRun r = run_cli("attack --ref \"" + ref +
                         "\" --norm linf --epsilon 2 --steps 8 --alpha 0.5 --out \"" + out + "\"",
                     td, "attack");
  CHECK(r.code == 0);
  for (const char* name :
       {"ref_perturbed.pgm", "ref_delta.pgm", "ref_trace.csv", "report.csv", "manifest.json"})
    CHECK(file_exists(out + "/" + name));

  const std::string report = slurp(out + "/report.csv");
  CHECK(first_line(report) == "id,epsilon,score_before,score_after,gain,psnr_after,final_norm");
  CHECK(line_count(report) == 2);
  const auto row = split_csv(second_line(report));
  REQUIRE(row.size() == 7);
  CHECK(row[0] == "ref");
  CHECK(std::stod(row[1]) == doctest::Approx(2.0));
  CHECK(std::stod(row[4]) > 0.0);  // gain
  CHECK(std::stod(row[3]) == doctest::Approx(std::stod(row[2]) + std::stod(row[4])).epsilon(1e-9));

  CHECK(line_count(slurp(out + "/ref_trace.csv")) == 9);  // header + 8 steps

  // The quantized perturbed image stays inside the linf ball around the
  // (integral) reference.
  const ImagePlane orig = load_image(ref);
  const ImagePlane adv = load_image(out + "/ref_perturbed.pgm");
  CHECK(testutil::max_abs_diff(orig, adv) <= 2.0 + 1e-12);
  CHECK(testutil::max_abs_diff(orig, adv) > 0.0);
}

TEST_CASE("cli rerun reproduces curve and score runs byte for byte") {
  testutil::TempDir td("cli-rerun");
  // 48x48 comfortably clears the minimum side needed by the coarsest scale.
  const std::string ref = td.file("ref.pgm"), dist = td.file("dist.pgm");
  save_pgm(ref, testutil::scene8(48, 48, 303));
  save_pgm(dist, testutil::noisy_copy(testutil::scene8(48, 48, 303), 6.0, 11));

  const std::string c1 = td.file("c1"), c2 = td.file("c2");
  CHECK(run_cli("curve --ref \"" + ref + "\" --dist \"" + dist + "\" --out \"" + c1 + "\"", td,
                "curve1")
            .code == 0);
  CHECK(run_cli("rerun --manifest \"" + c1 + "/manifest.json\" --out \"" + c2 + "\"", td,
                "curve2")
            .code == 0);
  CHECK(slurp(c1 + "/curve.csv") == slurp(c2 + "/curve.csv"));
  CHECK(slurp(c1 + "/manifest.json") == slurp(c2 + "/manifest.json"));

  const std::string s1 = td.file("s1"), s2 = td.file("s2");
  CHECK(run_cli("score --ref \"" + ref + "\" --dist \"" + dist + "\" --out \"" + s1 + "\"", td,
                "score1")
            .code == 0);
  CHECK(run_cli("rerun --manifest \"" + s1 + "/manifest.json\" --out \"" + s2 + "\"", td,
                "score2")
            .code == 0);
  CHECK(slurp(s1 + "/report.json") == slurp(s2 + "/report.json"));
}

TEST_CASE("cli restore reaches a psnr threshold from a noise start") {
  testutil::TempDir td("cli-restore");
  const std::string ref = td.file("ref.pgm");
  save_pgm(ref, testutil::scene8(32, 32, 304));
  const std::string out = td.file("out");

  CliRun r = run_cli("restore --ref \"" + ref +
                         "\" --target psnr --threshold 30 --lr 1.0 --max-steps 3000 --seed 3 "
                         "--out \"" +
                         out + "\"",
                     td, "restore");
  CHECK(r.code == 0);
  for (const char* name : {"init.pgm", "restored.pgm", "trace.csv", "manifest.json"})
    CHECK(file_exists(out + "/" + name));

  const njson man = njson::parse(slurp(out + "/manifest.json"));
  CHECK(man.at("results").at("reached_threshold").get<bool>());
  CHECK_FALSE(man.at("results").at("hit_max_steps").get<bool>());
  CHECK(man.at("results").at("final_score").get<double>() >= 30.0);
  CHECK(line_count(slurp(out + "/trace.csv")) ==
        man.at("results").at("steps").get<int>() + 1);

  const ImagePlane rec = load_image(out + "/restored.pgm");
  const ImagePlane orig = load_image(ref);
  CHECK(psnr(orig, rec) >= 29.0);  // small loss allowed for 8-bit quantization
}

TEST_CASE("cli spectrum writes the radial profile and optional plot") {
  testutil::TempDir td("cli-spectrum");
  const std::string input = td.file("img.pgm");
  save_pgm(input, testutil::scene8(80, 80, 305));
  const std::string out = td.file("out");

  CliRun r = run_cli("spectrum --input \"" + input +
                         "\" --patches 10 --patch 32 --seed 4 --svg --out \"" + out + "\"",
                     td, "spectrum");
  CHECK(r.code == 0);
  const std::string csv = slurp(out + "/spectrum.csv");
  CHECK(first_line(csv) == "freq,power");
  CHECK(line_count(csv) == 17);  // 16 radial bins for a 32-pixel patch
  CHECK(slurp(out + "/spectrum.svg").substr(0, 4) == "<svg");

  const njson man = njson::parse(slurp(out + "/manifest.json"));
  CHECK(man.at("results").at("patch_size").get<int>() == 32);
  CHECK(man.at("results").at("n_patches").get<int>() == 10);
  CHECK(man.at("results").at("slope").is_number());
}

TEST_CASE("cli baseline and sweep write their tables") {
  testutil::TempDir td("cli-tables");
  const std::string data = td.file("data");
  CHECK(run_cli("synth --count 2 --width 48 --height 48 --seed 12 --out \"" + data + "\"", td,
                "synth")
            .code == 0);

  const std::string bdir = td.file("bout");
  CliRun rb = run_cli("baseline --dataset \"" + data +
                          "\" --method gamma --params 0.8,1.2 --out \"" + bdir + "\"",
                      td, "baseline");
  CHECK(rb.code == 0);
  const std::string bcsv = slurp(bdir + "/baseline.csv");
  CHECK(first_line(bcsv) == "method,param,mean_psnr,mean_gain,n_images");
  CHECK(line_count(bcsv) == 3);
  CHECK(split_csv(second_line(bcsv))[0] == "gamma");

  const std::string sdir = td.file("sout");
  CliRun rs = run_cli("sweep --dataset \"" + data +
                          "\" --norm linf --eps 0.5,1 --steps 6 --alpha 0.25 --out \"" + sdir +
                          "\"",
                      td, "sweep");
  CHECK(rs.code == 0);
  const std::string gains = slurp(sdir + "/gains.csv");
  CHECK(first_line(gains) == "epsilon,mean_gain,n_images");
  CHECK(line_count(gains) == 3);
  CHECK(line_count(slurp(sdir + "/per_image.csv")) == 5);  // header + 2 eps x 2 images

  // Two epsilon values cannot support a power-law fit; the failure lands in
  // the manifest instead of aborting the run.
  const njson man = njson::parse(slurp(sdir + "/manifest.json"));
  CHECK(man.at("results").at("power_law").is_null());
  CHECK(man.at("results").contains("power_law_error"));
}

TEST_CASE("cli exit codes separate io, format, config and numeric failures") {
  testutil::TempDir td("cli-exit");
  const std::string good = td.file("good.pgm");
  save_pgm(good, testutil::scene8(32, 32, 306));
  const std::string small = td.file("small.pgm");
  save_pgm(small, testutil::scene8(16, 16, 307));
  const std::string garbage = td.file("garbage.pgm");
  {
    std::ofstream f(garbage, std::ios::binary);
    f << "definitely not a pgm";
  }

  // Missing input file -> io error.
  CHECK(run_cli("score --ref \"" + td.file("nope.pgm") + "\" --dist \"" + good + "\"", td,
                "e-io")
            .code == 2);
  // Unparseable image -> format error.
  CHECK(run_cli("score --ref \"" + garbage + "\" --dist \"" + good + "\"", td, "e-fmt").code ==
        3);
  // Mismatched shapes -> shape error, same family as format problems.
  CHECK(run_cli("score --ref \"" + good + "\" --dist \"" + small + "\"", td, "e-shape").code ==
        3);
  // Unknown flag -> usage error.
  CHECK(run_cli("score --ref \"" + good + "\" --dist \"" + good + "\" --bogus 1", td,
                "e-flag")
            .code == 4);
  // Conflicting source options -> config error.
  testutil::TempDir td2("cli-exit2");
  CHECK(run_cli("attack --ref \"" + good + "\" --dataset \"" + td.path().string() +
                    "\" --norm linf --epsilon 1 --out \"" + td2.file("x") + "\"",
                td, "e-conflict")
            .code == 4);
  // Attack needs exactly one radius specification.
  CHECK(run_cli("attack --ref \"" + good + "\" --norm linf --out \"" + td2.file("y") + "\"", td,
                "e-radius")
            .code == 4);
}

TEST_CASE("cli gradcheck fails loudly under an impossible bound") {
  testutil::TempDir td("cli-gradcheck");
  const std::string out = td.file("out");
  CliRun r = run_cli("gradcheck --pairs 1 --seed 1 --bound 1e-30 --out \"" + out + "\"", td,
                     "gradcheck");
  CHECK(r.code == 5);
  CHECK(r.output.find("NO") != std::string::npos);
  const std::string csv = slurp(out + "/gradcheck.csv");
  CHECK(first_line(csv) == "metric,size,max_rel_error,pass");
  CHECK(line_count(csv) == 7);  // six metrics
  const njson man = njson::parse(slurp(out + "/manifest.json"));
  CHECK_FALSE(man.at("results").at("all_passed").get<bool>());
}
