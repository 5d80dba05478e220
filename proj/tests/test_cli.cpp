#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "gresynth/biostats/biostats.hpp"
#include "gresynth/cli/commands.hpp"
#include "gresynth/data/preprocess.hpp"
#include "gresynth/error.hpp"
#include "gresynth/io/nifti.hpp"
#include "gresynth/metrics/evaluation.hpp"
#include "helpers.hpp"
#include "pipeline_fixture.hpp"

using namespace gresynth;
using namespace gresynth::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<fs::path> csv_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

int run_synth(const std::string& args) {
  const std::string cmd = std::string(SYNTH_BIN) + " " + args + " -q > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void run_pipeline(const fs::path& dir) {
  const auto cfg = RunConfig::load(testutil::write_config(dir, testutil::tiny_pipeline_json()));
  CommandOptions o;
  cmd_phantom(cfg, o);
  cmd_preprocess(cfg, o);
  cmd_train(cfg, o);
  cmd_sample(cfg, o);
  cmd_evaluate(cfg, o);
}

void write_tables(const fs::path& dir, double perturb) {
  const auto gt = biostats::simulate_cohort(80, 41);
  biostats::write_subject_table(dir / "gt.csv", gt, biostats::default_rois());
  const auto gen = perturb > 0 ? biostats::perturb_cohort(gt, perturb, 42) : [&] {
    auto g = gt;
    for (auto& r : g) r.source = biostats::Source::GEN;
    return g;
  }();
  biostats::write_subject_table(dir / "gen.csv", gen, biostats::default_rois());
}

}  // namespace

TEST_CASE("pipeline reruns produce byte-identical CSV reports") {
  const auto a = testutil::temp_dir("cli_det_a");
  const auto b = testutil::temp_dir("cli_det_b");
  run_pipeline(a);
  run_pipeline(b);
  const auto files = csv_files(a);
  CHECK(files == csv_files(b));
  CHECK(files.size() >= 6);
  for (const auto& f : files) {
    CAPTURE(f.string());
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "work/manifest.jsonl") == slurp(b / "work/manifest.jsonl"));
  CHECK(slurp(a / "phantoms/phantoms.jsonl") == slurp(b / "phantoms/phantoms.jsonl"));
  CHECK(slurp(a / "output/diffusion/sub-005/t1w_norm.nii") == slurp(b / "output/diffusion/sub-005/t1w_norm.nii"));

  SUBCASE("sampled volumes cover the target grid and stay in range") {
    for (const auto* sid : {"sub-005", "sub-006"}) {
      const auto v = io::read_nifti(a / "output/diffusion" / sid / "t1w_norm.nii");
      CHECK(v.nx == 32);
      CHECK(v.ny == 32);
      CHECK(v.nz == 6);
      for (float x : v.data) {
        CHECK(x >= -1.0f);
        CHECK(x <= 1.0f);
      }
      const auto raw = io::read_nifti(a / "output/diffusion" / sid / "t1w.nii");
      CHECK(raw.same_grid(io::read_nifti(a / "phantoms" / sid / "t1w.nii")));
    }
  }

  SUBCASE("report row counts") {
    const auto regions = read_csv(a / "output/diffusion/report/regions.csv");
    CHECK(regions.size() == 1 + 2 * metrics::evaluation_regions().size());
    CHECK(read_csv(a / "output/diffusion/report/images.csv").size() == 3);
  }

  SUBCASE("evaluate matches the metrics module") {
    const auto images = read_csv(a / "output/diffusion/report/images.csv");
    for (std::size_t row = 1; row < images.size(); ++row) {
      const std::string sid = images[row][0];
      const auto ref = a / "work/reference" / sid;
      const auto direct = metrics::evaluate_subject(
          sid, io::read_nifti(ref / "t1w_norm.nii"), io::read_nifti(a / "output/diffusion" / sid / "t1w_norm.nii"),
          io::read_nifti(ref / "labels.nii"), io::read_nifti(ref / "brain_mask.nii"));
      CHECK(images[row][1] == metrics::format_number(direct.psnr));
      CHECK(images[row][2] == metrics::format_number(direct.ssim));
    }
  }

  SUBCASE("shuffled sampling uses a different output and conditions") {
    auto j = testutil::tiny_pipeline_json();
    j["sample"]["shuffle_conditions"] = true;
    j["sample"]["output_name"] = "diffusion-shuffled";
    const auto cfg = RunConfig::load(testutil::write_config(a, j, "shuffled.json"));
    cmd_sample(cfg, {});
    CHECK(slurp(a / "output/diffusion-shuffled/sub-005/t1w_norm.nii") !=
          slurp(a / "output/diffusion/sub-005/t1w_norm.nii"));
  }
}

TEST_CASE("self-evaluation gives perfect scores") {
  const auto dir = testutil::temp_dir("cli_self");
  auto j = testutil::tiny_pipeline_json();
  j["evaluate"]["methods"] = {"self"};
  const auto cfg = RunConfig::load(testutil::write_config(dir, j));
  cmd_phantom(cfg, {});
  cmd_preprocess(cfg, {});
  for (const auto* sid : {"sub-005", "sub-006"}) {
    fs::create_directories(dir / "output/self" / sid);
    fs::copy_file(dir / "work/reference" / sid / "t1w_norm.nii", dir / "output/self" / sid / "t1w_norm.nii");
  }
  cmd_evaluate(cfg, {});
  for (const auto& row : read_csv(dir / "output/self/report/images.csv"))
    if (row[0] != "subject") {
      CHECK(row[1] == "inf");
      CHECK(row[2] == "1");
    }
  for (const auto& row : read_csv(dir / "output/self/report/summary.csv"))
    if (row[0] != "region") {
      CHECK(row[1] == "1");
      // Structures with identical volumes in every subject have no between-subject variance.
      if (row[3] == "0") CHECK(row[2] == "1");
    }
}

TEST_CASE("baseline methods train on the same manifest and sample") {
  const auto dir = testutil::temp_dir("cli_baselines");
  auto j = testutil::tiny_pipeline_json();
  j["evaluate"]["methods"] = {"unet-l1", "pix2pix"};
  const auto cfg = RunConfig::load(testutil::write_config(dir, j));
  cmd_phantom(cfg, {});
  cmd_preprocess(cfg, {});
  for (const auto* m : {"unet-l1", "pix2pix"}) {
    CommandOptions o;
    o.method = m;
    cmd_train(cfg, o);
    cmd_sample(cfg, o);
  }
  cmd_evaluate(cfg, {});
  CHECK(fs::exists(dir / "output/comparison/comparison.csv"));
  CHECK(fs::exists(dir / "checkpoints/pix2pix/loss_disc.csv"));
}

TEST_CASE("biostats command matches the module and self-comparison is null") {
  const auto dir = testutil::temp_dir("cli_biostats");
  write_tables(dir, 0.0);
  auto j = testutil::tiny_pipeline_json();
  j["biostats"] = {{"gt_table", "gt.csv"}, {"gen_table", "gen.csv"}};
  const auto cfg = RunConfig::load(testutil::write_config(dir, j));
  cmd_biostats(cfg, {});
  for (const auto& row : read_csv(dir / "output/biostats/concordance.csv")) {
    if (row[0] == "roi") continue;
    CHECK(row[1] == "1");
    for (std::size_t c = 2; c < row.size(); c += 2) CHECK(row[c] == "0");
  }
  // Direct module invocation writes the same files.
  const auto gt = biostats::read_subject_table(dir / "gt.csv");
  const auto gen = biostats::read_subject_table(dir / "gen.csv");
  std::vector<biostats::RegressionResult> a, b;
  for (const auto& roi : biostats::table_rois(gt)) {
    a.push_back(biostats::analyze_roi(gt, roi));
    b.push_back(biostats::analyze_roi(gen, roi));
  }
  biostats::write_concordance(dir / "direct", biostats::concordance_report(std::move(a), std::move(b)));
  for (const auto* f : {"regression.csv", "concordance.csv", "summary.json"})
    CHECK(slurp(dir / "direct" / f) == slurp(dir / "output/biostats" / f));
  // Thickness rows are fitted without eTIV.
  CHECK(slurp(dir / "output/biostats/summary.json").find("\"include_etiv\": false") != std::string::npos);
}

TEST_CASE("biostats rerun is byte-identical and detects mismatched tables") {
  const auto dir = testutil::temp_dir("cli_biostats_det");
  write_tables(dir, 0.03);
  auto j = testutil::tiny_pipeline_json();
  j["biostats"] = {{"gt_table", "gt.csv"}, {"gen_table", "gen.csv"}};
  const auto cfg = RunConfig::load(testutil::write_config(dir, j));
  cmd_biostats(cfg, {});
  const auto first = slurp(dir / "output/biostats/regression.csv");
  cmd_biostats(cfg, {});
  CHECK(first == slurp(dir / "output/biostats/regression.csv"));

  const auto gt = biostats::simulate_cohort(30, 1);
  biostats::write_subject_table(dir / "gen.csv", biostats::perturb_cohort(gt, 0.01, 2), {"Thalamus", "Putamen"});
  CHECK_THROWS_AS(cmd_biostats(cfg, {}), biostats::PairingError);
  biostats::write_subject_table(dir / "gen.csv", gt, biostats::default_rois());  // labelled GT
  CHECK_THROWS_AS(cmd_biostats(cfg, {}), biostats::SchemaError);
}

TEST_CASE("configuration errors") {
  const auto dir = testutil::temp_dir("cli_config");
  auto j = testutil::tiny_pipeline_json();
  j["train"]["momentum"] = 0.9;
  CHECK_THROWS_AS(RunConfig::load(testutil::write_config(dir, j)), ConfigError);
  j = testutil::tiny_pipeline_json();
  j["denoiser"]["in_channels"] = 4;
  CHECK_THROWS_AS(RunConfig::load(testutil::write_config(dir, j)), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(dir / "missing.json"), ConfigError);
  j = testutil::tiny_pipeline_json();
  j["sample"]["eta"] = 1.5;
  CHECK_THROWS_AS(RunConfig::load(testutil::write_config(dir, j)), ConfigError);
  j["sample"]["eta"] = 0.5;
  j["sample"]["clip_x0"] = -1;
  CHECK_THROWS_AS(RunConfig::load(testutil::write_config(dir, j)), ConfigError);
  j["sample"]["clip_x0"] = 0;
  const auto ok = RunConfig::load(testutil::write_config(dir, j));
  CHECK(ok.sample.eta == 0.5);
  CHECK(RunConfig::from_json(ok.to_json(), dir).sample.clip_x0 == 0.0);
}

TEST_CASE("exit codes") {
  const auto dir = testutil::temp_dir("cli_exit");
  auto j = testutil::tiny_pipeline_json();
  const auto good = testutil::write_config(dir, j);
  j["unknown_section"] = 1;
  const auto bad = testutil::write_config(dir, j, "bad.json");
  auto nan = testutil::tiny_pipeline_json();
  nan["train"]["learning_rate"] = 1e30;
  nan["train"]["total_iterations"] = 20;
  const auto diverge = testutil::write_config(dir, nan, "diverge.json");

  CHECK(run_synth("phantom -c " + bad.string()) == 2);
  CHECK(run_synth("train -c " + good.string() + " -m nosuch") == 2);
  CHECK(run_synth("preprocess -c " + good.string()) == 3);  // no phantoms yet
  CHECK(run_synth("phantom -c " + good.string()) == 0);
  CHECK(run_synth("preprocess -c " + good.string()) == 0);
  CHECK(run_synth("sample -c " + good.string()) == 3);  // no checkpoint yet
  CHECK(run_synth("train -c " + diverge.string()) == 4);
  CHECK(fs::exists(dir / "checkpoints/diffusion/diagnostic"));
  CHECK(run_synth("train -c " + good.string() + " --seed 3") == 0);
  CHECK(run_synth("sample -c " + good.string()) == 0);
  CHECK(run_synth("evaluate -c " + good.string()) == 0);
}
