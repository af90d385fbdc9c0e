#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "saan/io.hpp"
#include "saan/losses.hpp"
#include "test_util.hpp"

using namespace saan;
using saan::test::run_command;
namespace fs = std::filesystem;

namespace {

const std::string kBin = SAAN_BIN;

std::string cli(const std::string& args) { return kBin + " " + args; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("saan_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("synth is deterministic") {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  REQUIRE(run_command(cli("synth --out " + a.string() + " --images 6 --size 24x32 --seed 9 >/dev/null")).exit_code == 0);
  REQUIRE(run_command(cli("synth --out " + b.string() + " --images 6 --size 24x32 --seed 9 >/dev/null")).exit_code == 0);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path other = b / fs::relative(e.path(), a);
    CHECK(read_file(e.path()) == read_file(other));
  }
  const Manifest m = load_manifest(a / "manifest.json");
  CHECK(m.items.size() == 6);
  const Image img = read_pgm(m.resolve(m.items[0].image));
  CHECK(img.height == 24);
  CHECK(img.width == 32);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("synth honours the count range and prepare conserves counts") {
  const fs::path d = scratch("prepare");
  REQUIRE(run_command(cli("synth --out " + d.string() + " --images 5 --size 20x20 --count-min 5 --count-max 5 >/dev/null")).exit_code == 0);
  const fs::path manifest = d / "manifest.json";
  REQUIRE(run_command(cli("prepare --manifest " + manifest.string() + " >/dev/null")).exit_code == 0);
  const Manifest m = load_manifest(manifest);
  CHECK(m.bins.has_value());
  std::vector<std::string> first;
  for (const auto& it : m.items) {
    CHECK(read_annotation(m.resolve(it.ann)).points.size() == 5);
    const fs::path dm = density_path_for(m.resolve(it.ann));
    CHECK(std::abs(read_density(dm).total() - 5.0) < 1e-4);
    first.push_back(read_file(dm));
  }
  const std::string manifest_bytes = read_file(manifest);
  REQUIRE(run_command(cli("prepare --manifest " + manifest.string() + " >/dev/null")).exit_code == 0);
  for (std::size_t i = 0; i < m.items.size(); ++i)
    CHECK(read_file(density_path_for(m.resolve(m.items[i].ann))) == first[i]);
  CHECK(read_file(manifest) == manifest_bytes);
  fs::remove_all(d);
}

TEST_CASE("train, eval and predict") {
  const fs::path d = scratch("pipeline");
  REQUIRE(run_command(cli("synth --out " + d.string() + " --images 10 --size 32x32 --count-min 2 --count-max 12 >/dev/null")).exit_code == 0);
  REQUIRE(run_command(cli("prepare --manifest " + (d / "manifest.json").string() + " >/dev/null")).exit_code == 0);
  write_file(d / "config.json", R"({"manifest": "manifest.json", "out_dir": "run", "network": "tiny",
    "phase1_epochs": 1, "phase2_epochs": 1, "learning_rate": 0.001})");
  REQUIRE(run_command(cli("train --config " + (d / "config.json").string() + " >/dev/null 2>&1")).exit_code == 0);
  for (const char* f : {"config.json", "train.log", "latest.ck", "phase1.ck", "final.ck", "summary.json"})
    CHECK(fs::exists(d / "run" / f));
  CHECK(read_file(d / "run" / "latest.ck") == read_file(d / "run" / "final.ck"));

  const auto ev = run_command(cli("eval --checkpoint " + (d / "run" / "final.ck").string() + " --manifest " +
                                   (d / "manifest.json").string() + " --split test"));
  REQUIRE(ev.exit_code == 0);
  const auto j = nlohmann::json::parse(ev.out);
  const Manifest m = load_manifest(d / "manifest.json");
  const auto test_items = m.split("test");
  CHECK(j["n"].get<std::size_t>() == test_items.size());

  const auto rows = read_csv(d / "run" / "final_test.csv");
  REQUIRE(rows.size() == test_items.size() + 1);
  CHECK(rows[0] == std::vector<std::string>{"path", "gt_count", "pred_count"});
  std::vector<double> gt, pred;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    gt.push_back(std::stod(rows[i][1]));
    pred.push_back(std::stod(rows[i][2]));
    CHECK(gt.back() == static_cast<double>(read_annotation(m.resolve(test_items[i - 1]->ann)).points.size()));
  }
  CHECK(j["mae"].get<double>() == doctest::Approx(mae(pred, gt)).epsilon(1e-12));
  CHECK(j["mse"].get<double>() == doctest::Approx(mse(pred, gt)).epsilon(1e-12));

  const fs::path prefix = d / "pred";
  const auto pr = run_command(cli("predict --checkpoint " + (d / "run" / "final.ck").string() + " --image " +
                                   m.resolve(test_items[0]->image).string() + " --out " + prefix.string()));
  REQUIRE(pr.exit_code == 0);
  const double printed = std::stod(pr.out);
  CHECK(std::abs(printed - read_density(prefix.string() + ".dm").total()) < 1e-4);
  CHECK(std::abs(printed - pred[0]) < 1e-5);
  const Image vis = read_pgm(prefix.string() + ".pgm");
  CHECK(vis.height == 32);
  fs::remove_all(d);
}

TEST_CASE("exit codes") {
  const fs::path d = scratch("errors");
  CHECK(run_command(cli("synth 2>/dev/null")).exit_code == 1);
  CHECK(run_command(cli("frobnicate 2>/dev/null")).exit_code == 1);
  CHECK(run_command(cli("synth --out " + d.string() + " --size 64 2>/dev/null")).exit_code == 1);
  CHECK(run_command(cli("synth --out " + d.string() + " --count-min 9 --count-max 3 2>/dev/null")).exit_code == 1);
  CHECK(run_command(cli("prepare --manifest " + (d / "nope.json").string() + " 2>/dev/null")).exit_code == 1);

  fs::create_directories(d);
  write_file(d / "bad.json", "{\"manifest\": ");
  CHECK(run_command(cli("train --config " + (d / "bad.json").string() + " 2>/dev/null")).exit_code == 1);
  write_file(d / "bad.ck", "SAANCK1\nxx");
  write_file(d / "img.pgm", encode_pgm(Image{4, 4, std::vector<float>(16, 0.5f)}));
  CHECK(run_command(cli("predict --checkpoint " + (d / "bad.ck").string() + " --image " + (d / "img.pgm").string() +
                         " --out " + (d / "p").string() + " 2>/dev/null")).exit_code == 1);
  fs::remove_all(d);
}

TEST_CASE("gradcheck command") {
  const auto r = run_command(cli("gradcheck"));
  CHECK(r.exit_code == 0);
  std::size_t passes = 0;
  for (std::size_t pos = r.out.find("PASS"); pos != std::string::npos; pos = r.out.find("PASS", pos + 1)) ++passes;
  CHECK(passes >= 12);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("model_end_to_end") != std::string::npos);
}
