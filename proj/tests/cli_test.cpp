// Part of qbusrep. MIT licensed; see LICENSE.
//
// End-to-end checks of the command line tool: exit codes, output files,
// sidecar metadata, overrides, and rerun determinism. Each test works in its
// own scratch directory under the system temp path.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#ifndef QBR_CLI_PATH
#error "QBR_CLI_PATH must point at the built command line tool"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Scratch {
  fs::path dir;

  explicit Scratch(const std::string& tag) {
    static int counter = 0;
    std::ostringstream name;
    name << "qbusrep_cli_" << tag << "_" << ::getpid() << "_" << counter++;
    dir = fs::temp_directory_path() / name.str();
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string path(const std::string& leaf) const { return (dir / leaf).string(); }
};

// Runs the tool with the given argument string, captures combined output, and
// returns the exit status.
int run_cli(const std::string& args, const Scratch& scratch, std::string* output) {
  const std::string capture = scratch.path("capture.out");
  const std::string cmd =
      std::string(QBR_CLI_PATH) + " " + args + " > " + capture + " 2>&1";
  const int raw = std::system(cmd.c_str());
  REQUIRE(raw != -1);
  if (output) {
    std::ifstream is(capture, std::ios::binary);
    std::stringstream buffer;
    buffer << is.rdbuf();
    *output = buffer.str();
  }
  fs::remove(capture);
  REQUIRE(WIFEXITED(raw));
  return WEXITSTATUS(raw);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream buffer;
  buffer << is.rdbuf();
  return buffer.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  REQUIRE(os.good());
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream is(text);
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

std::vector<double> parse_csv_row(const std::string& line) {
  std::vector<double> cells;
  std::stringstream is(line);
  std::string cell;
  while (std::getline(is, cell, ',')) cells.push_back(std::stod(cell));
  return cells;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and presets listing") {
  Scratch scratch("help");
  std::string out;
  CHECK(run_cli("--help", scratch, &out) == 0);
  CHECK(out.find("qbusrep") != std::string::npos);
  CHECK(out.find("fig6") != std::string::npos);
  CHECK(out.find("validate") != std::string::npos);

  CHECK(run_cli("presets list", scratch, &out) == 0);
  CHECK(out.find("si") != std::string::npos);
  CHECK(out.find("znse") != std::string::npos);
  CHECK(out.find("ion") != std::string::npos);
  CHECK(out.find("cooperativity") != std::string::npos);
}

TEST_CASE("fig6 run writes csv, sidecar, and nothing else") {
  Scratch scratch("fig6");
  const std::string csv_path = scratch.path("fig6.csv");
  std::string out;
  CHECK(run_cli("fig6 -o " + csv_path, scratch, &out) == 0);
  CHECK(out.find("360 rows") != std::string::npos);

  const std::string text = slurp(csv_path);
  const std::vector<std::string> lines = lines_of(text);
  REQUIRE(lines.size() == 361);
  CHECK(lines[0] == "pc,d,ps,fidelity");
  const std::vector<double> first = parse_csv_row(lines[1]);
  REQUIRE(first.size() == 4);
  CHECK(first[0] == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(first[1] == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(first[2] > 0.0);
  CHECK(first[3] > 0.0);
  CHECK(first[3] <= 1.0);

  const json sidecar = json::parse(slurp(csv_path + ".meta.json"));
  CHECK(sidecar.at("tool") == "qbusrep");
  CHECK(sidecar.at("schema_version") == 1);
  CHECK(sidecar.at("experiment") == "fig6");
  CHECK(sidecar.at("format") == "csv");
  const json& params = sidecar.at("parameters");
  CHECK(params.at("schema_version") == 1);
  CHECK(params.at("experiment") == "fig6");
  CHECK(params.at("d_points") == 60);
  CHECK(params.at("transmission") == doctest::Approx(0.67));

  std::set<std::string> produced;
  for (const auto& entry : fs::directory_iterator(scratch.dir)) {
    produced.insert(entry.path().filename().string());
  }
  CHECK(produced == std::set<std::string>{"fig6.csv", "fig6.csv.meta.json"});
}

TEST_CASE("reruns and sidecar round trips are byte identical") {
  Scratch scratch("rerun");
  const std::string a = scratch.path("a.csv");
  const std::string b = scratch.path("b.csv");
  const std::string c = scratch.path("c.csv");
  CHECK(run_cli("fig6 -o " + a, scratch, nullptr) == 0);
  CHECK(run_cli("fig6 -o " + b, scratch, nullptr) == 0);
  CHECK(slurp(a) == slurp(b));

  // The sidecar feeds straight back in through the custom subcommand.
  CHECK(run_cli("custom --config " + a + ".meta.json -o " + c, scratch,
                nullptr) == 0);
  CHECK(slurp(a) == slurp(c));
}

TEST_CASE("overrides shrink the grid and json format renders the table") {
  Scratch scratch("override");
  const std::string path = scratch.path("small.json");
  std::string out;
  CHECK(run_cli("fig6 -f json -o " + path +
                    " --override d_points=3 --override pc_list=[0.5]",
                scratch, &out) == 0);
  CHECK(out.find("3 rows") != std::string::npos);

  const json table = json::parse(slurp(path));
  CHECK(table.at("columns") ==
        json::array({"pc", "d", "ps", "fidelity"}));
  REQUIRE(table.at("rows").size() == 3);
  CHECK(table.at("rows")[0][0] == doctest::Approx(0.5));

  const json sidecar = json::parse(slurp(path + ".meta.json"));
  CHECK(sidecar.at("parameters").at("d_points") == 3);
}

TEST_CASE("bad inputs map to the documented exit codes") {
  Scratch scratch("errors");
  std::string out;

  SUBCASE("unknown override key is a config error") {
    CHECK(run_cli("fig6 -o " + scratch.path("x.csv") + " --override bogus=1",
                  scratch, &out) == 2);
    CHECK(out.find("unknown parameter") != std::string::npos);
  }
  SUBCASE("malformed override is a config error") {
    CHECK(run_cli("fig6 -o " + scratch.path("x.csv") + " --override novalue",
                  scratch, &out) == 2);
  }
  SUBCASE("invalid parameter value is a config error") {
    CHECK(run_cli("fig6 -o " + scratch.path("x.csv") +
                      " --override transmission=1.5",
                  scratch, &out) == 2);
  }
  SUBCASE("custom without a config is a config error") {
    CHECK(run_cli("custom -o " + scratch.path("x.csv"), scratch, &out) == 2);
  }
  SUBCASE("missing config file is an i/o error") {
    CHECK(run_cli("fig6 -c " + scratch.path("absent.json") + " -o " +
                      scratch.path("x.csv"),
                  scratch, &out) == 4);
  }
  SUBCASE("unwritable output path is an i/o error") {
    CHECK(run_cli("fig6 --override d_points=3 --override pc_list=[0.5] -o "
                  "/proc/qbusrep_no_such_dir/x.csv",
                  scratch, &out) == 4);
  }
  SUBCASE("unparseable cli flag is a usage error") {
    CHECK(run_cli("fig6 --no-such-flag", scratch, &out) == 2);
  }
}

TEST_CASE("validate inspects config files without running anything") {
  Scratch scratch("validate");
  std::string out;

  SUBCASE("empty file is fine") {
    const std::string path = scratch.path("empty.json");
    write_text(path, "\n");
    CHECK(run_cli("validate " + path, scratch, &out) == 0);
    CHECK(out.find("ok") != std::string::npos);
  }
  SUBCASE("good experiment config echoes resolved parameters") {
    const std::string path = scratch.path("good.json");
    write_text(path,
               "{\"schema_version\": 1, \"experiment\": \"fig6\", "
               "\"d_points\": 10}\n");
    CHECK(run_cli("validate " + path, scratch, &out) == 0);
    CHECK(out.find("experiment: fig6") != std::string::npos);
    CHECK(out.find("d_points = 10  (from config)") != std::string::npos);
    CHECK(out.find("ok") != std::string::npos);
  }
  SUBCASE("semantic errors are reported") {
    const std::string path = scratch.path("badseg.json");
    write_text(path,
               "{\"schema_version\": 1, \"experiment\": \"fig8\", "
               "\"n_segments\": 7}\n");
    CHECK(run_cli("validate " + path, scratch, &out) == 2);
    CHECK(out.find("power of two") != std::string::npos);
  }
  SUBCASE("unknown keys are reported") {
    const std::string path = scratch.path("unknown.json");
    write_text(path, "{\"schema_version\": 1, \"bogus_key\": 3}\n");
    CHECK(run_cli("validate " + path, scratch, &out) == 2);
    CHECK(out.find("unknown key 'bogus_key'") != std::string::npos);
  }
  SUBCASE("missing schema version is rejected") {
    const std::string path = scratch.path("noschema.json");
    write_text(path, "{\"theta\": 0.01}\n");
    CHECK(run_cli("validate " + path, scratch, &out) == 2);
    CHECK(out.find("schema_version") != std::string::npos);
  }
  SUBCASE("syntax errors carry a position") {
    const std::string path = scratch.path("broken.json");
    write_text(path, "{\"schema_version\": 1,\n  \"oops\n");
    CHECK(run_cli("validate " + path, scratch, &out) == 2);
    CHECK(out.find("parse error at line") != std::string::npos);
  }
}

TEST_CASE("custom drives a small physical repeater run deterministically") {
  Scratch scratch("fig8small");
  const std::string cfg_path = scratch.path("small8.json");
  write_text(cfg_path,
             "{\n"
             "  \"schema_version\": 1,\n"
             "  \"experiment\": \"fig8\",\n"
             "  \"seed\": 7,\n"
             "  \"n_segments\": 4,\n"
             "  \"local_loss_list\": [0.001],\n"
             "  \"max_rounds_per_level\": 1,\n"
             "  \"target_fidelity\": 0.4,\n"
             "  \"n_deliver\": 5\n"
             "}\n");
  const std::string a = scratch.path("a.csv");
  const std::string b = scratch.path("b.csv");
  std::string out;
  CHECK(run_cli("custom -c " + cfg_path + " -o " + a, scratch, &out) == 0);
  CHECK(out.find("1 rows") != std::string::npos);
  CHECK(run_cli("custom -c " + cfg_path + " -o " + b, scratch, nullptr) == 0);
  CHECK(slurp(a) == slurp(b));

  const std::vector<std::string> lines = lines_of(slurp(a));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] ==
        "local_loss,mean_interval_s,std_interval_s,rate_hz,final_fidelity");
  const std::vector<double> row = parse_csv_row(lines[1]);
  REQUIRE(row.size() == 5);
  CHECK(row[0] == doctest::Approx(0.001));
  CHECK(row[3] > 0.0);
  CHECK(row[4] > 0.25);
  CHECK(row[4] <= 1.0);

  const json sidecar = json::parse(slurp(a + ".meta.json"));
  CHECK(sidecar.at("parameters").at("seed") == 7);
  CHECK(sidecar.at("results").contains("policies"));
}

}  // TEST_SUITE("cli")
