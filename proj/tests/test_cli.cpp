#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support.hpp"
#include "voclab/cli.hpp"

using json = nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "voclab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = voclab::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// One clip labeled canonical x3, non_canonical x2, junk x1.
std::string three_two_one() {
  std::string s = testing::clip_line("x") + "\n";
  const char* labels[] = {"canonical", "canonical", "canonical", "non_canonical", "non_canonical", "junk"};
  for (int i = 0; i < 6; ++i) s += testing::ann_line("x", "a" + std::to_string(i), labels[i]) + "\n";
  return s;
}

}  // namespace

TEST_CASE("help and usage exit codes") {
  const auto h = run({"--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("aggregate") != std::string::npos);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"aggregate", "--out", "x"}).code == 2);
  const auto sub = run({"split", "--help"});
  CHECK(sub.code == 0);
  CHECK(sub.out.find("--ratios") != std::string::npos);
}

TEST_CASE("the 3/2/1 clip is uncleaned only") {
  testing::TempDir dir("cli");
  testing::write_text(dir / "m.jsonl", three_two_one());
  const auto r = run({"aggregate", "--manifest", (dir / "m.jsonl").string(), "--out", (dir / "t.jsonl").string()});
  REQUIRE(r.code == 0);
  const auto line = json::parse(slurp(dir / "t.jsonl"));
  CHECK(line.at("clip_id") == "x");
  CHECK(line.at("label") == "canonical");
  CHECK(line.at("tier_flags") == json::array({"uncleaned"}));

  const auto meta = json::parse(slurp(dir / "t.jsonl.meta.json"));
  CHECK(meta.at("majority") == "2/3");
  CHECK(meta.at("subcommand") == "aggregate");

  const auto again = run({"aggregate", "--manifest", (dir / "m.jsonl").string(), "--out", "-"});
  CHECK(again.code == 0);
  CHECK(again.out == slurp(dir / "t.jsonl"));
}

TEST_CASE("validation failures exit 1 with a diagnostic") {
  testing::TempDir dir("cli");
  testing::write_text(dir / "bad.jsonl", testing::clip_line("x") + "\n" + testing::ann_line("ghost", "a", "junk") + "\n");
  const auto r = run({"aggregate", "--manifest", (dir / "bad.jsonl").string(), "--out", (dir / "t.jsonl").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("ghost") != std::string::npos);
  CHECK(r.out.empty());
  CHECK_FALSE(std::filesystem::exists(dir / "t.jsonl"));

  testing::write_text(dir / "m.jsonl", three_two_one());
  CHECK(run({"aggregate", "--manifest", (dir / "m.jsonl").string(), "--majority", "7/5", "--out",
             (dir / "t.jsonl").string()})
            .code == 1);
}

TEST_CASE("config file values yield to flags") {
  testing::TempDir dir("cli");
  testing::write_text(dir / "m.jsonl", three_two_one());
  testing::write_text(dir / "c.toml", "[aggregate]\nmajority = \"1/2\"\n");
  const auto base = std::vector<std::string>{"--config", (dir / "c.toml").string(), "aggregate", "--manifest",
                                             (dir / "m.jsonl").string(), "--out", "-"};
  const auto from_file = run(base);
  REQUIRE(from_file.code == 0);
  // 3 of 6 reaches a 1/2 threshold
  CHECK(json::parse(from_file.out).at("tier_flags") == json::array({"cleaned", "uncleaned"}));

  auto overridden = base;
  overridden.insert(overridden.end(), {"--majority", "2/3"});
  const auto from_flag = run(overridden);
  REQUIRE(from_flag.code == 0);
  CHECK(json::parse(from_flag.out).at("tier_flags") == json::array({"uncleaned"}));
}
