// Copyright 2026 The psfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>
#include <sstream>

#include "doctest.h"
#include "psfuse/cli.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using psfuse::cli::dispatch;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

int count_dirs(const fs::path& p) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(p)) n += e.is_directory();
  return n;
}

const std::vector<std::string> kSubcommands{"gen-data", "train", "ablate", "eval", "infer", "solve-classic",
                                            "render-viz"};

}  // namespace

TEST_CASE("gen-data writes one directory per surface") {
  const auto dir = testutil::scratch_dir("cli_gen");
  const auto r = run({"gen-data", "--seed", "1", "--out", (dir / "d").string(), "--surfaces", "2", "--lights", "4"});
  CHECK(r.code == 0);
  CHECK(count_dirs(dir / "d") == 2);
  CHECK(fs::exists(dir / "d" / "manifest.json"));
}

TEST_CASE("usage errors exit 2") {
  auto r = run({"frobnicate"});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run({}).code == 2);
  CHECK(run({"gen-data", "--out", "x", "--bogus", "1"}).code == 2);
  CHECK(run({"gen-data"}).code == 2);
  CHECK(run({"train", "--stage", "nowhere"}).code == 2);
}

TEST_CASE("runtime errors exit 1 and name the path") {
  const auto dir = testutil::scratch_dir("cli_missing");
  const auto missing = (dir / "absent.psck").string();
  const auto r = run({"eval", "--checkpoint", missing, "--data", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find(missing) != std::string::npos);
  CHECK(r.err.find('\n') == r.err.size() - 1);
}

TEST_CASE("every subcommand accepts --help and --seed") {
  for (const auto& sub : kSubcommands) {
    CAPTURE(sub);
    const auto r = run({sub, "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--seed") != std::string::npos);
  }
}

TEST_CASE("pipeline through the installed binary") {
  const auto dir = testutil::scratch_dir("cli_pipeline");
  const std::string cli = PSFUSE_CLI_PATH;
  auto sh = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > " + (dir / "log.txt").string() + " 2>&1";
    return std::system(cmd.c_str());
  };
  const auto data = (dir / "data").string(), ck = (dir / "ck").string();
  REQUIRE(sh("gen-data --seed 4 --out " + data + " --surfaces 3 --lights 6 --resolution 16") == 0);
  REQUIRE(sh("train --stage normal_net --dataset " + data + " --checkpoint-dir " + ck +
             " --epochs 1 --max-steps 2 --batch-size 2 --crop 16 --m 4 --seed 3") == 0);
  fs::path ckpt;
  for (const auto& e : fs::directory_iterator(ck))
    if (e.path().extension() == ".psck") ckpt = e.path();
  REQUIRE(!ckpt.empty());

  CHECK(sh("eval --checkpoint " + ckpt.string() + " --data " + data + " --mode gt_lighting --out " +
           (dir / "report.txt").string()) == 0);
  CHECK(fs::exists(dir / "report.json"));

  fs::path object;
  for (const auto& e : fs::directory_iterator(data))
    if (e.is_directory()) object = e.path();
  CHECK(sh("solve-classic --data " + object.string() + " --out " + (dir / "classic").string()) == 0);
  CHECK(sh("render-viz --checkpoint " + ckpt.string() + " --data " + object.string() + " --out " +
           (dir / "feat.png").string()) == 0);
  CHECK(fs::exists(dir / "feat.png"));
  const int status = sh("frobnicate");
  CHECK(WEXITSTATUS(status) == 2);
}
