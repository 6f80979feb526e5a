#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include <json.hpp>

#include "voxpoint/bench.hpp"
#include "voxpoint/io.hpp"
#include "voxpoint/pipeline.hpp"
#include "voxpoint/synthetic.hpp"

using namespace voxpoint;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("voxpoint_cli_" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Runs the CLI through the shell; `env` is prepended verbatim (e.g. "NAME=value").
  Result run(const std::string& args, const std::string& env = "") const {
    const std::string out = path("stdout.txt");
    const std::string err = path("stderr.txt");
    const std::string cmd = (env.empty() ? "" : env + " ") + VOXPOINT_CLI_PATH + std::string(" ") + args + " >" +
                            out + " 2>" + err;
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text_file(out);
    r.err = read_text_file(err);
    return r;
  }

  // A small synthetic scene written as JSON; returns its path.
  std::string scene_file(std::uint64_t seed, std::size_t points = 4000) const {
    SceneGenConfig g;
    g.num_points = points;
    g.fg_fraction = 0.1;
    const std::string p = path("scene" + std::to_string(seed) + ".json");
    write_scene_json(p, generate_scene(g, seed));
    return p;
  }

  static constexpr const char* kSmallPipeline = " --input-points 2048 --counts 512 256 128 64";

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpExitsZero) {
  EXPECT_EQ(run("--help").code, 0);
  for (const char* sub : {"voxelize", "sample", "query-bench", "aggregate", "nms", "pipeline", "gen-scenes"}) {
    const Result r = run(std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
  }
}

TEST_F(Cli, ParseFailuresExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("gen-scenes").code, 2);  // missing --out-dir
  EXPECT_EQ(run("sample -i x.json --sampler bogus").code, 2);
  EXPECT_EQ(run("--threads 0 gen-scenes -o " + path("g")).code, 2);
}

TEST_F(Cli, InvalidValuesExitTwo) {
  const Result r = run("gen-scenes -o " + path("g") + " --fg-fraction 1.5");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("fg_fraction"), std::string::npos) << r.err;
  EXPECT_EQ(run("pipeline -i " + scene_file(1) + " --nms-post 2").code, 2);
  EXPECT_EQ(run("voxelize -i " + scene_file(1) + " --stride 0").code, 2);
}

TEST_F(Cli, MalformedInputsExitTwo) {
  write_text_file(path("bad.json"), R"({"points": [[1, 2]], "boxes": []})");
  Result r = run("voxelize -i " + path("bad.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/points/0"), std::string::npos) << r.err;

  write_text_file(path("syntax.json"), "{\"points\": [");
  EXPECT_EQ(run("voxelize -i " + path("syntax.json")).code, 2);

  write_text_file(path("short.bin"), std::string(10, '\0'));
  r = run("voxelize -i " + path("short.bin"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("offset"), std::string::npos) << r.err;

  write_text_file(path("props.json"), R"({"proposals": [{"center": [0, 0, 0], "size": [1, 1, 1], "yaw": 0}]})");
  EXPECT_EQ(run("nms -i " + path("props.json")).code, 2);
}

TEST_F(Cli, MissingFileIsARuntimeFailure) {
  const Result r = run("voxelize -i " + path("absent.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("absent.json"), std::string::npos) << r.err;
}

TEST_F(Cli, GenScenesWritesSeededFiles) {
  ASSERT_EQ(run("gen-scenes -o " + path("a") + " --count 2 --seed 5 --points 500 --format both").code, 0);
  for (const char* name : {"scene-0000.json", "scene-0000.bin", "scene-0001.json", "scene-0001.bin"}) {
    EXPECT_TRUE(fs::exists(dir_ / "a" / name)) << name;
  }
  SceneGenConfig g;
  g.num_points = 500;
  const Scene expected = generate_scene(g, 6);
  EXPECT_EQ(read_scene_json(path("a/scene-0001.json")), expected);
  EXPECT_EQ(read_kitti_bin(path("a/scene-0001.bin")), expected.cloud);
}

TEST_F(Cli, ConfigPathFromEnvironment) {
  write_text_file(path("cfg.toml"), "[gen-scenes]\ncount = 3\npoints = 300\n");
  ASSERT_EQ(run("gen-scenes -o " + path("e"), "VOXPOINT_CONFIG=" + path("cfg.toml")).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "e" / "scene-0002.json"));
  EXPECT_EQ(read_scene_json(path("e/scene-0000.json")).cloud.size(), 300u);

  // Command-line flags take precedence over the file.
  ASSERT_EQ(run("gen-scenes -o " + path("f") + " --count 1", "VOXPOINT_CONFIG=" + path("cfg.toml")).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "f" / "scene-0000.json"));
  EXPECT_FALSE(fs::exists(dir_ / "f" / "scene-0001.json"));

  EXPECT_EQ(run("gen-scenes -o " + path("h"), "VOXPOINT_CONFIG=" + path("nowhere.toml")).code, 2);
}

TEST_F(Cli, VoxelizeMatchesLibrary) {
  const std::string scene = scene_file(2);
  const Result r = run("voxelize -i " + scene + " --stride 2");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\r\n"), std::string::npos);
  const auto lines = lines_of(r.out);
  ASSERT_FALSE(lines.empty());
  const GridSpec g = GridSpec::kitti();
  const SparseVoxelMap map = voxelize_mean(crop_to_range(read_scene_json(scene).cloud, g), g, 2);
  std::string header = "i,j,k,count";
  for (std::size_t c = 0; c < map.feat_dim(); ++c) header += ",f" + std::to_string(c);
  EXPECT_EQ(lines[0], header);
  EXPECT_EQ(lines.size(), map.size() + 1);
}

TEST_F(Cli, SampleMatchesLibrary) {
  const std::string scene = scene_file(3);
  const Result r = run("sample -i " + scene + " --sampler fps --count 50");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(r.out);
  ASSERT_EQ(lines.size(), 51u);
  EXPECT_EQ(lines[0], "order,index,x,y,z,score,label");
  const auto picks = fps(crop_to_range(read_scene_json(scene).cloud, GridSpec::kitti()), 50);
  for (std::size_t k = 0; k < picks.size(); ++k) {
    EXPECT_EQ(lines[k + 1].substr(0, lines[k + 1].find(',', lines[k + 1].find(',') + 1)),
              std::to_string(k) + "," + std::to_string(picks[k]));
  }

  // Top-K with oracle scores takes foreground points first.
  const Result t = run("sample -i " + scene + " --sampler topk --count 20");
  ASSERT_EQ(t.code, 0) << t.err;
  const auto tl = lines_of(t.out);
  for (std::size_t k = 1; k < tl.size(); ++k) EXPECT_EQ(tl[k].back(), '1') << tl[k];
}

TEST_F(Cli, NmsKeepsNonOverlapping) {
  write_text_file(path("p.json"), R"({"proposals": [
    {"center": [0, 0, 0], "size": [4, 2, 1.5], "yaw": 0, "class": "Car", "score": 0.9},
    {"center": [0.2, 0, 0], "size": [4, 2, 1.5], "yaw": 0, "class": "Car", "score": 0.8},
    {"center": [10, 0, 0], "size": [4, 2, 1.5], "yaw": 0, "class": "Car", "score": 0.7}]})");
  const Result r = run("nms -i " + path("p.json") + " --threshold 0.5");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("keep").get<std::vector<int>>(), (std::vector<int>{0, 2}));
}

TEST_F(Cli, PipelineMatchesLibraryAndIsThreadIndependent) {
  const std::string scene = scene_file(4);
  const Result one = run("pipeline -i " + scene + kSmallPipeline + " --timings " + path("t.json"));
  ASSERT_EQ(one.code, 0) << one.err;
  const Result four = run("--threads 4 pipeline -i " + scene + kSmallPipeline);
  ASSERT_EQ(four.code, 0) << four.err;
  EXPECT_EQ(one.out, four.out);
  EXPECT_NE(read_text_file(path("t.json")).find("\"stages\""), std::string::npos);

  PipelineConfig cfg;
  cfg.sampling.input_points = 2048;
  cfg.sampling.counts = {512, 256, 128, 64};
  const Scene s = read_scene_json(scene);
  EXPECT_EQ(one.out, detections_json(run_pipeline(s, synthetic_weights(cfg, 1, 0), cfg), s));
}

TEST_F(Cli, PipelineWeightsSaveAndReload) {
  const std::string scene = scene_file(5);
  const Result saved = run("pipeline -i " + scene + kSmallPipeline + " --weights-seed 3 --save-weights " + path("w.bin"));
  ASSERT_EQ(saved.code, 0) << saved.err;
  const Result loaded = run("pipeline -i " + scene + kSmallPipeline + " --weights " + path("w.bin"));
  ASSERT_EQ(loaded.code, 0) << loaded.err;
  EXPECT_EQ(saved.out, loaded.out);

  write_text_file(path("junk.bin"), "not a weight file");
  EXPECT_EQ(run("pipeline -i " + scene + " --weights " + path("junk.bin")).code, 2);
}

TEST_F(Cli, AggregateEmitsOneRowPerKeypoint) {
  const Result r = run("aggregate -i " + scene_file(6) + kSmallPipeline + " -o " + path("a.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(read_text_file(path("a.csv")));
  ASSERT_EQ(lines.size(), 65u);
  EXPECT_EQ(lines[0].rfind("x,y,z,score,f0,f1,", 0), 0u);
}

TEST_F(Cli, QueryBenchWritesOneRowPerMethodAndSampler) {
  const Result r = run("query-bench --synthetic 1 --points 3000 --keypoints 32 --sample-repetitions 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(r.out);
  std::string header;
  for (const auto& c : BenchReport::columns()) header += (header.empty() ? "" : ",") + c;
  ASSERT_FALSE(lines.empty());
  EXPECT_EQ(lines[0], header);
  EXPECT_EQ(lines.size(), 1 + 2 * sampler_names(BenchConfig{}).size());
  EXPECT_EQ(run("query-bench").code, 2);
  EXPECT_EQ(run("query-bench --synthetic 1 --repetitions 3").code, 2);
}
