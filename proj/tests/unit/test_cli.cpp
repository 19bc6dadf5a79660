#include <filesystem>
#include <fstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const char* kConf = R"(data.source = synthetic:subjects=4,seconds=96,segment=16,frame_dim=12
data.window = 24
data.stride = 24
encoder.eye.stages = 4x3:2,4x3:2,4x3:1
encoder.head.stages = 4x3:2,4x3:2,4x3:1
encoder.phy.stages = 4x3:1,4x3:1,4x3:1
graph.hidden = 4
graph.out = 4
diffattn.d = 8
diffattn.heads = 2
diffattn.k = 1
video.feature_dim = 12
video.hidden = 8
video.out_dim = 8
video.segments = 4
train.epochs = 2
train.batch_size = 8
eval.folds = 2
)";

struct Workspace {
  fs::path dir = fs::temp_directory_path() / "ptgnn_cli_test";
  std::string conf;
  Workspace() {
    fs::remove_all(dir);
    fs::create_directories(dir);
    conf = (dir / "run.conf").string();
    std::ofstream(conf) << kConf;
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string at(const std::string& name) const { return (dir / name).string(); }
};

int run(std::vector<std::string> args) { return ptgnn::cli::run(args); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("cli: train, strip, eval, bench and exports") {
  Workspace w;
  REQUIRE(run({"train", "--config", w.conf, "--out", w.at("a")}) == 0);
  for (const char* f : {"model.ckpt", "metrics.json", "metrics_log.csv", "confusion.csv"}) {
    CHECK(fs::exists(w.dir / "a" / f));
  }
  const auto metrics = nlohmann::json::parse(slurp(w.dir / "a" / "metrics.json"));
  CHECK(metrics.contains("alignment"));
  CHECK(metrics["top1"]["mean"].get<double>() <= metrics["top3"]["mean"].get<double>());

  SUBCASE("same seed gives the same bytes") {
    REQUIRE(run({"train", "--config", w.conf, "--out", w.at("b")}) == 0);
    CHECK(slurp(w.dir / "a" / "model.ckpt") == slurp(w.dir / "b" / "model.ckpt"));
    CHECK(slurp(w.dir / "a" / "metrics.json") == slurp(w.dir / "b" / "metrics.json"));
    REQUIRE(run({"train", "--config", w.conf, "--seed", "9", "--out", w.at("c")}) == 0);
    CHECK(slurp(w.dir / "a" / "model.ckpt") != slurp(w.dir / "c" / "model.ckpt"));
  }
  SUBCASE("strip then evaluate without sensors") {
    const std::string ck = w.at("a/model.ckpt"), lean = w.at("lean.ckpt");
    REQUIRE(run({"strip", "--checkpoint", ck, "--out", lean}) == 0);
    CHECK(fs::file_size(lean) < fs::file_size(ck));
    CHECK(run({"strip", "--checkpoint", lean, "--out", w.at("again.ckpt")}) == 0);
    CHECK(slurp(lean) == slurp(w.at("again.ckpt")));
    REQUIRE(run({"eval", "--checkpoint", lean, "--out", w.at("ev_lean")}) == 0);
    REQUIRE(run({"eval", "--checkpoint", ck, "--out", w.at("ev_full")}) == 0);
    const auto a = nlohmann::json::parse(slurp(w.dir / "ev_lean" / "metrics.json"));
    const auto b = nlohmann::json::parse(slurp(w.dir / "ev_full" / "metrics.json"));
    CHECK(a["top1"] == b["top1"]);
    CHECK(a["macro_f1"] == b["macro_f1"]);
    CHECK(run({"bench", "--checkpoint", lean, "--samples", "20", "--warmup", "2"}) == 0);
    CHECK(run({"bench", "--checkpoint", lean, "--samples", "5"}) == 2);
  }
  SUBCASE("exports") {
    REQUIRE(run({"export-embeddings", "--checkpoint", w.at("a/model.ckpt"), "--out", w.at("emb.csv")}) == 0);
    const std::string emb = slurp(w.at("emb.csv"));
    CHECK(emb.rfind("id,label,z_p0,", 0) == 0);
    CHECK(std::count(emb.begin(), emb.end(), '\n') == 1 + 4 * 4);
    REQUIRE(run({"export-graph", "--checkpoint", w.at("a/model.ckpt"), "--out", w.at("g")}) == 0);
    const std::string eye = slurp(w.dir / "g" / "adjacency_eye.csv");
    CHECK(std::count(eye.begin(), eye.end(), '\n') == 38);
  }
}

TEST_CASE("cli: cross-validation, sweep and generated data on disk") {
  Workspace w;
  REQUIRE(run({"gen-data", "--data", "synthetic:subjects=4,seconds=96,segment=16,frame_dim=12", "--out",
               w.at("data")}) == 0);
  CHECK(fs::exists(w.dir / "data" / "subject_03" / "frames.ptgv"));
  REQUIRE(run({"eval", "--cv", "--config", w.conf, "--data", w.at("data"), "--out", w.at("cv")}) == 0);
  const auto from_disk = slurp(w.dir / "cv" / "metrics.json");
  REQUIRE(run({"eval", "--cv", "--config", w.conf, "--out", w.at("cv2")}) == 0);
  CHECK(from_disk == slurp(w.dir / "cv2" / "metrics.json"));
  REQUIRE(run({"sweep", "--config", w.conf, "--windows", "24", "--kernels", "3,4", "--out", w.at("sw")}) == 0);
  const std::string csv = slurp(w.dir / "sw" / "sweep.csv");
  CHECK(csv.find("24,4,nan,nan,nan") != std::string::npos);
}

TEST_CASE("cli: exit codes") {
  Workspace w;
  CHECK(run({}) == 1);
  CHECK(run({"fly"}) == 1);
  CHECK(run({"train", "--config", w.conf, "--ablation", "no_wings", "--out", w.at("x")}) == 2);
  std::ofstream(w.at("bad.conf")) << "diffattn.heads = 3\n";
  CHECK(run({"train", "--config", w.at("bad.conf"), "--out", w.at("x")}) == 2);
  CHECK(run({"eval", "--checkpoint", w.at("none.ckpt")}) == 4);
  CHECK(run({"train", "--config", w.conf, "--data", w.at("nowhere"), "--out", w.at("x")}) == 4);
  std::ofstream(w.at("junk.ckpt")) << "junk";
  CHECK(run({"strip", "--checkpoint", w.at("junk.ckpt"), "--out", w.at("y.ckpt")}) == 4);
  // a learning rate this large overflows within the first epoch
  std::ofstream(w.at("hot.conf")) << kConf << "train.lr = 1e30\n";
  CHECK(run({"train", "--config", w.at("hot.conf"), "--out", w.at("hot")}) == 3);
  CHECK(fs::exists(w.dir / "hot" / "model.ckpt"));
}
