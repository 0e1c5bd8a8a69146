#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "synth.hpp"
#include "vqp.h"

namespace fs = std::filesystem;

namespace {

struct Session {
  vqp_session* s = vqp_session_create();
  ~Session() { vqp_session_destroy(s); }
};

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const {
    return (path / leaf).string();
  }
};

// Small corpus + config shared by the end-to-end cases below; generated
// once because WAV synthesis and pitch tracking dominate the test time.
struct Fixture {
  TmpDir dir{"vqp_capi_fixture"};
  std::string corpus = dir / "corpus";
  std::string config = dir / "tiny.cfg";

  Fixture() {
    vqp::SynthConfig sc;
    sc.num_utterances = 6;
    sc.num_speakers = 3;
    sc.min_words = 4;
    sc.max_words = 8;
    sc.seed = 99;
    vqp::GenerateCorpus(sc, corpus);
    std::ofstream cfg(config);
    cfg << "tcn.layers = 3\n"
           "tcn.filters = 8\n"
           "tcn.skip_channels = 8\n"
           "pq.input_dim = 8\n"
           "pq.slices = 2\n"
           "pq.codebook_size = 4\n"
           "ctx.layers = 1\n"
           "ctx.heads = 2\n"
           "ctx.model_dim = 16\n"
           "ctx.ffn_dim = 32\n"
           "ctx.min_seq = 4\n"
           "pretrain.batch_size = 2\n"
           "pretrain.warmup_steps = 2\n"
           "pretrain.lr_max = 1e-4\n"
           "pretrain.checkpoint_every = 3\n";
  }
};

Fixture& TheFixture() {
  static Fixture f;
  return f;
}

nlohmann::json ReadJson(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  return nlohmann::json::parse(is);
}

}  // namespace

TEST_CASE("capi session and argument errors") {
  Session s;
  CHECK(std::string(vqp_last_error(s.s)).empty());

  CHECK(vqp_preprocess(s.s, nullptr, "/tmp/x", 0, 1, 0, nullptr) ==
        VQP_USAGE_ERROR);
  CHECK(std::string(vqp_last_error(s.s)).find("preprocess") !=
        std::string::npos);

  CHECK(vqp_preprocess(s.s, "/nonexistent/manifest.jsonl", "/tmp/x", 0, 1, 0,
                       nullptr) == VQP_DATA_ERROR);
  CHECK(!std::string(vqp_last_error(s.s)).empty());

  // The error message resets on the next successful-or-failing call.
  CHECK(vqp_deid(s.s, nullptr, nullptr, 10, nullptr, 0, nullptr) ==
        VQP_USAGE_ERROR);
  CHECK(std::string(vqp_last_error(s.s)).find("deid") != std::string::npos);
}

TEST_CASE("capi preprocess, pretrain, extract, features round trip") {
  Fixture& fx = TheFixture();
  Session s;
  TmpDir out("vqp_capi_rt");
  const std::string manifest = fx.corpus + "/manifest.jsonl";
  const std::string data = out / "data";
  const std::string ckpts = out / "ckpts";
  const std::string reps = out / "ctx.reps";
  const std::string table = out / "features.jsonl";

  int64_t words = -1;
  REQUIRE(vqp_preprocess(s.s, manifest.c_str(), data.c_str(), 0, 2, 0,
                         &words) == VQP_OK);
  CHECK(words >= 6 * 4);
  CHECK(fs::exists(fs::path(data) / "index.jsonl"));

  REQUIRE(vqp_pretrain(s.s, data.c_str(), fx.config.c_str(), ckpts.c_str(),
                       "", /*steps=*/4, /*seed=*/11) == VQP_OK);
  CHECK(fs::exists(fs::path(ckpts) / "metrics.jsonl"));
  const std::string ckpt = ckpts + "/latest.vqpt";
  REQUIRE(fs::exists(ckpt));

  REQUIRE(vqp_extract(s.s, data.c_str(), ckpt.c_str(), "ctx", reps.c_str(),
                      fx.config.c_str(), "") == VQP_OK);
  CHECK(fs::exists(reps));
  CHECK(fs::exists(reps + ".idx.jsonl"));

  CHECK(vqp_extract(s.s, data.c_str(), ckpt.c_str(), "bogus", reps.c_str(),
                    fx.config.c_str(), "") == VQP_USAGE_ERROR);
  CHECK(vqp_pretrain(s.s, data.c_str(), fx.config.c_str(), ckpts.c_str(),
                     "pe,zzz", 1, 1) == VQP_USAGE_ERROR);

  REQUIRE(vqp_features(s.s, manifest.c_str(), table.c_str(), 0, 2, 0) ==
          VQP_OK);

  // probe: every representation row must line up with a feature row.
  const std::string report = out / "probe.json";
  REQUIRE(vqp_probe(s.s, reps.c_str(), table.c_str(), report.c_str(), 3) ==
          VQP_OK);
  const nlohmann::json pj = ReadJson(report);
  CHECK(pj.at("rows").size() >= 5);

  // deid on a corpus this small degenerates but must still succeed.
  const std::string deid_report = out / "deid.json";
  double ratio = -1.0;
  REQUIRE(vqp_deid(s.s, reps.c_str(), nullptr, 64, deid_report.c_str(), 5,
                   &ratio) == VQP_OK);
  CHECK(ratio > 0.0);
  CHECK(ReadJson(deid_report).contains("deid_ratio"));

  // downstream with labels keyed by sample id.
  const std::string labels = out / "labels.jsonl";
  {
    std::ifstream idx(fs::path(data) / "index.jsonl");
    std::ofstream lab(labels);
    std::string line;
    int i = 0;
    while (std::getline(idx, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (j.contains("vqp_preprocess")) continue;
      lab << nlohmann::json{{"sample_id", j.at("sample_id")},
                            {"label", i++ % 2}}
                 .dump()
          << "\n";
    }
  }
  const std::string ds_report = out / "downstream.json";
  double auc = -1.0;
  REQUIRE(vqp_downstream(s.s, reps.c_str(), reps.c_str(), labels.c_str(),
                         ds_report.c_str(), 7, &auc) == VQP_OK);
  CHECK(auc >= 0.0);
  CHECK(auc <= 1.0);
}

TEST_CASE("capi pretrain logs are deterministic for a fixed seed") {
  Fixture& fx = TheFixture();
  Session s;
  TmpDir out("vqp_capi_det");
  const std::string manifest = fx.corpus + "/manifest.jsonl";
  const std::string data = out / "data";
  REQUIRE(vqp_preprocess(s.s, manifest.c_str(), data.c_str(), 0, 2, 0,
                         nullptr) == VQP_OK);
  auto run = [&](const std::string& tag) {
    const std::string dir = out / tag;
    REQUIRE(vqp_pretrain(s.s, data.c_str(), fx.config.c_str(), dir.c_str(),
                         "", 3, 7) == VQP_OK);
    std::ifstream is(fs::path(dir) / "metrics.jsonl");
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  const std::string a = run("a");
  const std::string b = run("b");
  CHECK(!a.empty());
  CHECK(a == b);
}
