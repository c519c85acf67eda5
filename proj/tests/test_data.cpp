#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "mastaf/episodes.hpp"
#include "mastaf/manifest.hpp"
#include "mastaf/synthetic.hpp"

using namespace mastaf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mastaf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_all(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

SyntheticConfig small_config(std::size_t train_classes = 24, std::size_t samples = 6) {
  SyntheticConfig c;
  c.train_classes = train_classes;
  c.val_classes = 3;
  c.test_classes = 5;
  c.samples_per_class = samples;
  return c;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return d / std::sqrt(na * nb);
}

// Brute force: raw-cube cosine nearest prototype, no model involved.
double nearest_prototype_accuracy(const Dataset& ds, std::size_t episodes, std::uint64_t seed) {
  std::size_t correct = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    std::mt19937_64 rng(mix_seed(seed, e));
    const auto ep = sample_episode(ds, EpisodeSpec{5, 1, 1}, rng);
    const auto q = std::get<FeatureCube>(ep.queries[0]->payload).values();
    std::size_t best = 0;
    double best_sim = -2;
    for (std::size_t c = 0; c < ep.ways(); ++c) {
      const double s = cosine(q, std::get<FeatureCube>(ep.support[c][0]->payload).values());
      if (s > best_sim) {
        best_sim = s;
        best = c;
      }
    }
    correct += best == ep.query_labels[0];
  }
  return static_cast<double>(correct) / static_cast<double>(episodes);
}

}  // namespace

TEST(Manifest, MinimalTwoClassRoundTrip) {
  const auto dir = temp_dir("manifest_rt");
  const CubeDims d{2, 1, 1, 2};
  DatasetManifest m{"train", d, {{3, "a", {"a0.fcube"}}, {7, "b", {"b0.fcube", "b1.fcube"}}}, dir};
  for (const char* f : {"a0.fcube", "b0.fcube", "b1.fcube"}) {
    store_fcube(dir / f, FeatureCube(d, {1.f, 2.f, 3.f, 4.f}));
  }
  save_manifest(dir / "manifest.json", m);
  const auto back = load_manifest(dir / "manifest.json");
  EXPECT_EQ(back.split, "train");
  EXPECT_EQ(back.dims, d);
  ASSERT_EQ(back.classes.size(), 2u);
  EXPECT_EQ(back.classes[1].id, 7);
  EXPECT_EQ(back.classes[1].samples, m.classes[1].samples);
  EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
  const auto ds = load_dataset(back);
  EXPECT_EQ(ds.num_classes(), 2u);
  EXPECT_EQ(ds.samples[1][1].global_class_id, 7);
}

TEST(Manifest, DanglingPathNamesTheFile) {
  const auto dir = temp_dir("manifest_dangling");
  DatasetManifest m{"test", CubeDims{1, 1, 1, 1}, {{0, "a", {"missing.fcube"}}}, dir};
  save_manifest(dir / "manifest.json", m);
  try {
    load_manifest(dir / "manifest.json");
    FAIL() << "expected a dangling-path error";
  } catch (const ManifestError& e) {
    EXPECT_EQ(e.kind(), ManifestError::Kind::kDanglingPath);
    EXPECT_NE(std::string(e.what()).find("missing.fcube"), std::string::npos);
  }
}

TEST(Manifest, SchemaViolations) {
  const char* bad[] = {
      "not json",
      "[]",
      R"({"split": "x", "dims": [1,1,1,1]})",
      R"({"split": 3, "dims": [1,1,1,1], "classes": []})",
      R"({"split": "x", "dims": [1,1,1], "classes": []})",
      R"({"split": "x", "dims": [1,0,1,1], "classes": []})",
      R"({"split": "x", "dims": [1,1,1,1], "classes": [{"id": 1, "name": "a"}]})",
      R"({"split": "x", "dims": [1,1,1,1], "classes": [{"id": "1", "name": "a", "samples": []}]})",
      R"({"split": "x", "dims": [1,1,1,1], "classes": [{"id": 1, "name": "a", "samples": []},
                                                        {"id": 1, "name": "b", "samples": []}]})",
  };
  for (const char* text : bad) {
    try {
      manifest_from_json(text, ".");
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ManifestError& e) {
      EXPECT_EQ(e.kind(), ManifestError::Kind::kSchema) << text;
    }
  }
}

TEST(Manifest, SplitOverlapIsDetected) {
  const CubeDims d{1, 1, 1, 1};
  std::vector<DatasetManifest> ok{{"train", d, {{0, "a", {}}, {1, "b", {}}}, "."},
                                  {"test", d, {{2, "c", {}}}, "."}};
  EXPECT_NO_THROW(check_disjoint(ok));
  ok[1].classes.push_back({1, "b", {}});
  try {
    check_disjoint(ok);
    FAIL();
  } catch (const ManifestError& e) {
    EXPECT_EQ(e.kind(), ManifestError::Kind::kSplitOverlap);
  }
}

TEST(Episodes, StructureAndDisjointness) {
  const auto ds = synthesize_split(small_config(), Split::kTrain);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const EpisodeSpec spec{5, 3, 4};
    const auto ep = sample_episode(ds, spec, rng);
    ASSERT_EQ(ep.ways(), 5u);
    ASSERT_EQ(ep.queries.size(), 4u);
    std::set<int> classes(ep.class_ids.begin(), ep.class_ids.end());
    EXPECT_EQ(classes.size(), 5u);
    std::set<const VideoSample*> used;
    for (std::size_t c = 0; c < 5; ++c) {
      ASSERT_EQ(ep.support[c].size(), 3u);
      for (const auto* s : ep.support[c]) {
        EXPECT_EQ(s->global_class_id, ep.class_ids[c]);
        EXPECT_TRUE(used.insert(s).second);
      }
      EXPECT_EQ(ds.manifest.classes[ep.class_positions[c]].id, ep.class_ids[c]);
    }
    for (std::size_t q = 0; q < 4; ++q) {
      EXPECT_TRUE(used.insert(ep.queries[q]).second) << "query reused a support sample";
      EXPECT_EQ(ep.queries[q]->global_class_id, ep.class_ids[ep.query_labels[q]]);
    }
  }
}

TEST(Episodes, ClassFrequencyIsUniform) {
  const auto ds = synthesize_split(small_config(24, 2), Split::kTrain);
  std::mt19937_64 rng(2);
  std::map<int, std::size_t> counts;
  const std::size_t n = 10000;
  for (std::size_t i = 0; i < n; ++i) {
    for (int id : sample_episode(ds, EpisodeSpec{5, 1, 1}, rng).class_ids) ++counts[id];
  }
  ASSERT_EQ(counts.size(), 24u);
  for (const auto& [id, c] : counts) {
    EXPECT_NEAR(static_cast<double>(c) / n, 5.0 / 24.0, 0.02) << "class " << id;
  }
}

TEST(Episodes, SamplingDoesNotMutateAndRarelyCollides) {
  const auto ds = synthesize_split(small_config(24, 6), Split::kTrain);
  const auto before = manifest_to_json(ds.manifest);
  std::mt19937_64 rng(3);
  std::set<std::vector<const VideoSample*>> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto ep = sample_episode(ds, EpisodeSpec{5, 1, 1}, rng);
    std::vector<const VideoSample*> key;
    for (const auto& s : ep.support) key.push_back(s[0]);
    key.push_back(ep.queries[0]);
    seen.insert(key);
  }
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(manifest_to_json(ds.manifest), before);
}

TEST(Episodes, SameSeedSameEpisode) {
  const auto ds = synthesize_split(small_config(), Split::kTrain);
  std::mt19937_64 a(4), b(4);
  for (int i = 0; i < 20; ++i) {
    const auto x = sample_episode(ds, EpisodeSpec{5, 2, 2}, a);
    const auto y = sample_episode(ds, EpisodeSpec{5, 2, 2}, b);
    EXPECT_EQ(x.support, y.support);
    EXPECT_EQ(x.queries, y.queries);
  }
}

TEST(Episodes, CapacityAndValidation) {
  const auto ds = synthesize_split(small_config(4, 2), Split::kTrain);
  std::mt19937_64 rng(5);
  EXPECT_THROW(sample_episode(ds, EpisodeSpec{5, 1, 1}, rng), CapacityError);
  // Two samples per class: two shots leave nothing for the query.
  EXPECT_THROW(sample_episode(ds, EpisodeSpec{3, 2, 1}, rng), CapacityError);
  EXPECT_NO_THROW(sample_episode(ds, EpisodeSpec{4, 1, 4}, rng));
  EXPECT_THROW(sample_episode(ds, EpisodeSpec{4, 1, 5}, rng), CapacityError);
  EXPECT_THROW(sample_episode(ds, EpisodeSpec{1, 1, 1}, rng), ConfigError);
  EXPECT_THROW(sample_episode(ds, EpisodeSpec{2, 0, 1}, rng), ConfigError);
  EXPECT_THROW(sample_episode(ds, EpisodeSpec{2, 1, 0}, rng), ConfigError);
}

TEST(Synthetic, DeterministicOnDisk) {
  auto cfg = small_config(3, 2);
  cfg.seed = 7;
  const auto a = temp_dir("synth_a"), b = temp_dir("synth_b");
  generate_synthetic(cfg, a);
  generate_synthetic(cfg, b);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(read_all(e.path()), read_all(b / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 3u + (3 + 3 + 5) * 2);
}

TEST(Synthetic, SplitsAreDisjointAndLoadable) {
  const auto dir = temp_dir("synth_splits");
  const auto paths = generate_synthetic(small_config(4, 2), dir);
  const std::vector<DatasetManifest> ms{load_manifest(paths.train), load_manifest(paths.val),
                                        load_manifest(paths.test)};
  EXPECT_NO_THROW(check_disjoint(ms));
  EXPECT_EQ(ms[2].classes.size(), 5u);
  const auto ds = load_dataset(ms[0]);
  const auto mem = synthesize_split(small_config(4, 2), Split::kTrain);
  for (std::size_t c = 0; c < ds.num_classes(); ++c) {
    for (std::size_t s = 0; s < ds.samples[c].size(); ++s) {
      EXPECT_EQ(std::get<FeatureCube>(ds.samples[c][s].payload),
                std::get<FeatureCube>(mem.samples[c][s].payload));
    }
  }
}

TEST(Synthetic, ZeroNoiseSamplesEqualTheirCentre) {
  auto cfg = small_config(6, 3);
  cfg.noise_std = 0.0;
  const auto ds = synthesize_split(cfg, Split::kTest);
  for (const auto& cls : ds.samples) {
    for (const auto& s : cls) {
      EXPECT_EQ(std::get<FeatureCube>(s.payload), std::get<FeatureCube>(cls[0].payload));
    }
  }
  EXPECT_EQ(nearest_prototype_accuracy(ds, 300, 1), 1.0);
}

TEST(Synthetic, Validation) {
  auto cfg = small_config();
  cfg.noise_std = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.samples_per_class = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// Brute-force baseline of the standard benchmark: untrained cosine nearest
// prototype on the raw cubes. At noise 0.5 the 64-dimensional clusters are
// already separable, so the baseline saturates; the open interval (1/5, 1) is
// reached once the noise dominates the centre spread.
TEST(SyntheticBaseline, StandardBenchmarkSaturates) {
  SyntheticConfig cfg;  // 20/5/5 classes, 8x2x2x2, noise 0.5, seed 42
  const auto test = synthesize_split(cfg, Split::kTest);
  const double acc = nearest_prototype_accuracy(test, 2000, 42);
  EXPECT_GE(acc, 0.99);
  EXPECT_LE(acc, 1.0);
}

TEST(SyntheticBaseline, NoisierBenchmarkLandsStrictlyBetweenChanceAndPerfect) {
  SyntheticConfig cfg;
  cfg.noise_std = 1.5;
  const auto test = synthesize_split(cfg, Split::kTest);
  const double acc = nearest_prototype_accuracy(test, 2000, 42);
  EXPECT_GT(acc, 0.2);
  EXPECT_LT(acc, 1.0);
}
