#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "ferfusion/error.hpp"
#include "ferfusion/features.hpp"
#include "ferfusion/rng.hpp"
#include "ferfusion/synthetic.hpp"

using namespace ferfusion;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "ferfusion_features_test";
  fs::create_directories(dir);
  return dir;
}

EmbeddingDataset balanced(std::size_t per_class, std::size_t dim = 4) {
  std::vector<EmbeddingRecord> recs;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto id = "c" + std::to_string(c) + "_" + std::to_string(i);
      recs.push_back({id, "v", i, static_cast<int>(c), std::vector<float>(dim, static_cast<float>(i))});
    }
  }
  return EmbeddingDataset(std::move(recs));
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(LoadEmbeddings, CsvFixture) {
  const auto path = temp_dir() / "three.csv";
  std::ofstream(path) << "sample_id,video_id,frame_index,label,v0,v1,v2,v3\n"
                      << "a,vid,0,1,0.5,1,2,3\n"
                      << "b,vid,1,2,-1,0,0,0\n"
                      << "c,vid2,0,7,1e-3,2,2,2\n";
  const auto ds = load_embeddings(path);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim(), 4u);
  EXPECT_EQ(ds[0].sample_id, "a");
  EXPECT_EQ(ds[2].label, 7);
  EXPECT_FLOAT_EQ(ds[2].vector[0], 1e-3f);
}

TEST(LoadEmbeddings, EmptyFileIsEmptyDataset) {
  const auto path = temp_dir() / "empty.csv";
  std::ofstream(path).flush();
  const auto ds = load_embeddings(path);
  EXPECT_TRUE(ds.empty());
}

TEST(LoadEmbeddings, RaggedRowsAreDimensionMismatch) {
  const auto path = temp_dir() / "ragged.csv";
  std::ofstream(path) << "a,v,0,1,1,2,3,4\nb,v,1,1,1,2,3,4,5\n";
  EXPECT_EQ(kind_of([&] { load_embeddings(path); }), ErrorKind::DimensionMismatch);
}

TEST(LoadEmbeddings, MalformedRowIsParseError) {
  const auto path = temp_dir() / "bad.csv";
  std::ofstream(path) << "a,v,zero,1,1,2\n";
  EXPECT_EQ(kind_of([&] { load_embeddings(path); }), ErrorKind::Parse);
  std::ofstream(path) << "a,v,0,9,1,2\n";
  EXPECT_EQ(kind_of([&] { load_embeddings(path); }), ErrorKind::Parse);
}

TEST(LoadEmbeddings, BinaryRoundTripIsBitExact) {
  Rng rng(3);
  std::vector<EmbeddingRecord> recs;
  for (int i = 0; i < 50; ++i) {
    std::vector<float> v(7);
    for (auto& x : v) x = static_cast<float>(rng.gaussian() * 1e3);
    v[0] = -0.0f;
    v[1] = std::numeric_limits<float>::denorm_min();
    recs.push_back({"id" + std::to_string(i), "video," + std::to_string(i % 3), rng.next(), i % 8, v});
  }
  const EmbeddingDataset ds(recs);
  const auto path = temp_dir() / "rt.bin";
  save_embeddings(path, ds);
  const auto back = load_embeddings(path);
  ASSERT_EQ(back.records(), ds.records());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(std::memcmp(back[i].vector.data(), ds[i].vector.data(), 7 * sizeof(float)), 0);
  }
}

TEST(LoadEmbeddings, CsvRoundTripIsBitExact) {
  const auto data = generate_two_view(TwoViewSpec{}, 5, 9);
  const auto path = temp_dir() / "rt.csv";
  save_embeddings_csv(path, data.main);
  EXPECT_EQ(load_embeddings(path).records(), data.main.records());
}

TEST(LoadEmbeddings, TruncatedBinaryIsParseError) {
  const auto path = temp_dir() / "trunc.bin";
  save_embeddings(path, balanced(2));
  fs::resize_file(path, fs::file_size(path) - 3);
  EXPECT_EQ(kind_of([&] { load_embeddings(path); }), ErrorKind::Parse);
}

TEST(Sample, AllRecordsWhenNEqualsClassSize) {
  const auto ds = balanced(100);
  const auto out = uniform_class_sample(ds, 100, 1);
  ASSERT_EQ(out.size(), ds.size());
  std::set<std::string> a, b;
  for (const auto& r : ds.records()) a.insert(r.sample_id);
  for (const auto& r : out.records()) b.insert(r.sample_id);
  EXPECT_EQ(a, b);
  EXPECT_NE(out.records(), ds.records());  // permuted
}

TEST(Sample, ZeroGivesEmpty) { EXPECT_TRUE(uniform_class_sample(balanced(3), 0, 1).empty()); }

TEST(Sample, DeterministicFlatSubset) {
  const auto ds = balanced(50);
  const auto a = uniform_class_sample(ds, 10, 42);
  const auto b = uniform_class_sample(ds, 10, 42);
  EXPECT_EQ(a.records(), b.records());
  for (auto count : a.class_histogram()) EXPECT_EQ(count, 10u);
  std::set<std::string> all;
  for (const auto& r : ds.records()) all.insert(r.sample_id);
  for (const auto& r : a.records()) EXPECT_TRUE(all.count(r.sample_id));
  const auto c = uniform_class_sample(ds, 10, 43);
  EXPECT_NE(a.records(), c.records());
}

TEST(Sample, EveryRecordCanBeDrawn) {
  // 5 of 10 per class over 200 seeds: each record should be chosen about half the time
  const auto ds = balanced(10);
  std::map<std::string, int> hits;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto drawn = uniform_class_sample(ds, 5, seed);
    for (const auto& r : drawn.records()) ++hits[r.sample_id];
  }
  ASSERT_EQ(hits.size(), ds.size());
  for (const auto& [id, n] : hits) {
    EXPECT_GT(n, 60) << id;
    EXPECT_LT(n, 140) << id;
  }
}

TEST(Sample, InsufficientClass) {
  std::vector<EmbeddingRecord> recs = balanced(5).records();
  recs.erase(std::remove_if(recs.begin(), recs.end(), [](const auto& r) { return r.label == 3 && r.frame_index > 1; }),
             recs.end());
  EXPECT_EQ(kind_of([&] { uniform_class_sample(EmbeddingDataset(recs), 3, 0); }), ErrorKind::InsufficientClass);
}

TEST(Pair, IdenticalIdsPairFully) {
  const auto ds = balanced(3);
  const auto p = pair_views(ds, ds);
  EXPECT_EQ(p.size(), ds.size());
  EXPECT_EQ(p.dropped_main + p.dropped_aux, 0u);
}

TEST(Pair, ExtraMainIdIsDropped) {
  auto recs = balanced(2).records();
  const EmbeddingDataset aux(recs);
  recs.push_back({"extra", "v", 0, 0, std::vector<float>(4, 0.f)});
  const auto p = pair_views(EmbeddingDataset(recs), aux);
  EXPECT_EQ(p.size(), aux.size());
  EXPECT_EQ(p.dropped_main, 1u);
  EXPECT_EQ(p.dropped_aux, 0u);
  EXPECT_NE(pairing_report(p).find("dropped_main_only 1"), std::string::npos);
}

TEST(Pair, LabelConflict) {
  const EmbeddingDataset a({{"x", "v", 0, 2, {1.f}}});
  const EmbeddingDataset b({{"x", "v", 0, 3, {1.f}}});
  EXPECT_EQ(kind_of([&] { pair_views(a, b); }), ErrorKind::LabelConflict);
}

TEST(Pair, OutputBoundedAndAligned) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EmbeddingRecord> m, a;
    for (int i = 0; i < 40; ++i) {
      const int label = static_cast<int>(rng.below(8));
      EmbeddingRecord r{"id" + std::to_string(i), "v", 0, label, {1.f, 2.f}};
      if (rng.uniform() < 0.7) m.push_back(r);
      if (rng.uniform() < 0.7) a.push_back(r);
    }
    const auto p = pair_views(EmbeddingDataset(m), EmbeddingDataset(a));
    EXPECT_LE(p.size(), std::min(m.size(), a.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_EQ(p.main[i].sample_id, p.aux[i].sample_id);
      EXPECT_EQ(p.main[i].label, p.aux[i].label);
    }
    EXPECT_EQ(p.size() + p.dropped_main, m.size());
    EXPECT_EQ(p.size() + p.dropped_aux, a.size());
  }
}

TEST(ToyEncoder, ZeroWeightsGiveBias) {
  const ToyEncoder enc(Tensor({2, 4}), Tensor::vector({0.5, -1.0}));
  const ImageBuffer img(2, 2, 1, 200);
  EXPECT_EQ(enc.encode(img), (std::vector<double>{0.5, -1.0}));
}

TEST(ToyEncoder, FullIntensityScalesToOne) {
  const ToyEncoder enc(Tensor::matrix(1, 1, {1.0}), Tensor::vector({0.25}));
  const ImageBuffer img(1, 1, 1, 255);
  EXPECT_DOUBLE_EQ(enc.encode(img)[0], 1.25);
}

TEST(ToyEncoder, MatchesDotProduct) {
  const auto enc = ToyEncoder::random(5, 4 * 3 * 3, 17);
  Rng rng(2);
  ImageBuffer img(4, 3, 3);
  for (auto& px : img.data()) px = static_cast<std::uint8_t>(rng.below(256));
  const auto out = enc.encode(img);
  for (std::size_t o = 0; o < 5; ++o) {
    long double acc = enc.bias()[o];
    for (std::size_t i = 0; i < img.data().size(); ++i) acc += enc.weight()(o, i) * (img.data()[i] / 255.0L);
    EXPECT_NEAR(out[o], static_cast<double>(acc), 1e-12);
  }
}

TEST(ToyEncoder, ShapeMismatch) {
  const auto enc = ToyEncoder::random(3, 10, 1);
  EXPECT_EQ(kind_of([&] { enc.encode(ImageBuffer(3, 3, 1)); }), ErrorKind::ShapeMismatch);
}
