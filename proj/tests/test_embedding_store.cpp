#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <numeric>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "embattr/embedding_store.hpp"
#include "embattr/error.hpp"
#include "test_helpers.hpp"

using namespace embattr;
using embattr::testing::numbered_labels;
using embattr::testing::random_set;

namespace {

std::string encode(const EmbeddingSet& set) {
  std::ostringstream out(std::ios::binary);
  write_set(set, out);
  return out.str();
}

EmbeddingSet decode(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_set(in);
}

Errc decode_error(const std::string& bytes) {
  try {
    decode(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "stream was accepted";
  return Errc::validation;
}

// Hand-rolled little-endian writer, independent of write_set.
struct ByteBuilder {
  std::string bytes;
  ByteBuilder& raw(const std::string& s) {
    bytes += s;
    return *this;
  }
  ByteBuilder& u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    return *this;
  }
  ByteBuilder& u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    return *this;
  }
  ByteBuilder& f32(float v) { return u32(std::bit_cast<std::uint32_t>(v)); }
};

std::string header(std::uint32_t dim, std::uint64_t count, const std::string& labels,
                   std::uint32_t version = 1) {
  ByteBuilder b;
  b.raw("EMBS").u32(version).u32(dim).u64(count).u32(static_cast<std::uint32_t>(labels.size()));
  b.raw(labels);
  return b.bytes;
}

}  // namespace

TEST(LabelTable, IdsFollowPosition) {
  LabelTable t({"real", "ADM", "SD_1.4"});
  ASSERT_EQ(t.size(), 3u);
  for (LabelId i = 0; i < 3; ++i) EXPECT_EQ(t.id(t.name(i)), i);
  EXPECT_FALSE(t.find("Glide").has_value());
}

TEST(LabelTable, RejectsDuplicatesAndEmptyNames) {
  EXPECT_THROW(LabelTable({"real", "real"}), Error);
  EXPECT_THROW(LabelTable({"real", ""}), Error);
  EXPECT_THROW(LabelTable({"a\nb"}), Error);
  try {
    LabelTable({"real"}).id("fake");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_label);
  }
}

TEST(EmbeddingSet, RejectsInvariantViolations) {
  EXPECT_THROW(EmbeddingSet(0, LabelTable{}), Error);
  EXPECT_THROW(EmbeddingSet(2, numbered_labels(1), {0}, {1.0f}), Error);
  EXPECT_THROW(EmbeddingSet(1, numbered_labels(1), {1}, {1.0f}), Error);
  EXPECT_THROW(EmbeddingSet(1, numbered_labels(1), {0}, {std::numeric_limits<float>::infinity()}),
               Error);
}

TEST(WriteSet, EmptySetIsBareHeader) {
  const auto bytes = encode(EmbeddingSet(4, LabelTable{}));
  // magic, version, dim, count (u64), label block length
  ASSERT_EQ(bytes.size(), 24u);
  EXPECT_EQ(bytes, header(4, 0, ""));
}

TEST(WriteSet, MatchesHandEncodedLayout) {
  EmbeddingSet set(2, LabelTable({"real", "fake"}), {1, 0}, {0.5f, -1.0f, 3.0f, -0.0f});
  ByteBuilder expected;
  expected.raw(header(2, 2, "real\nfake"));
  expected.u32(1).f32(0.5f).f32(-1.0f).u32(0).f32(3.0f).f32(-0.0f);
  EXPECT_EQ(encode(set), expected.bytes);
}

TEST(ReadSet, SingleRecordRoundTrip) {
  EmbeddingSet set(3, LabelTable({"real", "fake"}), {1}, {1.0f, 2.0f, 3.0f});
  const auto back = decode(encode(set));
  EXPECT_EQ(back.size(), 1u);
  EXPECT_EQ(back.dim(), 3u);
  EXPECT_EQ(back, set);
}

TEST(ReadSet, LargeRandomRoundTripIsBitExact) {
  const auto set = random_set(1000, 1000, 9, 42);
  const auto back = decode(encode(set));
  ASSERT_EQ(back, set);
  for (std::size_t i = 0; i < set.size(); i += 97) {
    const auto a = set.row(i);
    const auto b = back.row(i);
    for (std::size_t j = 0; j < set.dim(); ++j) {
      ASSERT_EQ(std::bit_cast<std::uint32_t>(a[j]), std::bit_cast<std::uint32_t>(b[j]));
    }
  }
}

TEST(ReadSet, RoundTripPropertyOverSeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto set = random_set(rng.below(50), 1 + rng.below(16), 1 + rng.below(5), seed);
    ASSERT_EQ(decode(encode(set)), set) << "seed " << seed;
  }
}

TEST(ReadSet, CrossComponentFileWithManifest) {
  // Layout an exporter emits for 2 classes x 3 images at width 5.
  ByteBuilder b;
  b.raw(header(5, 6, "cat\ndog"));
  for (std::uint32_t i = 0; i < 6; ++i) {
    b.u32(i / 3);
    for (int j = 0; j < 5; ++j) b.f32(static_cast<float>(i) * 0.25f + static_cast<float>(j));
  }
  const std::map<std::string, std::size_t> manifest = {{"dim", 5}, {"count", 6}};
  const auto set = decode(b.bytes);
  EXPECT_EQ(set.dim(), manifest.at("dim"));
  EXPECT_EQ(set.size(), manifest.at("count"));
  EXPECT_EQ(set.labels().names(), (std::vector<std::string>{"cat", "dog"}));
  EXPECT_EQ(set.class_counts(), (std::vector<std::size_t>{3, 3}));
}

TEST(ReadSet, DistinctErrorsForMalformedStreams) {
  const auto good = encode(EmbeddingSet(1, LabelTable({"a"}), {0, 0}, {1.0f, 2.0f}));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_error(bad_magic), Errc::bad_magic);

  auto bad_version = good;
  bad_version[4] = 7;
  EXPECT_EQ(decode_error(bad_version), Errc::unsupported_version);

  // Declares two records but carries one.
  EXPECT_EQ(decode_error(good.substr(0, good.size() - 8)), Errc::truncated);
  EXPECT_EQ(decode_error(good.substr(0, 10)), Errc::truncated);

  ByteBuilder nan;
  nan.raw(header(1, 1, "a")).u32(0).f32(std::numeric_limits<float>::quiet_NaN());
  EXPECT_EQ(decode_error(nan.bytes), Errc::non_finite);

  ByteBuilder out_of_range;
  out_of_range.raw(header(1, 1, "a")).u32(1).f32(1.0f);
  EXPECT_EQ(decode_error(out_of_range.bytes), Errc::label_out_of_range);

  EXPECT_EQ(decode_error(good + "x"), Errc::validation);
}

TEST(ReadSet, SupportVersionCarriesK) {
  EmbeddingSet set(2, LabelTable({"a", "b"}), {0, 1}, {1.0f, 0.0f, 0.0f, 1.0f});
  std::ostringstream out(std::ios::binary);
  write_set(set, out, 11u);
  ByteBuilder expected;
  expected.raw(header(2, 2, "a\nb", 2)).u32(11);
  expected.u32(0).f32(1.0f).f32(0.0f).u32(1).f32(0.0f).f32(1.0f);
  EXPECT_EQ(out.str(), expected.bytes);

  std::istringstream in(out.str(), std::ios::binary);
  const auto contents = read_embs(in);
  EXPECT_EQ(contents.k_default, 11u);
  EXPECT_EQ(contents.set, set);
}

TEST(Partition, ZeroCapSelectsNothing) {
  const auto set = random_set(100, 3, 4, 1);
  const std::vector<LabelId> ids{0, 1, 2, 3};
  const auto p = partition(set, ids, 0, 5);
  EXPECT_TRUE(p.selected.empty());
  EXPECT_EQ(p.remainder, set);
}

TEST(Partition, CapAboveSupplyTakesWholeClass) {
  std::vector<LabelId> labels(90, 0);
  labels.insert(labels.end(), 200, 1);
  std::vector<float> coords(labels.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<float>(i);
  EmbeddingSet set(1, numbered_labels(2), labels, coords);
  const std::vector<LabelId> ids{0, 1};
  const auto p = partition(set, ids, 150, 3);
  const auto counts = p.selected.class_counts();
  EXPECT_EQ(counts[0], 90u);
  EXPECT_EQ(counts[1], 150u);
}

TEST(Partition, ConservesRecords) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto set = random_set(300, 2, 5, seed);
    const std::vector<LabelId> ids{1, 3};
    const auto p = partition(set, ids, 17, seed);
    ASSERT_EQ(p.selected.size() + p.remainder.size(), set.size());
    std::vector<std::size_t> all = p.selected_indices;
    all.insert(all.end(), p.remainder_indices.begin(), p.remainder_indices.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i);
    for (std::size_t i = 0; i < p.selected.size(); ++i) {
      const auto src = p.selected_indices[i];
      ASSERT_EQ(p.selected.label_id(i), set.label_id(src));
      ASSERT_TRUE(std::equal(p.selected.row(i).begin(), p.selected.row(i).end(),
                             set.row(src).begin()));
    }
    for (const auto id : p.selected.label_ids()) ASSERT_TRUE(id == 1 || id == 3);
  }
}

TEST(Partition, DeterministicPerSeed) {
  const auto set = random_set(6000, 2, 9, 11);
  std::vector<LabelId> ids(9);
  std::iota(ids.begin(), ids.end(), 0u);
  const auto a = partition(set, ids, 150, 7);
  const auto b = partition(set, ids, 150, 7);
  const auto c = partition(set, ids, 150, 8);
  EXPECT_EQ(a.selected_indices, b.selected_indices);
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_NE(a.selected_indices, c.selected_indices);
}

TEST(Partition, UnsetCapSelectsEveryRequestedRecord) {
  const auto set = random_set(50, 2, 3, 2);
  const std::vector<LabelId> ids{2};
  const auto p = partition(set, ids, std::nullopt, 0);
  EXPECT_EQ(p.selected.size(), set.class_counts()[2]);
}

TEST(Partition, UnknownLabel) {
  const auto set = random_set(10, 2, 2, 0);
  const std::vector<LabelId> ids{5};
  try {
    partition(set, ids, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_label);
  }
}
