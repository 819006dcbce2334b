#include "qsn/rng.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace qsn;

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(StreamSeed, DistinctAcrossNamesAndIndices) {
  std::set<std::uint64_t> seen;
  for (const char* name : {"data", "init", "train", "simulate", "site"})
    for (std::uint64_t i = 0; i < 64; ++i) seen.insert(stream_seed(7, name, i));
  EXPECT_EQ(seen.size(), 5u * 64u);
  EXPECT_NE(stream_seed(1, "data"), stream_seed(2, "data"));
}

TEST(StreamSeed, Deterministic) {
  static_assert(stream_seed(3, "x", 1) == stream_seed(3, "x", 1));
  RandomEngine a = make_stream(5, "site", 2);
  RandomEngine b = make_stream(5, "site", 2);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}
