#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "fkfield/rng.hpp"

using namespace fkfield;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using C = Philox4x32::Counter;
  CHECK(Philox4x32::block({0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::block({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and seekable") {
  RandomStream a(7, 3);
  RandomStream b(7, 3);
  std::vector<std::uint32_t> xs;
  for (int i = 0; i < 37; ++i) {
    xs.push_back(a.next_u32());
    CHECK(xs.back() == b.next_u32());
  }
  CHECK(a.position() == 37);
  RandomStream c(7, 3, 21);
  CHECK(c.next_u32() == xs[21]);
  c.seek(5);
  CHECK(c.next_u32() == xs[5]);
  CHECK(a == b);
}

TEST_CASE("distinct streams and seeds differ") {
  std::set<std::uint32_t> firsts;
  for (std::uint64_t s = 0; s < 8; ++s)
    for (std::uint64_t t = 0; t < 8; ++t) firsts.insert(RandomStream(s, t).next_u32());
  CHECK(firsts.size() == 64);
  RandomStream base(1, 2);
  CHECK(base.substream(0).next_u32() != base.substream(1).next_u32());
}

TEST_CASE("uniform and below have the right moments") {
  RandomStream r(11, 0);
  const int n = 200000;
  double sum = 0.0;
  std::vector<int> hist(3, 0);
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    ++hist[r.below(3)];
  }
  CHECK(std::abs(sum / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
  for (int k = 0; k < 3; ++k) CHECK(std::abs(hist[k] / double(n) - 1.0 / 3) < 4 * std::sqrt(2.0 / 9 / n));
}

TEST_CASE("bernoulli thresholds are exact at the ends") {
  CHECK(bernoulli_threshold(0.0) == 0);
  CHECK(bernoulli_threshold(1.0) == (std::uint64_t{1} << 32));
  CHECK(bernoulli_threshold(0.5) == (std::uint64_t{1} << 31));
  RandomStream r(5, 5);
  int hits = 0;
  const auto thr = bernoulli_threshold(0.3);
  for (int i = 0; i < 100000; ++i) hits += r.next_u32() < thr;
  CHECK(std::abs(hits / 1e5 - 0.3) < 4 * std::sqrt(0.21 / 1e5));
}

TEST_CASE("keyed draws are pure functions of their key") {
  CHECK(keyed_u32(1, 2, 3, 4) == keyed_u32(1, 2, 3, 4));
  CHECK(keyed_u32(1, 2, 3, 4) != keyed_u32(1, 2, 4, 3));
  CHECK(keyed_u32(1, 2, 3, 4) != keyed_u32(1, 3, 3, 4));
}
