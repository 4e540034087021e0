#include <catch2/catch_amalgamated.hpp>

#include "pheno/civil_time.hpp"
#include "pheno/rng.hpp"

using namespace pheno;

TEST_CASE("rng: identical seed gives identical stream") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: forked streams differ from parent and each other") {
  Rng base(7);
  Rng f1 = base.fork(1), f2 = base.fork(2);
  REQUIRE(f1.next_u64() != f2.next_u64());
  Rng f1b = Rng(7).fork(1);
  REQUIRE(Rng(7).fork(1).next_u64() == f1b.next_u64());
}

TEST_CASE("rng: uniform range and normal moments") {
  Rng r(42);
  double sum = 0, sum2 = 0;
  for (int i = 0; i < 20000; ++i) {
    double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    double z = r.normal();
    sum += z;
    sum2 += z * z;
  }
  double mean = sum / 20000, var = sum2 / 20000 - mean * mean;
  REQUIRE(std::fabs(mean) < 0.03);
  REQUIRE(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("rng: shuffle is a permutation") {
  Rng r(9);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  auto orig = v;
  r.shuffle(v);
  std::sort(v.begin(), v.end());
  REQUIRE(v == orig);
}

TEST_CASE("derive_seed mixes coordinates") {
  REQUIRE(derive_seed(1, 2, 3, 0) != derive_seed(1, 3, 2, 0));
  REQUIRE(derive_seed(1, 2, 3, 0) != derive_seed(2, 2, 3, 0));
  REQUIRE(derive_seed(1, 2, 3, 1) != derive_seed(1, 2, 3, 0));
}

TEST_CASE("date: parse and format round trip") {
  auto d = Date::parse("2024-01-08");
  REQUIRE(d);
  REQUIRE(d->str() == "2024-01-08");
  REQUIRE_FALSE(Date::parse("2024-13-01"));
  REQUIRE_FALSE(Date::parse("garbage"));
  auto d2 = Date::parse("2024-01-09");
  REQUIRE(d2->days - d->days == 1);
}

TEST_CASE("timestamp: RFC 3339 parsing with offsets") {
  auto t = Timestamp::parse("2024-01-08T13:04:05+01:00");
  REQUIRE(t);
  REQUIRE(t->offset_s == 3600);
  REQUIRE(t->local_time_of_day() == 13 * 3600 + 4 * 60 + 5);
  REQUIRE(t->local_date().str() == "2024-01-08");
  REQUIRE(t->str() == "2024-01-08T13:04:05+01:00");

  auto z = Timestamp::parse("2024-01-08T23:30:00Z");
  REQUIRE(z);
  REQUIRE(z->offset_s == 0);

  // Same instant, different offsets: UTC epoch must agree.
  auto utc = Timestamp::parse("2024-01-08T12:00:00Z");
  auto plus1 = Timestamp::parse("2024-01-08T13:00:00+01:00");
  REQUIRE(utc->epoch_s == plus1->epoch_s);

  // A late-evening local time with a negative offset crosses the date line.
  auto neg = Timestamp::parse("2024-01-08T23:30:00-05:00");
  REQUIRE(neg->local_date().str() == "2024-01-08");
  REQUIRE(neg->epoch_s == Timestamp::parse("2024-01-09T04:30:00Z")->epoch_s);

  REQUIRE_FALSE(Timestamp::parse("2024-01-08 13:04:05"));
  REQUIRE_FALSE(Timestamp::parse("2024-01-08T25:00:00Z"));
  REQUIRE_FALSE(Timestamp::parse("2024-01-08T12:00:00"));
}

TEST_CASE("timestamp: fractional seconds accepted and truncated") {
  auto t = Timestamp::parse("2024-01-08T01:02:03.789Z");
  REQUIRE(t);
  REQUIRE(t->local_time_of_day() == 3723);
}
