#include "doctest.h"

#include <cmath>
#include <cstring>
#include <sstream>

#include "langseg/tensor.hpp"

using namespace langseg;

TEST_CASE("construction and shape accounting") {
  Tensor t({2, 3});
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

  Tensor u({2, 2}, {1, 2, 3, 4});
  CHECK(u.at(0, 1) == 2.0);
  CHECK(u.at(1, 0) == 3.0);

  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
}

TEST_CASE("row-major indexing for rank 3 and 4") {
  Tensor t({2, 3, 4});
  t.at(1, 2, 3) = 7.0;
  CHECK(t[1 * 12 + 2 * 4 + 3] == 7.0);

  Tensor q({2, 2, 2, 2});
  q.at(1, 0, 1, 0) = 5.0;
  CHECK(q[8 + 0 + 2 + 0] == 5.0);
}

TEST_CASE("scalar item") {
  CHECK(Tensor::scalar(3.5).item() == 3.5);
  CHECK_THROWS_AS(Tensor({2}).item(), ShapeError);
}

TEST_CASE("all_finite") {
  Tensor t({2}, {1.0, 2.0});
  CHECK(t.all_finite());
  t[1] = std::nan("");
  CHECK_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("uniform fill is deterministic per seed") {
  SplitMix64 a(42), b(42), c(43);
  Tensor ta = Tensor::uniform({16}, -1.0, 1.0, a);
  Tensor tb = Tensor::uniform({16}, -1.0, 1.0, b);
  Tensor tc = Tensor::uniform({16}, -1.0, 1.0, c);
  CHECK(ta == tb);
  CHECK_FALSE(ta == tc);
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i] >= -1.0);
    CHECK(ta[i] < 1.0);
  }
}

TEST_CASE("tnsr roundtrip is bitwise") {
  SplitMix64 rng(7);
  Tensor t = Tensor::uniform({3, 5, 2}, -10.0, 10.0, rng);
  t[0] = -0.0;  // signed zero must survive
  std::stringstream buf;
  write_tnsr(buf, t);
  Tensor back = read_tnsr(buf);
  CHECK(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(std::memcmp(&back[i], &t[i], sizeof(double)) == 0);
  }
}

TEST_CASE("tnsr header format") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  std::stringstream buf;
  write_tnsr(buf, t);
  std::string header;
  std::getline(buf, header);
  CHECK(header == "TNSR v1 2 2 3");
}

TEST_CASE("tnsr rejects corrupt input") {
  std::stringstream bad1("BLOB v1 1 3\n");
  CHECK_THROWS_AS(read_tnsr(bad1), IoError);
  std::stringstream bad2("TNSR v1 1 4\nxy");  // truncated payload
  CHECK_THROWS_AS(read_tnsr(bad2), IoError);
}
