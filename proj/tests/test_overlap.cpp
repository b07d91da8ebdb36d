// Overlap tests: square-symmetry transforms, FFT cross-correlation against a
// direct nested-loop oracle, and the maximal-overlap search.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>
#include <vector>

#include "cubes/ensemble.hpp"
#include "cubes/grid_image.hpp"
#include "cubes/overlap.hpp"
#include "cubes/rng.hpp"

namespace {

using cubes::CellCoord;
using cubes::Rng;
using cubes::ovl::CorrelationPeak;
using cubes::ovl::OverlapResult;
using cubes::ovl::TransformId;
using cubes::sim::Ensemble;
using cubes::sim::GridImage;
using cubes::sim::random_connected_ensemble;
using cubes::sim::render_images;

GridImage blank(int side) {
  GridImage img;
  img.side = side;
  img.binary.assign(size_t(side) * side, 0);
  img.index.assign(size_t(side) * side, -1);
  return img;
}

long long brute_corr(const GridImage& a, const GridImage& b, int dx, int dy) {
  long long sum = 0;
  for (int y = 0; y < a.side; ++y)
    for (int x = 0; x < a.side; ++x) {
      int bx = x + dx, by = y + dy;
      if (bx < 0 || by < 0 || bx >= b.side || by >= b.side) continue;
      sum += (long long)a.bin(x, y) * b.bin(bx, by);
    }
  return sum;
}

CorrelationPeak brute_peak(const GridImage& a, const GridImage& b) {
  CorrelationPeak best{-1, {0, 0}};
  for (int dx = -(a.side - 1); dx <= a.side - 1; ++dx)
    for (int dy = -(a.side - 1); dy <= a.side - 1; ++dy) {
      long long v = brute_corr(a, b, dx, dy);
      if (v > best.value) best = {v, {dx, dy}};
    }
  return best;
}

OverlapResult brute_overlap(const GridImage& cur, const GridImage& tgt) {
  OverlapResult best;
  best.value = -1;
  for (int id = 0; id < 8; ++id) {
    TransformId t = TransformId::from_id(id);
    CorrelationPeak p = brute_peak(cubes::ovl::apply_transform(cur, t), tgt);
    if (int(p.value) > best.value) best = {int(p.value), t, p.shift};
  }
  return best;
}

}  // namespace

TEST_CASE("transform ids round-trip and compose as expected") {
  for (int id = 0; id < 8; ++id) CHECK(TransformId::from_id(id).id() == id);

  GridImage img = blank(3);
  img.bin(0, 1) = 1;
  // mirror first: (0,1) -> (2,1); then one CCW rotation: -> (1,2)
  GridImage t = cubes::ovl::apply_transform(img, {1, true});
  CHECK(t.bin(1, 2) == 1);
  int ones = 0;
  for (uint8_t b : t.binary) ones += b;
  CHECK(ones == 1);

  // pure rotations compose; a mirror applied twice is the identity
  GridImage r1 = cubes::ovl::apply_transform(img, {1, false});
  GridImage r2 = cubes::ovl::apply_transform(r1, {1, false});
  CHECK(r2.binary == cubes::ovl::apply_transform(img, {2, false}).binary);
  GridImage m = cubes::ovl::apply_transform(img, {0, true});
  CHECK(cubes::ovl::apply_transform(m, {0, true}).binary == img.binary);
}

TEST_CASE("cross-correlation: identity, shift, and tie-breaking") {
  GridImage a = blank(6), b = blank(6);
  a.bin(1, 1) = 1;
  b.bin(3, 2) = 1;
  CorrelationPeak p = cubes::ovl::cross_correlate_peak(a, b);
  CHECK(p.value == 1);
  CHECK(p.shift == CellCoord{2, 1});

  GridImage self = blank(6);
  self.bin(1, 1) = self.bin(2, 1) = self.bin(2, 2) = 1;
  CorrelationPeak ps = cubes::ovl::cross_correlate_peak(self, self);
  CHECK(ps.value == 3);
  CHECK(ps.shift == CellCoord{0, 0});

  // two equal peaks resolve to the lexicographically smaller shift
  GridImage one = blank(6), two = blank(6);
  one.bin(2, 2) = 1;
  two.bin(1, 1) = two.bin(3, 3) = 1;
  CorrelationPeak pt = cubes::ovl::cross_correlate_peak(one, two);
  CHECK(pt.value == 1);
  CHECK(pt.shift == CellCoord{-1, -1});

  GridImage small = blank(5);
  CHECK_THROWS_AS(cubes::ovl::cross_correlate_peak(a, small), std::invalid_argument);
}

TEST_CASE("fft correlation equals the nested-loop oracle on random pairs") {
  Rng rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    GridImage a = render_images(random_connected_ensemble(9, rng), 19);
    GridImage b = render_images(random_connected_ensemble(9, rng), 19);
    CorrelationPeak fast = cubes::ovl::cross_correlate_peak(a, b);
    CorrelationPeak slow = brute_peak(a, b);
    CHECK(fast.value == slow.value);
    CHECK(fast.shift == slow.shift);
  }
}

TEST_CASE("overlap equals the brute-force search and respects bounds") {
  Rng rng(29);
  for (int trial = 0; trial < 60; ++trial) {
    GridImage cur = render_images(random_connected_ensemble(9, rng), 19);
    GridImage tgt = render_images(random_connected_ensemble(9, rng), 19);
    OverlapResult fast = cubes::ovl::overlap(cur, tgt);
    OverlapResult slow = brute_overlap(cur, tgt);
    CHECK(fast.value == slow.value);
    CHECK(fast.best_transform.id() == slow.best_transform.id());
    CHECK(fast.best_shift == slow.best_shift);
    CHECK(fast.value >= 1);
    CHECK(fast.value <= 9);
  }
}

TEST_CASE("every transform of a shape overlaps it perfectly") {
  // an asymmetric 9-omino, so all eight transforms are distinct images
  Ensemble shape = Ensemble::from_cells(
      {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}, {0, 1}, {0, 2}, {1, 2}, {2, 1}});
  GridImage tgt = render_images(shape, 19);
  for (int id = 0; id < 8; ++id) {
    GridImage cur = cubes::ovl::apply_transform(tgt, TransformId::from_id(id));
    OverlapResult res = cubes::ovl::overlap(cur, tgt);
    CHECK(res.value == 9);
  }
}
