// Network tests: the rotation-averaged kernel basis, sparse-engine forwards
// against a dense full-canvas reference, square-symmetry properties of the
// outputs, finite-difference gradient checks, and checkpoint round trips.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "cubes/ensemble.hpp"
#include "cubes/grid_image.hpp"
#include "cubes/net.hpp"
#include "cubes/reynolds.hpp"
#include "cubes/rng.hpp"
#include "dense_reference.hpp"

namespace {

using cubes::CellCoord;
using cubes::Rng;
using cubes::net::Activation;
using cubes::net::Arch;
using cubes::net::ForwardTrace;
using cubes::net::NetConfig;
using cubes::net::NetD;
using cubes::net::NetF;
using cubes::net::SparseObs;
using cubes::sim::Ensemble;
using cubes::sim::GridImage;

NetConfig make_cfg(Arch arch, int k, std::vector<int> widths,
                   Activation act = Activation::ReLU) {
  NetConfig cfg;
  cfg.arch = arch;
  cfg.k = k;
  cfg.widths = std::move(widths);
  cfg.activation = act;
  cfg.n_cubes = 9;
  cfg.canvas_side = 19;
  cfg.max_steps = 300;
  cfg.shape_name = "line";
  return cfg;
}

GridImage random_image(int n, int side, Rng& rng) {
  Ensemble e = cubes::sim::random_connected_ensemble(n, rng);
  return cubes::sim::render_images(e, side);
}

int cube_count(const GridImage& img) {
  int n = 0;
  for (int32_t v : img.index) n = std::max(n, v + 1);
  return n;
}

// ---------------------------------------------------------------------------
// dense full-canvas forward, assembled purely from exported parameters

struct DenseOut {
  std::vector<double> logits;
  double value = 0.0;
};

DenseOut dense_forward(const NetD& net, const GridImage& img) {
  namespace dr = dense_ref;
  const NetConfig& cfg = net.config();
  const int convs = cfg.conv_layers();
  const bool relu = cfg.activation == Activation::ReLU;
  const bool dual = cfg.arch == Arch::MirrorRot;

  dr::Field fx = dr::ones_input(img), fy;
  for (int i = 0; i <= convs; ++i) {  // convs, then the pointwise mix at i == convs
    const int cout = cfg.widths[size_t(i) + 1];
    const Eigen::VectorXd bias = net.layer_bias(i);
    auto K0 = net.dense_kernels(i, 0);
    if (!dual) {
      fx = dr::conv(fx, K0, cout);
      dr::finish(fx, 1.0, bias, img, relu);
    } else if (i == 0) {
      dr::Field nx = dr::conv(fx, K0, cout);
      dr::Field ny = dr::conv(fx, dr::mirrored(K0), cout);
      dr::finish(nx, 1.0, bias, img, relu);
      dr::finish(ny, 1.0, bias, img, relu);
      fx = std::move(nx);
      fy = std::move(ny);
    } else {
      auto K1 = net.dense_kernels(i, 1);
      dr::Field nx = dr::add(dr::conv(fx, K0, cout), dr::conv(fy, K1, cout));
      dr::Field ny = dr::add(dr::conv(fx, dr::mirrored(K1), cout),
                             dr::conv(fy, dr::mirrored(K0), cout));
      dr::finish(nx, 0.5, bias, img, relu);
      dr::finish(ny, 0.5, bias, img, relu);
      fx = std::move(nx);
      fy = std::move(ny);
    }
  }

  const int n = cube_count(img);
  DenseOut out;
  if (!dual) {
    out.logits = dr::logits_single(fx, img, net.head_param("action.w"),
                                   net.head_param("action.b"), n);
    out.value = dr::value_readout(fx, img, net.head_param("value.w"),
                                  net.head_param("value.b")[0]);
  } else {
    out.logits = dr::logits_dual(fx, fy, img, net.head_param("action.r0"),
                                 net.head_param("action.r1"),
                                 net.head_param("action.b")[0], n);
    dr::Field avg = fx;
    for (size_t c = 0; c < avg.size(); ++c) avg[c] = 0.5 * (fx[c] + fy[c]);
    out.value = dr::value_readout(avg, img, net.head_param("value.w"),
                                  net.head_param("value.b")[0]);
  }
  return out;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

}  // namespace

TEST_CASE("kernel maps: rotation and mirror act on indices as documented") {
  Eigen::MatrixXd K(3, 3);
  K << 0, 1, 2, 3, 4, 5, 6, 7, 8;  // K(ky, kx) = 3*ky + kx
  Eigen::MatrixXd R = cubes::net::rotate_kernel_ccw(K);
  for (int ky = 0; ky < 3; ++ky)
    for (int kx = 0; kx < 3; ++kx) CHECK(R(kx, 2 - ky) == K(ky, kx));
  Eigen::MatrixXd M = cubes::net::mirror_kernel_h(K);
  for (int ky = 0; ky < 3; ++ky)
    for (int kx = 0; kx < 3; ++kx) CHECK(M(ky, 2 - kx) == K(ky, kx));

  Eigen::MatrixXd four = cubes::net::rotate_kernel_ccw(
      cubes::net::rotate_kernel_ccw(cubes::net::rotate_kernel_ccw(R)));
  CHECK((four - K).cwiseAbs().maxCoeff() == 0.0);
  CHECK((cubes::net::mirror_kernel_h(M) - K).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rotation-averaged basis: orbit counts, orthonormality, invariance") {
  for (int k : {1, 3, 5, 7}) {
    auto basis = cubes::net::reynolds_basis(k);
    const int expect = (k * k - 1) / 4 + 1;
    CHECK(int(basis.basis.size()) == expect);
    if (k == 3) CHECK(basis.basis.size() == 3);
    if (k == 5) CHECK(basis.basis.size() == 7);
    for (size_t a = 0; a < basis.basis.size(); ++a) {
      // each element is itself rotation-invariant
      Eigen::MatrixXd r = cubes::net::rotate_kernel_ccw(basis.basis[a]);
      CHECK((r - basis.basis[a]).cwiseAbs().maxCoeff() <= 1e-12);
      for (size_t b = 0; b < basis.basis.size(); ++b) {
        double dot = flatten(basis.basis[a]).dot(flatten(basis.basis[b]));
        CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("reynolds operator: idempotent projector fixing the basis") {
  for (int k : {3, 5}) {
    Eigen::MatrixXd R = cubes::net::reynolds_operator(k);
    CHECK((R * R - R).cwiseAbs().maxCoeff() <= 1e-12);
    auto basis = cubes::net::reynolds_basis(k);
    for (const auto& B : basis.basis) {
      Eigen::VectorXd v = flatten(B);
      CHECK((R * v - v).cwiseAbs().maxCoeff() <= 1e-12);
    }
    // projecting an arbitrary kernel yields a rotation-invariant kernel
    Rng rng(99);
    Eigen::MatrixXd K(k, k);
    for (int i = 0; i < k * k; ++i) K(i / k, i % k) = rng.uniform() * 2 - 1;
    Eigen::VectorXd pv = R * flatten(K);
    Eigen::MatrixXd P = Eigen::Map<Eigen::MatrixXd>(pv.data(), k, k);
    CHECK((cubes::net::rotate_kernel_ccw(P) - P).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("built kernels are rotation-invariant; 3x3 ones are mirror-symmetric too") {
  Rng rng(4242);
  for (int k : {3, 5}) {
    auto basis = cubes::net::reynolds_basis(k);
    std::vector<double> coeffs(basis.basis.size());
    for (double& c : coeffs) c = rng.uniform() * 2 - 1;
    Eigen::MatrixXd W = cubes::net::build_kernel(coeffs, basis);
    CHECK((cubes::net::rotate_kernel_ccw(W) - W).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::MatrixXd R = cubes::net::reynolds_operator(k);
    Eigen::VectorXd v = flatten(W);
    CHECK((R * v - v).cwiseAbs().maxCoeff() <= 1e-12);

    Eigen::MatrixXd M = cubes::net::mirror_kernel_h(W);
    double mdiff = (M - W).cwiseAbs().maxCoeff();
    if (k == 3) {
      // every rotation-invariant 3x3 kernel is mirror-symmetric: the two
      // streams of a mirror-alternating net would coincide
      CHECK(mdiff <= 1e-12);
    } else {
      CHECK(mdiff > 1e-6);  // k = 5 orbits can tell left from right
    }
  }
}

TEST_CASE("net config validation") {
  CHECK_THROWS_AS(NetF(make_cfg(Arch::RotInv, 4, {1, 8, 8}), 1), std::invalid_argument);
  CHECK_THROWS_AS(NetF(make_cfg(Arch::RotInv, 3, {2, 8, 8}), 1), std::invalid_argument);
  CHECK_THROWS_AS(NetF(make_cfg(Arch::RotInv, 3, {1, 8}), 1), std::invalid_argument);
  // mirror-alternating streams need 5x5 kernels; with 3x3 they degenerate
  CHECK_THROWS_AS(NetF(make_cfg(Arch::MirrorRot, 3, {1, 8, 8}), 1), std::invalid_argument);
  CHECK_NOTHROW(NetF(make_cfg(Arch::MirrorRot, 5, {1, 8, 8}), 1));
}

TEST_CASE("standard widths and parameter accounting") {
  CHECK(cubes::net::standard_widths(1) == std::vector<int>{1, 8192, 32});
  CHECK(cubes::net::standard_widths(2) == std::vector<int>{1, 64, 512, 32});
  CHECK(cubes::net::standard_widths(3) == std::vector<int>{1, 64, 256, 128, 32});
  CHECK(cubes::net::standard_widths(4) == std::vector<int>{1, 64, 128, 128, 64, 32});
  CHECK_THROWS_AS(cubes::net::standard_widths(5), std::invalid_argument);

  {
    NetF net(make_cfg(Arch::RotInv, 3, {1, 64, 32}), 7);
    // conv: 3 basis coefficients per (in,out) pair + bias; mix; two heads
    size_t expect = (3 * 1 * 64 + 64) + (64 * 32 + 32) + (32 * 2 + 2) + (32 + 1);
    CHECK(net.param_count() == expect);
    size_t total = 0;
    for (const auto& d : net.describe()) total += d.params;
    CHECK(total == expect);
  }
  {
    NetF net(make_cfg(Arch::MirrorRot, 5, {1, 64, 512, 32}), 7);
    size_t expect = (7 * 1 * 64 + 64) + (2 * 7 * 64 * 512 + 512) +
                    (2 * 512 * 32 + 32) + (2 * 32 + 1) + (32 + 1);
    CHECK(net.param_count() == expect);
  }
  {
    NetF net(make_cfg(Arch::Reference, 3, {1, 8192, 32}), 7);
    size_t expect = (9 * 1 * 8192 + 8192) + (8192 * 32 + 32) + (32 * 2 + 2) + (32 + 1);
    CHECK(net.param_count() == expect);
  }
}

TEST_CASE("sparse observation: neighbour table matches the index image") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 3 + int(rng.bounded(7));
    GridImage img = random_image(n, 15, rng);
    for (int k : {3, 5}) {
      SparseObs obs = cubes::net::build_sparse_obs(img, k);
      CHECK(obs.n == n);
      const int r = (k - 1) / 2;
      for (int i = 0; i < n; ++i) {
        CellCoord c = obs.cells[size_t(i)];
        CHECK(img.idx(c.x, c.y) == i);
        for (int o = 0; o < k * k; ++o) {
          int qx = c.x + o % k - r, qy = c.y + o / k - r;
          int32_t expect = -1;
          if (qx >= 0 && qy >= 0 && qx < img.side && qy < img.side)
            expect = img.idx(qx, qy);
          CHECK(obs.nbr[size_t(o) * n + i] == expect);
        }
      }
    }
  }
  // a mask bit without a matching index entry violates the contract
  GridImage bad = random_image(5, 11, rng);
  for (size_t i = 0; i < bad.index.size(); ++i)
    if (bad.index[i] == 2) bad.index[i] = -1;
  CHECK_THROWS_AS(cubes::net::build_sparse_obs(bad, 3), std::invalid_argument);
}

TEST_CASE("sparse engine equals the dense full-canvas composition") {
  struct Case {
    Arch arch;
    int k;
    std::vector<int> widths;
  };
  const Case cases[] = {
      {Arch::Reference, 3, {1, 6, 5}},
      {Arch::Reference, 3, {1, 4, 6, 5}},
      {Arch::RotInv, 3, {1, 6, 5}},
      {Arch::RotInv, 5, {1, 4, 6, 5}},
      {Arch::MirrorRot, 5, {1, 6, 5}},
      {Arch::MirrorRot, 5, {1, 4, 6, 5}},
  };
  Rng rng(777);
  for (const Case& c : cases) {
    for (auto act : {Activation::ReLU, Activation::Identity}) {
      NetD net(make_cfg(c.arch, c.k, c.widths, act), rng.next_u64());
      for (int trial = 0; trial < 4; ++trial) {
        int n = 4 + int(rng.bounded(6));
        GridImage img = random_image(n, 15, rng);
        SparseObs obs = cubes::net::build_sparse_obs(img, c.k);
        std::vector<double> logits;
        double value = 0.0;
        net.forward_one(obs, logits, value);

        DenseOut ref = dense_forward(net, img);
        REQUIRE(logits.size() == ref.logits.size());
        for (size_t i = 0; i < logits.size(); ++i)
          CHECK(std::abs(logits[i] - ref.logits[i]) <= 1e-11);
        CHECK(std::abs(value - ref.value) <= 1e-11);
      }
    }
  }
}

TEST_CASE("batched forward equals per-sample forward") {
  Rng rng(555);
  NetD net(make_cfg(Arch::MirrorRot, 5, {1, 5, 6, 4}), 9);
  std::vector<GridImage> imgs;
  std::vector<SparseObs> obs;
  for (int s = 0; s < 5; ++s) {
    imgs.push_back(random_image(3 + int(rng.bounded(7)), 15, rng));
    obs.push_back(cubes::net::build_sparse_obs(imgs.back(), 5));
  }
  std::vector<const SparseObs*> batch;
  for (const auto& o : obs) batch.push_back(&o);
  ForwardTrace<double> trace;
  net.forward(batch, trace);
  for (size_t s = 0; s < obs.size(); ++s) {
    std::vector<double> logits;
    double value = 0.0;
    net.forward_one(obs[s], logits, value);
    REQUIRE(trace.logits[s].size() == logits.size());
    for (size_t i = 0; i < logits.size(); ++i)
      CHECK(trace.logits[s][i] == doctest::Approx(logits[i]).epsilon(1e-14));
    CHECK(trace.values[s] == doctest::Approx(value).epsilon(1e-14));
  }
}

TEST_CASE("all-zero parameters give all-zero outputs") {
  NetD net(make_cfg(Arch::MirrorRot, 5, {1, 5, 4}), 3);
  std::fill(net.params().begin(), net.params().end(), 0.0);
  Rng rng(8);
  GridImage img = random_image(6, 13, rng);
  std::vector<double> logits;
  double value = 1.0;
  net.forward_one(cubes::net::build_sparse_obs(img, 5), logits, value);
  for (double l : logits) CHECK(l == 0.0);
  CHECK(value == 0.0);
}

TEST_CASE("invariant nets: rotating the canvas leaves logits and value unchanged") {
  Rng rng(2026);
  struct Case {
    Arch arch;
    int k;
    std::vector<int> widths;
  };
  const Case cases[] = {
      {Arch::RotInv, 3, {1, 16, 8}},
      {Arch::RotInv, 5, {1, 12, 8}},
      {Arch::MirrorRot, 5, {1, 12, 10, 8}},
  };
  for (const Case& c : cases) {
    NetF net(make_cfg(c.arch, c.k, c.widths), 17);
    for (int trial = 0; trial < 30; ++trial) {
      int n = 4 + int(rng.bounded(6));
      GridImage img = random_image(n, 15, rng);
      std::vector<float> base;
      float vbase = 0;
      net.forward_one(cubes::net::build_sparse_obs(img, c.k), base, vbase);

      GridImage rot = img;
      for (int r = 1; r <= 3; ++r) {
        rot = cubes::sim::rotate90_ccw(rot);
        std::vector<float> got;
        float vgot = 0;
        net.forward_one(cubes::net::build_sparse_obs(rot, c.k), got, vgot);
        REQUIRE(got.size() == base.size());
        for (size_t i = 0; i < got.size(); ++i)
          CHECK(std::abs(got[i] - base[i]) <= 1e-5f);
        CHECK(std::abs(vgot - vbase) <= 1e-5f);
      }
    }
  }
  // sanity: a free-kernel net is NOT rotation-invariant, so the check bites
  NetF freenet(make_cfg(Arch::Reference, 3, {1, 16, 8}), 17);
  float worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    GridImage img = random_image(7, 15, rng);
    std::vector<float> a, b;
    float va = 0, vb = 0;
    freenet.forward_one(cubes::net::build_sparse_obs(img, 3), a, va);
    freenet.forward_one(cubes::net::build_sparse_obs(cubes::sim::rotate90_ccw(img), 3), b, vb);
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  CHECK(worst > 1e-4f);
}

TEST_CASE("mirror-alternating net: mirroring swaps the two logits per cube") {
  Rng rng(909);
  NetF net(make_cfg(Arch::MirrorRot, 5, {1, 12, 10, 8}), 23);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 4 + int(rng.bounded(6));
    GridImage img = random_image(n, 15, rng);
    std::vector<float> base;
    float vbase = 0;
    net.forward_one(cubes::net::build_sparse_obs(img, 5), base, vbase);

    // all eight square symmetries: mirrored ones swap CW/CCW, none move value
    for (int t = 0; t < 8; ++t) {
      GridImage g = img;
      if (t >= 4) g = cubes::sim::mirror_horizontal(g);
      for (int r = 0; r < t % 4; ++r) g = cubes::sim::rotate90_ccw(g);
      std::vector<float> got;
      float vgot = 0;
      net.forward_one(cubes::net::build_sparse_obs(g, 5), got, vgot);
      REQUIRE(got.size() == base.size());
      const bool swapped = t >= 4;
      for (int i = 0; i < n; ++i) {
        float e0 = swapped ? base[size_t(2 * i) + 1] : base[size_t(2 * i)];
        float e1 = swapped ? base[size_t(2 * i)] : base[size_t(2 * i) + 1];
        CHECK(std::abs(got[size_t(2 * i)] - e0) <= 1e-5f);
        CHECK(std::abs(got[size_t(2 * i) + 1] - e1) <= 1e-5f);
      }
      CHECK(std::abs(vgot - vbase) <= 1e-5f);
    }
  }
  // the single-stream invariant net is mirror-symmetric only for k = 3;
  // with free kernels even that fails
  NetF rot3(make_cfg(Arch::RotInv, 3, {1, 16, 8}), 23);
  GridImage img = random_image(7, 15, rng);
  std::vector<float> a, b;
  float va = 0, vb = 0;
  rot3.forward_one(cubes::net::build_sparse_obs(img, 3), a, va);
  rot3.forward_one(cubes::net::build_sparse_obs(cubes::sim::mirror_horizontal(img), 3), b, vb);
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-5f);
}

TEST_CASE("finite differences confirm the analytic gradients") {
  struct Case {
    Arch arch;
    int k;
    std::vector<int> widths;
    Activation act;
  };
  const Case cases[] = {
      {Arch::Reference, 3, {1, 3, 4}, Activation::ReLU},
      {Arch::RotInv, 3, {1, 3, 4}, Activation::ReLU},
      {Arch::RotInv, 5, {1, 2, 3}, Activation::ReLU},
      {Arch::MirrorRot, 5, {1, 3, 4}, Activation::ReLU},
      {Arch::MirrorRot, 5, {1, 2, 3, 4}, Activation::ReLU},
      {Arch::MirrorRot, 5, {1, 2, 3, 4}, Activation::Identity},
  };
  Rng rng(616);
  std::vector<GridImage> imgs;
  std::vector<SparseObs> obs3, obs5;
  for (int s = 0; s < 2; ++s) {
    imgs.push_back(random_image(s == 0 ? 5 : 7, 13, rng));
    obs3.push_back(cubes::net::build_sparse_obs(imgs.back(), 3));
    obs5.push_back(cubes::net::build_sparse_obs(imgs.back(), 5));
  }

  for (const Case& c : cases) {
    const int arch_id = int(c.arch);
    const int n_widths = int(c.widths.size());
    CAPTURE(arch_id);
    CAPTURE(n_widths);
    NetD net(make_cfg(c.arch, c.k, c.widths, c.act), 41);
    // evaluate at a generic point: zero-initialized biases leave dead input
    // columns sitting exactly on the ReLU kink, where the one-sided gate and
    // the two-sided difference quotient legitimately disagree
    for (double& p : net.params()) p = rng.uniform() - 0.5;
    std::vector<const SparseObs*> batch;
    for (const auto& o : (c.k == 3 ? obs3 : obs5)) batch.push_back(&o);

    // random linear objective over every logit and both values
    std::vector<std::vector<double>> dlog(batch.size());
    std::vector<double> dval(batch.size());
    for (size_t s = 0; s < batch.size(); ++s) {
      dlog[s].resize(size_t(2 * batch[s]->n));
      for (double& v : dlog[s]) v = rng.uniform() * 2 - 1;
      dval[s] = rng.uniform() * 2 - 1;
    }
    auto objective = [&]() {
      ForwardTrace<double> t;
      net.forward(batch, t);
      double J = 0;
      for (size_t s = 0; s < batch.size(); ++s) {
        for (size_t i = 0; i < dlog[s].size(); ++i) J += dlog[s][i] * t.logits[s][i];
        J += dval[s] * t.values[s];
      }
      return J;
    };

    net.zero_grads();
    {
      ForwardTrace<double> t;
      net.forward(batch, t);
      net.backward(t, dlog, dval);
    }
    const auto analytic = net.grads();

    double worst = 0;
    for (size_t p = 0; p < net.param_count(); ++p) {
      const double keep = net.params()[p];
      const double eps = 1e-6 * std::max(1.0, std::abs(keep));
      net.params()[p] = keep + eps;
      const double plus = objective();
      net.params()[p] = keep - eps;
      const double minus = objective();
      net.params()[p] = keep;
      const double fd = (plus - minus) / (2 * eps);
      const double rel = std::abs(fd - analytic[p]) /
                         std::max(1e-8, std::abs(fd) + std::abs(analytic[p]));
      worst = std::max(worst, rel);
    }
    CHECK(worst <= 1e-4);

    // a second backward accumulates instead of overwriting
    {
      ForwardTrace<double> t;
      net.forward(batch, t);
      net.backward(t, dlog, dval);
    }
    for (size_t p = 0; p < net.param_count(); ++p)
      CHECK(net.grads()[p] == doctest::Approx(2 * analytic[p]).epsilon(1e-9));
  }
}

TEST_CASE("checkpoints: bit-exact float round trip, stable bytes, validation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cubes_net_test";
  fs::create_directories(dir);

  NetConfig cfg = make_cfg(Arch::MirrorRot, 5, {1, 6, 5, 4});
  cfg.shape_name = "table";
  cfg.n_cubes = 9;
  NetF net(cfg, 20250);
  const fs::path p1 = dir / "a.ckpt", p2 = dir / "b.ckpt";
  net.save(p1.string());

  NetF back = NetF::load_file(p1.string());
  CHECK(back.config().arch == cfg.arch);
  CHECK(back.config().k == cfg.k);
  CHECK(back.config().widths == cfg.widths);
  CHECK(back.config().shape_name == "table");
  CHECK(back.config().n_cubes == 9);
  REQUIRE(back.param_count() == net.param_count());
  for (size_t i = 0; i < net.param_count(); ++i)
    CHECK(back.params()[i] == net.params()[i]);

  back.save(p2.string());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  CHECK(slurp(p1) == slurp(p2));

  // same outputs after the round trip
  Rng rng(5);
  GridImage img = random_image(7, 15, rng);
  SparseObs obs = cubes::net::build_sparse_obs(img, 5);
  std::vector<float> la, lb;
  float va = 0, vb = 0;
  net.forward_one(obs, la, va);
  back.forward_one(obs, lb, vb);
  for (size_t i = 0; i < la.size(); ++i) CHECK(la[i] == lb[i]);
  CHECK(va == vb);

  // a double-precision net survives through the float32 payload
  NetD netd(make_cfg(Arch::RotInv, 3, {1, 5, 4}), 77);
  const fs::path p3 = dir / "c.ckpt";
  netd.save(p3.string());
  NetD backd = NetD::load_file(p3.string());
  for (size_t i = 0; i < netd.param_count(); ++i)
    CHECK(backd.params()[i] == double(float(netd.params()[i])));

  // corrupt inputs are rejected
  std::string bytes = slurp(p1);
  {
    std::string bad = bytes;
    bad[0] = 'X';
    const fs::path pb = dir / "bad_magic.ckpt";
    std::ofstream(pb, std::ios::binary).write(bad.data(), std::streamsize(bad.size()));
    CHECK_THROWS_AS(NetF::load_file(pb.string()), std::runtime_error);
  }
  {
    std::string bad = bytes.substr(0, bytes.size() / 2);
    const fs::path pb = dir / "truncated.ckpt";
    std::ofstream(pb, std::ios::binary).write(bad.data(), std::streamsize(bad.size()));
    CHECK_THROWS_AS(NetF::load_file(pb.string()), std::runtime_error);
  }
  CHECK_THROWS_AS(NetF::load_file((dir / "missing.ckpt").string()), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("initialization is seed-deterministic and spread by fan-in") {
  NetF a(make_cfg(Arch::MirrorRot, 5, {1, 6, 5, 4}), 99);
  NetF b(make_cfg(Arch::MirrorRot, 5, {1, 6, 5, 4}), 99);
  NetF c(make_cfg(Arch::MirrorRot, 5, {1, 6, 5, 4}), 100);
  CHECK(a.params() == b.params());
  CHECK(a.params() != c.params());

  // biases start at zero: zero-weight invariants of the dense check above
  auto bias0 = a.layer_bias(0);
  for (Eigen::Index i = 0; i < bias0.size(); ++i) CHECK(bias0[i] == 0.0);
  CHECK(a.head_param("action.b")[0] == 0.0);
  CHECK(a.head_param("value.b")[0] == 0.0);
}
