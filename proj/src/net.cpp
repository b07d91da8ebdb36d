#include "cubes/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "cubes/shape_io.hpp"

namespace cubes::net {

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::Reference: return "reference";
    case Arch::RotInv: return "rot-inv";
    case Arch::MirrorRot: return "mirror-rot";
  }
  return "?";
}

const char* activation_name(Activation a) {
  return a == Activation::ReLU ? "relu" : "identity";
}

std::vector<int> standard_widths(int conv_layers) {
  switch (conv_layers) {
    case 1: return {1, 8192, 32};
    case 2: return {1, 64, 512, 32};
    case 3: return {1, 64, 256, 128, 32};
    case 4: return {1, 64, 128, 128, 64, 32};
    default: throw std::invalid_argument("standard_widths: conv layer count must be 1..4");
  }
}

SparseObs build_sparse_obs(const sim::GridImage& img, int k) {
  SparseObs obs;
  obs.k = k;
  int n = 0;
  for (int32_t v : img.index) n = std::max(n, v + 1);
  obs.n = n;
  obs.cells.assign(size_t(n), CellCoord{-1, -1});
  for (int y = 0; y < img.side; ++y)
    for (int x = 0; x < img.side; ++x) {
      int32_t id = img.idx(x, y);
      if (id < 0) {
        if (img.bin(x, y)) throw std::invalid_argument("sparse obs: mask/index mismatch");
        continue;
      }
      if (!img.bin(x, y) || id >= n || obs.cells[size_t(id)].x >= 0)
        throw std::invalid_argument("sparse obs: mask/index mismatch");
      obs.cells[size_t(id)] = {x, y};
    }
  for (CellCoord c : obs.cells)
    if (c.x < 0) throw std::invalid_argument("sparse obs: missing cube index");

  const int r = (k - 1) / 2;
  obs.nbr.assign(size_t(k) * k * n, -1);
  for (int o = 0; o < k * k; ++o) {
    int dy = o / k - r, dx = o % k - r;
    for (int i = 0; i < n; ++i) {
      int qx = obs.cells[size_t(i)].x + dx, qy = obs.cells[size_t(i)].y + dy;
      if (qx < 0 || qy < 0 || qx >= img.side || qy >= img.side) continue;
      obs.nbr[size_t(o) * n + i] = img.idx(qx, qy);
    }
  }
  return obs;
}

namespace {

template <typename Real>
using MatT = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using VecT = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

int mirror_offset(int o, int k, bool mirrored) {
  if (!mirrored) return o;
  return (o / k) * k + (k - 1 - o % k);
}

// out += sum_o K[m(o)] * gather_o(in), over the on-cell columns only.
template <typename Real>
void conv_fwd(const ForwardTrace<Real>& t, const std::vector<MatT<Real>>& K, int k,
              bool mirrored, const MatT<Real>& in, MatT<Real>& out) {
  if (k == 1) {
    out.noalias() += K[0] * in;
    return;
  }
  for (int o = 0; o < k * k; ++o) {
    const auto& edges = t.edges[size_t(o)];
    if (edges.empty()) continue;
    const MatT<Real>& W = K[size_t(mirror_offset(o, k, mirrored))];
    MatT<Real> src(in.rows(), Eigen::Index(edges.size()));
    for (size_t e = 0; e < edges.size(); ++e) src.col(Eigen::Index(e)) = in.col(edges[e].second);
    MatT<Real> dst(W.rows(), src.cols());
    dst.noalias() = W * src;
    for (size_t e = 0; e < edges.size(); ++e) out.col(edges[e].first) += dst.col(Eigen::Index(e));
  }
}

template <typename Real>
void conv_bwd(const ForwardTrace<Real>& t, const std::vector<MatT<Real>>& K, int k,
              bool mirrored, const MatT<Real>& in, const MatT<Real>& dout,
              std::vector<MatT<Real>>* dK, MatT<Real>* din) {
  if (k == 1) {
    if (dK) (*dK)[0].noalias() += dout * in.transpose();
    if (din) din->noalias() += K[0].transpose() * dout;
    return;
  }
  for (int o = 0; o < k * k; ++o) {
    const auto& edges = t.edges[size_t(o)];
    if (edges.empty()) continue;
    int ko = mirror_offset(o, k, mirrored);
    MatT<Real> g(dout.rows(), Eigen::Index(edges.size()));
    MatT<Real> s(in.rows(), Eigen::Index(edges.size()));
    for (size_t e = 0; e < edges.size(); ++e) {
      g.col(Eigen::Index(e)) = dout.col(edges[e].first);
      s.col(Eigen::Index(e)) = in.col(edges[e].second);
    }
    if (dK) (*dK)[size_t(ko)].noalias() += g * s.transpose();
    if (din) {
      MatT<Real> gi(in.rows(), g.cols());
      gi.noalias() = K[size_t(ko)].transpose() * g;
      for (size_t e = 0; e < edges.size(); ++e) din->col(edges[e].second) += gi.col(Eigen::Index(e));
    }
  }
}

template <typename Real>
void activate(MatT<Real>& m, Activation act) {
  if (act == Activation::ReLU) m = m.cwiseMax(Real(0));
}

// gradient through the activation, gated by the stored post-activation
template <typename Real>
MatT<Real> act_grad(const MatT<Real>& dpost, const MatT<Real>& post, Activation act) {
  if (act == Activation::Identity) return dpost;
  return dpost.cwiseProduct((post.array() > Real(0)).template cast<Real>().matrix());
}

}  // namespace

template <typename Real>
PolicyValueNet<Real>::PolicyValueNet(const NetConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg_.k < 1 || cfg_.k % 2 == 0)
    throw std::invalid_argument("net: kernel side must be odd");
  if (cfg_.widths.size() < 3 || cfg_.widths.front() != 1)
    throw std::invalid_argument("net: widths must chain from 1 through the mixer");
  for (int w : cfg_.widths)
    if (w <= 0) throw std::invalid_argument("net: widths must be positive");
  if (cfg_.arch == Arch::MirrorRot && cfg_.k < 5)
    throw std::invalid_argument(
        "net: mirror-alternating streams require k >= 5; rotation-invariant "
        "3x3 kernels are already mirror-symmetric, so the two streams would "
        "coincide and no alternation is possible");
  basis_ = reynolds_basis(cfg_.k);
  build_layers();
  init_params(seed);
}

template <typename Real>
void PolicyValueNet<Real>::build_layers() {
  const int nb = int(basis_.basis.size());
  const int convs = cfg_.conv_layers();
  size_t off = 0;
  auto alloc = [&off](Layer& L, size_t w0, size_t w1, size_t b) {
    L.w0 = off;
    L.w0_len = w0;
    off += w0;
    L.w1 = off;
    L.w1_len = w1;
    off += w1;
    L.b = off;
    L.b_len = b;
    off += b;
  };

  for (int i = 0; i < convs; ++i) {
    Layer L;
    L.k = cfg_.k;
    L.cin = cfg_.widths[size_t(i)];
    L.cout = cfg_.widths[size_t(i) + 1];
    size_t mats = size_t(L.cin) * L.cout;
    switch (cfg_.arch) {
      case Arch::Reference:
        L.kind = LayerKind::ReferenceConv;
        alloc(L, size_t(L.k) * L.k * mats, 0, size_t(L.cout));
        break;
      case Arch::RotInv:
        L.kind = LayerKind::RotInvConv;
        L.nb = nb;
        alloc(L, size_t(nb) * mats, 0, size_t(L.cout));
        break;
      case Arch::MirrorRot:
        L.kind = i == 0 ? LayerKind::MirrorRotFirst : LayerKind::MirrorRotHidden;
        L.nb = nb;
        alloc(L, size_t(nb) * mats, i == 0 ? 0 : size_t(nb) * mats, size_t(L.cout));
        break;
    }
    stack_.push_back(L);
  }

  Layer mix;
  mix.kind = LayerKind::PointwiseMix;
  mix.k = 1;
  mix.cin = cfg_.widths[size_t(convs)];
  mix.cout = cfg_.widths.back();
  size_t mats = size_t(mix.cin) * mix.cout;
  alloc(mix, mats, dual() ? mats : 0, size_t(mix.cout));
  stack_.push_back(mix);

  action_.kind = LayerKind::ActionHead;
  action_.k = 1;
  action_.cin = cfg_.widths.back();
  action_.cout = 2;
  if (dual())
    alloc(action_, size_t(action_.cin), size_t(action_.cin), 1);
  else
    alloc(action_, 2 * size_t(action_.cin), 0, 2);

  value_.kind = LayerKind::ValueHead;
  value_.k = 1;
  value_.cin = cfg_.widths.back();
  value_.cout = 1;
  alloc(value_, size_t(value_.cin), 0, 1);

  params_.assign(off, Real(0));
  grads_.assign(off, Real(0));
}

template <typename Real>
void PolicyValueNet<Real>::init_params(uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](size_t off, size_t len, double bound) {
    for (size_t i = 0; i < len; ++i)
      params_[off + i] = Real((rng.uniform() * 2.0 - 1.0) * bound);
  };
  for (const Layer& L : stack_) {
    double bound = 1.0 / std::sqrt(double(L.cin) * L.k * L.k);
    fill(L.w0, L.w0_len, bound);
    fill(L.w1, L.w1_len, bound);
  }
  double ab = 1.0 / std::sqrt(double(action_.cin));
  fill(action_.w0, action_.w0_len, ab);
  fill(action_.w1, action_.w1_len, ab);
  fill(value_.w0, value_.w0_len, 1.0 / std::sqrt(double(value_.cin)));
}

template <typename Real>
void PolicyValueNet<Real>::zero_grads() {
  std::fill(grads_.begin(), grads_.end(), Real(0));
}

template <typename Real>
std::vector<typename PolicyValueNet<Real>::Mat> PolicyValueNet<Real>::expand(
    const Layer& L, int which) const {
  const Real* p = params_.data() + (which ? L.w1 : L.w0);
  const size_t mat = size_t(L.cin) * L.cout;
  std::vector<Mat> out;
  if (L.kind == LayerKind::ReferenceConv || L.kind == LayerKind::PointwiseMix ||
      L.k == 1) {
    int blocks = L.k * L.k;
    out.reserve(size_t(blocks));
    for (int o = 0; o < blocks; ++o)
      out.emplace_back(Eigen::Map<const Mat>(p + size_t(o) * mat, L.cout, L.cin));
    return out;
  }
  out.assign(size_t(L.k) * L.k, Mat::Zero(L.cout, L.cin));
  for (int b = 0; b < L.nb; ++b) {
    Eigen::Map<const Mat> coef(p + size_t(b) * mat, L.cout, L.cin);
    const Eigen::MatrixXd& B = basis_.basis[size_t(b)];
    for (int ky = 0; ky < L.k; ++ky)
      for (int kx = 0; kx < L.k; ++kx)
        if (B(ky, kx) != 0.0) out[size_t(ky) * L.k + kx] += Real(B(ky, kx)) * coef;
  }
  return out;
}

template <typename Real>
void PolicyValueNet<Real>::contract(const Layer& L, int which,
                                    const std::vector<Mat>& dWo) {
  Real* g = grads_.data() + (which ? L.w1 : L.w0);
  const size_t mat = size_t(L.cin) * L.cout;
  if (L.kind == LayerKind::ReferenceConv || L.kind == LayerKind::PointwiseMix ||
      L.k == 1) {
    for (size_t o = 0; o < dWo.size(); ++o)
      Eigen::Map<Mat>(g + o * mat, L.cout, L.cin) += dWo[o];
    return;
  }
  for (int b = 0; b < L.nb; ++b) {
    Eigen::Map<Mat> dcoef(g + size_t(b) * mat, L.cout, L.cin);
    const Eigen::MatrixXd& B = basis_.basis[size_t(b)];
    for (int ky = 0; ky < L.k; ++ky)
      for (int kx = 0; kx < L.k; ++kx)
        if (B(ky, kx) != 0.0) dcoef += Real(B(ky, kx)) * dWo[size_t(ky) * L.k + kx];
  }
}

template <typename Real>
void PolicyValueNet<Real>::forward(const std::vector<const SparseObs*>& batch,
                                   ForwardTrace<Real>& trace) const {
  const int k = cfg_.k;
  trace.batch = batch;
  trace.base.assign(batch.size(), 0);
  int cols = 0;
  for (size_t s = 0; s < batch.size(); ++s) {
    if (batch[s]->k != k) throw std::invalid_argument("forward: obs built for wrong kernel");
    trace.base[s] = cols;
    cols += batch[s]->n;
  }
  trace.cols = cols;
  trace.edges.assign(size_t(k) * k, {});
  for (size_t s = 0; s < batch.size(); ++s) {
    const SparseObs& o = *batch[s];
    int32_t base = trace.base[s];
    for (int off = 0; off < k * k; ++off)
      for (int i = 0; i < o.n; ++i) {
        int32_t j = o.nbr[size_t(off) * o.n + i];
        if (j >= 0) trace.edges[size_t(off)].push_back({base + i, base + j});
      }
  }

  const size_t stages = stack_.size() + 1;
  trace.x.assign(stages, Mat());
  trace.y.assign(stages, Mat());
  trace.x[0] = Mat::Ones(1, cols);

  for (size_t i = 0; i < stack_.size(); ++i) {
    const Layer& L = stack_[i];
    Eigen::Map<const Vec> bias(params_.data() + L.b, Eigen::Index(L.b_len));
    switch (L.kind) {
      case LayerKind::ReferenceConv:
      case LayerKind::RotInvConv: {
        auto K = expand(L, 0);
        Mat pre = Mat::Zero(L.cout, cols);
        conv_fwd(trace, K, L.k, false, trace.x[i], pre);
        pre.colwise() += bias;
        activate(pre, cfg_.activation);
        trace.x[i + 1] = std::move(pre);
        break;
      }
      case LayerKind::MirrorRotFirst: {
        auto K = expand(L, 0);
        Mat px = Mat::Zero(L.cout, cols), py = Mat::Zero(L.cout, cols);
        conv_fwd(trace, K, L.k, false, trace.x[i], px);
        conv_fwd(trace, K, L.k, true, trace.x[i], py);
        px.colwise() += bias;
        py.colwise() += bias;
        activate(px, cfg_.activation);
        activate(py, cfg_.activation);
        trace.x[i + 1] = std::move(px);
        trace.y[i + 1] = std::move(py);
        break;
      }
      case LayerKind::MirrorRotHidden:
      case LayerKind::PointwiseMix: {
        if (L.kind == LayerKind::PointwiseMix && !dual()) {
          auto K = expand(L, 0);
          Mat pre = Mat::Zero(L.cout, cols);
          conv_fwd(trace, K, 1, false, trace.x[i], pre);
          pre.colwise() += bias;
          activate(pre, cfg_.activation);
          trace.x[i + 1] = std::move(pre);
          break;
        }
        // x' = (W0*x + W1*y)/2 + b ; y' = (MH(W1)*x + MH(W0)*y)/2 + b
        auto K0 = expand(L, 0);
        auto K1 = expand(L, 1);
        Mat px = Mat::Zero(L.cout, cols), py = Mat::Zero(L.cout, cols);
        conv_fwd(trace, K0, L.k, false, trace.x[i], px);
        conv_fwd(trace, K1, L.k, false, trace.y[i], px);
        conv_fwd(trace, K1, L.k, true, trace.x[i], py);
        conv_fwd(trace, K0, L.k, true, trace.y[i], py);
        px *= Real(0.5);
        py *= Real(0.5);
        px.colwise() += bias;
        py.colwise() += bias;
        activate(px, cfg_.activation);
        activate(py, cfg_.activation);
        trace.x[i + 1] = std::move(px);
        trace.y[i + 1] = std::move(py);
        break;
      }
      default:
        throw std::logic_error("forward: unexpected layer kind in stack");
    }
  }

  const Mat& X = trace.x.back();
  const Mat& Y = trace.y.back();
  const int cin = action_.cin;

  trace.logits.assign(batch.size(), {});
  trace.values.assign(batch.size(), Real(0));

  Eigen::Matrix<Real, 2, Eigen::Dynamic> O;
  Eigen::Matrix<Real, 1, Eigen::Dynamic> o0, o1;
  if (!dual()) {
    Eigen::Map<const Mat> U(params_.data() + action_.w0, 2, cin);
    O.noalias() = U * X;
    Eigen::Map<const Vec> b2(params_.data() + action_.b, 2);
    O.colwise() += b2;
  } else {
    Eigen::Map<const Vec> r0(params_.data() + action_.w0, cin);
    Eigen::Map<const Vec> r1(params_.data() + action_.w1, cin);
    Real b = params_[action_.b];
    o0.noalias() = Real(0.5) * (r0.transpose() * X + r1.transpose() * Y);
    o1.noalias() = Real(0.5) * (r1.transpose() * X + r0.transpose() * Y);
    o0.array() += b;
    o1.array() += b;
  }

  Eigen::Map<const Vec> vw(params_.data() + value_.w0, value_.cin);
  Real vb = params_[value_.b];
  for (size_t s = 0; s < batch.size(); ++s) {
    int n = batch[s]->n, base = trace.base[s];
    auto& lg = trace.logits[s];
    lg.assign(size_t(2 * n), Real(0));
    for (int i = 0; i < n; ++i) {
      if (!dual()) {
        lg[size_t(2 * i)] = O(0, base + i);
        lg[size_t(2 * i) + 1] = O(1, base + i);
      } else {
        lg[size_t(2 * i)] = o0(0, base + i);
        lg[size_t(2 * i) + 1] = o1(0, base + i);
      }
    }
    Vec mean;
    if (dual())
      mean = Real(0.5) * (X.middleCols(base, n) + Y.middleCols(base, n)).rowwise().mean();
    else
      mean = X.middleCols(base, n).rowwise().mean();
    trace.values[s] = vw.dot(mean) + vb;
  }
}

template <typename Real>
void PolicyValueNet<Real>::backward(const ForwardTrace<Real>& trace,
                                    const std::vector<std::vector<Real>>& dlogits,
                                    const std::vector<Real>& dvalues) {
  const int cols = trace.cols;
  const size_t S = stack_.size();
  const Mat& X = trace.x[S];
  const Mat& Y = trace.y[S];
  Mat dX = Mat::Zero(X.rows(), cols);
  Mat dY = dual() ? Mat::Zero(X.rows(), cols) : Mat();

  // value head
  {
    Eigen::Map<const Vec> vw(params_.data() + value_.w0, value_.cin);
    Eigen::Map<Vec> dvw(grads_.data() + value_.w0, value_.cin);
    for (size_t s = 0; s < trace.batch.size(); ++s) {
      Real dv = dvalues[s];
      if (dv == Real(0)) continue;
      int n = trace.batch[s]->n, base = trace.base[s];
      Vec mean;
      if (dual())
        mean = Real(0.5) * (X.middleCols(base, n) + Y.middleCols(base, n)).rowwise().mean();
      else
        mean = X.middleCols(base, n).rowwise().mean();
      dvw += dv * mean;
      grads_[value_.b] += dv;
      Vec col = vw * (dv / Real(n));
      if (dual()) {
        dX.middleCols(base, n).colwise() += (Real(0.5) * col).eval();
        dY.middleCols(base, n).colwise() += (Real(0.5) * col).eval();
      } else {
        dX.middleCols(base, n).colwise() += col;
      }
    }
  }

  // action head
  if (!dual()) {
    Eigen::Map<const Mat> U(params_.data() + action_.w0, 2, action_.cin);
    Eigen::Map<Mat> dU(grads_.data() + action_.w0, 2, action_.cin);
    Eigen::Map<Vec> db2(grads_.data() + action_.b, 2);
    Mat dO = Mat::Zero(2, cols);
    for (size_t s = 0; s < trace.batch.size(); ++s) {
      int n = trace.batch[s]->n, base = trace.base[s];
      for (int i = 0; i < n; ++i) {
        dO(0, base + i) = dlogits[s][size_t(2 * i)];
        dO(1, base + i) = dlogits[s][size_t(2 * i) + 1];
      }
    }
    dU.noalias() += dO * X.transpose();
    db2 += dO.rowwise().sum();
    dX.noalias() += U.transpose() * dO;
  } else {
    Eigen::Map<const Vec> r0(params_.data() + action_.w0, action_.cin);
    Eigen::Map<const Vec> r1(params_.data() + action_.w1, action_.cin);
    Eigen::Map<Vec> dr0(grads_.data() + action_.w0, action_.cin);
    Eigen::Map<Vec> dr1(grads_.data() + action_.w1, action_.cin);
    Eigen::Matrix<Real, 1, Eigen::Dynamic> do0 = Eigen::Matrix<Real, 1, Eigen::Dynamic>::Zero(cols);
    Eigen::Matrix<Real, 1, Eigen::Dynamic> do1 = do0;
    for (size_t s = 0; s < trace.batch.size(); ++s) {
      int n = trace.batch[s]->n, base = trace.base[s];
      for (int i = 0; i < n; ++i) {
        do0(base + i) = dlogits[s][size_t(2 * i)];
        do1(base + i) = dlogits[s][size_t(2 * i) + 1];
      }
    }
    dr0.noalias() += Real(0.5) * (X * do0.transpose() + Y * do1.transpose());
    dr1.noalias() += Real(0.5) * (Y * do0.transpose() + X * do1.transpose());
    grads_[action_.b] += do0.sum() + do1.sum();
    dX.noalias() += Real(0.5) * (r0 * do0 + r1 * do1);
    dY.noalias() += Real(0.5) * (r1 * do0 + r0 * do1);
  }

  // stack, reversed
  for (size_t i = S; i-- > 0;) {
    const Layer& L = stack_[i];
    Eigen::Map<Vec> db(grads_.data() + L.b, Eigen::Index(L.b_len));
    bool need_din = i > 0;
    Mat dXin = need_din ? Mat::Zero(L.cin, cols) : Mat();
    Mat dYin;

    switch (L.kind) {
      case LayerKind::ReferenceConv:
      case LayerKind::RotInvConv: {
        Mat dpre = act_grad(dX, trace.x[i + 1], cfg_.activation);
        db += dpre.rowwise().sum();
        auto K = expand(L, 0);
        std::vector<Mat> dWo(K.size(), Mat::Zero(L.cout, L.cin));
        conv_bwd(trace, K, L.k, false, trace.x[i], dpre, &dWo,
                 need_din ? &dXin : nullptr);
        contract(L, 0, dWo);
        break;
      }
      case LayerKind::MirrorRotFirst: {
        Mat dpx = act_grad(dX, trace.x[i + 1], cfg_.activation);
        Mat dpy = act_grad(dY, trace.y[i + 1], cfg_.activation);
        db += dpx.rowwise().sum() + dpy.rowwise().sum();
        auto K = expand(L, 0);
        std::vector<Mat> dWo(K.size(), Mat::Zero(L.cout, L.cin));
        Mat* none = nullptr;  // the first layer never needs an input gradient
        conv_bwd(trace, K, L.k, false, trace.x[i], dpx, &dWo, none);
        conv_bwd(trace, K, L.k, true, trace.x[i], dpy, &dWo, none);
        contract(L, 0, dWo);
        break;
      }
      case LayerKind::MirrorRotHidden:
      case LayerKind::PointwiseMix: {
        if (L.kind == LayerKind::PointwiseMix && !dual()) {
          Mat dpre = act_grad(dX, trace.x[i + 1], cfg_.activation);
          db += dpre.rowwise().sum();
          auto K = expand(L, 0);
          std::vector<Mat> dWo(1, Mat::Zero(L.cout, L.cin));
          conv_bwd(trace, K, 1, false, trace.x[i], dpre, &dWo,
                   need_din ? &dXin : nullptr);
          contract(L, 0, dWo);
          break;
        }
        Mat dpx = act_grad(dX, trace.x[i + 1], cfg_.activation);
        Mat dpy = act_grad(dY, trace.y[i + 1], cfg_.activation);
        db += dpx.rowwise().sum() + dpy.rowwise().sum();
        dpx *= Real(0.5);
        dpy *= Real(0.5);
        auto K0 = expand(L, 0);
        auto K1 = expand(L, 1);
        std::vector<Mat> dW0(K0.size(), Mat::Zero(L.cout, L.cin));
        std::vector<Mat> dW1(K1.size(), Mat::Zero(L.cout, L.cin));
        Mat dYtmp = need_din ? Mat::Zero(L.cin, cols) : Mat();
        conv_bwd(trace, K0, L.k, false, trace.x[i], dpx, &dW0, need_din ? &dXin : nullptr);
        conv_bwd(trace, K1, L.k, false, trace.y[i], dpx, &dW1, need_din ? &dYtmp : nullptr);
        conv_bwd(trace, K1, L.k, true, trace.x[i], dpy, &dW1, need_din ? &dXin : nullptr);
        conv_bwd(trace, K0, L.k, true, trace.y[i], dpy, &dW0, need_din ? &dYtmp : nullptr);
        contract(L, 0, dW0);
        contract(L, 1, dW1);
        if (need_din) dYin = std::move(dYtmp);
        break;
      }
      default:
        throw std::logic_error("backward: unexpected layer kind in stack");
    }
    if (need_din) {
      dX = std::move(dXin);
      dY = std::move(dYin);
    }
  }
}

template <typename Real>
void PolicyValueNet<Real>::forward_one(const SparseObs& obs, std::vector<Real>& logits,
                                       Real& value) const {
  ForwardTrace<Real> trace;
  forward({&obs}, trace);
  logits = std::move(trace.logits[0]);
  value = trace.values[0];
}

template <typename Real>
std::vector<LayerDesc> PolicyValueNet<Real>::describe() const {
  std::vector<LayerDesc> out;
  auto push = [&out](const Layer& L) {
    out.push_back({L.kind, L.k, L.cin, L.cout, L.nb, L.w0_len + L.w1_len + L.b_len});
  };
  for (const Layer& L : stack_) push(L);
  push(action_);
  push(value_);
  return out;
}

template <typename Real>
std::vector<Eigen::MatrixXd> PolicyValueNet<Real>::dense_kernels(int idx, int which) const {
  const Layer& L = stack_.at(size_t(idx));
  auto Wo = expand(L, which);
  std::vector<Eigen::MatrixXd> out(size_t(L.cout) * L.cin,
                                   Eigen::MatrixXd::Zero(L.k, L.k));
  for (int o = 0; o < L.k * L.k; ++o)
    for (int co = 0; co < L.cout; ++co)
      for (int ci = 0; ci < L.cin; ++ci)
        out[size_t(co) * L.cin + ci](o / L.k, o % L.k) = double(Wo[size_t(o)](co, ci));
  return out;
}

template <typename Real>
Eigen::VectorXd PolicyValueNet<Real>::layer_bias(int idx) const {
  const Layer& L = stack_.at(size_t(idx));
  Eigen::VectorXd b(L.b_len);
  for (size_t i = 0; i < L.b_len; ++i) b[Eigen::Index(i)] = double(params_[L.b + i]);
  return b;
}

template <typename Real>
Eigen::VectorXd PolicyValueNet<Real>::head_param(const std::string& name) const {
  auto grab = [this](size_t off, size_t len) {
    Eigen::VectorXd v(len);
    for (size_t i = 0; i < len; ++i) v[Eigen::Index(i)] = double(params_[off + i]);
    return v;
  };
  if (name == "action.w") return grab(action_.w0, action_.w0_len);
  if (name == "action.r0") return grab(action_.w0, action_.w0_len);
  if (name == "action.r1") return grab(action_.w1, action_.w1_len);
  if (name == "action.b") return grab(action_.b, action_.b_len);
  if (name == "value.w") return grab(value_.w0, value_.w0_len);
  if (name == "value.b") return grab(value_.b, value_.b_len);
  throw std::invalid_argument("head_param: unknown name " + name);
}

// ---------------------------------------------------------------------------
// checkpoint serialization

namespace {

constexpr char kMagic[8] = {'C', 'U', 'B', 'E', 'N', 'E', 'T', '1'};

void put_u32(std::string& s, uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }
void put_i32(std::string& s, int32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }
void put_str(std::string& s, const std::string& v) {
  put_u32(s, uint32_t(v.size()));
  s.append(v);
}

struct ByteReader {
  const std::string& s;
  size_t pos = 0;
  void need(size_t n) const {
    if (pos + n > s.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, s.data() + pos, 4);
    pos += 4;
    return v;
  }
  int32_t i32() { return int32_t(u32()); }
  uint8_t u8() {
    need(1);
    return uint8_t(s[pos++]);
  }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string v = s.substr(pos, n);
    pos += n;
    return v;
  }
};

}  // namespace

template <typename Real>
std::vector<typename PolicyValueNet<Real>::CkptEntry>
PolicyValueNet<Real>::checkpoint_entries() const {
  std::vector<CkptEntry> entries;
  const int convs = cfg_.conv_layers();
  auto cu = [](size_t v) { return uint32_t(v); };
  for (size_t i = 0; i < stack_.size(); ++i) {
    const Layer& L = stack_[i];
    std::string name = int(i) < convs ? "conv" + std::to_string(i) : "mix";
    switch (L.kind) {
      case LayerKind::ReferenceConv:
        entries.push_back({name + ".w", {cu(size_t(L.k) * L.k), cu(size_t(L.cin)), cu(size_t(L.cout))}, L.w0, L.w0_len});
        break;
      case LayerKind::RotInvConv:
      case LayerKind::MirrorRotFirst:
        entries.push_back({name + ".omega", {cu(size_t(L.nb)), cu(size_t(L.cin)), cu(size_t(L.cout))}, L.w0, L.w0_len});
        break;
      case LayerKind::MirrorRotHidden:
        entries.push_back({name + ".omega0", {cu(size_t(L.nb)), cu(size_t(L.cin)), cu(size_t(L.cout))}, L.w0, L.w0_len});
        entries.push_back({name + ".omega1", {cu(size_t(L.nb)), cu(size_t(L.cin)), cu(size_t(L.cout))}, L.w1, L.w1_len});
        break;
      case LayerKind::PointwiseMix:
        if (dual()) {
          entries.push_back({name + ".w0", {cu(size_t(L.cin)), cu(size_t(L.cout))}, L.w0, L.w0_len});
          entries.push_back({name + ".w1", {cu(size_t(L.cin)), cu(size_t(L.cout))}, L.w1, L.w1_len});
        } else {
          entries.push_back({name + ".w", {cu(size_t(L.cin)), cu(size_t(L.cout))}, L.w0, L.w0_len});
        }
        break;
      default:
        break;
    }
    entries.push_back({name + ".b", {uint32_t(L.b_len)}, L.b, L.b_len});
  }
  if (dual()) {
    entries.push_back({"action.r0", {uint32_t(action_.w0_len)}, action_.w0, action_.w0_len});
    entries.push_back({"action.r1", {uint32_t(action_.w1_len)}, action_.w1, action_.w1_len});
    entries.push_back({"action.b", {1}, action_.b, 1});
  } else {
    entries.push_back({"action.w", {uint32_t(action_.cin), 2}, action_.w0, action_.w0_len});
    entries.push_back({"action.b", {2}, action_.b, 2});
  }
  entries.push_back({"value.w", {uint32_t(value_.w0_len)}, value_.w0, value_.w0_len});
  entries.push_back({"value.b", {1}, value_.b, 1});
  return entries;
}

template <typename Real>
void PolicyValueNet<Real>::save(const std::string& path) const {
  std::string buf;
  buf.append(kMagic, 8);
  put_u32(buf, 1);
  buf.push_back(char(cfg_.arch));
  buf.push_back(char(cfg_.activation));
  put_u32(buf, uint32_t(cfg_.k));
  put_u32(buf, uint32_t(cfg_.widths.size()));
  for (int w : cfg_.widths) put_i32(buf, w);
  put_i32(buf, cfg_.n_cubes);
  put_i32(buf, cfg_.canvas_side);
  put_i32(buf, cfg_.max_steps);
  put_str(buf, cfg_.shape_name);

  auto entries = checkpoint_entries();
  put_u32(buf, uint32_t(entries.size()));
  for (const auto& e : entries) {
    put_str(buf, e.name);
    put_u32(buf, uint32_t(e.dims.size()));
    for (uint32_t d : e.dims) put_u32(buf, d);
    put_u32(buf, uint32_t(e.len));
    for (size_t i = 0; i < e.len; ++i) {
      float f = float(params_[e.off + i]);
      buf.append(reinterpret_cast<const char*>(&f), 4);
    }
  }
  io::atomic_write_file(path, buf);
}

template <typename Real>
PolicyValueNet<Real> PolicyValueNet<Real>::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r{buf};
  r.need(8);
  if (std::memcmp(buf.data(), kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  r.pos = 8;
  if (r.u32() != 1) throw std::runtime_error("checkpoint: unsupported version");
  NetConfig cfg;
  cfg.arch = Arch(r.u8());
  cfg.activation = Activation(r.u8());
  cfg.k = int(r.u32());
  uint32_t nw = r.u32();
  cfg.widths.clear();
  for (uint32_t i = 0; i < nw; ++i) cfg.widths.push_back(r.i32());
  cfg.n_cubes = r.i32();
  cfg.canvas_side = r.i32();
  cfg.max_steps = r.i32();
  cfg.shape_name = r.str();

  PolicyValueNet net(cfg, 0);
  auto entries = net.checkpoint_entries();
  uint32_t n_arrays = r.u32();
  if (n_arrays != entries.size())
    throw std::runtime_error("checkpoint: unexpected array count");
  for (const auto& e : entries) {
    std::string name = r.str();
    if (name != e.name) throw std::runtime_error("checkpoint: expected array " + e.name);
    uint32_t ndim = r.u32();
    if (ndim != e.dims.size()) throw std::runtime_error("checkpoint: dims mismatch in " + name);
    for (uint32_t d = 0; d < ndim; ++d)
      if (r.u32() != e.dims[d]) throw std::runtime_error("checkpoint: dims mismatch in " + name);
    if (r.u32() != e.len) throw std::runtime_error("checkpoint: dims mismatch in " + name);
    r.need(e.len * 4);
    for (size_t i = 0; i < e.len; ++i) {
      float f;
      std::memcpy(&f, buf.data() + r.pos, 4);
      r.pos += 4;
      net.params_[e.off + i] = Real(f);
    }
  }
  return net;
}

template class PolicyValueNet<float>;
template class PolicyValueNet<double>;

}  // namespace cubes::net
