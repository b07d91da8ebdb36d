#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cubes/grid_image.hpp"
#include "cubes/reynolds.hpp"
#include "cubes/rng.hpp"

namespace cubes::net {

enum class Arch : uint8_t { Reference = 0, RotInv = 1, MirrorRot = 2 };
enum class Activation : uint8_t { ReLU = 0, Identity = 1 };
enum class LayerKind : uint8_t {
  ReferenceConv,
  RotInvConv,
  MirrorRotFirst,
  MirrorRotHidden,
  PointwiseMix,
  ActionHead,
  ValueHead,
};

const char* arch_name(Arch a);
const char* activation_name(Activation a);

// Width chain includes input and mixer output, e.g. {1, 64, 512, 32}:
// conv_layers() k x k convolutions followed by a 1 x 1 mix to widths.back().
struct NetConfig {
  Arch arch = Arch::Reference;
  int k = 3;
  std::vector<int> widths{1, 64, 32};
  Activation activation = Activation::ReLU;
  // environment metadata carried through checkpoints
  int n_cubes = 0;
  int canvas_side = 0;
  int max_steps = 0;
  std::string shape_name;

  int conv_layers() const { return int(widths.size()) - 2; }
  int receptive_radius() const { return conv_layers() * (k - 1) / 2; }
};

// Stock width chains by conv-layer count (1..4).
std::vector<int> standard_widths(int conv_layers);

// All activations are zero off-mask, so the engine stores features only at
// the N occupied cells, column i belonging to cube i. nbr[o*n + i] holds the
// cube index found at cells[i] + offset(o), or -1; offsets are enumerated as
// o = ky*k + kx with (dx, dy) = (kx - r, ky - r).
struct SparseObs {
  int n = 0;
  int k = 0;
  std::vector<CellCoord> cells;
  std::vector<int32_t> nbr;
};

SparseObs build_sparse_obs(const sim::GridImage& img, int k);

// Parameter/gradient storage. Over-aligned so Eigen maps into it always see
// the same alignment class; heap-dependent packet peeling would otherwise
// let bit-level results vary between identically-seeded runs.
template <typename Real>
using ParamVector = std::vector<Real, Eigen::aligned_allocator<Real>>;

struct LayerDesc {
  LayerKind kind;
  int k = 1, cin = 0, cout = 0, nb = 0;
  size_t params = 0;
};

template <typename Real>
struct ForwardTrace {
  using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<const SparseObs*> batch;
  std::vector<int> base;  // column base per sample
  int cols = 0;
  // gather lists per kernel offset: (destination column, source column)
  std::vector<std::vector<std::pair<int32_t, int32_t>>> edges;
  std::vector<Mat> x, y;  // stage activations; x[0] is the all-ones input
  std::vector<std::vector<Real>> logits;
  std::vector<Real> values;
};

template <typename Real>
class PolicyValueNet {
 public:
  using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

  PolicyValueNet(const NetConfig& cfg, uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  std::vector<LayerDesc> describe() const;

  size_t param_count() const { return params_.size(); }
  ParamVector<Real>& params() { return params_; }
  const ParamVector<Real>& params() const { return params_; }
  ParamVector<Real>& grads() { return grads_; }
  void zero_grads();

  // Evaluates the batch; activations, logits and values land in the trace.
  void forward(const std::vector<const SparseObs*>& batch, ForwardTrace<Real>& trace) const;
  // Accumulates parameter gradients of sum_s(dlogits[s] . logits[s] +
  // dvalues[s] * value[s]) into grads(); requires the trace of forward().
  void backward(const ForwardTrace<Real>& trace,
                const std::vector<std::vector<Real>>& dlogits,
                const std::vector<Real>& dvalues);

  void forward_one(const SparseObs& obs, std::vector<Real>& logits, Real& value) const;

  // k x k kernel matrices of stack layer `idx` (out-major, cout*cin entries),
  // built exactly as the engine expands them; for dense-composition tests.
  std::vector<Eigen::MatrixXd> dense_kernels(int idx, int which) const;
  Eigen::VectorXd layer_bias(int idx) const;
  Eigen::VectorXd head_param(const std::string& name) const;

  void save(const std::string& path) const;  // atomic write, float32 payload
  static PolicyValueNet load_file(const std::string& path);

 private:
  struct Layer {
    LayerKind kind;
    int k = 1, cin = 0, cout = 0, nb = 0;
    size_t w0 = 0, w0_len = 0, w1 = 0, w1_len = 0, b = 0, b_len = 0;
  };

  struct CkptEntry {
    std::string name;
    std::vector<uint32_t> dims;
    size_t off = 0, len = 0;
  };

  void build_layers();
  void init_params(uint64_t seed);
  std::vector<CkptEntry> checkpoint_entries() const;
  bool dual() const { return cfg_.arch == Arch::MirrorRot; }
  std::vector<Mat> expand(const Layer& L, int which) const;
  void contract(const Layer& L, int which, const std::vector<Mat>& dWo);

  NetConfig cfg_;
  InvariantKernelBasis basis_;
  std::vector<Layer> stack_;  // convs then the pointwise mix
  Layer action_, value_;
  ParamVector<Real> params_, grads_;
};

using NetF = PolicyValueNet<float>;
using NetD = PolicyValueNet<double>;

}  // namespace cubes::net
