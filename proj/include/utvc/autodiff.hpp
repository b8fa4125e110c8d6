#pragma once
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "utvc/tensor.hpp"

namespace utvc {

// Reverse-mode tape over a closed op set. Nodes are created in topological
// order; backward() visits each node exactly once in reverse creation order.
// Values are float32 throughout; float64 appears only in the
// finite-difference oracle (grad_check).
class Tape {
 public:
  int leaf(Tensor t) { return push(std::move(t), false, nullptr); }
  int input(const Tensor& t, bool needs_grad) { return push(t, needs_grad, nullptr); }

  int add(int a, int b);
  int mul(int a, int b);
  int cadd(int a, float s);
  int cmul(int a, float s);
  int exp_(int a);
  int log_(int a);
  int clamp(int a, float lo, float hi);
  int round_ste(int a);
  int softmax(int a, int axis);
  int sum_all(int a);
  int mean_all(int a);
  int sum_axis(int a, int axis);  // keeps the axis with extent 1
  int concat(const std::vector<int>& ids, int axis);
  int slice(int a, int axis, int start, int len);
  int reshape(int a, std::vector<int> shape);
  int matmul(int a, int b);
  int conv2d(int x, int w, int b, int stride, int groups, bool same_pad);  // b = -1 for none
  int bilinear(int feat, int loc);  // feat CxHxW, loc Px2 -> PxC
  int dct2(int plane, int p);       // 3xHxW -> (3p^2)x(H/p)x(W/p), orthonormal
  int idct2(int coeff, int p);      // inverse of dct2
  int resize2x(int a);              // CxHxW -> Cx2Hx2W bilinear, half-pixel centers

  void backward(int loss);

  const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].val; }
  // zero tensor of the node's shape if nothing reached it
  Tensor grad(int id) const;
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    std::function<void(Tape&, int)> back;
    bool needs = false;
  };

  int push(Tensor v, bool needs, std::function<void(Tape&, int)> back) {
    nodes_.push_back(Node{std::move(v), std::move(back), needs});
    return static_cast<int>(nodes_.size()) - 1;
  }
  bool needs(int id) const { return nodes_[static_cast<size_t>(id)].needs; }
  Tensor& gbuf(int id);
  bool has_g(int id) const {
    return id < static_cast<int>(grads_.size()) && grads_[static_cast<size_t>(id)].numel() > 0;
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// composition helpers on top of the closed op set
int neg(Tape& t, int x);
int sub(Tape& t, int a, int b);
int relu(Tape& t, int x);
int leaky_relu(Tape& t, int x, float slope);
int abs_(Tape& t, int x);
int reciprocal(Tape& t, int x);  // exp(-log(x)), x > 0
int square(Tape& t, int x);
int mse(Tape& t, int a, int b);
int erf_t(Tape& t, int x);  // rational erf approximation, max abs error ~1.5e-7
// ideal codelength in bits of integers y under N(mu, sigma) with half-integer
// bins; probabilities are floored at 2^-16 to mirror the coder.
// The map form keeps per-element bits (rate maps, fine-grained checks).
int gaussian_bits_map(Tape& t, int y, int mu, int sigma);
int gaussian_bits(Tape& t, int y, int mu, int sigma);
// PxC -> CxP built from slices (memory-order transpose)
int transpose2d(Tape& t, int x);

struct GradCheckResult {
  double max_rel_err = 0.0;
  double sum_rel = 0.0;
  int probes = 0;
  // max catches catastrophic wiring errors; the mean separates a genuine
  // backward bug (most coordinates wrong) from a finite-difference probe that
  // stepped across an activation kink (isolated outliers at any step size)
  double mean_rel_err() const { return probes ? sum_rel / probes : 0.0; }
};

// build(tape, ids) wires the loss from differentiable inputs bound to the
// given tensors; non-scalar outputs are summed. Central differences reduce
// the float32 forward terms in float64; relative error is
// |a - n| / max(1e-8, |a| + |n|, 0.1 * max|analytic|), the scale floor
// keeping float32 evaluation noise at near-zero coordinates out of the score.
GradCheckResult grad_check(const std::function<int(Tape&, const std::vector<int>&)>& build,
                           const std::vector<Tensor*>& inputs, double h, int max_probes_per_tensor,
                           Rng& rng);

}  // namespace utvc
