#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

// Minimal dense 2-D tensor arithmetic with reverse-mode gradient recording.
// Every tensor is a row-major matrix; scalars are 1x1, row vectors 1xn.
namespace fc {

struct Shape {
  int rows = 0;
  int cols = 0;
  int64_t numel() const { return static_cast<int64_t>(rows) * cols; }
  bool operator==(const Shape&) const = default;
};

// A named trainable array. Gradients accumulate here during Tape::backward.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  // AdamW moments, lazily sized by the optimizer.
  std::vector<double> m;
  std::vector<double> v;
};

class Tape;

struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;
  Tape* tape = nullptr;
  int node = -1;  // -1: constant, not on the tape

  int rows() const { return shape.rows; }
  int cols() const { return shape.cols; }
  int64_t numel() const { return shape.numel(); }
  double at(int r, int c) const { return (*data)[static_cast<int64_t>(r) * shape.cols + c]; }
  const std::vector<double>& values() const { return *data; }
};

// Records forward operations; backward() runs them in reverse and accumulates
// parameter gradients. Single-threaded, single use per backward pass.
class Tape {
 public:
  Tensor constant(Shape shape, std::vector<double> vals);
  Tensor constant(Shape shape, double fill = 0.0);
  // Registers a parameter leaf; backward adds into p.grad.
  Tensor leaf(Param& p);

  void backward(const Tensor& loss);

  // Gradient buffer of a recorded tensor (valid after backward).
  const std::vector<double>& grad(const Tensor& t);

  size_t num_nodes() const { return nodes_.size(); }

  // --- op-construction internals ---
  using BackFn = std::function<void(Tape&, const std::vector<double>& gout)>;
  Tensor make(Shape shape, std::vector<double> vals,
              const std::vector<const Tensor*>& inputs, BackFn back);
  std::vector<double>& grad_buf(const Tensor& t);

 private:
  struct Node {
    BackFn back;
    Param* param = nullptr;
    int64_t numel = 0;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool used_ = false;
};

// --- core ops ---
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);  // same shape, or b a 1xC row bias
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape, or b 1xC row
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);  // 0 rows, 1 cols
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor sum_axis(const Tensor& a, int axis);   // result 1xC or Rx1
Tensor mean_axis(const Tensor& a, int axis);
Tensor sum_all(const Tensor& a);              // 1x1
Tensor softmax_rows(const Tensor& a);         // throws if a row is fully masked
Tensor gelu(const Tensor& a);
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);  // pre-affine
Tensor masked_fill(const Tensor& a, const std::vector<uint8_t>& mask, double value);
Tensor dropout(const Tensor& a, double p, bool train, uint64_t seed, uint64_t counter);

// Additive mask value used before softmax.
inline constexpr double kMaskValue = -1e9;

// N x N bias matrix for graph attention: entries with edge_type 0 get
// kMaskValue (no gradient), others the learnable scalar type_biases[type].
Tensor edge_bias_matrix(const Tensor& type_biases, const std::vector<int>& edge_type, int n);

// Deterministic counter-based uniform in [0,1).
double counter_uniform(uint64_t seed, uint64_t counter);

}  // namespace fc
