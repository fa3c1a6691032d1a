#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "eqmap/errors.hpp"

namespace eqmap {

using Shape = std::vector<int>;

size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Dense row-major array. When `tape` is set and `node >= 0` the value
// participates in the recorded computation; otherwise it is a constant.
struct Tensor {
  Shape shape;
  std::shared_ptr<const std::vector<double>> values;
  Tape* tape = nullptr;
  int node = -1;

  const std::vector<double>& vals() const { return *values; }
  double at(size_t i) const { return (*values)[i]; }
  double scalar() const;
  size_t size() const { return values ? values->size() : 0; }
  int ndim() const { return static_cast<int>(shape.size()); }
  bool tracked() const { return tape != nullptr && node >= 0; }

  // gradient recorded for this value by the last backward() on its tape;
  // null for constants or before backward
  const std::vector<double>* grad() const;
};

Tensor constant(Shape shape, std::vector<double> v);
Tensor full(Shape shape, double fill);

// Reverse-mode record. Operations append nodes; backward() seeds the scalar
// output, sweeps the record once in reverse creation order, and then retires
// it (gradients stay readable until clear()).
class Tape {
 public:
  int leaf(size_t n);
  int emplace(size_t n, std::function<void(Tape&)> back);
  void set_back(int id, std::function<void(Tape&)> back);

  std::vector<double>& grad(int id);
  const std::vector<double>* peek_grad(int id) const;
  bool has_grads() const { return swept_; }

  void backward(const Tensor& out, double seed = 1.0);
  void clear();
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    size_t n;
    std::function<void(Tape&)> back;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool swept_ = false;
};

// elementwise, shapes must match
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double c);

// a [..., D] + b [D] broadcast over leading dims
Tensor add_rowvec(const Tensor& a, const Tensor& b);

// batched matrix product. Batch extents must match exactly, or one operand
// may be a plain matrix broadcast across the other's batches.
Tensor matmul(const Tensor& a, const Tensor& b);

// swap the last two extents
Tensor transpose_last(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// sqrt(x + eps), defined and smooth at x = 0 for eps > 0
Tensor sqrt_eps(const Tensor& a, double eps);

// shift-by-max normalized exponentials along `axis` (negative counts from the
// back). `add_mask`, when given, must be a constant of identical shape whose
// entries are 0 (keep) or -inf (drop); dropped entries get exactly 0 weight
// and exactly 0 gradient. A row with no kept entry is an error.
Tensor softmax(const Tensor& a, int axis, const Tensor* add_mask = nullptr);

// normalize over the last extent, then scale/shift by gamma/beta [D]
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// out slab r = a slab r * s[r], where s.shape is a leading prefix of a.shape;
// differentiable in both operands
Tensor row_scale(const Tensor& a, const Tensor& s);

// out slab p = a slab idx[p]
Tensor gather_axis0(const Tensor& a, const std::vector<int>& idx);
// out has first extent n, zero-filled; slab idx[p] += a slab p
Tensor scatter_axis0(const Tensor& a, const std::vector<int>& idx, int n);

Tensor sum_all(const Tensor& a);                     // -> [1]
Tensor sum_last(const Tensor& a);                    // [..., D] -> [...]
Tensor sum_axis0(const Tensor& a);                   // [N, ...] -> [...]
Tensor select_last(const Tensor& a, int k);          // [..., K] -> [...]
Tensor concat_last(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& a, Shape shape);

}  // namespace eqmap
