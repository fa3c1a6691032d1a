#include "eqmap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace eqmap {

size_t numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw DataError("non-positive extent in shape " + shape_str(s));
    n *= static_cast<size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

double Tensor::scalar() const {
  if (size() != 1) throw DataError("expected scalar, got shape " + shape_str(shape));
  return (*values)[0];
}

const std::vector<double>* Tensor::grad() const {
  if (!tracked() || !tape->has_grads()) return nullptr;
  return tape->peek_grad(node);
}

Tensor constant(Shape shape, std::vector<double> v) {
  if (numel(shape) != v.size())
    throw DataError("constant: " + shape_str(shape) + " does not hold " +
                    std::to_string(v.size()) + " values");
  Tensor t;
  t.shape = std::move(shape);
  t.values = std::make_shared<const std::vector<double>>(std::move(v));
  return t;
}

Tensor full(Shape shape, double fill) {
  size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, fill));
}

int Tape::leaf(size_t n) {
  nodes_.push_back(Node{n, nullptr});
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::emplace(size_t n, std::function<void(Tape&)> back) {
  if (swept_) throw DataError("tape already consumed by backward; clear() first");
  nodes_.push_back(Node{n, std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::set_back(int id, std::function<void(Tape&)> back) {
  nodes_[static_cast<size_t>(id)].back = std::move(back);
}

std::vector<double>& Tape::grad(int id) { return grads_[static_cast<size_t>(id)]; }

const std::vector<double>* Tape::peek_grad(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= grads_.size()) return nullptr;
  return &grads_[static_cast<size_t>(id)];
}

void Tape::backward(const Tensor& out, double seed) {
  if (out.tape != this || out.node < 0) throw DataError("backward: output not on this tape");
  if (out.size() != 1) throw DataError("backward: output is not a scalar");
  if (swept_) throw DataError("backward: record already consumed");
  grads_.resize(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) grads_[i].assign(nodes_[i].n, 0.0);
  grads_[static_cast<size_t>(out.node)][0] = seed;
  for (size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].back) {
      nodes_[i].back(*this);
      nodes_[i].back = nullptr;
    }
  }
  swept_ = true;
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
  swept_ = false;
}

namespace {

Tape* common_tape(std::initializer_list<const Tensor*> ins) {
  Tape* t = nullptr;
  for (const Tensor* x : ins) {
    if (!x->tracked()) continue;
    if (t && t != x->tape) throw DataError("operands recorded on different tapes");
    t = x->tape;
  }
  return t;
}

using Vals = std::shared_ptr<const std::vector<double>>;

Vals own(std::vector<double> v) {
  return std::make_shared<const std::vector<double>>(std::move(v));
}

Tensor finish(Shape shape, Vals vals, Tape* t,
              const std::function<std::function<void(Tape&)>(int self)>& make_back) {
  Tensor out;
  out.shape = std::move(shape);
  out.values = std::move(vals);
  if (t) {
    int id = t->emplace(out.values->size(), nullptr);
    t->set_back(id, make_back(id));
    out.tape = t;
    out.node = id;
  }
  return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw DataError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                    shape_str(b.shape));
}

size_t leading(const Shape& s, size_t upto) {
  size_t n = 1;
  for (size_t i = 0; i < upto; ++i) n *= static_cast<size_t>(s[i]);
  return n;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Tape* t = common_tape({&a, &b});
  int an = a.node, bn = b.node;
  bool at = a.tracked(), bt = b.tracked();
  return finish(a.shape, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      if (at) {
        std::vector<double>& ga = tp.grad(an);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bt) {
        std::vector<double>& gb = tp.grad(bn);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  Tape* t = common_tape({&a, &b});
  int an = a.node, bn = b.node;
  bool at = a.tracked(), bt = b.tracked();
  return finish(a.shape, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      if (at) {
        std::vector<double>& ga = tp.grad(an);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bt) {
        std::vector<double>& gb = tp.grad(bn);
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Tape* t = common_tape({&a, &b});
  int an = a.node, bn = b.node;
  bool at = a.tracked(), bt = b.tracked();
  Vals av = a.values, bv = b.values;
  return finish(a.shape, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      if (at) {
        std::vector<double>& ga = tp.grad(an);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*bv)[i];
      }
      if (bt) {
        std::vector<double>& gb = tp.grad(bn);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (*av)[i];
      }
    };
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * s;
  Tape* t = common_tape({&a});
  int an = a.node;
  return finish(a.shape, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    };
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + c;
  Tape* t = common_tape({&a});
  int an = a.node;
  return finish(a.shape, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 1 || b.ndim() != 1 || a.shape.back() != b.shape[0])
    throw DataError("add_rowvec: shape mismatch " + shape_str(a.shape) + " vs " +
                    shape_str(b.shape));
  size_t d = static_cast<size_t>(b.shape[0]);
  size_t rows = a.size() / d;
  std::vector<double> out(a.size());
  for (size_t r = 0; r < rows; ++r)
    for (size_t j = 0; j < d; ++j) out[r * d + j] = a.at(r * d + j) + b.at(j);
  Tape* t = common_tape({&a, &b});
  int an = a.node, bn = b.node;
  bool at = a.tracked(), bt = b.tracked();
  return finish(a.shape, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      if (at) {
        std::vector<double>& ga = tp.grad(an);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bt) {
        std::vector<double>& gb = tp.grad(bn);
        for (size_t r = 0; r < rows; ++r)
          for (size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
      }
    };
  });
}

namespace {

struct MatDims {
  size_t batches;
  size_t m, k, n;
  bool a_bcast, b_bcast;
  Shape out_shape;
};

MatDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 2 || b.ndim() < 2)
    throw DataError("matmul: operands must have >= 2 extents, got " + shape_str(a.shape) +
                    " and " + shape_str(b.shape));
  MatDims d{};
  d.m = static_cast<size_t>(a.shape[a.ndim() - 2]);
  d.k = static_cast<size_t>(a.shape[a.ndim() - 1]);
  size_t kb = static_cast<size_t>(b.shape[b.ndim() - 2]);
  d.n = static_cast<size_t>(b.shape[b.ndim() - 1]);
  if (d.k != kb)
    throw DataError("matmul: inner extents disagree, " + shape_str(a.shape) + " vs " +
                    shape_str(b.shape));
  Shape abatch(a.shape.begin(), a.shape.end() - 2);
  Shape bbatch(b.shape.begin(), b.shape.end() - 2);
  if (abatch == bbatch) {
    d.batches = leading(abatch, abatch.size());
    d.out_shape = abatch;
  } else if (abatch.empty()) {
    d.a_bcast = true;
    d.batches = leading(bbatch, bbatch.size());
    d.out_shape = bbatch;
  } else if (bbatch.empty()) {
    d.b_bcast = true;
    d.batches = leading(abatch, abatch.size());
    d.out_shape = abatch;
  } else {
    throw DataError("matmul: batch extents disagree, " + shape_str(a.shape) + " vs " +
                    shape_str(b.shape));
  }
  d.out_shape.push_back(static_cast<int>(d.m));
  d.out_shape.push_back(static_cast<int>(d.n));
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  MatDims d = matmul_dims(a, b);
  const size_t m = d.m, k = d.k, n = d.n;
  std::vector<double> out(d.batches * m * n, 0.0);
  const std::vector<double>& av = a.vals();
  const std::vector<double>& bv = b.vals();
  for (size_t bi = 0; bi < d.batches; ++bi) {
    const double* A = av.data() + (d.a_bcast ? 0 : bi * m * k);
    const double* B = bv.data() + (d.b_bcast ? 0 : bi * k * n);
    double* C = out.data() + bi * m * n;
    for (size_t i = 0; i < m; ++i)
      for (size_t kk = 0; kk < k; ++kk) {
        double x = A[i * k + kk];
        if (x == 0.0) continue;
        const double* Brow = B + kk * n;
        double* Crow = C + i * n;
        for (size_t j = 0; j < n; ++j) Crow[j] += x * Brow[j];
      }
  }
  Tape* t = common_tape({&a, &b});
  int an = a.node, bn = b.node;
  bool at = a.tracked(), bt = b.tracked();
  Vals av_p = a.values, bv_p = b.values;
  return finish(d.out_shape, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      for (size_t bi = 0; bi < d.batches; ++bi) {
        const double* G = g.data() + bi * m * n;
        if (at) {
          const double* B = bv_p->data() + (d.b_bcast ? 0 : bi * k * n);
          double* GA = tp.grad(an).data() + (d.a_bcast ? 0 : bi * m * k);
          for (size_t i = 0; i < m; ++i)
            for (size_t kk = 0; kk < k; ++kk) {
              double acc = 0.0;
              const double* Grow = G + i * n;
              const double* Brow = B + kk * n;
              for (size_t j = 0; j < n; ++j) acc += Grow[j] * Brow[j];
              GA[i * k + kk] += acc;
            }
        }
        if (bt) {
          const double* A = av_p->data() + (d.a_bcast ? 0 : bi * m * k);
          double* GB = tp.grad(bn).data() + (d.b_bcast ? 0 : bi * k * n);
          for (size_t i = 0; i < m; ++i)
            for (size_t kk = 0; kk < k; ++kk) {
              double x = A[i * k + kk];
              if (x == 0.0) continue;
              const double* Grow = G + i * n;
              double* GBrow = GB + kk * n;
              for (size_t j = 0; j < n; ++j) GBrow[j] += x * Grow[j];
            }
        }
      }
    };
  });
}

Tensor transpose_last(const Tensor& a) {
  if (a.ndim() < 2) throw DataError("transpose_last: needs >= 2 extents, got " + shape_str(a.shape));
  size_t m = static_cast<size_t>(a.shape[a.ndim() - 2]);
  size_t n = static_cast<size_t>(a.shape[a.ndim() - 1]);
  size_t batches = a.size() / (m * n);
  Shape os = a.shape;
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  std::vector<double> out(a.size());
  for (size_t bi = 0; bi < batches; ++bi) {
    const double* A = a.vals().data() + bi * m * n;
    double* O = out.data() + bi * m * n;
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) O[j * m + i] = A[i * n + j];
  }
  Tape* t = common_tape({&a});
  int an = a.node;
  return finish(os, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t bi = 0; bi < batches; ++bi) {
        const double* G = g.data() + bi * m * n;
        double* GA = ga.data() + bi * m * n;
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < n; ++j) GA[i * n + j] += G[j * m + i];
      }
    };
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) > 0.0 ? a.at(i) : 0.0;
  Tape* t = common_tape({&a});
  int an = a.node;
  Vals av = a.values;
  return finish(a.shape, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t i = 0; i < g.size(); ++i)
        if ((*av)[i] > 0.0) ga[i] += g[i];
    };
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = a.at(i);
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  Tape* t = common_tape({&a});
  int an = a.node;
  Vals ov = own(std::move(out));
  return finish(a.shape, ov, t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t i = 0; i < g.size(); ++i) {
        double y = (*ov)[i];
        ga[i] += g[i] * y * (1.0 - y);
      }
    };
  });
}

Tensor sqrt_eps(const Tensor& a, double eps) {
  if (eps <= 0.0) throw DataError("sqrt_eps: eps must be positive");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = a.at(i) + eps;
    if (x < 0.0) throw DataError("sqrt_eps: negative operand");
    out[i] = std::sqrt(x);
  }
  Tape* t = common_tape({&a});
  int an = a.node;
  Vals ov = own(std::move(out));
  return finish(a.shape, ov, t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 0.5 / (*ov)[i];
    };
  });
}

Tensor softmax(const Tensor& a, int axis, const Tensor* add_mask) {
  int nd = a.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd)
    throw DataError("softmax: axis out of range for shape " + shape_str(a.shape));
  if (add_mask) {
    if (add_mask->shape != a.shape)
      throw DataError("softmax: mask shape " + shape_str(add_mask->shape) + " vs " +
                      shape_str(a.shape));
    if (add_mask->tracked()) throw DataError("softmax: mask must be a constant");
  }
  size_t outer = leading(a.shape, static_cast<size_t>(axis));
  size_t kdim = static_cast<size_t>(a.shape[static_cast<size_t>(axis)]);
  size_t inner = a.size() / (outer * kdim);
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> out(a.size(), 0.0);
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      auto idx = [&](size_t j) { return (o * kdim + j) * inner + in; };
      double mx = ninf;
      for (size_t j = 0; j < kdim; ++j) {
        if (add_mask && add_mask->at(idx(j)) == ninf) continue;
        double z = a.at(idx(j)) + (add_mask ? add_mask->at(idx(j)) : 0.0);
        mx = std::max(mx, z);
      }
      if (mx == ninf) throw DataError("softmax: no unmasked element");
      double sum = 0.0;
      for (size_t j = 0; j < kdim; ++j) {
        if (add_mask && add_mask->at(idx(j)) == ninf) continue;
        double z = a.at(idx(j)) + (add_mask ? add_mask->at(idx(j)) : 0.0);
        double e = std::exp(z - mx);
        out[idx(j)] = e;
        sum += e;
      }
      for (size_t j = 0; j < kdim; ++j) out[idx(j)] /= sum;
    }
  }
  Tape* t = common_tape({&a});
  int an = a.node;
  Vals ov = own(std::move(out));
  return finish(a.shape, ov, t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
          auto idx = [&](size_t j) { return (o * kdim + j) * inner + in; };
          double dot = 0.0;
          for (size_t j = 0; j < kdim; ++j) dot += g[idx(j)] * (*ov)[idx(j)];
          for (size_t j = 0; j < kdim; ++j) {
            double w = (*ov)[idx(j)];
            if (w != 0.0) ga[idx(j)] += w * (g[idx(j)] - dot);
          }
        }
      }
    };
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.ndim() < 1) throw DataError("layer_norm: rank-0 input");
  size_t d = static_cast<size_t>(x.shape.back());
  if (gamma.shape != Shape{static_cast<int>(d)} || beta.shape != Shape{static_cast<int>(d)})
    throw DataError("layer_norm: gamma/beta must be " + shape_str({static_cast<int>(d)}));
  size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv(rows);
  for (size_t r = 0; r < rows; ++r) {
    const double* X = x.vals().data() + r * d;
    double mu = 0.0;
    for (size_t j = 0; j < d; ++j) mu += X[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (X[j] - mu) * (X[j] - mu);
    var /= static_cast<double>(d);
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < d; ++j) {
      double xh = (X[j] - mu) * inv[r];
      xhat[r * d + j] = xh;
      out[r * d + j] = gamma.at(j) * xh + beta.at(j);
    }
  }
  Tape* t = common_tape({&x, &gamma, &beta});
  int xn = x.node, gn = gamma.node, bn = beta.node;
  bool xt = x.tracked(), gt = gamma.tracked(), bt = beta.tracked();
  Vals gv = gamma.values;
  auto xh_p = std::make_shared<const std::vector<double>>(std::move(xhat));
  auto inv_p = std::make_shared<const std::vector<double>>(std::move(inv));
  return finish(x.shape, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      for (size_t r = 0; r < rows; ++r) {
        const double* G = g.data() + r * d;
        const double* XH = xh_p->data() + r * d;
        if (xt) {
          double mh = 0.0, mhx = 0.0;
          for (size_t j = 0; j < d; ++j) {
            double h = G[j] * (*gv)[j];
            mh += h;
            mhx += h * XH[j];
          }
          mh /= static_cast<double>(d);
          mhx /= static_cast<double>(d);
          double* GX = tp.grad(xn).data() + r * d;
          for (size_t j = 0; j < d; ++j) {
            double h = G[j] * (*gv)[j];
            GX[j] += (*inv_p)[r] * (h - mh - XH[j] * mhx);
          }
        }
        if (gt) {
          double* GG = tp.grad(gn).data();
          for (size_t j = 0; j < d; ++j) GG[j] += G[j] * XH[j];
        }
        if (bt) {
          double* GB = tp.grad(bn).data();
          for (size_t j = 0; j < d; ++j) GB[j] += G[j];
        }
      }
    };
  });
}

Tensor row_scale(const Tensor& a, const Tensor& s) {
  if (s.ndim() > a.ndim() ||
      !std::equal(s.shape.begin(), s.shape.end(), a.shape.begin()))
    throw DataError("row_scale: " + shape_str(s.shape) + " is not a leading prefix of " +
                    shape_str(a.shape));
  size_t rows = s.size();
  size_t cols = a.size() / rows;
  std::vector<double> out(a.size());
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) out[r * cols + c] = a.at(r * cols + c) * s.at(r);
  Tape* t = common_tape({&a, &s});
  int an = a.node, sn = s.node;
  bool at = a.tracked(), st = s.tracked();
  Vals av = a.values, sv = s.values;
  return finish(a.shape, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      if (at) {
        std::vector<double>& ga = tp.grad(an);
        for (size_t r = 0; r < rows; ++r)
          for (size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r * cols + c] * (*sv)[r];
      }
      if (st) {
        std::vector<double>& gs = tp.grad(sn);
        for (size_t r = 0; r < rows; ++r) {
          double acc = 0.0;
          for (size_t c = 0; c < cols; ++c) acc += g[r * cols + c] * (*av)[r * cols + c];
          gs[r] += acc;
        }
      }
    };
  });
}

Tensor gather_axis0(const Tensor& a, const std::vector<int>& idx) {
  if (a.ndim() < 1) throw DataError("gather_axis0: rank-0 input");
  int n = a.shape[0];
  for (int i : idx)
    if (i < 0 || i >= n) throw DataError("gather_axis0: index out of range");
  size_t slab = a.size() / static_cast<size_t>(n);
  Shape os = a.shape;
  os[0] = static_cast<int>(idx.size());
  std::vector<double> out(idx.size() * slab);
  for (size_t p = 0; p < idx.size(); ++p)
    std::copy_n(a.vals().data() + static_cast<size_t>(idx[p]) * slab, slab, out.data() + p * slab);
  Tape* t = common_tape({&a});
  int an = a.node;
  return finish(os, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t p = 0; p < idx.size(); ++p) {
        double* dst = ga.data() + static_cast<size_t>(idx[p]) * slab;
        const double* src = g.data() + p * slab;
        for (size_t c = 0; c < slab; ++c) dst[c] += src[c];
      }
    };
  });
}

Tensor scatter_axis0(const Tensor& a, const std::vector<int>& idx, int n) {
  if (a.ndim() < 1 || a.shape[0] != static_cast<int>(idx.size()))
    throw DataError("scatter_axis0: first extent must equal index count");
  for (int i : idx)
    if (i < 0 || i >= n) throw DataError("scatter_axis0: index out of range");
  size_t slab = a.size() / idx.size();
  Shape os = a.shape;
  os[0] = n;
  std::vector<double> out(static_cast<size_t>(n) * slab, 0.0);
  for (size_t p = 0; p < idx.size(); ++p) {
    double* dst = out.data() + static_cast<size_t>(idx[p]) * slab;
    const double* src = a.vals().data() + p * slab;
    for (size_t c = 0; c < slab; ++c) dst[c] += src[c];
  }
  Tape* t = common_tape({&a});
  int an = a.node;
  return finish(os, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t p = 0; p < idx.size(); ++p) {
        const double* src = g.data() + static_cast<size_t>(idx[p]) * slab;
        double* dst = ga.data() + p * slab;
        for (size_t c = 0; c < slab; ++c) dst[c] += src[c];
      }
    };
  });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a.at(i);
  Tape* t = common_tape({&a});
  int an = a.node;
  size_t n = a.size();
  return finish(Shape{1}, own({s}), t, [=](int self) {
    return [=](Tape& tp) {
      double g = tp.grad(self)[0];
      std::vector<double>& ga = tp.grad(an);
      for (size_t i = 0; i < n; ++i) ga[i] += g;
    };
  });
}

Tensor sum_last(const Tensor& a) {
  if (a.ndim() < 1) throw DataError("sum_last: rank-0 input");
  size_t d = static_cast<size_t>(a.shape.back());
  size_t rows = a.size() / d;
  Shape os(a.shape.begin(), a.shape.end() - 1);
  if (os.empty()) os = Shape{1};
  std::vector<double> out(rows, 0.0);
  for (size_t r = 0; r < rows; ++r)
    for (size_t j = 0; j < d; ++j) out[r] += a.at(r * d + j);
  Tape* t = common_tape({&a});
  int an = a.node;
  return finish(os, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t r = 0; r < rows; ++r)
        for (size_t j = 0; j < d; ++j) ga[r * d + j] += g[r];
    };
  });
}

Tensor sum_axis0(const Tensor& a) {
  if (a.ndim() < 1) throw DataError("sum_axis0: rank-0 input");
  size_t n = static_cast<size_t>(a.shape[0]);
  size_t slab = a.size() / n;
  Shape os(a.shape.begin() + 1, a.shape.end());
  if (os.empty()) os = Shape{1};
  std::vector<double> out(slab, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t c = 0; c < slab; ++c) out[c] += a.at(i * slab + c);
  Tape* t = common_tape({&a});
  int an = a.node;
  return finish(os, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t i = 0; i < n; ++i)
        for (size_t c = 0; c < slab; ++c) ga[i * slab + c] += g[c];
    };
  });
}

Tensor select_last(const Tensor& a, int k) {
  if (a.ndim() < 1) throw DataError("select_last: rank-0 input");
  size_t d = static_cast<size_t>(a.shape.back());
  if (k < 0 || static_cast<size_t>(k) >= d) throw DataError("select_last: index out of range");
  size_t rows = a.size() / d;
  Shape os(a.shape.begin(), a.shape.end() - 1);
  if (os.empty()) os = Shape{1};
  std::vector<double> out(rows);
  for (size_t r = 0; r < rows; ++r) out[r] = a.at(r * d + static_cast<size_t>(k));
  Tape* t = common_tape({&a});
  int an = a.node;
  return finish(os, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t r = 0; r < rows; ++r) ga[r * d + static_cast<size_t>(k)] += g[r];
    };
  });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DataError("concat_last: no operands");
  Shape lead(parts[0].shape.begin(), parts[0].shape.end() - 1);
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() < 1 || Shape(p.shape.begin(), p.shape.end() - 1) != lead)
      throw DataError("concat_last: leading extents disagree, " + shape_str(parts[0].shape) +
                      " vs " + shape_str(p.shape));
    total += p.shape.back();
  }
  size_t rows = leading(lead, lead.size());
  Shape os = lead;
  os.push_back(total);
  std::vector<double> out(rows * static_cast<size_t>(total));
  size_t off = 0;
  for (const Tensor& p : parts) {
    size_t d = static_cast<size_t>(p.shape.back());
    for (size_t r = 0; r < rows; ++r)
      std::copy_n(p.vals().data() + r * d, d, out.data() + r * static_cast<size_t>(total) + off);
    off += d;
  }
  std::vector<const Tensor*> ptrs;
  for (const Tensor& p : parts) ptrs.push_back(&p);
  Tape* t = nullptr;
  for (const Tensor& p : parts)
    if (p.tracked()) {
      if (t && t != p.tape) throw DataError("operands recorded on different tapes");
      t = p.tape;
    }
  struct Piece {
    int node;
    size_t d;
    size_t off;
  };
  std::vector<Piece> pieces;
  size_t o2 = 0;
  for (const Tensor& p : parts) {
    pieces.push_back(Piece{p.tracked() ? p.node : -1, static_cast<size_t>(p.shape.back()), o2});
    o2 += static_cast<size_t>(p.shape.back());
  }
  size_t tot = static_cast<size_t>(total);
  return finish(os, own(std::move(out)), t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      for (const Piece& pc : pieces) {
        if (pc.node < 0) continue;
        std::vector<double>& gp = tp.grad(pc.node);
        for (size_t r = 0; r < rows; ++r)
          for (size_t j = 0; j < pc.d; ++j) gp[r * pc.d + j] += g[r * tot + pc.off + j];
      }
    };
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw DataError("reshape: " + shape_str(a.shape) + " to " + shape_str(shape) +
                    " changes element count");
  Tape* t = common_tape({&a});
  int an = a.node;
  size_t n = a.size();
  Vals av = a.values;
  return finish(std::move(shape), av, t, [=](int self) {
    return [=](Tape& tp) {
      const std::vector<double>& g = tp.grad(self);
      std::vector<double>& ga = tp.grad(an);
      for (size_t i = 0; i < n; ++i) ga[i] += g[i];
    };
  });
}

}  // namespace eqmap
