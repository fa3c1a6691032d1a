#include "eqmap/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "eqmap/rng.hpp"

namespace eqmap {

namespace {
constexpr char kMagic[] = "EQMAPCKPT1\n";
}

Param& ParameterStore::fetch(const std::string& path, const Shape& shape, int fan_in, Init init) {
  auto it = params.find(path);
  if (it != params.end()) {
    if (it->second.shape != shape)
      throw DataError("parameter " + path + " already exists with shape " +
                      shape_str(it->second.shape) + ", requested " + shape_str(shape));
    return it->second;
  }
  Param p;
  p.shape = shape;
  size_t n = numel(shape);
  p.value.resize(n);
  switch (init) {
    case Init::Zeros:
      std::fill(p.value.begin(), p.value.end(), 0.0);
      break;
    case Init::Ones:
      std::fill(p.value.begin(), p.value.end(), 1.0);
      break;
    case Init::UniformFanIn: {
      if (fan_in <= 0) throw DataError("parameter " + path + ": fan_in must be positive");
      double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Rng r = Rng(seed).fork("param/" + path);
      for (double& x : p.value) x = r.uniform(-b, b);
      break;
    }
  }
  return params.emplace(path, std::move(p)).first->second;
}

void ParameterStore::zero_grads() {
  for (auto& [k, p] : params) {
    (void)k;
    p.grad.clear();
  }
}

void ParameterStore::ensure_grads() {
  for (auto& [k, p] : params) {
    (void)k;
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
  }
}

size_t ParameterStore::param_count() const {
  size_t n = 0;
  for (const auto& [k, p] : params) {
    (void)k;
    n += p.value.size();
  }
  return n;
}

void adam_step(ParameterStore& store, double lr, double beta1, double beta2, double eps) {
  for (auto& [path, p] : store.params) {
    if (p.grad.empty()) throw DataError("adam_step: missing gradient for parameter " + path);
    if (p.m.empty()) {
      p.m.assign(p.value.size(), 0.0);
      p.v.assign(p.value.size(), 0.0);
    }
    p.step += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p.step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p.step));
    for (size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      p.m[i] = beta1 * p.m[i] + (1.0 - beta1) * g;
      p.v[i] = beta2 * p.v[i] + (1.0 - beta2) * g * g;
      double mhat = p.m[i] / bc1;
      double vhat = p.v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    p.grad.clear();
  }
}

namespace {

void put_u32(std::ostream& os, uint32_t x) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double x) {
  uint64_t u;
  std::memcpy(&u, &x, 8);
  put_u64(os, u);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint truncated");
  uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<uint32_t>(b[i]) << (8 * i);
  return x;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw DataError("checkpoint truncated");
  uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<uint64_t>(b[i]) << (8 * i);
  return x;
}

double get_f64(std::istream& is) {
  uint64_t u = get_u64(is);
  double x;
  std::memcpy(&x, &u, 8);
  return x;
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
  put_u64(os, v.size());
  for (double x : v) put_f64(os, x);
}

std::vector<double> get_vec(std::istream& is) {
  uint64_t n = get_u64(is);
  std::vector<double> v(n);
  for (uint64_t i = 0; i < n; ++i) v[i] = get_f64(is);
  return v;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::string& config_text,
                     const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic) - 1);
  put_u64(os, store.seed);
  put_u32(os, static_cast<uint32_t>(config_text.size()));
  os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  put_u32(os, static_cast<uint32_t>(store.params.size()));
  for (const auto& [name, p] : store.params) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<uint32_t>(p.shape.size()));
    for (int d : p.shape) put_u32(os, static_cast<uint32_t>(d));
    put_vec(os, p.value);
    put_vec(os, p.m);
    put_vec(os, p.v);
    put_u64(os, static_cast<uint64_t>(p.step));
  }
  if (!os) throw DataError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic) - 1];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw DataError("not a checkpoint file: " + path);
  LoadedCheckpoint out;
  out.store.seed = get_u64(is);
  uint32_t clen = get_u32(is);
  out.config_text.resize(clen);
  is.read(out.config_text.data(), clen);
  if (!is) throw DataError("checkpoint truncated");
  uint32_t count = get_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t nlen = get_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    if (!is) throw DataError("checkpoint truncated");
    Param p;
    uint32_t nd = get_u32(is);
    p.shape.resize(nd);
    for (uint32_t d = 0; d < nd; ++d) p.shape[d] = static_cast<int>(get_u32(is));
    p.value = get_vec(is);
    p.m = get_vec(is);
    p.v = get_vec(is);
    p.step = static_cast<long>(get_u64(is));
    if (p.value.size() != numel(p.shape))
      throw DataError("checkpoint parameter " + name + " has inconsistent shape");
    out.store.params.emplace(std::move(name), std::move(p));
  }
  return out;
}

Tensor ModelContext::param(const std::string& path, const Shape& shape, int fan_in, Init init) {
  auto it = cache_.find(path);
  if (it != cache_.end()) {
    if (it->second.shape != shape)
      throw DataError("parameter " + path + " requested with shape " + shape_str(shape) +
                      " but bound as " + shape_str(it->second.shape));
    return it->second;
  }
  Param& p = store.fetch(path, shape, fan_in, init);
  Tensor t = constant(shape, p.value);
  if (tape) {
    t.tape = tape;
    t.node = tape->leaf(t.size());
  }
  cache_.emplace(path, t);
  return t;
}

void ModelContext::harvest() {
  if (!tape) return;
  if (!tape->has_grads()) throw DataError("harvest: backward has not run");
  for (auto& [path, t] : cache_) {
    Param& p = store.params.at(path);
    const std::vector<double>& g = tape->grad(t.node);
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
  }
  tape->clear();
  cache_.clear();
}

}  // namespace eqmap
