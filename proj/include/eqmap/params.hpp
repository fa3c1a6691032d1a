#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eqmap/tensor.hpp"

namespace eqmap {

enum class Init { UniformFanIn, Zeros, Ones };

struct Param {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty = no gradient accumulated
  std::vector<double> m, v;  // Adam moments
  long step = 0;
};

// Named parameters plus their optimizer state. Creation is lazy and each
// parameter's initial values are drawn from a stream keyed on (seed, path),
// so creation order never affects the numbers.
struct ParameterStore {
  uint64_t seed = 0;
  std::map<std::string, Param> params;

  Param& fetch(const std::string& path, const Shape& shape, int fan_in, Init init);

  void zero_grads();
  // give every parameter a zero gradient buffer if it has none
  void ensure_grads();
  size_t param_count() const;
};

// Bias-corrected Adam over all parameters in path order; gradients are
// consumed (zeroed). A parameter without a gradient buffer is an error.
void adam_step(ParameterStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// Checkpoint container: format header, embedded config text, then
// (path, shape, values, adam state) records. load(save(x)) is value-identical
// and save(load(f)) reproduces f byte for byte.
void save_checkpoint(const ParameterStore& store, const std::string& config_text,
                     const std::string& path);
struct LoadedCheckpoint {
  std::string config_text;
  ParameterStore store;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// Binds a ParameterStore to a Tape for one recorded evaluation: param()
// returns (and caches) a leaf tensor per path, and harvest() moves the leaf
// gradients back into the store after backward. With a null tape parameters
// enter the graph as constants (inference mode).
struct ModelContext {
  ParameterStore& store;
  Tape* tape = nullptr;

  ModelContext(ParameterStore& s, Tape* t) : store(s), tape(t) {}

  Tensor param(const std::string& path, const Shape& shape, int fan_in,
               Init init = Init::UniformFanIn);

  // accumulate tape gradients of every touched parameter into the store and
  // clear the tape
  void harvest();

 private:
  std::map<std::string, Tensor> cache_;
};

}  // namespace eqmap
