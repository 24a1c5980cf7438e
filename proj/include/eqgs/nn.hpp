#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "eqgs/tensor.hpp"

namespace eqgs::nn {

// Deterministic scalar RNG (Box-Muller on mt19937_64); identical streams on
// every platform for a given seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double uniform() {  // in (0, 1]
    return (static_cast<double>(gen_()) + 1.0) / 18446744073709551616.0;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mu, double sigma) {
    const double u1 = uniform();
    const double u2 = uniform();
    return mu + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }
  uint64_t raw() { return gen_(); }
  // Independent child stream, for per-item seeding.
  uint64_t derive(uint64_t index) {
    uint64_t x = seed_mix_ ^ (0x9e3779b97f4a7c15ull * (index + 1));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
  }
  void set_mix(uint64_t m) { seed_mix_ = m; }

 private:
  std::mt19937_64 gen_;
  uint64_t seed_mix_{0};
};

uint64_t derive_seed(uint64_t master, uint64_t index);

// Owns all trainable parameters in creation order (deterministic iteration).
class ParameterStore {
 public:
  Parameter& create(const std::string& name, int rows, int cols);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  std::vector<std::unique_ptr<Parameter>>& all() { return params_; }
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  void zero_grads();
  size_t count() const { return params_.size(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, size_t> index_;
};

// Checkpoint file: magic "EQGS", u32 version, then per parameter
// (u32 name length, name bytes, u32 rank, u32 dims..., row-major f64 LE values).
void save_checkpoint(const std::string& path, const ParameterStore& store);
void load_checkpoint(const std::string& path, ParameterStore& store);

enum class Activation { None, Relu, Tanh };

// One dense map y = act(W x + b), applied to row-major batches (each input row
// is a sample).
struct MlpLayer {
  Parameter* weight{nullptr};  // out x in
  Parameter* bias{nullptr};    // 1 x out
  Activation act{Activation::None};

  int in_dim() const { return static_cast<int>(weight->value.cols()); }
  int out_dim() const { return static_cast<int>(weight->value.rows()); }
};

Tensor forward_mlp(const MlpLayer& layer, Tensor x);
Mat forward_mlp(const MlpLayer& layer, const Mat& x);

// Dense layers applied in sequence.
struct MlpStack {
  std::vector<MlpLayer> layers;

  Tensor forward(Tensor x) const;
  Mat forward(const Mat& x) const;
};

// Kaiming-uniform fan-in weights, zero bias.
MlpLayer make_mlp_layer(ParameterStore& store, Rng& rng, const std::string& name, int in, int out,
                        Activation act);

// widths = {in, h1, ..., out}; ReLU on hidden layers, none on the output.
MlpStack make_mlp_stack(ParameterStore& store, Rng& rng, const std::string& name,
                        const std::vector<int>& widths);

// Standard Adam with bias correction; moment state keyed by parameter order.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& store);
  long steps_taken() const { return t_; }

  // Moment state, for bit-exact training resume.
  void serialize(std::ostream& out) const;
  void deserialize(std::istream& in, const ParameterStore& store);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_{0};
  std::vector<Mat> m_, v_;
};

}  // namespace eqgs::nn
