#include "eqgs/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace eqgs::nn {

uint64_t derive_seed(uint64_t master, uint64_t index) {
  uint64_t x = master ^ (0x9e3779b97f4a7c15ull * (index + 1));
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

Parameter& ParameterStore::create(const std::string& name, int rows, int cols) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat();
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return *params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return *params_[it->second];
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p->grad = Mat();
}

namespace {

void write_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64(std::ofstream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

bool read_u32(std::ifstream& in, uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return true;
}

double read_f64(std::ifstream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw UsageError("truncated checkpoint file: " + path);
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write checkpoint: " + path);
  out.write("EQGS", 4);
  write_u32(out, kCheckpointVersion);
  for (const auto& p : store.all()) {
    write_u32(out, static_cast<uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(out, 2);
    write_u32(out, static_cast<uint32_t>(p->value.rows()));
    write_u32(out, static_cast<uint32_t>(p->value.cols()));
    for (int r = 0; r < p->value.rows(); ++r)
      for (int c = 0; c < p->value.cols(); ++c) write_f64(out, p->value(r, c));
  }
  if (!out) throw UsageError("failed writing checkpoint: " + path);
}

void load_checkpoint(const std::string& path, ParameterStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "EQGS", 4) != 0)
    throw UsageError("not a checkpoint file (bad magic): " + path);
  uint32_t version;
  if (!read_u32(in, version) || version != kCheckpointVersion)
    throw UsageError("unsupported checkpoint version in " + path);

  size_t loaded = 0;
  uint32_t name_len;
  while (read_u32(in, name_len)) {
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw UsageError("truncated checkpoint file: " + path);
    uint32_t rank;
    if (!read_u32(in, rank) || rank != 2)
      throw UsageError("checkpoint parameter '" + name + "' has unsupported rank");
    uint32_t rows, cols;
    if (!read_u32(in, rows) || !read_u32(in, cols))
      throw UsageError("truncated checkpoint file: " + path);
    if (!store.has(name))
      throw UsageError("checkpoint parameter '" + name + "' does not exist in this model");
    Parameter& p = store.get(name);
    if (p.value.rows() != static_cast<int>(rows) || p.value.cols() != static_cast<int>(cols))
      throw UsageError("checkpoint parameter '" + name + "' has mismatched shape");
    for (uint32_t r = 0; r < rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) p.value(r, c) = read_f64(in, path);
    ++loaded;
  }
  if (loaded != store.count())
    throw UsageError("checkpoint is missing parameters (" + std::to_string(loaded) + " of " +
                     std::to_string(store.count()) + "): " + path);
}

Tensor forward_mlp(const MlpLayer& layer, Tensor x) {
  if (x.cols() != layer.in_dim()) throw UsageError("forward_mlp: input width mismatch");
  Tape& tape = *x.tape;
  Tensor w = tape.param(*layer.weight);
  Tensor b = tape.param(*layer.bias);
  Tensor y = add_row_vec(matmul(x, transpose(w)), b);
  switch (layer.act) {
    case Activation::None: return y;
    case Activation::Relu: return relu(y);
    case Activation::Tanh: return tanh_t(y);
  }
  return y;
}

Mat forward_mlp(const MlpLayer& layer, const Mat& x) {
  if (x.cols() != layer.in_dim()) throw UsageError("forward_mlp: input width mismatch");
  Mat y = x * layer.weight->value.transpose();
  y.rowwise() += layer.bias->value.row(0);
  switch (layer.act) {
    case Activation::None: break;
    case Activation::Relu: y = y.cwiseMax(0.0); break;
    case Activation::Tanh: y = y.array().tanh(); break;
  }
  if (!y.allFinite()) throw NumericError("forward_mlp produced non-finite values");
  return y;
}

Tensor MlpStack::forward(Tensor x) const {
  for (const auto& l : layers) x = forward_mlp(l, x);
  return x;
}

Mat MlpStack::forward(const Mat& x) const {
  Mat y = x;
  for (const auto& l : layers) y = forward_mlp(l, y);
  return y;
}

MlpLayer make_mlp_layer(ParameterStore& store, Rng& rng, const std::string& name, int in, int out,
                        Activation act) {
  MlpLayer layer;
  layer.weight = &store.create(name + ".weight", out, in);
  layer.bias = &store.create(name + ".bias", 1, out);
  const double bound = std::sqrt(6.0 / in);
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < in; ++c) layer.weight->value(r, c) = rng.uniform(-bound, bound);
  layer.act = act;
  return layer;
}

MlpStack make_mlp_stack(ParameterStore& store, Rng& rng, const std::string& name,
                        const std::vector<int>& widths) {
  if (widths.size() < 2) throw Error("make_mlp_stack: need at least in/out widths");
  MlpStack stack;
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = (i + 2 == widths.size());
    stack.layers.push_back(make_mlp_layer(store, rng, name + "." + std::to_string(i), widths[i],
                                          widths[i + 1],
                                          last ? Activation::None : Activation::Relu));
  }
  return stack;
}

namespace {

void write_i64(std::ostream& out, int64_t v) {
  unsigned char b[8];
  const uint64_t u = static_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

int64_t read_i64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw UsageError("truncated optimizer state");
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  return static_cast<int64_t>(u);
}

void write_mat(std::ostream& out, const Mat& m) {
  write_i64(out, m.rows());
  write_i64(out, m.cols());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      uint64_t bits;
      const double v = m(r, c);
      std::memcpy(&bits, &v, 8);
      write_i64(out, static_cast<int64_t>(bits));
    }
}

Mat read_mat(std::istream& in) {
  const int64_t rows = read_i64(in);
  const int64_t cols = read_i64(in);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const uint64_t bits = static_cast<uint64_t>(read_i64(in));
      double v;
      std::memcpy(&v, &bits, 8);
      m(r, c) = v;
    }
  return m;
}

}  // namespace

void Adam::serialize(std::ostream& out) const {
  write_i64(out, t_);
  write_i64(out, static_cast<int64_t>(m_.size()));
  for (size_t i = 0; i < m_.size(); ++i) {
    write_mat(out, m_[i]);
    write_mat(out, v_[i]);
  }
}

void Adam::deserialize(std::istream& in, const ParameterStore& store) {
  t_ = read_i64(in);
  const int64_t count = read_i64(in);
  if (count != 0 && count != static_cast<int64_t>(store.count()))
    throw UsageError("optimizer state does not match the model's parameter count");
  m_.clear();
  v_.clear();
  for (int64_t i = 0; i < count; ++i) {
    m_.push_back(read_mat(in));
    v_.push_back(read_mat(in));
  }
}

void Adam::step(ParameterStore& store) {
  if (m_.empty()) {
    m_.resize(store.count());
    v_.resize(store.count());
    for (size_t i = 0; i < store.count(); ++i) {
      const Mat& val = store.all()[i]->value;
      m_[i] = Mat::Zero(val.rows(), val.cols());
      v_[i] = Mat::Zero(val.rows(), val.cols());
    }
  }
  if (m_.size() != store.count()) throw Error("Adam state does not match parameter store");

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < store.count(); ++i) {
    Parameter& p = *store.all()[i];
    const Mat g = p.grad.size() == 0 ? Mat::Zero(p.value.rows(), p.value.cols()) : p.grad;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Mat m_hat = m_[i] / bc1;
    const Mat v_hat = v_[i] / bc2;
    p.value.array() -= lr_ * m_hat.array() / (v_hat.array().sqrt() + eps_);
    if (!p.value.allFinite()) throw NumericError("Adam produced non-finite parameter " + p.name);
  }
}

}  // namespace eqgs::nn
