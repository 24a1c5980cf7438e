#include "eqgs/descriptor.hpp"

#include <cstring>
#include <fstream>

namespace eqgs {

using nn::Mat;
using nn::Tensor;

DescriptorStack make_descriptor_stack(nn::ParameterStore& store, nn::Rng& rng, int num_layers) {
  if (num_layers < 1) throw UsageError("descriptor stack needs at least one layer");
  DescriptorStack stack;
  for (int l = 0; l < num_layers; ++l) {
    const int in = (l == 0) ? 3 : kDescriptorDim + 3;
    const auto act = (l + 1 == num_layers) ? nn::Activation::None : nn::Activation::Relu;
    stack.layers.push_back(nn::make_mlp_layer(store, rng, "desc." + std::to_string(l), in,
                                              kDescriptorDim, act));
  }
  return stack;
}

Eigen::MatrixXd compute_descriptors(const PointCloud& pc, const NeighborList& nbrs,
                                    const DescriptorStack& stack) {
  pc.check();
  nbrs.check(pc.size(), 0);
  const int n = pc.size();

  Mat h;  // empty at layer 0
  for (size_t l = 0; l < stack.layers.size(); ++l) {
    const nn::MlpLayer& f_h = stack.layers[l];
    Mat next = Mat::Zero(n, f_h.out_dim());
    Mat input(1, f_h.in_dim());
    for (int i = 0; i < n; ++i) {
      const auto& lst = nbrs.neighbors[i];
      if (lst.empty()) throw UsageError("compute_descriptors: node has empty neighbor list");
      Mat acc = Mat::Zero(1, f_h.out_dim());
      for (int k : lst) {
        const Vec3 rel = pc.points[k] - pc.points[i];
        if (l == 0) {
          input << rel.x(), rel.y(), rel.z();
        } else {
          input.leftCols(kDescriptorDim) = h.row(k);
          input.rightCols(3) << rel.x(), rel.y(), rel.z();
        }
        acc += forward_mlp(f_h, input);
      }
      next.row(i) = acc / static_cast<double>(lst.size());
    }
    h = std::move(next);
  }
  return h;
}

Tensor compute_descriptors(nn::Tape& tape, Tensor coords, const EdgeList& edges,
                           const DescriptorStack& stack) {
  const int n = coords.rows();
  Eigen::Map<const Eigen::VectorXd> inv(edges.inv_degree.data(), n);
  Tensor inv_deg = tape.constant(inv);

  Tensor xi = gather_rows(coords, edges.target);
  Tensor xk = gather_rows(coords, edges.source);
  Tensor rel = xk - xi;

  Tensor h;  // invalid until after layer 0
  for (size_t l = 0; l < stack.layers.size(); ++l) {
    Tensor input = (l == 0) ? rel : concat_cols(gather_rows(h, edges.source), rel);
    Tensor per_edge = forward_mlp(stack.layers[l], input);
    Tensor summed = scatter_sum_rows(per_edge, edges.target, n);
    h = mul_col_vec(summed, inv_deg);
  }
  return h;
}

namespace {

void write_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw UsageError("truncated EQDF file: " + path);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_eqdf(const std::string& path, const Eigen::MatrixXd& descriptors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write EQDF file: " + path);
  out.write("EQDF", 4);
  write_u32(out, static_cast<uint32_t>(descriptors.rows()));
  write_u32(out, static_cast<uint32_t>(descriptors.cols()));
  for (int r = 0; r < descriptors.rows(); ++r)
    for (int c = 0; c < descriptors.cols(); ++c) {
      const float f = static_cast<float>(descriptors(r, c));
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      write_u32(out, bits);
    }
  if (!out) throw UsageError("failed writing EQDF file: " + path);
}

Eigen::MatrixXd read_eqdf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open EQDF file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "EQDF", 4) != 0)
    throw UsageError("not an EQDF file (bad magic): " + path);
  const uint32_t count = read_u32(in, path);
  const uint32_t dim = read_u32(in, path);
  Eigen::MatrixXd m(count, dim);
  for (uint32_t r = 0; r < count; ++r)
    for (uint32_t c = 0; c < dim; ++c) {
      const uint32_t bits = read_u32(in, path);
      float f;
      std::memcpy(&f, &bits, 4);
      m(r, c) = static_cast<double>(f);
    }
  return m;
}

PointCloud ingest_descriptors(const PointCloud& pc, const std::string& path) {
  pc.check();
  Eigen::MatrixXd d = read_eqdf(path);
  if (d.rows() != pc.size())
    throw UsageError("descriptor file " + path + " has " + std::to_string(d.rows()) +
                     " rows but the cloud has " + std::to_string(pc.size()) + " points");
  if (d.cols() != kDescriptorDim)
    throw UsageError("descriptor file " + path + " has dim " + std::to_string(d.cols()) +
                     ", expected " + std::to_string(kDescriptorDim));
  PointCloud out = pc;
  out.descriptors = std::move(d);
  return out;
}

}  // namespace eqgs
