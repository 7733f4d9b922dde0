#include "embattr/projection_head.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "embattr/error.hpp"
#include "embattr/random.hpp"

namespace embattr {

namespace {

constexpr std::array<char, 4> kHeadMagic = {'H', 'E', 'A', 'D'};
constexpr std::uint32_t kHeadVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (auto& c : b) {
    c = static_cast<char>(v & 0xFFu);
    v >>= 8;
  }
  out.write(b.data(), 4);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw Error(Errc::truncated, std::string("HEAD stream ends inside ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void apply_activation(Matrix& m, Activation act) {
  if (act == Activation::relu) m = m.cwiseMax(0.0);
}

}  // namespace

ProjectionHead::ProjectionHead(std::vector<std::size_t> layer_dims, Activation activation)
    : dims_(std::move(layer_dims)), activation_(activation) {
  if (dims_.size() < 2) throw Error(Errc::configuration, "a head needs at least one layer");
  for (const auto d : dims_) {
    if (d == 0) throw Error(Errc::configuration, "layer dimensions must be positive");
  }
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const auto out = static_cast<Eigen::Index>(dims_[l + 1]);
    const auto in = static_cast<Eigen::Index>(dims_[l]);
    weights_.push_back(Matrix::Zero(out, in));
    biases_.push_back(Vector::Zero(out));
  }
}

ProjectionHead ProjectionHead::init_uniform(std::vector<std::size_t> layer_dims,
                                            std::uint64_t seed, Activation activation) {
  ProjectionHead head(std::move(layer_dims), activation);
  Rng rng(seed);
  for (std::size_t l = 0; l < head.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(head.dims_[l]));
    auto draw = [&] { return (2.0 * rng.uniform01() - 1.0) * bound; };
    auto& w = head.weights_[l];
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = draw();
    auto& b = head.biases_[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = draw();
  }
  return head;
}

Matrix ProjectionHead::forward(const Matrix& inputs) const {
  Tape tape;
  return forward(inputs, tape);
}

Matrix ProjectionHead::forward(const Matrix& inputs, Tape& tape) const {
  if (static_cast<std::size_t>(inputs.cols()) != input_dim()) {
    throw Error(Errc::dimension, "head expects inputs of width " + std::to_string(input_dim()) +
                                     ", got " + std::to_string(inputs.cols()));
  }
  if (!inputs.allFinite()) throw Error(Errc::non_finite, "head input contains non-finite entries");
  tape.inputs.clear();
  tape.pre.clear();
  Matrix h = inputs;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Matrix a = h * weights_[l].transpose();
    a.rowwise() += biases_[l].transpose();
    tape.inputs.push_back(std::move(h));
    tape.pre.push_back(a);
    if (l + 1 < layer_count()) apply_activation(a, activation_);
    h = std::move(a);
  }
  return h;
}

ProjectionHead::Gradients ProjectionHead::backward(const Tape& tape,
                                                   const Matrix& grad_output) const {
  if (tape.pre.size() != layer_count()) throw Error(Errc::validation, "tape does not match head");
  Gradients grads;
  grads.weights.resize(layer_count());
  grads.biases.resize(layer_count());
  Matrix g = grad_output;
  for (std::size_t l = layer_count(); l-- > 0;) {
    if (l + 1 < layer_count() && activation_ == Activation::relu) {
      g = g.cwiseProduct((tape.pre[l].array() > 0.0).cast<double>().matrix());
    }
    grads.weights[l] = g.transpose() * tape.inputs[l];
    grads.biases[l] = g.colwise().sum().transpose();
    if (l > 0) g = g * weights_[l];
  }
  return grads;
}

std::vector<double> ProjectionHead::parameters() const {
  std::vector<double> p;
  p.reserve(parameter_count());
  for (std::size_t l = 0; l < layer_count(); ++l) {
    p.insert(p.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
    p.insert(p.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
  }
  return p;
}

void ProjectionHead::set_parameters(const std::vector<double>& params) {
  if (params.size() != parameter_count()) {
    throw Error(Errc::dimension, "parameter vector has the wrong length");
  }
  std::size_t k = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    for (Eigen::Index i = 0; i < weights_[l].size(); ++i) weights_[l].data()[i] = params[k++];
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l][i] = params[k++];
  }
}

std::size_t ProjectionHead::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

void ProjectionHead::step(const Gradients& grads, double learning_rate) {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    weights_[l] -= learning_rate * grads.weights[l];
    biases_[l] -= learning_rate * grads.biases[l];
  }
}

bool ProjectionHead::all_finite() const {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
  }
  return true;
}

bool operator==(const ProjectionHead& a, const ProjectionHead& b) {
  return a.dims_ == b.dims_ && a.activation_ == b.activation_ && a.parameters() == b.parameters();
}

EmbeddingSet project(const ProjectionHead& head, const EmbeddingSet& set) {
  if (set.dim() != head.input_dim()) {
    throw Error(Errc::dimension, "data width " + std::to_string(set.dim()) +
                                     " does not match head input " +
                                     std::to_string(head.input_dim()));
  }
  std::vector<LabelId> ids(set.label_ids().begin(), set.label_ids().end());
  if (set.empty()) return EmbeddingSet(head.output_dim(), set.labels());
  return EmbeddingSet::from_matrix(set.labels(), std::move(ids), head.forward(set.to_matrix()));
}

void write_head(const ProjectionHead& head, std::ostream& out) {
  if (head.activation() != Activation::relu && head.layer_count() > 1) {
    throw Error(Errc::configuration, "checkpoints store rectifier heads only");
  }
  out.write(kHeadMagic.data(), kHeadMagic.size());
  write_u32(out, kHeadVersion);
  write_u32(out, static_cast<std::uint32_t>(head.layer_count()));
  for (const auto d : head.layer_dims()) write_u32(out, static_cast<std::uint32_t>(d));
  for (const double p : head.parameters()) {
    write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p)));
  }
  if (!out) throw Error(Errc::io, "failed writing head checkpoint");
}

ProjectionHead read_head(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4) throw Error(Errc::truncated, "HEAD stream ends inside magic");
  if (magic != kHeadMagic) throw Error(Errc::bad_magic, "stream does not start with HEAD magic");
  const auto version = read_u32(in, "version");
  if (version != kHeadVersion) {
    throw Error(Errc::unsupported_version, "unsupported HEAD version " + std::to_string(version));
  }
  const auto layers = read_u32(in, "layer count");
  if (layers == 0 || layers > 1024) throw Error(Errc::validation, "implausible layer count");
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i <= layers; ++i) dims.push_back(read_u32(in, "layer dims"));
  ProjectionHead head(std::move(dims));
  std::vector<double> params(head.parameter_count());
  for (auto& p : params) {
    const float x = std::bit_cast<float>(read_u32(in, "parameters"));
    if (!std::isfinite(x)) throw Error(Errc::non_finite, "non-finite head parameter");
    p = x;
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(Errc::validation, "trailing bytes after head parameters");
  }
  head.set_parameters(params);
  return head;
}

void save_head(const ProjectionHead& head, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  write_head(head, out);
  out.close();
  if (!out) throw Error(Errc::io, "failed closing " + path.string());
}

ProjectionHead load_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return read_head(in);
}

}  // namespace embattr
