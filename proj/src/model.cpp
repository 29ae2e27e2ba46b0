#include "amc/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

namespace amc {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

ModelParams init_model(const EncoderShape& shape, std::uint64_t seed) {
  shape.validate();
  const Rng root(seed);
  Rng enc_rng = root.derive(0x656e63);
  Rng head_rng = root.derive(0x68656164);
  Rng attn_rng = root.derive(0x617474);
  ModelParams m;
  m.shape = shape;
  m.encoder = init_encoder(shape, enc_rng);
  for (int k = 0; k < shape.num_layers(); ++k) {
    m.heads.push_back(init_projection_head(shape.hidden_dim, shape.hidden_dim, head_rng));
  }
  m.attention = init_attention(shape.num_layers(), shape.hidden_dim, shape.hidden_dim, attn_rng);
  return m;
}

namespace {

template <class M, class Fn>
void visit(M& m, Fn&& fn) {
  const std::string kind(to_string(m.shape.kind));
  for (std::size_t l = 0; l < m.encoder.target.size(); ++l) {
    fn(kind + ".target." + std::to_string(l) + ".weight", m.encoder.target[l]);
    if (l < m.encoder.target_slopes.size()) fn(kind + ".target." + std::to_string(l) + ".slope", m.encoder.target_slopes[l]);
  }
  for (std::size_t l = 0; l < m.encoder.aux.size(); ++l) {
    fn(kind + ".aux." + std::to_string(l) + ".weight", m.encoder.aux[l]);
    if (l < m.encoder.aux_slopes.size()) fn(kind + ".aux." + std::to_string(l) + ".slope", m.encoder.aux_slopes[l]);
  }
  for (std::size_t k = 0; k < m.heads.size(); ++k) {
    fn("head." + std::to_string(k) + ".w1", m.heads[k].w1);
    fn("head." + std::to_string(k) + ".w2", m.heads[k].w2);
  }
  for (std::size_t k = 0; k < m.attention.q.size(); ++k) {
    fn("attention." + std::to_string(k) + ".q", m.attention.q[k]);
    fn("attention." + std::to_string(k) + ".w", m.attention.w[k]);
  }
  fn(std::string("attention.bias"), m.attention.bias);
}

}  // namespace

void for_each_param(ModelParams& m, const std::function<void(const std::string&, Matrix&)>& fn) { visit(m, fn); }

void for_each_param(const ModelParams& m, const std::function<void(const std::string&, const Matrix&)>& fn) {
  visit(m, fn);
}

std::size_t parameter_count(const ModelParams& m) {
  std::size_t n = 0;
  for_each_param(m, [&](const std::string&, const Matrix& x) { n += static_cast<std::size_t>(x.size()); });
  return n;
}

ModelVars attach(const ModelParams& m, std::span<const ad::Var> leaves) {
  std::size_t next = 0;
  auto take = [&]() {
    if (next >= leaves.size()) throw DimensionError("attach: fewer leaves than parameters");
    return leaves[next++];
  };
  ModelVars v;
  v.encoder.activation = m.shape.activation;
  v.encoder.kind = m.shape.kind;
  // Mirrors the for_each_param order.
  for (std::size_t l = 0; l < m.encoder.target.size(); ++l) {
    v.encoder.target.push_back(take());
    if (l < m.encoder.target_slopes.size()) v.encoder.target_slopes.push_back(take());
  }
  for (std::size_t l = 0; l < m.encoder.aux.size(); ++l) {
    v.encoder.aux.push_back(take());
    if (l < m.encoder.aux_slopes.size()) v.encoder.aux_slopes.push_back(take());
  }
  for (std::size_t k = 0; k < m.heads.size(); ++k) {
    HeadVars hv;
    hv.w1 = take();
    hv.w2 = take();
    v.heads.push_back(hv);
  }
  for (std::size_t k = 0; k < m.attention.q.size(); ++k) {
    v.attention.q.push_back(take());
    v.attention.w.push_back(take());
  }
  v.attention.bias = take();
  if (next != leaves.size()) throw DimensionError("attach: more leaves than parameters");
  v.leaves.assign(leaves.begin(), leaves.end());
  return v;
}

ModelVars bind(ad::Tape& tape, const ModelParams& m) {
  std::vector<ad::Var> leaves;
  for_each_param(m, [&](const std::string& name, const Matrix& x) { leaves.push_back(tape.leaf(x, true, name)); });
  return attach(m, leaves);
}

namespace {

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}

  template <class T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) fail("unexpected end of file");
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 16)) fail("implausible name length " + std::to_string(n));
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) fail("unexpected end of file");
    return s;
  }

  void read_doubles(double* dst, std::size_t count) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in_) fail("unexpected end of file");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw DatasetError(file_ + ": " + msg); }

 private:
  std::istream& in_;
  std::string file_;
};

// Splits "gcn.target.3.weight" into its dotted parts.
std::vector<std::string> split_name(const std::string& name) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = name.find('.', start);
    parts.push_back(name.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return parts;
}

}  // namespace

void save_model(const ModelParams& m, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DatasetError(file.string() + ": cannot open for writing");
  out.write("AMCG", 4);
  put<std::uint32_t>(out, kModelFormatVersion);
  std::vector<std::string> names;
  std::vector<const Matrix*> tensors;
  for_each_param(m, [&](const std::string& name, const Matrix& x) {
    names.push_back(name);
    tensors.push_back(&x);
  });
  put<std::uint32_t>(out, static_cast<std::uint32_t>(names.size()));
  for (const std::string& n : names) put_string(out, n);
  for (const Matrix* x : tensors) {
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(x->rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(x->cols()));
    out.write(reinterpret_cast<const char*>(x->data()), static_cast<std::streamsize>(x->size() * sizeof(double)));
  }
  if (!out) throw DatasetError(file.string() + ": write failed");
}

ModelParams load_model(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DatasetError(file.string() + ": cannot open model file");
  Reader r(in, file.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "AMCG", 4) != 0) r.fail("not a model file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) r.fail("unsupported format version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  if (count > (1u << 16)) r.fail("implausible tensor count");
  std::vector<std::string> names(count);
  for (auto& n : names) n = r.get_string();

  std::map<std::string, Matrix> tensors;
  for (const std::string& name : names) {
    const auto rank = r.get<std::uint32_t>();
    if (rank != 2) r.fail(name + ": expected rank 2, got " + std::to_string(rank));
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows > (1ull << 24) || cols > (1ull << 24) || rows * cols > (1ull << 28)) r.fail(name + ": implausible shape");
    Matrix x(static_cast<Index>(rows), static_cast<Index>(cols));
    r.read_doubles(x.data(), static_cast<std::size_t>(x.size()));
    if (!tensors.emplace(name, std::move(x)).second) r.fail("duplicate tensor " + name);
  }

  ModelParams m;
  std::string kind_name;
  std::map<int, Matrix> target, aux, target_slopes, aux_slopes, w1, w2, q, w;
  for (auto& [name, x] : tensors) {
    const auto parts = split_name(name);
    auto index = [&](const std::string& s) {
      try {
        return std::stoi(s);
      } catch (const std::exception&) {
        r.fail("bad index in tensor name " + name);
      }
    };
    if (parts.size() == 4 && (parts[1] == "target" || parts[1] == "aux")) {
      if (!kind_name.empty() && kind_name != parts[0]) r.fail("mixed encoder kinds");
      kind_name = parts[0];
      const bool is_target = parts[1] == "target";
      if (parts[3] == "weight") {
        (is_target ? target : aux)[index(parts[2])] = x;
      } else if (parts[3] == "slope") {
        (is_target ? target_slopes : aux_slopes)[index(parts[2])] = x;
      } else {
        r.fail("unknown tensor " + name);
      }
    } else if (parts.size() == 3 && parts[0] == "head" && (parts[2] == "w1" || parts[2] == "w2")) {
      (parts[2] == "w1" ? w1 : w2)[index(parts[1])] = x;
    } else if (parts.size() == 3 && parts[0] == "attention" && (parts[2] == "q" || parts[2] == "w")) {
      (parts[2] == "q" ? q : w)[index(parts[1])] = x;
    } else if (name == "attention.bias") {
      m.attention.bias = x;
    } else {
      r.fail("unknown tensor " + name);
    }
  }

  auto dense = [&](std::map<int, Matrix>& src, const char* what) {
    std::vector<Matrix> out;
    for (auto& [i, x] : src) {
      if (i != static_cast<int>(out.size())) r.fail(std::string("missing ") + what + " " + std::to_string(out.size()));
      out.push_back(std::move(x));
    }
    return out;
  };
  try {
    m.shape.kind = parse_encoder_kind(kind_name);
  } catch (const ConfigError&) {
    r.fail("unknown encoder kind '" + kind_name + "'");
  }
  m.encoder.target = dense(target, "target layer");
  m.encoder.aux = dense(aux, "auxiliary layer");
  m.encoder.target_slopes = dense(target_slopes, "target slope");
  m.encoder.aux_slopes = dense(aux_slopes, "auxiliary slope");
  const std::vector<Matrix> w1s = dense(w1, "head"), w2s = dense(w2, "head");
  if (w1s.size() != w2s.size()) r.fail("incomplete projection heads");
  for (std::size_t k = 0; k < w1s.size(); ++k) m.heads.push_back({w1s[k], w2s[k]});
  m.attention.q = dense(q, "attention q");
  m.attention.w = dense(w, "attention w");

  if (m.encoder.target.empty()) r.fail("no target layers");
  const bool prelu = !m.encoder.target_slopes.empty();
  if (prelu && (m.encoder.target_slopes.size() != m.encoder.target.size() ||
                m.encoder.aux_slopes.size() != m.encoder.aux.size())) {
    r.fail("slope count differs from layer count");
  }
  m.shape.activation = prelu ? Activation::prelu : Activation::relu;
  m.shape.target_layers = static_cast<int>(m.encoder.target.size());
  m.shape.aux_layers = static_cast<int>(m.encoder.aux.size());
  m.shape.hidden_dim = m.encoder.target.front().cols();
  const Index fan = m.shape.kind == EncoderKind::sage ? 2 : 1;
  m.shape.in_dim = m.encoder.target.front().rows() / fan;

  // Every tensor must have the shape a fresh model of this shape would have.
  const ModelParams expect = init_model(m.shape, 0);
  std::vector<std::pair<std::string, std::pair<Index, Index>>> want;
  for_each_param(expect, [&](const std::string& name, const Matrix& x) { want.push_back({name, {x.rows(), x.cols()}}); });
  if (want.size() != tensors.size()) r.fail("tensor set does not match encoder shape");
  for (const auto& [name, dims] : want) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) r.fail("missing tensor " + name);
    if (it->second.rows() != dims.first || it->second.cols() != dims.second) {
      r.fail(name + ": shape " + shape_string(it->second) + " does not match the encoder");
    }
  }
  return m;
}

Matrix embed(const ModelParams& m, const SparseGraph& g, const Matrix& features) {
  if (features.cols() != m.shape.in_dim) {
    throw DimensionError("model expects " + std::to_string(m.shape.in_dim) + " features, dataset has " +
                         std::to_string(features.cols()));
  }
  if (features.rows() != g.num_nodes()) throw DimensionError("feature rows differ from node count");
  const GraphView view = identity_view(g, features, m.shape.hidden_dim);
  ad::Tape tape;
  const ModelVars vars = bind(tape, m);
  const std::vector<ad::Var> layers = encode(tape, view, vars.encoder, false);
  return layers.back().value();
}

}  // namespace amc
