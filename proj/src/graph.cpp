#include "amc/graph.hpp"

#include "amc/kernels.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace amc {

// ---------------------------------------------------------------------------
// SparseGraph

SparseGraph SparseGraph::from_edges(Index num_nodes, std::span<const std::pair<Index, Index>> edges) {
  if (num_nodes < 0) throw DatasetError("negative node count");
  std::vector<std::pair<Index, Index>> arcs;
  arcs.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) {
      std::ostringstream os;
      os << "node index out of range: edge (" << u << ", " << v << ") with N=" << num_nodes;
      throw DatasetError(os.str());
    }
    if (u == v) continue;
    arcs.emplace_back(u, v);
    arcs.emplace_back(v, u);
  }
  std::sort(arcs.begin(), arcs.end());
  arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());

  SparseGraph g;
  g.num_nodes_ = num_nodes;
  g.row_offsets_.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  g.col_indices_.reserve(arcs.size());
  for (const auto& [u, v] : arcs) {
    ++g.row_offsets_[u + 1];
    g.col_indices_.push_back(v);
  }
  for (Index i = 0; i < num_nodes; ++i) g.row_offsets_[i + 1] += g.row_offsets_[i];
  return g;
}

SparseGraph SparseGraph::from_csr(Index num_nodes, std::vector<Index> row_offsets, std::vector<Index> col_indices) {
  SparseGraph g;
  g.num_nodes_ = num_nodes;
  g.row_offsets_ = std::move(row_offsets);
  g.col_indices_ = std::move(col_indices);
  g.validate();
  return g;
}

std::vector<std::pair<Index, Index>> SparseGraph::undirected_edges() const {
  std::vector<std::pair<Index, Index>> out;
  out.reserve(col_indices_.size() / 2);
  for (Index u = 0; u < num_nodes_; ++u)
    for (Index v : neighbors(u))
      if (u < v) out.emplace_back(u, v);
  return out;
}

bool SparseGraph::has_edge(Index u, Index v) const {
  const auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

void SparseGraph::validate() const {
  auto fail = [](const std::string& msg) { throw DatasetError("invalid graph: " + msg); };
  if (static_cast<Index>(row_offsets_.size()) != num_nodes_ + 1) fail("row_offsets length must be N+1");
  if (row_offsets_.front() != 0) fail("row_offsets must start at 0");
  if (row_offsets_.back() != static_cast<Index>(col_indices_.size())) fail("row_offsets must end at nnz");
  for (Index u = 0; u < num_nodes_; ++u) {
    if (row_offsets_[u + 1] < row_offsets_[u]) fail("row_offsets must be nondecreasing");
    const auto nb = neighbors(u);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const Index v = nb[k];
      if (v < 0 || v >= num_nodes_) fail("column index out of range");
      if (v == u) fail("self-loop stored");
      if (k > 0 && nb[k - 1] >= v) fail("neighbour list unsorted or duplicated");
    }
  }
  for (Index u = 0; u < num_nodes_; ++u)
    for (Index v : neighbors(u))
      if (!has_edge(v, u)) fail("asymmetric edge");
}

// ---------------------------------------------------------------------------
// CsrMatrix

Matrix CsrMatrix::to_dense() const {
  Matrix out = Matrix::Zero(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index k = row_offsets[i]; k < row_offsets[i + 1]; ++k) out(i, col_indices[k]) += values[k];
  return out;
}

CsrMatrix CsrMatrix::transpose() const {
  CsrMatrix t;
  t.rows = cols;
  t.cols = rows;
  t.row_offsets.assign(static_cast<std::size_t>(cols) + 1, 0);
  for (Index c : col_indices) ++t.row_offsets[c + 1];
  for (Index i = 0; i < cols; ++i) t.row_offsets[i + 1] += t.row_offsets[i];
  t.col_indices.resize(col_indices.size());
  t.values.resize(values.size());
  std::vector<Index> cursor(t.row_offsets.begin(), t.row_offsets.end() - 1);
  // Row-major sweep keeps each transposed row sorted by column.
  for (Index i = 0; i < rows; ++i) {
    for (Index k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
      const Index slot = cursor[col_indices[k]]++;
      t.col_indices[slot] = i;
      t.values[slot] = values[k];
    }
  }
  return t;
}

CsrMatrix CsrMatrix::from_dense(const Matrix& dense) {
  CsrMatrix m;
  m.rows = dense.rows();
  m.cols = dense.cols();
  m.row_offsets.assign(static_cast<std::size_t>(m.rows) + 1, 0);
  for (Index i = 0; i < m.rows; ++i) {
    for (Index j = 0; j < m.cols; ++j) {
      if (dense(i, j) != 0.0) {
        m.col_indices.push_back(j);
        m.values.push_back(dense(i, j));
      }
    }
    m.row_offsets[i + 1] = static_cast<Index>(m.values.size());
  }
  return m;
}

NormalizedAdjacency normalize_adjacency(const SparseGraph& g) {
  const Index n = g.num_nodes();
  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i) + 1));

  NormalizedAdjacency adj;
  CsrMatrix& m = adj.matrix;
  m.rows = m.cols = n;
  m.row_offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  m.col_indices.reserve(g.col_indices().size() + static_cast<std::size_t>(n));
  m.values.reserve(m.col_indices.capacity());
  for (Index i = 0; i < n; ++i) {
    bool placed_diag = false;
    auto put_diag = [&] {
      m.col_indices.push_back(i);
      m.values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
      placed_diag = true;
    };
    for (Index j : g.neighbors(i)) {
      if (!placed_diag && j > i) put_diag();
      m.col_indices.push_back(j);
      m.values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    if (!placed_diag) put_diag();
    m.row_offsets[i + 1] = static_cast<Index>(m.values.size());
  }
  return adj;
}

CsrMatrix mean_aggregation_operator(const SparseGraph& g) {
  CsrMatrix m;
  m.rows = m.cols = g.num_nodes();
  m.row_offsets = g.row_offsets();
  m.col_indices = g.col_indices();
  m.values.resize(m.col_indices.size());
  for (Index i = 0; i < g.num_nodes(); ++i) {
    const double w = g.degree(i) > 0 ? 1.0 / static_cast<double>(g.degree(i)) : 0.0;
    for (Index k = m.row_offsets[i]; k < m.row_offsets[i + 1]; ++k) m.values[k] = w;
  }
  return m;
}

Matrix spmm(const NormalizedAdjacency& adj, const Matrix& dense) {
  if (dense.rows() != adj.num_nodes()) {
    throw DimensionError("spmm: dense matrix has " + std::to_string(dense.rows()) + " rows, adjacency has " +
                         std::to_string(adj.num_nodes()) + " nodes");
  }
  return kernels::spmm(adj.matrix, dense);
}

// ---------------------------------------------------------------------------
// Dataset

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
    case SplitTag::none: return "none";
  }
  return "none";
}

SplitTag parse_split_tag(std::string_view text) {
  if (text == "train") return SplitTag::train;
  if (text == "val") return SplitTag::val;
  if (text == "test") return SplitTag::test;
  if (text == "none") return SplitTag::none;
  throw DatasetError("unknown split tag '" + std::string(text) + "'");
}

std::vector<Index> Dataset::nodes_in(SplitTag tag) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == tag) out.push_back(static_cast<Index>(i));
  return out;
}

void Dataset::validate() const {
  graph.validate();
  const auto n = static_cast<std::size_t>(graph.num_nodes());
  if (static_cast<std::size_t>(features.rows()) != n) throw DatasetError("feature row count differs from node count");
  if (labels.size() != n) throw DatasetError("label count differs from node count");
  if (split.size() != n) throw DatasetError("split count differs from node count");
  for (int y : labels)
    if (y < -1 || y >= num_classes) throw DatasetError("label " + std::to_string(y) + " outside [-1, num_classes)");
  if (!features.allFinite()) throw DatasetError("non-finite feature value");
}

namespace {

struct LineReader {
  std::filesystem::path path;
  std::ifstream in;
  std::string line;
  std::size_t line_no = 0;

  explicit LineReader(const std::filesystem::path& p) : path(p), in(p, std::ios::binary) {
    if (!in) throw DatasetError(p.string() + ": missing or unreadable file");
  }

  bool next() {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DatasetError(path.filename().string() + ":" + std::to_string(line_no) + ": " + msg);
  }
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

// Splits on blanks/tabs without allocating.
template <typename Fn>
void for_each_token(std::string_view s, Fn&& fn) {
  std::size_t pos = 0;
  while (pos < s.size()) {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    if (pos >= s.size()) break;
    std::size_t end = pos;
    while (end < s.size() && s[end] != ' ' && s[end] != '\t') ++end;
    fn(s.substr(pos, end - pos));
    pos = end;
  }
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

Matrix read_features(const std::filesystem::path& path) {
  LineReader r(path);
  std::vector<double> values;
  Index cols = -1;
  Index rows = 0;
  while (r.next()) {
    const auto body = trim(r.line);
    if (body.empty()) {
      // Only a trailing blank line is tolerated.
      if (r.in.peek() == std::ifstream::traits_type::eof()) break;
      r.fail("empty feature row");
    }
    Index count = 0;
    for_each_token(body, [&](std::string_view tok) {
      double v = 0.0;
      if (!parse_number(tok, v)) r.fail("malformed real '" + std::string(tok) + "'");
      values.push_back(v);
      ++count;
    });
    if (cols < 0) cols = count;
    if (count != cols) {
      r.fail("ragged feature row: expected " + std::to_string(cols) + " values, found " + std::to_string(count));
    }
    ++rows;
  }
  if (rows == 0) throw DatasetError(path.filename().string() + ": no feature rows");
  Matrix x(rows, cols);
  std::copy(values.begin(), values.end(), x.data());
  return x;
}

std::vector<std::pair<Index, Index>> read_edges(const std::filesystem::path& path, Index num_nodes) {
  LineReader r(path);
  std::vector<std::pair<Index, Index>> edges;
  std::size_t self_loops = 0;
  while (r.next()) {
    std::string_view body = r.line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    Index ends[2] = {0, 0};
    int count = 0;
    for_each_token(body, [&](std::string_view tok) {
      if (count >= 2) r.fail("expected exactly two node ids");
      long long v = 0;
      if (!parse_number(tok, v) || v < 0) r.fail("malformed node id '" + std::string(tok) + "'");
      ends[count++] = static_cast<Index>(v);
    });
    if (count != 2) r.fail("expected exactly two node ids");
    if (ends[0] >= num_nodes || ends[1] >= num_nodes) {
      r.fail("node index out of range (" + std::to_string(std::max(ends[0], ends[1])) +
             " >= N=" + std::to_string(num_nodes) + ")");
    }
    if (ends[0] == ends[1]) {
      ++self_loops;
      continue;
    }
    edges.emplace_back(ends[0], ends[1]);
  }
  if (self_loops > 0) {
    std::cerr << "warning: " << path.filename().string() << ": stripped " << self_loops << " self-loop(s)\n";
  }
  return edges;
}

std::vector<int> read_labels(const std::filesystem::path& path, Index num_nodes, int& num_classes) {
  LineReader r(path);
  std::vector<int> labels;
  int declared = -1;
  std::size_t declared_line = 0;
  while (r.next()) {
    const auto body = trim(r.line);
    if (body.empty()) {
      if (r.in.peek() == std::ifstream::traits_type::eof()) break;
      r.fail("empty label line");
    }
    if (body.front() == '#') {
      // Optional header: "# classes K".
      std::string_view rest = trim(body.substr(1));
      if (rest.starts_with("classes")) {
        rest = trim(rest.substr(7));
        if (!rest.empty() && rest.front() == ':') rest = trim(rest.substr(1));
        if (!parse_number(rest, declared) || declared < 1) r.fail("malformed class-count header");
        declared_line = r.line_no;
      }
      continue;
    }
    int y = 0;
    if (!parse_number(body, y) || y < -1) r.fail("malformed label '" + std::string(body) + "'");
    if (declared > 0 && y >= declared) {
      r.fail("label " + std::to_string(y) + " >= num_classes=" + std::to_string(declared) + " (declared on line " +
             std::to_string(declared_line) + ")");
    }
    labels.push_back(y);
  }
  if (static_cast<Index>(labels.size()) != num_nodes) {
    throw DatasetError(path.filename().string() + ": expected " + std::to_string(num_nodes) + " labels, found " +
                       std::to_string(labels.size()));
  }
  num_classes = declared > 0 ? declared : *std::max_element(labels.begin(), labels.end()) + 1;
  return labels;
}

std::vector<SplitTag> read_split(const std::filesystem::path& path, Index num_nodes) {
  LineReader r(path);
  std::vector<SplitTag> split;
  while (r.next()) {
    const auto body = trim(r.line);
    if (body.empty()) {
      if (r.in.peek() == std::ifstream::traits_type::eof()) break;
      r.fail("empty split line");
    }
    try {
      split.push_back(parse_split_tag(body));
    } catch (const DatasetError& e) {
      r.fail(e.what());
    }
  }
  if (static_cast<Index>(split.size()) != num_nodes) {
    throw DatasetError(path.filename().string() + ": expected " + std::to_string(num_nodes) + " split tags, found " +
                       std::to_string(split.size()));
  }
  return split;
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError(path.string() + ": cannot open for writing");
  out << text;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  for (const char* name : {"graph.edges", "features.txt", "labels.txt", "split.txt"}) {
    if (!std::filesystem::exists(dir / name)) throw DatasetError((dir / name).string() + ": missing file");
  }
  Dataset d;
  d.features = read_features(dir / "features.txt");
  const Index n = d.features.rows();
  const auto edges = read_edges(dir / "graph.edges", n);
  d.graph = SparseGraph::from_edges(n, edges);
  d.labels = read_labels(dir / "labels.txt", n, d.num_classes);
  d.split = read_split(dir / "split.txt", n);
  d.validate();
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string text;
  text += "# " + std::to_string(d.num_nodes()) + " nodes, " + std::to_string(d.graph.edge_count()) +
          " undirected edges\n";
  for (const auto& [u, v] : d.graph.undirected_edges()) text += std::to_string(u) + " " + std::to_string(v) + "\n";
  write_file(dir / "graph.edges", text);

  text.clear();
  for (Index i = 0; i < d.features.rows(); ++i) {
    for (Index j = 0; j < d.features.cols(); ++j) {
      if (j > 0) text += ' ';
      append_double(text, d.features(i, j));
    }
    text += '\n';
  }
  write_file(dir / "features.txt", text);

  text = "# classes " + std::to_string(d.num_classes) + "\n";
  for (int y : d.labels) text += std::to_string(y) + "\n";
  write_file(dir / "labels.txt", text);

  text.clear();
  for (SplitTag t : d.split) {
    text += to_string(t);
    text += '\n';
  }
  write_file(dir / "split.txt", text);
}

std::string dataset_checksum(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* name : {"graph.edges", "features.txt", "labels.txt", "split.txt"}) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw DatasetError((dir / name).string() + ": missing file");
    char buf[1 << 16];
    while (in) {
      in.read(buf, sizeof(buf));
      for (std::streamsize i = 0; i < in.gcount(); ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 0x100000001b3ULL;
      }
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace amc
