#pragma once

#include "amc/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace amc {

/// Undirected, unweighted graph in CSR form. Both directions of every edge
/// are stored, neighbour lists are sorted, and self-loops are never stored.
class SparseGraph {
 public:
  SparseGraph() = default;

  /// Builds from an arbitrary edge list: symmetrizes, sorts, removes
  /// duplicates and self-loops. Throws DatasetError for out-of-range ids.
  static SparseGraph from_edges(Index num_nodes, std::span<const std::pair<Index, Index>> edges);

  /// Adopts CSR arrays as-is after validate().
  static SparseGraph from_csr(Index num_nodes, std::vector<Index> row_offsets, std::vector<Index> col_indices);

  Index num_nodes() const { return num_nodes_; }
  /// Number of undirected pairs.
  Index edge_count() const { return static_cast<Index>(col_indices_.size()) / 2; }
  Index degree(Index node) const { return row_offsets_[node + 1] - row_offsets_[node]; }

  std::span<const Index> neighbors(Index node) const {
    return {col_indices_.data() + row_offsets_[node], static_cast<std::size_t>(degree(node))};
  }
  const std::vector<Index>& row_offsets() const { return row_offsets_; }
  const std::vector<Index>& col_indices() const { return col_indices_; }

  /// Each undirected edge once, as (u, v) with u < v, in CSR order.
  std::vector<std::pair<Index, Index>> undirected_edges() const;

  bool has_edge(Index u, Index v) const;

  /// Throws DatasetError if any structural invariant is violated.
  void validate() const;

  bool operator==(const SparseGraph&) const = default;

 private:
  Index num_nodes_ = 0;
  std::vector<Index> row_offsets_{0};
  std::vector<Index> col_indices_;
};

/// Weighted CSR matrix. Used for normalized adjacencies, mean-aggregation
/// operators and sparse feature matrices.
struct CsrMatrix {
  Index rows = 0;
  Index cols = 0;
  std::vector<Index> row_offsets{0};
  std::vector<Index> col_indices;
  std::vector<double> values;

  Index nnz() const { return static_cast<Index>(values.size()); }
  Matrix to_dense() const;
  CsrMatrix transpose() const;
  static CsrMatrix from_dense(const Matrix& dense);
};

/// D^{-1/2}(A+I)D^{-1/2} with D the degree after adding self-loops.
/// Always square and symmetric; every row holds its diagonal entry.
struct NormalizedAdjacency {
  CsrMatrix matrix;
  Index num_nodes() const { return matrix.rows; }
};

NormalizedAdjacency normalize_adjacency(const SparseGraph& g);

/// Row-stochastic neighbour-mean operator (no self-loops). Isolated nodes
/// get an empty row, so their aggregate is the zero vector.
CsrMatrix mean_aggregation_operator(const SparseGraph& g);

/// adj * dense.
Matrix spmm(const NormalizedAdjacency& adj, const Matrix& dense);

enum class SplitTag : std::uint8_t { train, val, test, none };

std::string_view to_string(SplitTag tag);
SplitTag parse_split_tag(std::string_view text);

struct Dataset {
  SparseGraph graph;
  Matrix features;
  std::vector<int> labels;  // -1 = unlabeled
  std::vector<SplitTag> split;
  int num_classes = 0;

  Index num_nodes() const { return graph.num_nodes(); }
  Index num_features() const { return features.cols(); }

  std::vector<Index> nodes_in(SplitTag tag) const;

  /// Throws DatasetError describing the first violated invariant.
  void validate() const;
};

/// Reads graph.edges, features.txt, labels.txt and split.txt from `dir`.
/// Errors carry the file name and 1-based line number.
Dataset load_dataset(const std::filesystem::path& dir);

/// Writes the four files so that load_dataset reproduces `d` exactly
/// (reals are printed with round-trip precision).
void save_dataset(const Dataset& d, const std::filesystem::path& dir);

/// FNV-1a over the four dataset files, as 16 hex digits.
std::string dataset_checksum(const std::filesystem::path& dir);

}  // namespace amc
