#pragma once

// All trainable parameters of one model, their stable names, binding onto a
// Tape, and the binary model file.
//
// File layout (little-endian):
//   "AMCG"  u32 version
//   u32     tensor count, then that many names (u32 byte length + UTF-8)
//   per tensor: u32 rank, rank x u64 dims, row-major f64 values
// The encoder shape is recovered from the names and dimensions: the name
// prefix is the encoder kind and slope tensors imply PReLU.

#include "amc/encoder.hpp"
#include "amc/objective.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace amc {

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelParams {
  EncoderShape shape;
  EncoderParams encoder;
  std::vector<ProjectionHead> heads;  // one per encoder layer
  AttentionParams attention;

  int num_layers() const { return shape.num_layers(); }
  Index embedding_dim() const { return shape.hidden_dim; }
};

/// Glorot init of the encoder, one projection head per layer (d_p = hidden)
/// and attention with d_a = d_p. Draws from separate derived streams.
ModelParams init_model(const EncoderShape& shape, std::uint64_t seed);

/// Visits every parameter tensor in a fixed order with its stable name.
void for_each_param(ModelParams& m, const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_param(const ModelParams& m, const std::function<void(const std::string&, const Matrix&)>& fn);

std::size_t parameter_count(const ModelParams& m);

struct ModelVars {
  EncoderVars encoder;
  std::vector<HeadVars> heads;
  AttentionVars attention;
  std::vector<ad::Var> leaves;  // same order as for_each_param
};

/// Registers every parameter as a requires_grad leaf.
ModelVars bind(ad::Tape& tape, const ModelParams& m);
/// Wires existing leaves (in for_each_param order) into the model layout.
ModelVars attach(const ModelParams& m, std::span<const ad::Var> leaves);

void save_model(const ModelParams& m, const std::filesystem::path& file);
/// Throws DatasetError for unreadable or malformed files.
ModelParams load_model(const std::filesystem::path& file);

/// Final representation h^{l1} on the unaugmented graph.
/// Throws DimensionError when the feature width differs from the model.
Matrix embed(const ModelParams& m, const SparseGraph& g, const Matrix& features);

}  // namespace amc
