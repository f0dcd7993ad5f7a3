#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "msdn/ndmath.h"

namespace msdn {

struct ModelDims {
  std::size_t dim_visual = 0;     // d_v
  std::size_t dim_attribute = 0;  // d_a
  std::size_t num_attributes = 0; // K
  std::size_t num_regions = 0;    // R

  bool operator==(const ModelDims&) const = default;
};

// Learnable matrices of both attention sub-nets. The same struct doubles as
// the gradient container.
struct ModelParams {
  ModelDims dims;
  Matrix w1;     // d_a×d_v, attribute→visual attention bilinear form
  Matrix w2;     // d_a×d_v, attribute→visual embedding
  Matrix w3;     // d_v×d_a, visual→attribute attention bilinear form
  Matrix w4;     // d_v×d_a, visual→attribute embedding
  Matrix w_att;  // d_v×d_a, region→attribute mapping

  static constexpr std::array<const char*, 5> kNames = {"W1", "W2", "W3", "W4", "W_att"};

  std::array<Matrix*, 5> matrices() { return {&w1, &w2, &w3, &w4, &w_att}; }
  std::array<const Matrix*, 5> matrices() const { return {&w1, &w2, &w3, &w4, &w_att}; }

  static ModelParams zeros(const ModelDims& dims);
  std::size_t parameter_count() const;

  bool operator==(const ModelParams&) const = default;
};

// Glorot-uniform initialization, deterministic in seed.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

// Throws ShapeError if V (R×d_v) or A (K×d_a) disagree with the params.
void check_inputs(const Matrix& regions, const Matrix& attributes, const ModelParams& p);

struct A2VOutput {
  Matrix beta;              // K×R; each column sums to 1 (softmax over attributes)
  Matrix features;          // K×d_v; F_k = Σ_r beta[k][r] v_r
  std::vector<double> psi;  // K; psi_k = a_kᵀ W2 F_k
};

struct V2AOutput {
  Matrix tau;                   // R×K; each column sums to 1 (softmax over regions)
  Matrix features;              // R×d_a; S_r = Σ_k tau[r][k] a_k
  std::vector<double> psi_bar;  // R; psi_bar_r = v_rᵀ W4 S_r
  Matrix att;                   // R×K; V W_att Aᵀ with regions as rows
  std::vector<double> psi;      // K; Psi = psi_barᵀ · att
};

struct ForwardTrace {
  A2VOutput a2v;
  V2AOutput v2a;
};

// `regions` holds one region feature per row (R×d_v); `attributes` one
// attribute vector per row (K×d_a).
A2VOutput a2v_forward(const Matrix& regions, const Matrix& attributes, const ModelParams& p);
V2AOutput v2a_forward(const Matrix& regions, const Matrix& attributes, const ModelParams& p);
ForwardTrace forward(const Matrix& regions, const Matrix& attributes, const ModelParams& p);

// Accumulate into `grads` the parameter gradients of a scalar whose
// derivative w.r.t. the sub-net embedding is `d_psi`.
void a2v_backward(const Matrix& regions, const Matrix& attributes, const ModelParams& p,
                  const A2VOutput& out, std::span<const double> d_psi, ModelParams& grads);
void v2a_backward(const Matrix& regions, const Matrix& attributes, const ModelParams& p,
                  const V2AOutput& out, std::span<const double> d_psi, ModelParams& grads);

// score[c] = embedding · Z[c].
std::vector<double> class_scores(std::span<const double> embedding, const Matrix& class_semantics);

// Concatenation of all five matrices in kNames order, and the inverse.
std::vector<double> flatten(const ModelParams& p);
ModelParams unflatten(const ModelDims& dims, std::span<const double> flat);

// Checkpoint in the tensor container: W1..W_att as f64 plus an i32 "dims"
// vector (d_v, d_a, K, R).
void save_checkpoint(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace msdn
