#include "msdn/model.h"

#include <cmath>

#include "msdn/container.h"
#include "msdn/errors.h"

namespace msdn {

ModelParams ModelParams::zeros(const ModelDims& dims) {
  ModelParams p;
  p.dims = dims;
  p.w1 = Matrix(dims.dim_attribute, dims.dim_visual);
  p.w2 = Matrix(dims.dim_attribute, dims.dim_visual);
  p.w3 = Matrix(dims.dim_visual, dims.dim_attribute);
  p.w4 = Matrix(dims.dim_visual, dims.dim_attribute);
  p.w_att = Matrix(dims.dim_visual, dims.dim_attribute);
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : matrices()) n += m->size();
  return n;
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  if (dims.dim_visual == 0 || dims.dim_attribute == 0 || dims.num_attributes == 0 ||
      dims.num_regions == 0) {
    throw ArgumentError("init_params: all model dimensions must be positive");
  }
  ModelParams p = ModelParams::zeros(dims);
  Rng rng(seed);
  for (Matrix* m : p.matrices()) {
    const double limit = glorot_limit(m->rows(), m->cols());
    *m = rng_uniform(rng, -limit, limit, m->rows(), m->cols());
  }
  return p;
}

void check_inputs(const Matrix& regions, const Matrix& attributes, const ModelParams& p) {
  if (regions.cols() != p.dims.dim_visual || regions.rows() == 0) {
    throw ShapeError("region features " + regions.shape_string() + " do not match d_v=" +
                     std::to_string(p.dims.dim_visual));
  }
  if (attributes.cols() != p.dims.dim_attribute || attributes.rows() == 0) {
    throw ShapeError("attribute vectors " + attributes.shape_string() + " do not match d_a=" +
                     std::to_string(p.dims.dim_attribute));
  }
}

A2VOutput a2v_forward(const Matrix& regions, const Matrix& attributes, const ModelParams& p) {
  check_inputs(regions, attributes, p);
  A2VOutput out;
  // logits(k, r) = a_kᵀ W1 v_r, normalized over k for each region.
  const Matrix logits = matmul_nt(matmul(attributes, p.w1), regions);
  out.beta = softmax_stable(logits, Axis::kColumn);
  out.features = matmul(out.beta, regions);
  const Matrix projected = matmul(attributes, p.w2);
  out.psi.resize(attributes.rows());
  for (std::size_t k = 0; k < attributes.rows(); ++k) {
    out.psi[k] = dot(projected.row(k), out.features.row(k));
  }
  return out;
}

V2AOutput v2a_forward(const Matrix& regions, const Matrix& attributes, const ModelParams& p) {
  check_inputs(regions, attributes, p);
  V2AOutput out;
  // logits(r, k) = v_rᵀ W3 a_k, normalized over r for each attribute.
  const Matrix logits = matmul_nt(matmul(regions, p.w3), attributes);
  out.tau = softmax_stable(logits, Axis::kColumn);
  out.features = matmul(out.tau, attributes);
  const Matrix projected = matmul(regions, p.w4);
  out.psi_bar.resize(regions.rows());
  for (std::size_t r = 0; r < regions.rows(); ++r) {
    out.psi_bar[r] = dot(projected.row(r), out.features.row(r));
  }
  out.att = matmul_nt(matmul(regions, p.w_att), attributes);
  out.psi = vecmat(out.psi_bar, out.att);
  return out;
}

ForwardTrace forward(const Matrix& regions, const Matrix& attributes, const ModelParams& p) {
  return {a2v_forward(regions, attributes, p), v2a_forward(regions, attributes, p)};
}

void a2v_backward(const Matrix& regions, const Matrix& attributes, const ModelParams& p,
                  const A2VOutput& out, std::span<const double> d_psi, ModelParams& grads) {
  const std::size_t k_count = attributes.rows();
  if (d_psi.size() != k_count) throw ShapeError("a2v_backward: d_psi length mismatch");
  const Matrix projected = matmul(attributes, p.w2);
  Matrix d_features(k_count, regions.cols());
  Matrix d_projected(k_count, regions.cols());
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t d = 0; d < regions.cols(); ++d) {
      d_features(k, d) = d_psi[k] * projected(k, d);
      d_projected(k, d) = d_psi[k] * out.features(k, d);
    }
  }
  axpy(1.0, matmul_tn(attributes, d_projected), grads.w2);

  const Matrix d_beta = matmul_nt(d_features, regions);
  const Matrix d_logits = softmax_backward(out.beta, d_beta, Axis::kColumn);
  axpy(1.0, matmul_tn(attributes, matmul(d_logits, regions)), grads.w1);
}

void v2a_backward(const Matrix& regions, const Matrix& attributes, const ModelParams& p,
                  const V2AOutput& out, std::span<const double> d_psi, ModelParams& grads) {
  const std::size_t r_count = regions.rows();
  if (d_psi.size() != attributes.rows()) throw ShapeError("v2a_backward: d_psi length mismatch");

  const std::vector<double> d_psi_bar = matvec(out.att, d_psi);
  Matrix d_att(r_count, attributes.rows());
  for (std::size_t r = 0; r < r_count; ++r)
    for (std::size_t k = 0; k < attributes.rows(); ++k) d_att(r, k) = out.psi_bar[r] * d_psi[k];
  axpy(1.0, matmul_tn(regions, matmul(d_att, attributes)), grads.w_att);

  const Matrix projected = matmul(regions, p.w4);
  Matrix d_features(r_count, attributes.cols());
  Matrix d_projected(r_count, attributes.cols());
  for (std::size_t r = 0; r < r_count; ++r) {
    for (std::size_t d = 0; d < attributes.cols(); ++d) {
      d_features(r, d) = d_psi_bar[r] * projected(r, d);
      d_projected(r, d) = d_psi_bar[r] * out.features(r, d);
    }
  }
  axpy(1.0, matmul_tn(regions, d_projected), grads.w4);

  const Matrix d_tau = matmul_nt(d_features, attributes);
  const Matrix d_logits = softmax_backward(out.tau, d_tau, Axis::kColumn);
  axpy(1.0, matmul_tn(regions, matmul(d_logits, attributes)), grads.w3);
}

std::vector<double> class_scores(std::span<const double> embedding, const Matrix& class_semantics) {
  if (embedding.size() != class_semantics.cols()) {
    throw ShapeError("class_scores: embedding of length " + std::to_string(embedding.size()) +
                     " vs class semantics " + class_semantics.shape_string());
  }
  return matvec(class_semantics, embedding);
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> flat;
  flat.reserve(p.parameter_count());
  for (const Matrix* m : p.matrices()) flat.insert(flat.end(), m->data().begin(), m->data().end());
  return flat;
}

ModelParams unflatten(const ModelDims& dims, std::span<const double> flat) {
  ModelParams p = ModelParams::zeros(dims);
  if (flat.size() != p.parameter_count()) {
    throw ShapeError("unflatten: expected " + std::to_string(p.parameter_count()) + " values, got " +
                     std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for (Matrix* m : p.matrices()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), m->size(), m->data().begin());
    offset += m->size();
  }
  return p;
}

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  std::vector<Tensor> tensors;
  const auto mats = p.matrices();
  for (std::size_t i = 0; i < mats.size(); ++i) {
    tensors.push_back(matrix_tensor(ModelParams::kNames[i], *mats[i], DType::kF64));
  }
  tensors.push_back(make_int_tensor(
      "dims", {4},
      {static_cast<std::int32_t>(p.dims.dim_visual), static_cast<std::int32_t>(p.dims.dim_attribute),
       static_cast<std::int32_t>(p.dims.num_attributes), static_cast<std::int32_t>(p.dims.num_regions)}));
  write_container(path, tensors);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  const auto tensors = read_container(path);
  const Tensor* dims_tensor = find_tensor(tensors, "dims");
  if (dims_tensor == nullptr || dims_tensor->dtype != DType::kI32 || dims_tensor->ints.size() != 4) {
    throw DataError("checkpoint " + path.string() + " lacks a 4-element i32 'dims' tensor");
  }
  for (auto d : dims_tensor->ints)
    if (d <= 0) throw DataError("checkpoint dims must be positive");
  ModelDims dims{static_cast<std::size_t>(dims_tensor->ints[0]),
                 static_cast<std::size_t>(dims_tensor->ints[1]),
                 static_cast<std::size_t>(dims_tensor->ints[2]),
                 static_cast<std::size_t>(dims_tensor->ints[3])};
  ModelParams p = ModelParams::zeros(dims);
  const auto mats = p.matrices();
  for (std::size_t i = 0; i < mats.size(); ++i) {
    const Tensor* t = find_tensor(tensors, ModelParams::kNames[i]);
    if (t == nullptr) throw DataError(std::string("checkpoint lacks tensor '") + ModelParams::kNames[i] + "'");
    Matrix m;
    try {
      m = tensor_to_matrix(*t);
    } catch (const ShapeError& e) {
      throw DataError(e.what());
    }
    if (m.rows() != mats[i]->rows() || m.cols() != mats[i]->cols()) {
      throw DataError(std::string("checkpoint tensor '") + ModelParams::kNames[i] + "' has shape " +
                      m.shape_string() + ", expected " + mats[i]->shape_string());
    }
    if (!all_finite(m)) throw DataError(std::string("checkpoint tensor '") + ModelParams::kNames[i] + "' is not finite");
    *mats[i] = std::move(m);
  }
  return p;
}

}  // namespace msdn
