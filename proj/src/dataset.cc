#include "msdn/dataset.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "msdn/errors.h"

namespace msdn {

namespace {

void check_finite(const char* name, std::span<const double> values, std::size_t offset,
                  std::vector<Violation>& out, bool& reported) {
  if (reported) return;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      out.push_back({"finite", std::string(name) + " has non-finite value at flat index " +
                                   std::to_string(offset + i)});
      reported = true;
      return;
    }
  }
}

void check_class_set(const char* name, const std::vector<int>& set, std::size_t num_classes,
                     std::vector<Violation>& out) {
  std::set<int> seen;
  for (int c : set) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
      out.push_back({"class_index_range", std::string(name) + " contains class " + std::to_string(c) +
                                              " outside [0, " + std::to_string(num_classes) + ")"});
      return;
    }
    if (!seen.insert(c).second) {
      out.push_back({"class_unique", std::string(name) + " lists class " + std::to_string(c) + " twice"});
      return;
    }
  }
}

}  // namespace

std::vector<Violation> validate_dataset(const Dataset& ds) {
  std::vector<Violation> out;
  const std::size_t n = ds.num_samples();
  const std::size_t num_classes = ds.num_classes();

  if (n == 0) out.push_back({"shape", "dataset has no samples"});
  if (ds.num_attributes() == 0 || ds.dim_attribute() == 0) {
    out.push_back({"shape", "attributes matrix is empty"});
  }
  if (num_classes == 0) out.push_back({"shape", "class_semantics matrix is empty"});
  if (ds.class_semantics.cols() != ds.num_attributes()) {
    out.push_back({"shape", "class_semantics has " + std::to_string(ds.class_semantics.cols()) +
                                " columns but there are " + std::to_string(ds.num_attributes()) +
                                " attributes"});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& f = ds.features[i];
    if (f.rows() != ds.num_regions() || f.cols() != ds.dim_visual() || f.empty()) {
      out.push_back({"shape", "features[" + std::to_string(i) + "] has shape " + f.shape_string() +
                                  ", expected a constant non-empty region stack"});
      break;
    }
  }

  bool bad_features = false;
  for (std::size_t i = 0; i < n; ++i) {
    check_finite("features", ds.features[i].data(), i * ds.features[i].size(), out, bad_features);
  }
  bool bad_attributes = false;
  check_finite("attributes", ds.attributes.data(), 0, out, bad_attributes);
  bool bad_semantics = false;
  check_finite("class_semantics", ds.class_semantics.data(), 0, out, bad_semantics);

  if (ds.labels.size() != n) {
    out.push_back({"shape", "labels has length " + std::to_string(ds.labels.size()) + " but there are " +
                                std::to_string(n) + " samples"});
  }
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    const int y = ds.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      out.push_back({"label_range", "labels[" + std::to_string(i) + "] = " + std::to_string(y) +
                                        " outside [0, " + std::to_string(num_classes) + ")"});
      break;
    }
  }

  check_class_set("seen_classes", ds.seen_classes, num_classes, out);
  check_class_set("unseen_classes", ds.unseen_classes, num_classes, out);
  std::set<int> seen(ds.seen_classes.begin(), ds.seen_classes.end());
  std::set<int> unseen(ds.unseen_classes.begin(), ds.unseen_classes.end());
  std::vector<int> overlap;
  std::set_intersection(seen.begin(), seen.end(), unseen.begin(), unseen.end(),
                        std::back_inserter(overlap));
  if (!overlap.empty()) {
    std::ostringstream msg;
    msg << "seen_classes and unseen_classes overlap on";
    for (int c : overlap) msg << ' ' << c;
    out.push_back({"class_partition_disjoint", msg.str()});
  }
  if (seen.size() + unseen.size() - overlap.size() != num_classes) {
    out.push_back({"class_partition_cover", "seen_classes and unseen_classes do not cover all " +
                                                std::to_string(num_classes) + " classes"});
  }

  struct Split {
    const char* name;
    const std::vector<int>* idx;
  };
  const Split splits[] = {{"train_idx", &ds.train_idx},
                          {"test_seen_idx", &ds.test_seen_idx},
                          {"test_unseen_idx", &ds.test_unseen_idx}};
  std::vector<const char*> owner(n, nullptr);
  bool range_ok = true;
  for (const auto& split : splits) {
    for (int i : *split.idx) {
      if (i < 0 || static_cast<std::size_t>(i) >= n) {
        out.push_back({"split_index_range", std::string(split.name) + " contains sample " +
                                                std::to_string(i) + " outside [0, " + std::to_string(n) + ")"});
        range_ok = false;
        break;
      }
      if (owner[i] != nullptr) {
        out.push_back({"split_disjoint", "sample " + std::to_string(i) + " appears in both " +
                                             owner[i] + " and " + split.name});
        range_ok = false;
        break;
      }
      owner[i] = split.name;
    }
  }

  if (range_ok && ds.labels.size() == n) {
    auto check_labels = [&](const char* invariant, const char* name, const std::vector<int>& idx,
                            const std::set<int>& allowed, const char* set_name) {
      for (int i : idx) {
        if (!allowed.contains(ds.labels[i])) {
          out.push_back({invariant, std::string(name) + " sample " + std::to_string(i) + " has label " +
                                        std::to_string(ds.labels[i]) + " not in " + set_name});
          return;
        }
      }
    };
    check_labels("train_labels_seen", "train_idx", ds.train_idx, seen, "seen_classes");
    check_labels("test_seen_labels_seen", "test_seen_idx", ds.test_seen_idx, seen, "seen_classes");
    check_labels("test_unseen_labels_unseen", "test_unseen_idx", ds.test_unseen_idx, unseen,
                 "unseen_classes");
  }
  return out;
}

namespace {

constexpr const char* kRequired[] = {"features",     "attributes",    "class_semantics",
                                     "labels",       "seen_classes",  "unseen_classes",
                                     "train_idx",    "test_seen_idx", "test_unseen_idx"};

bool is_required(std::string_view name) {
  return std::find(std::begin(kRequired), std::end(kRequired), name) != std::end(kRequired);
}

const Tensor& require(const std::vector<Tensor>& tensors, const char* name) {
  const Tensor* t = find_tensor(tensors, name);
  if (t == nullptr) throw DataError(std::string("missing required tensor '") + name + "'");
  return *t;
}

}  // namespace

std::vector<Tensor> dataset_to_tensors(const Dataset& ds) {
  std::vector<Tensor> out;
  std::vector<double> flat;
  flat.reserve(ds.num_samples() * ds.num_regions() * ds.dim_visual());
  for (const auto& f : ds.features) flat.insert(flat.end(), f.data().begin(), f.data().end());
  out.push_back(make_real_tensor("features", DType::kF32,
                                 {static_cast<std::uint32_t>(ds.num_samples()),
                                  static_cast<std::uint32_t>(ds.num_regions()),
                                  static_cast<std::uint32_t>(ds.dim_visual())},
                                 std::move(flat)));
  out.push_back(matrix_tensor("attributes", ds.attributes, DType::kF32));
  out.push_back(matrix_tensor("class_semantics", ds.class_semantics, DType::kF32));
  out.push_back(index_tensor("labels", ds.labels));
  out.push_back(index_tensor("seen_classes", ds.seen_classes));
  out.push_back(index_tensor("unseen_classes", ds.unseen_classes));
  out.push_back(index_tensor("train_idx", ds.train_idx));
  out.push_back(index_tensor("test_seen_idx", ds.test_seen_idx));
  out.push_back(index_tensor("test_unseen_idx", ds.test_unseen_idx));
  for (const auto& extra : ds.extras) out.push_back(extra);
  return out;
}

Dataset dataset_from_tensors(std::vector<Tensor> tensors) {
  Dataset ds;
  const Tensor& features = require(tensors, "features");
  if (!features.is_real() || features.dims.size() != 3) {
    throw DataError("tensor 'features' must be a rank-3 real tensor (N,R,d_v)");
  }
  const std::size_t n = features.dims[0], r = features.dims[1], dv = features.dims[2];
  ds.features.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto begin = features.reals.begin() + static_cast<std::ptrdiff_t>(i * r * dv);
    ds.features.emplace_back(r, dv, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(r * dv)));
  }
  auto as_matrix = [&](const char* name) {
    try {
      return tensor_to_matrix(require(tensors, name));
    } catch (const ShapeError& e) {
      throw DataError(e.what());
    }
  };
  auto as_indices = [&](const char* name) {
    try {
      return tensor_to_indices(require(tensors, name));
    } catch (const ShapeError& e) {
      throw DataError(e.what());
    }
  };
  ds.attributes = as_matrix("attributes");
  ds.class_semantics = as_matrix("class_semantics");
  ds.labels = as_indices("labels");
  ds.seen_classes = as_indices("seen_classes");
  ds.unseen_classes = as_indices("unseen_classes");
  ds.train_idx = as_indices("train_idx");
  ds.test_seen_idx = as_indices("test_seen_idx");
  ds.test_unseen_idx = as_indices("test_unseen_idx");
  for (auto& t : tensors)
    if (!is_required(t.name)) ds.extras.push_back(std::move(t));

  const auto violations = validate_dataset(ds);
  if (!violations.empty()) {
    std::string msg = "dataset validation failed: " + violations.front().invariant + ": " +
                      violations.front().detail;
    if (violations.size() > 1) msg += " (+" + std::to_string(violations.size() - 1) + " more)";
    throw ValidationError(msg);
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto violations = validate_dataset(ds);
  if (!violations.empty()) {
    throw ValidationError("refusing to save invalid dataset: " + violations.front().invariant + ": " +
                          violations.front().detail);
  }
  write_container(path, dataset_to_tensors(ds));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_tensors(read_container(path));
}

void validate_synth_spec(const SynthSpec& spec) {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ArgumentError(std::string("synthetic spec: ") + name + " must be >= 1");
  };
  positive(spec.num_seen, "num_seen");
  positive(spec.num_unseen, "num_unseen (zero-shot evaluation needs unseen classes)");
  positive(spec.num_attributes, "num_attributes");
  positive(spec.num_regions, "num_regions");
  positive(spec.dim_visual, "dim_visual");
  positive(spec.dim_attribute, "dim_attribute");
  positive(spec.samples_per_class, "samples_per_class");
  if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) {
    throw ArgumentError("synthetic spec: noise_std must be finite and >= 0");
  }
  if (!(spec.test_seen_fraction >= 0.0 && spec.test_seen_fraction < 1.0)) {
    throw ArgumentError("synthetic spec: test_seen_fraction must be in [0, 1)");
  }
}

namespace {

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_to_f32(Matrix& m) {
  for (double& v : m.data()) v = to_f32(v);
}

}  // namespace

Dataset generate_synthetic(const SynthSpec& spec) {
  validate_synth_spec(spec);
  Rng rng(spec.seed);
  const std::size_t k = spec.num_attributes, r = spec.num_regions;
  const std::size_t dv = spec.dim_visual, da = spec.dim_attribute;
  const std::size_t num_classes = static_cast<std::size_t>(spec.num_seen + spec.num_unseen);

  Dataset ds;
  ds.attributes = rng_uniform(rng, -1.0, 1.0, k, da);
  round_to_f32(ds.attributes);
  ds.class_semantics = rng_uniform(rng, 0.0, 1.0, num_classes, k);
  round_to_f32(ds.class_semantics);
  // Variance-preserving: entries of G·a have the variance of entries of a.
  const double g_limit = std::sqrt(3.0 / static_cast<double>(da));
  Matrix generator = rng_uniform(rng, -g_limit, g_limit, dv, da);
  round_to_f32(generator);

  // prototypes(k, :) = G · a_k
  const Matrix prototypes = matmul_nt(ds.attributes, generator);

  std::vector<std::int32_t> region_attributes;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto z = ds.class_semantics.row(c);
    double total = 0.0;
    for (double v : z) total += v;
    const bool is_seen = c < static_cast<std::size_t>(spec.num_seen);
    int num_test = 0;
    if (is_seen) {
      num_test = static_cast<int>(std::lround(spec.test_seen_fraction * spec.samples_per_class));
      num_test = std::min(num_test, spec.samples_per_class - 1);
    }
    for (int s = 0; s < spec.samples_per_class; ++s) {
      Matrix v(r, dv);
      for (std::size_t reg = 0; reg < r; ++reg) {
        // Inverse-CDF draw of k with probability z_k / Σz.
        const double u = rng.next_double() * total;
        double cum = 0.0;
        std::size_t pick = k - 1;
        for (std::size_t a = 0; a < k; ++a) {
          cum += z[a];
          if (u < cum) {
            pick = a;
            break;
          }
        }
        region_attributes.push_back(static_cast<std::int32_t>(pick));
        for (std::size_t d = 0; d < dv; ++d) {
          const double noise = spec.noise_std > 0.0 ? spec.noise_std * rng.next_normal() : 0.0;
          v(reg, d) = to_f32(prototypes(pick, d) + noise);
        }
      }
      const int index = static_cast<int>(ds.features.size());
      ds.features.push_back(std::move(v));
      ds.labels.push_back(static_cast<int>(c));
      if (!is_seen) {
        ds.test_unseen_idx.push_back(index);
      } else if (s < spec.samples_per_class - num_test) {
        ds.train_idx.push_back(index);
      } else {
        ds.test_seen_idx.push_back(index);
      }
    }
    (is_seen ? ds.seen_classes : ds.unseen_classes).push_back(static_cast<int>(c));
  }
  ds.extras.push_back(make_int_tensor(kRegionAttributesTensor,
                                      {static_cast<std::uint32_t>(ds.features.size()),
                                       static_cast<std::uint32_t>(r)},
                                      std::move(region_attributes)));
  ds.extras.push_back(matrix_tensor(kGeneratorMapTensor, generator, DType::kF32));
  return ds;
}

}  // namespace msdn
