#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msdn/container.h"
#include "msdn/ndmath.h"

namespace msdn {

// A zero-shot dataset. Seen/unseen classes and the three sample splits are
// index lists; their consistency is checked by validate_dataset.
struct Dataset {
  std::vector<Matrix> features;  // one R×d_v region stack per image
  Matrix attributes;             // K×d_a attribute word vectors
  Matrix class_semantics;        // C×K class semantic vectors
  std::vector<int> labels;
  std::vector<int> seen_classes;
  std::vector<int> unseen_classes;
  std::vector<int> train_idx;
  std::vector<int> test_seen_idx;
  std::vector<int> test_unseen_idx;
  // Tensors with names outside the required set; kept so they survive a
  // load/save cycle.
  std::vector<Tensor> extras;

  std::size_t num_samples() const { return features.size(); }
  std::size_t num_regions() const { return features.empty() ? 0 : features.front().rows(); }
  std::size_t dim_visual() const { return features.empty() ? 0 : features.front().cols(); }
  std::size_t num_attributes() const { return attributes.rows(); }
  std::size_t dim_attribute() const { return attributes.cols(); }
  std::size_t num_classes() const { return class_semantics.rows(); }

  bool operator==(const Dataset&) const = default;
};

struct Violation {
  std::string invariant;
  std::string detail;
};

std::vector<Violation> validate_dataset(const Dataset& ds);

// Features, attributes and class semantics are written as f32.
std::vector<Tensor> dataset_to_tensors(const Dataset& ds);
// Throws DataError subclasses for missing/ill-shaped tensors and
// ValidationError when the decoded dataset violates an invariant.
Dataset dataset_from_tensors(std::vector<Tensor> tensors);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct SynthSpec {
  int num_seen = 8;
  int num_unseen = 4;
  int num_attributes = 12;
  int num_regions = 9;
  int dim_visual = 16;
  int dim_attribute = 10;
  int samples_per_class = 50;
  double noise_std = 0.1;
  // Fraction of each seen class held out into test_seen_idx.
  double test_seen_fraction = 0.2;
  std::uint64_t seed = 1;
};

void validate_synth_spec(const SynthSpec& spec);

// Names of the generator-side extras attached to synthetic datasets.
inline constexpr const char* kRegionAttributesTensor = "region_attributes";
inline constexpr const char* kGeneratorMapTensor = "generator_map";

// Builds a dataset whose region features are noisy images G·a_k of attribute
// vectors, with k drawn per region proportionally to the class semantics.
// Classes [0, num_seen) are seen, the rest unseen. The generating attribute
// of every region (N×R) and the map G (d_v×d_a) are attached as extras.
// All reals are rounded to f32 so that a save/load cycle is lossless.
Dataset generate_synthetic(const SynthSpec& spec);

}  // namespace msdn
