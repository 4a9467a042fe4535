#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dshift/tensor.hpp"

namespace dshift {

struct ImageEntry {
  std::filesystem::path path;  // relative to the set root
  int label = 0;
  bool operator==(const ImageEntry&) const = default;
};

// Labeled classification images laid out as <root>/<class_name>/<file>.
struct LabeledImageSet {
  std::filesystem::path root;
  std::vector<ImageEntry> entries;
  std::vector<std::string> class_names;
  std::vector<std::string> excluded;  // classes removed by exclude_classes
  std::vector<std::string> warnings;
  std::size_t ignored_files = 0;      // non-image files seen by scan_folder

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  std::filesystem::path file(std::size_t i) const { return root / entries[i].path; }
  std::vector<std::size_t> class_counts() const;
  // Class names not listed in `excluded`.
  std::vector<std::string> active_classes() const;
};

// Aligned (clean, low-quality) files under <root>/clean and <root>/low.
struct PairedImageSet {
  std::filesystem::path root;
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> entries;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return entries.size(); }
};

// Decoded images held in memory: images is [N, 3, H, W].
struct LoadedSet {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
};

struct LoadedPairs {
  Tensor clean;
  Tensor low;

  std::size_t size() const { return clean.n(); }
};

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;
  bool stratified = true;

  void validate() const;
};

struct SplitResult {
  LabeledImageSet train;
  LabeledImageSet val;
  LabeledImageSet test;
};

LabeledImageSet scan_folder(const std::filesystem::path& root);

// Pairs files with identical relative paths under root/clean and root/low.
// Both sides of every pair must decode to one common shape.
PairedImageSet scan_pairs(const std::filesystem::path& root);

SplitResult split(const LabeledImageSet& set, const SplitSpec& spec);

LabeledImageSet exclude_classes(const LabeledImageSet& set,
                                const std::vector<std::string>& excluded);

// Keeps entries whose label is in `classes` (by name). Labels keep their
// original indices.
LabeledImageSet keep_classes(const LabeledImageSet& set,
                             const std::vector<std::string>& classes);

// Split manifests: one relative path per line. Labels are recovered from the
// leading class directory when reading.
void write_manifest(const LabeledImageSet& set, const std::filesystem::path& path);
LabeledImageSet read_manifest(const std::filesystem::path& root,
                              const std::vector<std::string>& class_names,
                              const std::filesystem::path& manifest);

LoadedSet load_set(const LabeledImageSet& set);
LoadedPairs load_pairs(const PairedImageSet& set);
// Concatenates sets sharing one vocabulary and resolution.
LoadedSet concat(const std::vector<const LoadedSet*>& sets);

// Index batches for one epoch: a (seed, epoch)-derived permutation cut into
// runs of `batch_size`, the last one possibly short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

std::vector<Batch> batch_iter(const LoadedSet& set, std::size_t batch_size,
                              std::uint64_t seed, std::size_t epoch);

// Procedural object families. Family i of gen_shapes_dataset is
// shape_family_name(first_family + i).
constexpr std::size_t kShapeFamilies = 10;
std::string shape_family_name(std::size_t family);

struct ShapesOptions {
  std::size_t classes = 5;
  std::size_t per_class = 400;
  std::size_t resolution = 64;
  std::uint64_t seed = 0;
  std::size_t first_family = 0;
};

// Renders the dataset as PNG files under out/<family>/<index>.png.
LabeledImageSet gen_shapes_dataset(const std::filesystem::path& out,
                                   const ShapesOptions& options);

// Renders a single image of `family` (no file IO).
Tensor render_shape(std::size_t family, std::size_t resolution, std::uint64_t seed);

}  // namespace dshift
