#include "dshift/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "dshift/error.hpp"
#include "dshift/image_io.hpp"
#include "dshift/random.hpp"

namespace fs = std::filesystem;

namespace dshift {

std::vector<std::size_t> LabeledImageSet::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const auto& e : entries) counts[static_cast<std::size_t>(e.label)] += 1;
  return counts;
}

std::vector<std::string> LabeledImageSet::active_classes() const {
  std::vector<std::string> active;
  for (const auto& name : class_names) {
    if (std::find(excluded.begin(), excluded.end(), name) == excluded.end()) {
      active.push_back(name);
    }
  }
  return active;
}

namespace {

bool hidden(const fs::path& p) {
  const std::string name = p.filename().string();
  return !name.empty() && name.front() == '.';
}

std::vector<fs::path> sorted_children(const fs::path& dir) {
  std::vector<fs::path> children;
  for (const auto& item : fs::directory_iterator(dir)) children.push_back(item.path());
  std::sort(children.begin(), children.end());
  return children;
}

std::size_t count_files_below(const fs::path& dir) {
  std::size_t count = 0;
  for (const auto& item : fs::recursive_directory_iterator(dir)) {
    if (item.is_regular_file()) ++count;
  }
  return count;
}

LabeledImageSet with_entries(const LabeledImageSet& like, std::vector<ImageEntry> entries) {
  LabeledImageSet out;
  out.root = like.root;
  out.class_names = like.class_names;
  out.excluded = like.excluded;
  out.entries = std::move(entries);
  return out;
}

}  // namespace

LabeledImageSet scan_folder(const fs::path& root) {
  if (!fs::is_directory(root)) throw FileError(root.string(), "not a directory");
  LabeledImageSet set;
  set.root = root;
  std::vector<fs::path> class_dirs;
  for (const auto& child : sorted_children(root)) {
    if (hidden(child)) continue;
    if (fs::is_directory(child)) {
      class_dirs.push_back(child);
    } else {
      ++set.ignored_files;
    }
  }
  if (class_dirs.empty()) throw FileError(root.string(), "no class subdirectories found");

  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    const fs::path& dir = class_dirs[label];
    const std::string name = dir.filename().string();
    set.class_names.push_back(name);
    std::size_t found = 0;
    for (const auto& child : sorted_children(dir)) {
      if (hidden(child)) continue;
      if (fs::is_directory(child)) {
        set.ignored_files += count_files_below(child);
      } else if (fs::is_regular_file(child) && is_image_file(child)) {
        set.entries.push_back(ImageEntry{fs::path(name) / child.filename(),
                                         static_cast<int>(label)});
        ++found;
      } else {
        ++set.ignored_files;
      }
    }
    if (found == 0) set.warnings.push_back("class '" + name + "' has no images");
  }
  return set;
}

PairedImageSet scan_pairs(const fs::path& root) {
  const fs::path clean_dir = root / "clean";
  const fs::path low_dir = root / "low";
  if (!fs::is_directory(clean_dir)) throw FileError(clean_dir.string(), "missing clean/ directory");
  if (!fs::is_directory(low_dir)) throw FileError(low_dir.string(), "missing low/ directory");

  std::vector<fs::path> relative;
  for (const auto& item : fs::recursive_directory_iterator(clean_dir)) {
    if (item.is_regular_file() && is_image_file(item.path()) && !hidden(item.path())) {
      relative.push_back(fs::relative(item.path(), clean_dir));
    }
  }
  std::sort(relative.begin(), relative.end());

  PairedImageSet set;
  set.root = root;
  for (const auto& rel : relative) {
    if (!fs::is_regular_file(low_dir / rel)) {
      throw FileError((low_dir / rel).string(), "missing low-quality counterpart");
    }
    set.entries.emplace_back(fs::path("clean") / rel, fs::path("low") / rel);
  }
  if (!set.entries.empty()) {
    const Tensor first = load_image(root / set.entries.front().first);
    set.height = first.h();
    set.width = first.w();
  }
  return set;
}

void SplitSpec::validate() const {
  for (double f : {train, val, test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw usage_error("split fractions must lie in [0, 1]");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw usage_error("split fractions must sum to 1");
  }
}

namespace {

struct Counts {
  std::size_t train, val, test;
};

Counts split_counts(std::size_t n, const SplitSpec& spec) {
  auto part = [n](double f) {
    return static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
  };
  std::size_t train = std::min(part(spec.train), n);
  std::size_t val = std::min(part(spec.val), n - train);
  std::size_t test = n - train - val;
  if (spec.test == 0.0 && test > 0) {
    // rounding leftovers go to whichever non-empty partition comes first
    if (spec.train > 0.0) {
      train += test;
    } else {
      val += test;
    }
    test = 0;
  }
  return {train, val, test};
}

void assign(const std::vector<ImageEntry>& ordered, const Counts& counts, SplitResult& out) {
  std::size_t i = 0;
  for (; i < counts.train; ++i) out.train.entries.push_back(ordered[i]);
  for (; i < counts.train + counts.val; ++i) out.val.entries.push_back(ordered[i]);
  for (; i < ordered.size(); ++i) out.test.entries.push_back(ordered[i]);
}

void sort_entries(LabeledImageSet& set) {
  std::sort(set.entries.begin(), set.entries.end(),
            [](const ImageEntry& a, const ImageEntry& b) { return a.path < b.path; });
}

}  // namespace

SplitResult split(const LabeledImageSet& set, const SplitSpec& spec) {
  spec.validate();
  if (set.empty()) throw data_error("split: dataset is empty");
  SplitResult out{with_entries(set, {}), with_entries(set, {}), with_entries(set, {})};

  if (spec.stratified) {
    const std::size_t nonzero = (spec.train > 0) + (spec.val > 0) + (spec.test > 0);
    std::map<int, std::vector<ImageEntry>> by_class;
    for (const auto& e : set.entries) by_class[e.label].push_back(e);
    for (auto& [label, members] : by_class) {
      if (members.size() < nonzero) {
        throw data_error("split: class '" + set.class_names[static_cast<std::size_t>(label)] +
                         "' has " + std::to_string(members.size()) +
                         " entries, fewer than the " + std::to_string(nonzero) +
                         " requested partitions");
      }
      const auto order = permutation(
          members.size(), derive_seed(derive_seed(spec.seed, "split"),
                                      static_cast<std::uint64_t>(label)));
      std::vector<ImageEntry> shuffled;
      shuffled.reserve(members.size());
      for (std::size_t idx : order) shuffled.push_back(members[idx]);
      assign(shuffled, split_counts(members.size(), spec), out);
    }
  } else {
    const auto order = permutation(set.size(), derive_seed(spec.seed, "split"));
    std::vector<ImageEntry> shuffled;
    shuffled.reserve(set.size());
    for (std::size_t idx : order) shuffled.push_back(set.entries[idx]);
    assign(shuffled, split_counts(set.size(), spec), out);
  }
  sort_entries(out.train);
  sort_entries(out.val);
  sort_entries(out.test);
  return out;
}

LabeledImageSet exclude_classes(const LabeledImageSet& set,
                                const std::vector<std::string>& excluded) {
  std::set<int> drop;
  for (const auto& name : excluded) {
    auto it = std::find(set.class_names.begin(), set.class_names.end(), name);
    if (it == set.class_names.end()) {
      throw usage_error("exclude_classes: unknown class '" + name + "'");
    }
    drop.insert(static_cast<int>(it - set.class_names.begin()));
  }
  std::vector<ImageEntry> kept;
  for (const auto& e : set.entries) {
    if (!drop.count(e.label)) kept.push_back(e);
  }
  if (kept.empty()) throw data_error("exclude_classes: no entries remain after exclusion");
  LabeledImageSet out = with_entries(set, std::move(kept));
  for (const auto& name : excluded) {
    if (std::find(out.excluded.begin(), out.excluded.end(), name) == out.excluded.end()) {
      out.excluded.push_back(name);
    }
  }
  return out;
}

LabeledImageSet keep_classes(const LabeledImageSet& set,
                             const std::vector<std::string>& classes) {
  std::vector<std::string> drop;
  for (const auto& name : set.class_names) {
    if (std::find(classes.begin(), classes.end(), name) == classes.end()) drop.push_back(name);
  }
  return exclude_classes(set, drop);
}

void write_manifest(const LabeledImageSet& set, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FileError(path.string(), "cannot open for writing");
  for (const auto& e : set.entries) out << e.path.generic_string() << '\n';
  if (!out) throw FileError(path.string(), "write failed");
}

LabeledImageSet read_manifest(const fs::path& root, const std::vector<std::string>& class_names,
                              const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FileError(manifest.string(), "cannot open for reading");
  LabeledImageSet set;
  set.root = root;
  set.class_names = class_names;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const fs::path rel(line);
    const std::string cls = rel.begin()->string();
    auto it = std::find(class_names.begin(), class_names.end(), cls);
    if (it == class_names.end()) {
      throw FileError(manifest.string(), "line " + std::to_string(line_no) +
                                             ": unknown class '" + cls + "'");
    }
    set.entries.push_back(ImageEntry{rel, static_cast<int>(it - class_names.begin())});
  }
  return set;
}

LoadedSet load_set(const LabeledImageSet& set) {
  LoadedSet out;
  out.class_names = set.class_names;
  std::vector<Tensor> images;
  images.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    images.push_back(load_image(set.file(i)));
    if (images.back().shape() != images.front().shape()) {
      throw FileError(set.file(i).string(),
                      "resolution " + images.back().shape().str() + " differs from " +
                          images.front().shape().str());
    }
    out.labels.push_back(set.entries[i].label);
  }
  out.images = stack(images);
  return out;
}

LoadedPairs load_pairs(const PairedImageSet& set) {
  std::vector<Tensor> clean;
  std::vector<Tensor> low;
  clean.reserve(set.size());
  low.reserve(set.size());
  for (const auto& [c, l] : set.entries) {
    clean.push_back(load_image(set.root / c));
    low.push_back(load_image(set.root / l));
    if (low.back().shape() != clean.back().shape()) {
      throw FileError((set.root / l).string(),
                      "shape " + low.back().shape().str() + " differs from its clean side " +
                          clean.back().shape().str());
    }
    if (clean.back().shape() != clean.front().shape()) {
      throw FileError((set.root / c).string(),
                      "resolution " + clean.back().shape().str() + " differs from " +
                          clean.front().shape().str());
    }
  }
  return LoadedPairs{stack(clean), stack(low)};
}

LoadedSet concat(const std::vector<const LoadedSet*>& sets) {
  if (sets.empty()) throw usage_error("concat: no sets given");
  LoadedSet out;
  out.class_names = sets.front()->class_names;
  std::vector<Tensor> parts;
  for (const LoadedSet* s : sets) {
    if (s->class_names != out.class_names) {
      throw data_error("concat: class vocabularies differ");
    }
    parts.push_back(s->images);
    out.labels.insert(out.labels.end(), s->labels.begin(), s->labels.end());
  }
  out.images = stack(parts);
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch) {
  if (batch_size < 1) throw usage_error("batch_size must be >= 1");
  const auto order = permutation(count, derive_seed(derive_seed(seed, "batches"), epoch));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < count; begin += batch_size) {
    const std::size_t end = std::min(count, begin + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<Batch> batch_iter(const LoadedSet& set, std::size_t batch_size,
                              std::uint64_t seed, std::size_t epoch) {
  std::vector<Batch> batches;
  for (const auto& idx : batch_indices(set.size(), batch_size, seed, epoch)) {
    Batch b;
    b.images = gather_batch(set.images, idx);
    for (std::size_t i : idx) b.labels.push_back(set.labels[i]);
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace dshift
