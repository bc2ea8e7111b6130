#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hdcgan/image.hpp"
#include "hdcgan/tensor.hpp"

namespace hdc {

/// The Graphics attribute schema: eleven attributes, each with its
/// closed class list. Names and values are lower_snake_case.
const std::vector<std::string>& attribute_names();
const std::vector<std::string>& attribute_classes(
    const std::string& attribute);
bool is_schema_attribute(const std::string& attribute);
bool is_schema_value(const std::string& attribute, const std::string& value);

struct SampleRecord {
  std::string path;       // image file, relative to the manifest's base dir
  std::string source_id;  // original file stem; shared by mirrored copies
  bool mirrored = false;
  /// Keys are schema attributes; unlabeled attributes are simply absent.
  std::map<std::string, std::string> attributes;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::size_t image_size = 0;

  /// attribute -> class -> record count, labeled records only.
  std::map<std::string, std::map<std::string, std::size_t>> class_counts()
      const;
};

struct CropBox {
  std::size_t x = 0, y = 0, w = 0, h = 0;
};

/// Per-file crop boxes keyed by filename; files without a box fall back
/// to the center crop.
struct CropSpec {
  std::map<std::string, CropBox> boxes;
};

struct IngestReport {
  DatasetManifest manifest;
  std::size_t skipped = 0;  // undecodable inputs
  std::vector<std::string> warnings;
};

/// Crops, resizes to target_size x target_size, re-encodes every
/// decodable image in input_dir to output_dir as 3-channel PNG, and
/// assembles the manifest. Files are visited in sorted name order.
/// attributes_csv (optional) labels records by filename; a value
/// outside the schema is an error, an undecodable image is skipped
/// with a warning.
IngestReport ingest(const std::filesystem::path& input_dir,
                    const std::filesystem::path& output_dir,
                    std::size_t target_size, const CropSpec& crop = {},
                    const std::filesystem::path& attributes_csv = {});

/// Appends a mirrored record for every non-mirrored one. Pixels are
/// flipped at load time, so no new files are written. Idempotent.
DatasetManifest mirror_augment(const DatasetManifest& manifest);

void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& csv_path);
DatasetManifest read_manifest(const std::filesystem::path& csv_path);

/// Per-attribute class counts as JSON, mirroring the manifest layout.
void write_stats_json(const DatasetManifest& manifest,
                      const std::filesystem::path& path);

/// Emits record indices batch by batch. With an attribute the stream is
/// stratified: every epoch each class contributes the same number of
/// samples (minorities oversampled to the majority count) and each
/// batch's class proportions are uniform within one sample. Without an
/// attribute it is a plain per-epoch shuffle. Partial trailing batches
/// are dropped. Same seed, same sequence.
class BatchStream {
 public:
  BatchStream() = default;
  BatchStream(const DatasetManifest& manifest, std::string attribute,
              std::size_t batch_size, RngStream rng);

  std::vector<std::size_t> next_batch();
  std::size_t batches_per_epoch() const { return batches_per_epoch_; }
  std::size_t batch_size() const { return batch_size_; }
  std::size_t epoch() const { return epoch_; }

 private:
  void build_epoch();

  std::vector<std::vector<std::size_t>> class_indices_;
  std::size_t batch_size_ = 0;
  std::size_t batches_per_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  RngStream rng_{0};
  std::vector<std::size_t> order_;  // current epoch, concatenated batches
};

/// Loads manifest records as training tensors. Batches come out as
/// [B, 3, s, s] with values in [-1, 1]; grayscale sources are
/// replicated to three channels and mirrored records flipped on load.
class DatasetLoader {
 public:
  explicit DatasetLoader(DatasetManifest manifest,
                         std::filesystem::path base_dir = {});

  Image load_record(std::size_t index) const;
  TensorF load_batch(std::span<const std::size_t> indices) const;

  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  std::filesystem::path base_dir_;
};

}  // namespace hdc
