#include "hdcgan/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hdc {

namespace {

const std::vector<std::pair<std::string, std::vector<std::string>>>&
schema() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>>
      s = {
          {"age",
           {"early_adulthood", "middle_aged", "teenager", "adult", "kid",
            "senior", "retirement", "baby"}},
          {"ethnicity",
           {"african_american", "white", "east_asian", "south_asian"}},
          {"eyes_color", {"brown", "other", "blue", "green"}},
          {"facial_hair",
           {"no", "light_mustache", "light_goatee", "light_beard",
            "thick_goatee", "thick_beard", "thick_mustache"}},
          {"gender", {"male", "female"}},
          {"glasses", {"no", "eyeglasses", "sunglasses"}},
          {"hair_color", {"black", "brown", "other", "blonde", "white",
                          "red"}},
          {"hair_covered", {"no", "turban", "cap", "helmet"}},
          {"hair_style",
           {"short_straight", "long_straight", "short_curly", "other",
            "bald", "long_curly"}},
          {"smile", {"yes", "no"}},
          {"visible_forehead", {"yes", "no"}},
      };
  return s;
}

std::string normalize_token(std::string v) {
  for (char& c : v) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (c == ' ' || c == '-') c = '_';
  }
  return v;
}

// Minimal CSV with RFC-style quoting; fields holding , " or newline
// get quoted on write.
std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_row(const std::string& line,
                                       std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      if (!cur.empty()) {
        throw Error("malformed CSV quoting at line " +
                    std::to_string(line_no));
      }
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw Error("unterminated CSV quote at line " + std::to_string(line_no));
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> manifest_header() {
  std::vector<std::string> h = {"path", "source_id", "mirrored", "size"};
  for (const std::string& a : attribute_names()) h.push_back(a);
  return h;
}

Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out;
  out.channels = 3;
  out.height = img.height;
  out.width = img.width;
  out.pixels.resize(3 * img.height * img.width);
  for (int c = 0; c < 3; ++c) {
    std::copy(img.pixels.begin(), img.pixels.end(),
              out.pixels.begin() +
                  static_cast<std::ptrdiff_t>(c * img.height * img.width));
  }
  return out;
}

}  // namespace

const std::vector<std::string>& attribute_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, classes] : schema()) out.push_back(name);
    return out;
  }();
  return names;
}

const std::vector<std::string>& attribute_classes(
    const std::string& attribute) {
  for (const auto& [name, classes] : schema()) {
    if (name == attribute) return classes;
  }
  throw Error("unknown attribute '" + attribute + "'");
}

bool is_schema_attribute(const std::string& attribute) {
  for (const auto& [name, classes] : schema()) {
    if (name == attribute) return true;
  }
  return false;
}

bool is_schema_value(const std::string& attribute, const std::string& value) {
  const auto& classes = attribute_classes(attribute);
  return std::find(classes.begin(), classes.end(), value) != classes.end();
}

std::map<std::string, std::map<std::string, std::size_t>>
DatasetManifest::class_counts() const {
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const std::string& a : attribute_names()) counts[a];
  for (const SampleRecord& r : records) {
    for (const auto& [attr, value] : r.attributes) {
      ++counts[attr][value];
    }
  }
  return counts;
}

namespace {

// Sidecar rows keyed by input filename.
std::map<std::string, std::map<std::string, std::string>> read_attribute_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("empty attribute CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_row(line, 1);
  std::size_t file_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    header[i] = normalize_token(header[i]);
    if (header[i] == "file") {
      file_col = i;
    } else if (!is_schema_attribute(header[i])) {
      throw Error("attribute CSV column '" + header[i] +
                  "' is not in the schema");
    }
  }
  if (file_col == header.size()) {
    throw Error("attribute CSV needs a 'file' column");
  }
  std::map<std::string, std::map<std::string, std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_row(line, line_no);
    if (fields.size() != header.size()) {
      throw Error("attribute CSV line " + std::to_string(line_no) + " has " +
                  std::to_string(fields.size()) + " fields, header has " +
                  std::to_string(header.size()));
    }
    std::map<std::string, std::string> attrs;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i == file_col) continue;
      const std::string value = normalize_token(fields[i]);
      if (value.empty()) continue;
      if (!is_schema_value(header[i], value)) {
        throw Error("attribute CSV line " + std::to_string(line_no) + ": '" +
                    value + "' is not a " + header[i] + " class");
      }
      attrs[header[i]] = value;
    }
    rows[fields[file_col]] = std::move(attrs);
  }
  return rows;
}

}  // namespace

IngestReport ingest(const std::filesystem::path& input_dir,
                    const std::filesystem::path& output_dir,
                    std::size_t target_size, const CropSpec& crop,
                    const std::filesystem::path& attributes_csv) {
  if (target_size == 0) throw Error("target size must be positive");
  if (!std::filesystem::is_directory(input_dir)) {
    throw Error(input_dir.string() + " is not a directory");
  }
  std::map<std::string, std::map<std::string, std::string>> sidecar;
  if (!attributes_csv.empty()) {
    sidecar = read_attribute_csv(attributes_csv);
  } else if (std::filesystem::exists(input_dir / "attributes.csv")) {
    sidecar = read_attribute_csv(input_dir / "attributes.csv");
  }

  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(input_dir)) {
    if (e.is_regular_file() && e.path().filename() != "attributes.csv") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());

  std::filesystem::create_directories(output_dir);
  IngestReport report;
  report.manifest.image_size = target_size;
  std::vector<std::string> used_names;
  for (const std::filesystem::path& f : files) {
    Image img;
    try {
      img = load_image(f);
    } catch (const std::exception& ex) {
      ++report.skipped;
      report.warnings.push_back("skipped " + f.filename().string() + ": " +
                                ex.what());
      continue;
    }
    const std::string fname = f.filename().string();
    auto box = crop.boxes.find(fname);
    Image cropped = box == crop.boxes.end()
                        ? center_crop_square(img)
                        : hdc::crop(img, box->second.x, box->second.y,
                                    box->second.w, box->second.h);
    Image resized = to_rgb(resize(cropped, target_size, target_size));

    std::string out_name = f.stem().string() + ".png";
    if (std::find(used_names.begin(), used_names.end(), out_name) !=
        used_names.end()) {
      out_name = fname + ".png";
    }
    used_names.push_back(out_name);
    save_png(resized, output_dir / out_name);

    SampleRecord rec;
    rec.path = out_name;
    rec.source_id = f.stem().string();
    auto attrs = sidecar.find(fname);
    if (attrs != sidecar.end()) rec.attributes = attrs->second;
    report.manifest.records.push_back(std::move(rec));
  }
  if (report.manifest.records.empty()) {
    throw Error("no decodable images in " + input_dir.string());
  }
  return report;
}

DatasetManifest mirror_augment(const DatasetManifest& manifest) {
  DatasetManifest out = manifest;
  std::vector<std::string> already;
  for (const SampleRecord& r : manifest.records) {
    if (r.mirrored) already.push_back(r.source_id);
  }
  for (const SampleRecord& r : manifest.records) {
    if (r.mirrored) continue;
    if (std::find(already.begin(), already.end(), r.source_id) !=
        already.end()) {
      continue;
    }
    SampleRecord m = r;
    m.mirrored = true;
    out.records.push_back(std::move(m));
  }
  return out;
}

void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw Error("cannot write " + csv_path.string());
  const auto header = manifest_header();
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << header[i];
  }
  out << '\n';
  for (const SampleRecord& r : manifest.records) {
    out << csv_field(r.path) << ',' << csv_field(r.source_id) << ','
        << (r.mirrored ? '1' : '0') << ',' << manifest.image_size;
    for (const std::string& a : attribute_names()) {
      auto it = r.attributes.find(a);
      out << ',' << (it == r.attributes.end() ? "" : csv_field(it->second));
    }
    out << '\n';
  }
  if (!out) throw Error("short write to " + csv_path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw Error("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto expected = manifest_header();
  if (split_csv_row(line, 1) != expected) {
    throw Error("manifest header does not match the schema");
  }
  DatasetManifest m;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_row(line, line_no);
    if (fields.size() != expected.size()) {
      throw Error("manifest line " + std::to_string(line_no) +
                  " has the wrong field count");
    }
    SampleRecord r;
    r.path = fields[0];
    r.source_id = fields[1];
    if (fields[2] != "0" && fields[2] != "1") {
      throw Error("manifest line " + std::to_string(line_no) +
                  ": mirrored must be 0 or 1");
    }
    r.mirrored = fields[2] == "1";
    const std::size_t size = std::stoull(fields[3]);
    if (m.records.empty()) {
      m.image_size = size;
    } else if (size != m.image_size) {
      throw Error("manifest line " + std::to_string(line_no) +
                  ": inconsistent image size");
    }
    for (std::size_t i = 4; i < fields.size(); ++i) {
      if (fields[i].empty()) continue;
      const std::string& attr = expected[i];
      if (!is_schema_value(attr, fields[i])) {
        throw Error("manifest line " + std::to_string(line_no) + ": '" +
                    fields[i] + "' is not a " + attr + " class");
      }
      r.attributes[attr] = fields[i];
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void write_stats_json(const DatasetManifest& manifest,
                      const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["image_size"] = manifest.image_size;
  j["record_count"] = manifest.records.size();
  std::size_t mirrored = 0;
  for (const SampleRecord& r : manifest.records) mirrored += r.mirrored;
  j["mirrored_count"] = mirrored;
  const auto counts = manifest.class_counts();
  nlohmann::ordered_json attrs;
  for (const std::string& a : attribute_names()) {
    // Classes listed by descending count, then name, as in the
    // dataset's published table.
    std::vector<std::pair<std::string, std::size_t>> rows(
        counts.at(a).begin(), counts.at(a).end());
    std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
      return x.second != y.second ? x.second > y.second : x.first < y.first;
    });
    nlohmann::ordered_json classes;
    std::size_t labeled = 0;
    for (const auto& [cls, n] : rows) {
      classes[cls] = n;
      labeled += n;
    }
    const std::size_t unlabeled = manifest.records.size() - labeled;
    if (unlabeled > 0) classes["unlabeled"] = unlabeled;
    attrs[a] = std::move(classes);
  }
  j["attributes"] = std::move(attrs);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

BatchStream::BatchStream(const DatasetManifest& manifest,
                         std::string attribute, std::size_t batch_size,
                         RngStream rng)
    : batch_size_(batch_size), rng_(rng) {
  if (batch_size == 0) throw Error("batch size must be positive");
  if (manifest.records.empty()) throw Error("empty manifest");
  if (attribute.empty()) {
    class_indices_.emplace_back();
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      class_indices_[0].push_back(i);
    }
  } else {
    if (!is_schema_attribute(attribute)) {
      throw Error("unknown attribute '" + attribute + "'");
    }
    std::map<std::string, std::vector<std::size_t>> by_class;
    std::size_t unlabeled = 0;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      auto it = manifest.records[i].attributes.find(attribute);
      if (it == manifest.records[i].attributes.end()) {
        ++unlabeled;
      } else {
        by_class[it->second].push_back(i);
      }
    }
    if (by_class.empty()) {
      throw Error("no records labeled with '" + attribute + "'");
    }
    if (unlabeled > 0) {
      throw Error(std::to_string(unlabeled) + " records lack the '" +
                  attribute + "' label");
    }
    for (auto& [cls, idx] : by_class) {
      class_indices_.push_back(std::move(idx));
    }
  }

  std::size_t max_n = 0;
  for (const auto& idx : class_indices_) max_n = std::max(max_n, idx.size());
  batches_per_epoch_ = class_indices_.size() * max_n / batch_size_;
  if (batches_per_epoch_ == 0) {
    throw Error("batch size " + std::to_string(batch_size_) +
                " exceeds one epoch (" +
                std::to_string(class_indices_.size() * max_n) + " samples)");
  }
  build_epoch();
}

void BatchStream::build_epoch() {
  const std::size_t C = class_indices_.size();
  const std::size_t base = batch_size_ / C;
  const std::size_t rem = batch_size_ % C;

  // Exact per-class demand for this epoch; the remainder rotates
  // across classes batch by batch.
  std::vector<std::size_t> need(C, 0);
  for (std::size_t b = 0; b < batches_per_epoch_; ++b) {
    for (std::size_t c = 0; c < C; ++c) need[c] += base;
    for (std::size_t j = 0; j < rem; ++j) {
      ++need[(b * rem + j) % C];
    }
  }

  // Pools are repeated fresh shuffles of each class, truncated to the
  // demand; minorities therefore get oversampled.
  std::vector<std::vector<std::size_t>> pool(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto& idx = class_indices_[c];
    while (pool[c].size() < need[c]) {
      for (std::size_t p : rng_.permutation(idx.size())) {
        pool[c].push_back(idx[p]);
        if (pool[c].size() == need[c]) break;
      }
    }
  }

  order_.clear();
  order_.reserve(batches_per_epoch_ * batch_size_);
  std::vector<std::size_t> cursor(C, 0);
  std::vector<std::size_t> batch;
  for (std::size_t b = 0; b < batches_per_epoch_; ++b) {
    batch.clear();
    std::vector<std::size_t> quota(C, base);
    for (std::size_t j = 0; j < rem; ++j) ++quota[(b * rem + j) % C];
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < quota[c]; ++k) {
        batch.push_back(pool[c][cursor[c]++]);
      }
    }
    for (std::size_t p : rng_.permutation(batch.size())) {
      order_.push_back(batch[p]);
    }
  }
  cursor_ = 0;
}

std::vector<std::size_t> BatchStream::next_batch() {
  if (cursor_ == batches_per_epoch_) {
    ++epoch_;
    build_epoch();
  }
  const std::size_t off = cursor_ * batch_size_;
  ++cursor_;
  return std::vector<std::size_t>(order_.begin() + off,
                                  order_.begin() + off + batch_size_);
}

DatasetLoader::DatasetLoader(DatasetManifest manifest,
                             std::filesystem::path base_dir)
    : manifest_(std::move(manifest)), base_dir_(std::move(base_dir)) {
  if (manifest_.records.empty()) throw Error("empty manifest");
}

Image DatasetLoader::load_record(std::size_t index) const {
  if (index >= manifest_.records.size()) {
    throw Error("record index out of range");
  }
  const SampleRecord& r = manifest_.records[index];
  Image img = to_rgb(load_image(base_dir_ / r.path));
  if (img.height != manifest_.image_size ||
      img.width != manifest_.image_size) {
    throw Error(r.path + " decodes to " + std::to_string(img.width) + "x" +
                std::to_string(img.height) + ", manifest declares " +
                std::to_string(manifest_.image_size));
  }
  return r.mirrored ? flip_horizontal(img) : img;
}

TensorF DatasetLoader::load_batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw Error("empty batch");
  std::vector<Image> images;
  images.reserve(indices.size());
  for (std::size_t i : indices) images.push_back(load_record(i));
  return batch_to_tensor(images);
}

}  // namespace hdc
