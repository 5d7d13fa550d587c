#include "slgan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "slgan/random.hpp"

namespace slgan {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDomainDirs[] = {"non-makeup", "makeup"};

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IOError", "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

cv::Mat decode_mat(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error("DecodeError", "empty image buffer");
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat m;
  try {
    m = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw Error("DecodeError", e.what());
  }
  if (m.empty()) throw Error("DecodeError", "image data could not be decoded");
  if (m.depth() != CV_8U) throw Error("NonRGBInput", "only 8-bit images are supported");
  return m;
}

bool in_set(int v, std::initializer_list<int> s) { return std::find(s.begin(), s.end(), v) != s.end(); }

}  // namespace

DatasetIndex load_manifest(const fs::path& root, int resolution) {
  if (resolution < 4) throw Error("InvalidConfig", "resolution must be at least 4");
  DatasetIndex idx;
  idx.root = root;
  idx.resolution = resolution;
  for (const char* sub : {"images/makeup", "images/non-makeup", "segs/makeup", "segs/non-makeup"})
    if (!fs::is_directory(root / sub)) throw Error("MissingDirectory", (root / sub).string());

  for (int d = 0; d < kNumDomains; ++d) {
    const std::string dom = kDomainDirs[d];
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(root / "images" / dom)) {
      if (!e.is_regular_file() || !is_image_file(e.path())) continue;
      const std::string id = dom + "/" + e.path().filename().string();
      const fs::path seg = fs::path("segs") / dom / (e.path().stem().string() + ".png");
      if (!fs::is_regular_file(root / seg)) throw Error("OrphanImage", id + " has no parsing map " + seg.string());
      idx.seg_paths[id] = seg.string();
      const fs::path lm = fs::path("landmarks") / dom / (e.path().stem().string() + ".txt");
      if (fs::is_regular_file(root / lm)) idx.landmark_paths[id] = lm.string();
      ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    (d == static_cast<int>(Domain::makeup) ? idx.makeup_paths : idx.nonmakeup_paths) = std::move(ids);
  }
  return idx;
}

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
  const cv::Mat m = decode_mat(bytes);
  if (m.channels() != 3) throw Error("NonRGBInput", "expected 3 channels, got " + std::to_string(m.channels()));
  cv::Mat rgb;
  cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB);
  RgbImage out;
  out.width = rgb.cols;
  out.height = rgb.rows;
  out.pixels.resize(static_cast<std::size_t>(rgb.cols) * rgb.rows * 3);
  for (int y = 0; y < rgb.rows; ++y) std::copy_n(rgb.ptr<std::uint8_t>(y), rgb.cols * 3, out.pixels.data() + y * rgb.cols * 3);
  return out;
}

RgbImage read_image(const fs::path& path) { return decode_image(read_file(path)); }

LabelMap decode_label_map(std::span<const std::uint8_t> bytes) {
  cv::Mat m = decode_mat(bytes);
  if (m.channels() == 3 || m.channels() == 4) {
    std::vector<cv::Mat> planes;
    cv::split(m, planes);
    m = planes[0];
  } else if (m.channels() != 1) {
    throw Error("DecodeError", "label map must be single-channel");
  }
  LabelMap out;
  out.width = m.cols;
  out.height = m.rows;
  out.labels.resize(static_cast<std::size_t>(m.cols) * m.rows);
  for (int y = 0; y < m.rows; ++y) std::copy_n(m.ptr<std::uint8_t>(y), m.cols, out.labels.data() + y * m.cols);
  return out;
}

LabelMap read_label_map(const fs::path& path) { return decode_label_map(read_file(path)); }

LabelMap resize_labels_nearest(const LabelMap& map, int width, int height) {
  if (map.width == width && map.height == height) return map;
  LabelMap out;
  out.width = width;
  out.height = height;
  out.labels.resize(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out.labels[static_cast<std::size_t>(y) * width + x] =
          map.labels[static_cast<std::size_t>(y * map.height / height) * map.width + x * map.width / width];
  return out;
}

Tensor preprocess_image(const RgbImage& raw, int resolution) {
  if (raw.width <= 0 || raw.height <= 0 || raw.pixels.size() != static_cast<std::size_t>(raw.width) * raw.height * 3)
    throw Error("NonRGBInput", "malformed RGB buffer");
  cv::Mat src(raw.height, raw.width, CV_8UC3, const_cast<std::uint8_t*>(raw.pixels.data()));
  cv::Mat img = src;
  if (raw.width != resolution || raw.height != resolution)
    cv::resize(src, img, cv::Size(resolution, resolution), 0, 0, cv::INTER_LINEAR);
  Tensor out({1, 3, resolution, resolution});
  for (int y = 0; y < resolution; ++y) {
    const std::uint8_t* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < resolution; ++x)
      for (int c = 0; c < 3; ++c) out.at4(0, c, y, x) = row[x * 3 + c] / 127.5 - 1.0;
  }
  return out;
}

RgbImage to_rgb8(const Tensor& image, std::int64_t index) {
  if (image.rank() != 4 || image.dim(1) != 3) throw Error("ShapeMismatch", "to_rgb8 expects N×3×H×W");
  RgbImage out;
  out.height = static_cast<int>(image.dim(2));
  out.width = static_cast<int>(image.dim(3));
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp((image.at4(index, c, y, x) + 1.0) * 127.5, 0.0, 255.0);
        out.pixels[(static_cast<std::size_t>(y) * out.width + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v));
      }
  return out;
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", bgr, buf)) throw Error("IOError", "PNG encoding failed");
  return buf;
}

void write_png(const RgbImage& img, const fs::path& path) {
  const auto buf = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("IOError", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

int eye_ring_px(int resolution) { return static_cast<int>(std::lround(12.0 * resolution / 256.0)); }

RegionMasks derive_region_masks(const LabelMap& parsing, int dilation_px) {
  if (dilation_px < 0) throw Error("InvalidConfig", "dilation must be non-negative");
  const int H = parsing.height, W = parsing.width;
  cv::Mat eyes_core(H, W, CV_8UC1, cv::Scalar(0));
  for (int i = 0; i < H * W; ++i) {
    const int l = parsing.labels[static_cast<std::size_t>(i)];
    if (l >= label::count) throw Error("UnknownLabel", "label id " + std::to_string(l));
    if (l == label::l_eye || l == label::r_eye) eyes_core.data[i] = 1;
  }
  cv::Mat dilated = eyes_core.clone();
  if (dilation_px > 0) {
    const cv::Mat kernel = cv::getStructuringElement(cv::MORPH_RECT, cv::Size(2 * dilation_px + 1, 2 * dilation_px + 1));
    cv::dilate(eyes_core, dilated, kernel);
  }

  RegionMasks m;
  m.lips = Tensor({1, 1, H, W});
  m.eyes = Tensor({1, 1, H, W});
  m.face = Tensor({1, 1, H, W});
  m.full_face = Tensor({1, 1, H, W});
  for (int i = 0; i < H * W; ++i) {
    const int l = parsing.labels[static_cast<std::size_t>(i)];
    const bool full = in_set(l, {label::skin, label::l_brow, label::r_brow, label::l_eye, label::r_eye,
                                 label::eye_glasses, label::nose, label::mouth, label::u_lip, label::l_lip});
    const bool lips = l == label::u_lip || l == label::l_lip;
    const bool ring = dilated.data[i] && full && !lips &&
                      !in_set(l, {label::l_eye, label::r_eye, label::l_brow, label::r_brow, label::hair});
    const bool face = (l == label::skin || l == label::nose) && !ring;
    m.full_face[i] = full ? 1.0 : 0.0;
    m.lips[i] = lips ? 1.0 : 0.0;
    m.eyes[i] = ring ? 1.0 : 0.0;
    m.face[i] = face ? 1.0 : 0.0;
  }
  return m;
}

RegionMasks unmasked_regions(int resolution) {
  RegionMasks m;
  m.lips = Tensor({1, 1, resolution, resolution});
  m.eyes = Tensor({1, 1, resolution, resolution});
  m.face = Tensor({1, 1, resolution, resolution});
  m.full_face = Tensor({1, 1, resolution, resolution}, 1.0);
  return m;
}

std::vector<Landmark> parse_landmarks(const std::string& text) {
  std::istringstream in(text);
  std::vector<Landmark> pts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Landmark p;
    if (!(ls >> p.x >> p.y)) throw Error("DecodeError", "bad landmark line: " + line);
    pts.push_back(p);
  }
  return pts;
}

std::vector<Landmark> read_landmarks(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("IOError", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_landmarks(ss.str());
}

std::vector<Landmark> scale_landmarks(std::span<const Landmark> pts, int src_width, int src_height, int resolution) {
  std::vector<Landmark> out;
  out.reserve(pts.size());
  for (const auto& p : pts)
    out.push_back({(p.x + 0.5) * resolution / src_width - 0.5, (p.y + 0.5) * resolution / src_height - 0.5});
  return out;
}

Tensor landmark_heatmap(std::span<const Landmark> landmarks, int resolution, double sigma) {
  if (!(sigma > 0)) throw Error("InvalidConfig", "heatmap sigma must be positive");
  const double lo = -0.5, hi = resolution - 0.5;
  for (const auto& p : landmarks)
    if (!(p.x >= lo && p.x <= hi && p.y >= lo && p.y <= hi))
      throw Error("OutOfBoundsLandmark", "(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")");
  Tensor out({1, 1, resolution, resolution});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (const auto& p : landmarks)
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x) {
        const double dx = x - p.x, dy = y - p.y;
        out.at4(0, 0, y, x) += std::exp(-(dx * dx + dy * dy) * inv);
      }
  for (auto& v : out.vec()) v = std::min(v, 1.0);
  return out;
}

double default_heatmap_sigma(int resolution) { return std::max(1.0, 3.0 * resolution / 256.0); }

BatchPlan plan_batch(const DatasetIndex& index, std::uint64_t seed, int batch_size) {
  if (batch_size < 1) throw Error("InvalidConfig", "batch_size must be at least 1");
  if (index.makeup_paths.empty() || index.nonmakeup_paths.empty())
    throw Error("EmptyDomain", "both domains need at least one image");
  Rng rng(seed);
  BatchPlan plan;
  for (int b = 0; b < batch_size; ++b) {
    const Domain src = (rng() & 1) ? Domain::makeup : Domain::non_makeup;
    const Domain ref = opposite(src);
    const auto& s = index.ids(src);
    const auto& r = index.ids(ref);
    plan.source_ids.push_back(s[uniform_index(rng, s.size())]);
    plan.reference_ids.push_back(r[uniform_index(rng, r.size())]);
    plan.source_domains.push_back(src);
    plan.reference_domains.push_back(ref);
  }
  return plan;
}

TrainingBatch assemble_batch(std::span<const Sample* const> sources, std::span<const Sample* const> references,
                             BatchPlan plan) {
  if (sources.size() != references.size() || sources.empty())
    throw Error("ShapeMismatch", "source and reference batches differ in size");
  auto stack = [](std::span<const Sample* const> ss, auto field) {
    std::vector<Tensor> parts;
    for (const Sample* s : ss) parts.push_back(field(*s));
    return Tensor::stack0(parts);
  };
  auto masks = [&](std::span<const Sample* const> ss) {
    RegionMasks m;
    m.lips = stack(ss, [](const Sample& s) { return s.masks.lips; });
    m.eyes = stack(ss, [](const Sample& s) { return s.masks.eyes; });
    m.face = stack(ss, [](const Sample& s) { return s.masks.face; });
    m.full_face = stack(ss, [](const Sample& s) { return s.masks.full_face; });
    return m;
  };
  TrainingBatch b;
  b.source_images = stack(sources, [](const Sample& s) { return s.image; });
  b.reference_images = stack(references, [](const Sample& s) { return s.image; });
  b.source_masks = masks(sources);
  b.reference_masks = masks(references);
  b.source_heatmaps = stack(sources, [](const Sample& s) { return s.heatmap; });
  for (const Sample* s : sources) b.heatmap_missing.push_back(!s->has_landmarks);
  b.source_domains = plan.source_domains;
  b.reference_domains = plan.reference_domains;
  b.plan = std::move(plan);
  return b;
}

Sample make_sample(const RgbImage& raw, const LabelMap* parsing, const std::vector<Landmark>* landmarks,
                   int resolution) {
  Sample s;
  s.image = preprocess_image(raw, resolution);
  if (parsing) {
    if (parsing->width != raw.width || parsing->height != raw.height)
      throw Error("ShapeMismatch", "parsing map is " + std::to_string(parsing->width) + "x" +
                                       std::to_string(parsing->height) + ", image is " + std::to_string(raw.width) +
                                       "x" + std::to_string(raw.height));
    s.masks = derive_region_masks(resize_labels_nearest(*parsing, resolution, resolution), eye_ring_px(resolution));
    s.has_parsing = true;
  } else {
    s.masks = unmasked_regions(resolution);
  }
  if (landmarks) {
    const auto pts = scale_landmarks(*landmarks, raw.width, raw.height, resolution);
    s.heatmap = landmark_heatmap(pts, resolution, default_heatmap_sigma(resolution));
    s.has_landmarks = true;
  } else {
    s.heatmap = Tensor({1, 1, resolution, resolution});
  }
  return s;
}

Sample load_sample(const fs::path& image, const fs::path* seg, const fs::path* landmarks, int resolution) {
  const RgbImage raw = read_image(image);
  std::optional<LabelMap> labels;
  if (seg) labels = read_label_map(*seg);
  std::optional<std::vector<Landmark>> pts;
  if (landmarks) pts = read_landmarks(*landmarks);
  return make_sample(raw, labels ? &*labels : nullptr, pts ? &*pts : nullptr, resolution);
}

Dataset::Dataset(DatasetIndex index) : index_(std::move(index)) {}

const Sample& Dataset::sample(const std::string& id) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(id); it != cache_.end()) return it->second;
  }
  auto seg_it = index_.seg_paths.find(id);
  if (seg_it == index_.seg_paths.end()) throw Error("OrphanImage", id + " is not indexed");
  const fs::path seg = index_.root / seg_it->second;
  const auto lm_it = index_.landmark_paths.find(id);
  const fs::path lm = lm_it != index_.landmark_paths.end() ? index_.root / lm_it->second : fs::path();
  Sample s = load_sample(index_.image_path(id), &seg, lm.empty() ? nullptr : &lm, index_.resolution);
  std::lock_guard lock(mu_);
  return cache_.emplace(id, std::move(s)).first->second;
}

TrainingBatch Dataset::sample_training_batch(std::uint64_t seed, int batch_size) const {
  BatchPlan plan = plan_batch(index_, seed, batch_size);
  std::vector<const Sample*> src, ref;
  for (const auto& id : plan.source_ids) src.push_back(&sample(id));
  for (const auto& id : plan.reference_ids) ref.push_back(&sample(id));
  return assemble_batch(src, ref, std::move(plan));
}

}  // namespace slgan
