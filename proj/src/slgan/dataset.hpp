#pragma once

// Unpaired makeup dataset: directory index, image/label decoding, region
// masks from face-parsing label maps, landmark heatmaps and batch sampling.
//
// Layout under the dataset root:
//   images/makeup/*.png|jpg      segs/makeup/<stem>.png
//   images/non-makeup/*.png|jpg  segs/non-makeup/<stem>.png
//   landmarks/<domain>/<stem>.txt   (optional, 68 lines of "x y")

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "slgan/domain.hpp"
#include "slgan/tensor.hpp"

namespace slgan {

/// Face-parsing label ids (19-class CelebAMask-HQ order used by common
/// face-parsing models).
namespace label {
constexpr int background = 0, skin = 1, l_brow = 2, r_brow = 3, l_eye = 4, r_eye = 5, eye_glasses = 6,
              l_ear = 7, r_ear = 8, earring = 9, nose = 10, mouth = 11, u_lip = 12, l_lip = 13, neck = 14,
              necklace = 15, cloth = 16, hair = 17, hat = 18;
constexpr int count = 19;
}  // namespace label

struct DatasetIndex {
  std::filesystem::path root;
  int resolution = 256;
  std::vector<std::string> makeup_paths;     // identifiers, e.g. "makeup/vFG112.png"
  std::vector<std::string> nonmakeup_paths;  // e.g. "non-makeup/xfsy_0002.png"
  std::map<std::string, std::string> seg_paths;       // identifier -> path relative to root
  std::map<std::string, std::string> landmark_paths;  // identifier -> path relative to root

  const std::vector<std::string>& ids(Domain d) const {
    return d == Domain::makeup ? makeup_paths : nonmakeup_paths;
  }
  std::filesystem::path image_path(const std::string& id) const { return root / "images" / id; }
};

/// Scans the dataset layout. Throws MissingDirectory or OrphanImage.
DatasetIndex load_manifest(const std::filesystem::path& root, int resolution);

struct RgbImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB
};

struct LabelMap {
  int width = 0, height = 0;
  std::vector<std::uint8_t> labels;
};

/// Throws DecodeError or NonRGBInput.
RgbImage decode_image(std::span<const std::uint8_t> bytes);
RgbImage read_image(const std::filesystem::path& path);
LabelMap decode_label_map(std::span<const std::uint8_t> bytes);
LabelMap read_label_map(const std::filesystem::path& path);
LabelMap resize_labels_nearest(const LabelMap& map, int width, int height);

/// Bilinear resize to resolution², then v ↦ v/127.5 − 1. Shape 1×3×R×R.
Tensor preprocess_image(const RgbImage& raw, int resolution);
/// Inverse mapping onto the 8-bit lattice: round(clamp((v + 1)·127.5)).
RgbImage to_rgb8(const Tensor& image, std::int64_t index = 0);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
void write_png(const RgbImage& img, const std::filesystem::path& path);

/// Eye-shadow ring width: 12 px at 256², scaled with resolution.
int eye_ring_px(int resolution);

/// Masks of shape 1×1×H×W at the label map's resolution. Throws UnknownLabel.
RegionMasks derive_region_masks(const LabelMap& parsing, int dilation_px);
/// All-ones full-face mask and empty region masks, for inputs without a parsing map.
RegionMasks unmasked_regions(int resolution);

struct Landmark {
  double x = 0, y = 0;
};

/// Reads "x y" lines. Coordinates are in the original image frame.
std::vector<Landmark> read_landmarks(const std::filesystem::path& path);
std::vector<Landmark> parse_landmarks(const std::string& text);
/// Maps original-frame coordinates onto a resolution² grid (pixel centres aligned).
std::vector<Landmark> scale_landmarks(std::span<const Landmark> pts, int src_width, int src_height, int resolution);
/// Sum of isotropic Gaussian bumps clipped to [0, 1]. Shape 1×1×R×R.
Tensor landmark_heatmap(std::span<const Landmark> landmarks, int resolution, double sigma);
double default_heatmap_sigma(int resolution);

struct BatchPlan {
  std::vector<std::string> source_ids, reference_ids;
  DomainBatch source_domains, reference_domains;
  bool operator==(const BatchPlan&) const = default;
};

/// Deterministic in `seed`: source domain uniform per element, reference
/// drawn from the opposite domain, both with replacement. Throws EmptyDomain.
BatchPlan plan_batch(const DatasetIndex& index, std::uint64_t seed, int batch_size);

struct Sample {
  Tensor image;    // 1×3×R×R
  RegionMasks masks;
  Tensor heatmap;  // 1×1×R×R
  bool has_landmarks = false;
  bool has_parsing = false;  // false: unmasked fallback
};

struct TrainingBatch {
  Tensor source_images, reference_images;  // N×3×R×R
  DomainBatch source_domains, reference_domains;
  RegionMasks source_masks, reference_masks;  // N×1×R×R each
  Tensor source_heatmaps;                     // N×1×R×R
  std::vector<bool> heatmap_missing;
  BatchPlan plan;

  std::int64_t size() const { return source_images.numel() ? source_images.dim(0) : 0; }
};

TrainingBatch assemble_batch(std::span<const Sample* const> sources, std::span<const Sample* const> references,
                             BatchPlan plan);

/// Loads samples for an index with an in-memory cache. Safe for concurrent use.
class Dataset {
 public:
  explicit Dataset(DatasetIndex index);

  const DatasetIndex& index() const { return index_; }
  const Sample& sample(const std::string& id) const;
  TrainingBatch sample_training_batch(std::uint64_t seed, int batch_size) const;

 private:
  DatasetIndex index_;
  mutable std::mutex mu_;
  mutable std::map<std::string, Sample> cache_;
};

/// Preprocesses a decoded image. Without a parsing map the masks fall back to
/// unmasked_regions(); landmarks are in the raw image frame. Throws ShapeMismatch
/// if the parsing map size differs from the image.
Sample make_sample(const RgbImage& raw, const LabelMap* parsing, const std::vector<Landmark>* landmarks,
                   int resolution);

/// Reads and preprocesses one image with optional parsing map and landmarks.
Sample load_sample(const std::filesystem::path& image, const std::filesystem::path* seg,
                   const std::filesystem::path* landmarks, int resolution);

}  // namespace slgan
