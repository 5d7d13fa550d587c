#pragma once

// Style encoder, mapping network, generator (shared encoder with a
// style-guided and a style-invariant decoder) and the multi-branch
// discriminator. All forward passes take a batch and are pure functions of
// (inputs, parameters).

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slgan/autograd.hpp"
#include "slgan/domain.hpp"
#include "slgan/random.hpp"
#include "slgan/tensor.hpp"

namespace slgan {

constexpr int kLatentDim = 16;
constexpr double kNormEps = 1e-5;
constexpr double kLeakySlope = 0.2;

struct ArchConfig {
  int resolution = 256;
  int style_dim = 64;
  int base_channels = 32;
  int max_channels = 256;
  int num_down = 2;        // generator downsampling stages
  int num_res_blocks = 4;  // bottleneck blocks in the encoder and each decoder
  int trunk_down = 4;      // stride-2 convolutions in the SE / D trunk
  int mapping_hidden = 256;
  int mapping_layers = 6;

  int stage_channels(int stage) const;
  int trunk_channels(int layer) const;
  /// Number of convolution layers in the SE / D trunk (K).
  int trunk_layers() const { return 1 + trunk_down; }
  void validate() const;
};

/// Ordered named parameters. Networks bind to entries by name, so a second
/// store with the same names (the EMA shadow) drives the same architecture.
class ParamStore {
 public:
  enum class Source { live, ema };

  explicit ParamStore(Source src = Source::live) : source_(src) {}

  ag::Var& add(const std::string& name, Tensor init, bool requires_grad = true);
  const ag::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, ag::Var>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, ag::Var>>& entries() { return entries_; }
  Source source() const { return source_; }
  std::int64_t parameter_count(const std::string& prefix = "") const;

  /// Deep copy with fresh nodes.
  ParamStore clone(Source src, bool requires_grad) const;
  void set_requires_grad(const std::string& prefix, bool flag);

 private:
  Source source_;
  std::vector<std::pair<std::string, ag::Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// He-initialized weights (std = sqrt(2 / fan_in)) and zero biases.
void declare_conv(ParamStore& ps, Rng& rng, const std::string& name, int in, int out, int k);
void declare_linear(ParamStore& ps, Rng& rng, const std::string& name, int in, int out);

/// Features captured from the shared convolution trunk of SE and D.
struct TrunkOutput {
  std::vector<ag::Var> layers;  // conv outputs phi_1..phi_K (pre-activation)
  ag::Var pooled;               // N×C global average of the last activation
};

class ConvTrunk {
 public:
  static void declare(const ArchConfig& cfg, ParamStore& ps, Rng& rng, const std::string& prefix);
  ConvTrunk(const ArchConfig& cfg, const ParamStore& ps, const std::string& prefix);

  TrunkOutput forward(const ag::Var& image) const;
  int layers() const { return static_cast<int>(weights_.size()); }

 private:
  std::vector<ag::Var> weights_, biases_;
  std::vector<int> strides_;
};

class StyleEncoder {
 public:
  static void declare(const ArchConfig& cfg, ParamStore& ps, Rng& rng);
  StyleEncoder(const ArchConfig& cfg, const ParamStore& ps);

  /// Style code of `image ∘ full_face_mask` through the per-domain head.
  ag::Var encode(const ag::Var& image, const Tensor& full_face_mask, const DomainBatch& domains) const;
  const ConvTrunk& trunk() const { return trunk_; }
  int style_dim() const { return style_dim_; }

 private:
  ConvTrunk trunk_;
  std::vector<std::pair<ag::Var, ag::Var>> heads_;
  int style_dim_;
};

class MappingNetwork {
 public:
  static void declare(const ArchConfig& cfg, ParamStore& ps, Rng& rng);
  MappingNetwork(const ArchConfig& cfg, const ParamStore& ps);

  ag::Var map(const ag::Var& z, const DomainBatch& domains) const;

 private:
  std::vector<std::pair<ag::Var, ag::Var>> shared_;
  std::vector<std::pair<ag::Var, ag::Var>> heads_;
};

struct ContentFeatures {
  ag::Var bottleneck;
  std::vector<ag::Var> skips;         // stage outputs, index 0 = full resolution
  std::vector<ag::Var> stage_preact;  // stage outputs before the activation, heatmap included
};

class Generator {
 public:
  static void declare(const ArchConfig& cfg, ParamStore& ps, Rng& rng);
  Generator(const ArchConfig& cfg, const ParamStore& ps, bool with_invariant_decoder = true);

  ContentFeatures encode_content(const ag::Var& image, const Tensor& heatmap) const;
  ag::Var decode_styled(const ContentFeatures& content, const ag::Var& style) const;
  ag::Var decode_invariant(const ContentFeatures& content) const;
  ag::Var generate(const ag::Var& image, const Tensor& heatmap, const ag::Var& style) const;

 private:
  struct Conv {
    ag::Var w, b;
  };
  struct Affine {
    ag::Var w, b;
  };
  struct Decoder {
    std::vector<Conv> res;  // two convs per block
    std::vector<Conv> up;
    std::vector<Affine> res_adain;
    std::vector<Affine> up_adain;
    Conv out;
  };
  ag::Var decode(const ContentFeatures& content, const Decoder& dec, const ag::Var* style) const;
  static Decoder bind_decoder(const ArchConfig& cfg, const ParamStore& ps, const std::string& prefix, bool styled);

  ArchConfig cfg_;
  Conv stem_;
  std::vector<Conv> down_;
  std::vector<Conv> enc_res_;
  Decoder styled_, invariant_;
  bool has_invariant_;
};

class Discriminator {
 public:
  static void declare(const ArchConfig& cfg, ParamStore& ps, Rng& rng);
  Discriminator(const ArchConfig& cfg, const ParamStore& ps);

  /// Raw logits, shape N×1.
  ag::Var discriminate(const ag::Var& image, const DomainBatch& domains) const;

 private:
  ConvTrunk trunk_;
  std::vector<std::pair<ag::Var, ag::Var>> heads_;
};

/// Standalone AdaIN on a batch: gamma·(x − mean)/(std + eps) + beta.
ag::Var adain(const ag::Var& features, const ag::Var& gamma, const ag::Var& beta);

/// Bilinear resize (half-pixel centres) of an N×1×H×W constant map.
Tensor resize_bilinear(const Tensor& map, std::int64_t h, std::int64_t w);
/// Nearest resize of an N×1×H×W binary map, re-thresholded at > 0.5.
Tensor resize_mask_nearest(const Tensor& mask, std::int64_t h, std::int64_t w);

struct ParameterCounts {
  std::int64_t style_encoder = 0, mapping = 0, generator = 0, discriminator = 0;
  std::int64_t total() const { return style_encoder + mapping + generator + discriminator; }
};

/// Declares every network into `ps` in a fixed order: se/, mn/, g/, d/.
void declare_all(const ArchConfig& cfg, ParamStore& ps, Rng& rng);
ParameterCounts count_parameters(const ParamStore& ps);

}  // namespace slgan
