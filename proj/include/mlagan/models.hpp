#pragma once

// Toy-scale conditional GAN networks.
//
// Generator (encoder/decoder with skips):
//
//   stem     3x3 conv in -> C0, leaky ReLU, encoder block           (side)
//   level l  4x4 stride-2 conv C_{l-1} -> 2 C_{l-1}, leaky ReLU,
//            encoder block                                          (side / 2^l)
//   decoder  4x4 stride-2 transposed conv C_l -> C_{l-1}, leaky ReLU,
//            concat with encoder output of level l-1
//   head     3x3 conv 2 C0 -> in, sigmoid
//
// The encoder block is either a multi-head linear attention block (residual)
// or, for the conv ablation arm, a residual 3x3 conv of identical shape.
//
// Discriminator: (condition, candidate) concatenated on channels, then
// stride-2 4x4 convs with leaky ReLU, a 1-channel patch map and a sigmoid.

#include <cstddef>
#include <string>
#include <vector>

#include "mlagan/attention.hpp"
#include "mlagan/autodiff.hpp"
#include "mlagan/random.hpp"

namespace mlagan {

inline constexpr double kLeakySlope = 0.2;

enum class EncoderKind { attention, conv };

inline const char* to_string(EncoderKind k) { return k == EncoderKind::attention ? "attention" : "conv"; }

struct GeneratorConfig {
  std::size_t in_channels = 3;
  std::size_t base_channels = 16;
  std::size_t levels = 3;
  std::size_t heads = 4;
  std::size_t side = 32;
  EncoderKind encoder = EncoderKind::attention;

  std::size_t channels_at(std::size_t level) const { return base_channels << level; }

  void validate() const {
    if (in_channels == 0 || base_channels == 0 || levels == 0 || heads == 0 || side == 0) {
      throw ConfigError("generator: all extents must be positive");
    }
    const std::size_t factor = std::size_t{1} << (levels - 1);
    if (side % factor != 0) {
      throw ConfigError("generator: side " + std::to_string(side) + " is not divisible by 2^(levels-1) = " +
                        std::to_string(factor));
    }
    if (encoder == EncoderKind::attention) {
      for (std::size_t l = 0; l < levels; ++l) AttentionConfig::for_width(channels_at(l), heads);
    }
  }
};

struct DiscriminatorConfig {
  std::size_t in_channels = 6;  // condition + candidate
  std::vector<std::size_t> widths{32, 64, 1};
  std::vector<std::size_t> strides{2, 2, 2};
  std::size_t kernel = 4;
  std::size_t pad = 1;

  static DiscriminatorConfig for_images(std::size_t image_channels) {
    DiscriminatorConfig c;
    c.in_channels = 2 * image_channels;
    return c;
  }

  void validate() const {
    if (in_channels == 0 || widths.empty() || widths.size() != strides.size() || kernel == 0) {
      throw ConfigError("discriminator: invalid layer description");
    }
    if (widths.back() != 1) throw ConfigError("discriminator: final layer must have one channel");
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (widths[i] == 0 || strides[i] == 0) throw ConfigError("discriminator: zero width or stride");
    }
  }
};

template <typename T>
struct ConvLayer {
  Param<T> weight;
  Param<T> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool transposed = false;

  /// Regular conv: weight [out x in x k x k]. Transposed: weight [in x out x k x k]
  /// (the adjoint of the conv mapping out -> in).
  static ConvLayer make(const std::string& name, std::size_t in, std::size_t out, std::size_t k,
                        std::size_t stride, std::size_t pad, bool transposed, Rng& rng) {
    ConvLayer l;
    const Shape shape = transposed ? Shape{in, out, k, k} : Shape{out, in, k, k};
    l.weight = Param<T>(name + ".weight", he_normal<T>(shape, in * k * k, rng));
    l.bias = Param<T>(name + ".bias", Tensor<T>::zeros({out}));
    l.stride = stride;
    l.pad = pad;
    l.transposed = transposed;
    return l;
  }

  Var<T> operator()(const Var<T>& x, ParamUse use) {
    Tape<T>& t = x.tape();
    const Var<T> w = bind(t, weight, use);
    const Var<T> y = transposed ? ad::conv2d_transpose(x, w, stride, pad) : ad::conv2d(x, w, stride, pad);
    return ad::add_channel_bias(y, bind(t, bias, use));
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Same-shape block at one encoder level.
template <typename T>
struct EncoderBlock {
  EncoderKind kind = EncoderKind::attention;
  AttentionConfig attn_cfg;
  AttentionWeights<T> attn;
  ConvLayer<T> conv;

  Var<T> operator()(const Var<T>& x, ParamUse use) {
    if (kind == EncoderKind::attention) return attention_block(x, attn, attn_cfg, use);
    return ad::add(x, conv(x, use));
  }

  void collect(std::vector<Param<T>*>& out) {
    if (kind == EncoderKind::attention) {
      for (auto* p : attn.parameters()) out.push_back(p);
    } else {
      conv.collect(out);
    }
  }
};

template <typename T>
class Generator {
 public:
  Generator() = default;

  /// Deterministic initialisation from seed.
  Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t c0 = cfg_.base_channels;
    stem_ = ConvLayer<T>::make("G.stem", cfg_.in_channels, c0, 3, 1, 1, false, rng);
    for (std::size_t l = 0; l < cfg_.levels; ++l) {
      const std::size_t c = cfg_.channels_at(l);
      if (l > 0) {
        down_.push_back(ConvLayer<T>::make("G.down" + std::to_string(l), cfg_.channels_at(l - 1), c, 4, 2, 1,
                                           false, rng));
      }
      EncoderBlock<T> block;
      block.kind = cfg_.encoder;
      const std::string tag = "G.enc" + std::to_string(l);
      if (cfg_.encoder == EncoderKind::attention) {
        block.attn_cfg = AttentionConfig::for_width(c, cfg_.heads);
        block.attn = AttentionWeights<T>::init(block.attn_cfg, rng, tag);
      } else {
        block.conv = ConvLayer<T>::make(tag + ".conv", c, c, 3, 1, 1, false, rng);
      }
      blocks_.push_back(std::move(block));
    }
    for (std::size_t l = cfg_.levels - 1; l > 0; --l) {
      // input at level l: C_l channels from the bottleneck, else 2 C_l after a skip concat
      const std::size_t in = (l == cfg_.levels - 1) ? cfg_.channels_at(l) : 2 * cfg_.channels_at(l);
      up_.push_back(ConvLayer<T>::make("G.up" + std::to_string(l), in, cfg_.channels_at(l - 1), 4, 2, 1, true,
                                       rng));
    }
    const std::size_t head_in = cfg_.levels > 1 ? 2 * c0 : c0;
    head_ = ConvLayer<T>::make("G.head", head_in, cfg_.in_channels, 3, 1, 1, false, rng);
  }

  const GeneratorConfig& config() const noexcept { return cfg_; }

  /// All parameters in a fixed canonical order.
  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    stem_.collect(out);
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      if (l > 0) down_[l - 1].collect(out);
      blocks_[l].collect(out);
    }
    for (auto& u : up_) u.collect(out);
    head_.collect(out);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  /// cloudy [in x side x side] in [0,1] -> restored image in (0,1).
  Var<T> forward(const Var<T>& cloudy, ParamUse use = ParamUse::train,
                 std::vector<Shape>* stage_shapes = nullptr) {
    const Shape expect{cfg_.in_channels, cfg_.side, cfg_.side};
    if (cloudy.shape() != expect) {
      throw DimensionError("generator: expected input " + shape_str(expect) + ", got " +
                           shape_str(cloudy.shape()));
    }
    const T slope = static_cast<T>(kLeakySlope);
    auto note = [stage_shapes](const Var<T>& v) {
      if (stage_shapes) stage_shapes->push_back(v.shape());
    };
    std::vector<Var<T>> skips;
    Var<T> h = ad::leaky_relu(stem_(cloudy, use), slope);
    note(h);
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      if (l > 0) {
        h = ad::leaky_relu(down_[l - 1](h, use), slope);
        note(h);
      }
      h = blocks_[l](h, use);
      note(h);
      skips.push_back(h);
    }
    for (std::size_t i = 0; i < up_.size(); ++i) {
      const std::size_t level = cfg_.levels - 1 - i;  // upsampling out of this level
      h = ad::leaky_relu(up_[i](h, use), slope);
      note(h);
      h = ad::concat<T>({h, skips[level - 1]}, 0);
      note(h);
    }
    Var<T> out = ad::sigmoid(head_(h, use));
    note(out);
    return out;
  }

  /// Gradient-free forward for evaluation.
  Tensor<T> infer(const Tensor<T>& cloudy) {
    Tape<T> tape(GradMode::off);
    return forward(tape.constant(cloudy), ParamUse::freeze).value();
  }

 private:
  GeneratorConfig cfg_;
  ConvLayer<T> stem_;
  std::vector<ConvLayer<T>> down_;
  std::vector<EncoderBlock<T>> blocks_;
  std::vector<ConvLayer<T>> up_;
  ConvLayer<T> head_;
};

template <typename T>
class Discriminator {
 public:
  Discriminator() = default;

  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    std::size_t in = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
      layers_.push_back(ConvLayer<T>::make("D.conv" + std::to_string(i), in, cfg_.widths[i], cfg_.kernel,
                                           cfg_.strides[i], cfg_.pad, false, rng));
      in = cfg_.widths[i];
    }
  }

  const DiscriminatorConfig& config() const noexcept { return cfg_; }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) l.collect(out);
    return out;
  }

  /// Patch probabilities that `candidate` is the clear counterpart of `condition`.
  Var<T> forward(const Var<T>& condition, const Var<T>& candidate, ParamUse use = ParamUse::train) {
    if (condition.shape() != candidate.shape()) {
      throw DimensionError("discriminator: condition " + shape_str(condition.shape()) + " vs candidate " +
                           shape_str(candidate.shape()));
    }
    if (condition.shape().size() != 3 || 2 * condition.shape()[0] != cfg_.in_channels) {
      throw DimensionError("discriminator: expected " + std::to_string(cfg_.in_channels / 2) +
                           "-channel images, got " + shape_str(condition.shape()));
    }
    Var<T> h = ad::concat<T>({condition, candidate}, 0);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i](h, use);
      if (i + 1 < layers_.size()) h = ad::leaky_relu(h, static_cast<T>(kLeakySlope));
    }
    return ad::sigmoid(h);
  }

  Tensor<T> infer(const Tensor<T>& condition, const Tensor<T>& candidate) {
    Tape<T> tape(GradMode::off);
    return forward(tape.constant(condition), tape.constant(candidate), ParamUse::freeze).value();
  }

 private:
  DiscriminatorConfig cfg_;
  std::vector<ConvLayer<T>> layers_;
};

}  // namespace mlagan
