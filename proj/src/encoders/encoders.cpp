#include "unicon/encoders.hpp"

#include "unicon/error.hpp"

#include <algorithm>

namespace unicon::encoders {

using nn::Tensor;
using nn::Var;

std::vector<int> stack_rows(int first, int length, int lo, int hi, int k) {
  if (k < 1 || k % 2 == 0) throw InputError("stack size must be odd and >= 1");
  if (length > 0 && (lo < 0 || hi >= length || lo > hi)) throw InputError("stack_rows: bad valid range");
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(length) * k);
  const int half = k / 2;
  for (int t = 0; t < length; ++t) {
    for (int o = -half; o <= half; ++o) rows.push_back(first + std::clamp(t + o, lo, hi));
  }
  return rows;
}

template <typename S>
Tensor<S> image_tensor(std::span<const Image* const> images) {
  if (images.empty()) return Tensor<S>({0, 3, 0, 0});
  const int w = images[0]->width;
  const int h = images[0]->height;
  Tensor<S> out({static_cast<int>(images.size()), 3, h, w});
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = *images[n];
    if (img.width != w || img.height != h) throw InputError("image_tensor: images differ in size");
    if (img.channels != 1 && img.channels != 3) throw InputError("image_tensor: expected 1 or 3 channels");
    S* base = out.ptr() + n * 3 * plane;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          const int src = img.channels == 1 ? 0 : c;
          base[c * plane + static_cast<std::size_t>(y) * w + x] = static_cast<S>(img.at(x, y, src)) / S(127.5) - S(1);
        }
      }
    }
  }
  return out;
}

template <typename S>
Tensor<S> mfcc_tensor(std::span<const ingest::MfccWindow> windows) {
  const int f = windows.empty() ? 0 : windows[0].frames;
  Tensor<S> out({static_cast<int>(windows.size()), 1, ingest::kMfccCoefficients, f});
  const std::size_t per = static_cast<std::size_t>(ingest::kMfccCoefficients) * f;
  for (std::size_t t = 0; t < windows.size(); ++t) {
    if (windows[t].frames != f || windows[t].coefficients.size() != per) {
      throw InputError("mfcc_tensor: windows differ in shape");
    }
    std::transform(windows[t].coefficients.begin(), windows[t].coefficients.end(), out.ptr() + t * per,
                   [](float v) { return static_cast<S>(v); });
  }
  return out;
}

template <typename S>
Tensor<S> headmap_tensor(std::span<const headmap::HeadMap> maps) {
  constexpr std::size_t per = 3 * headmap::kMapPixels;
  Tensor<S> out({static_cast<int>(maps.size()), 3, headmap::kMapSize, headmap::kMapSize});
  for (std::size_t n = 0; n < maps.size(); ++n) {
    if (maps[n].pixels.size() != per) throw InputError("headmap_tensor: map must be 3x64x64");
    std::transform(maps[n].pixels.begin(), maps[n].pixels.end(), out.ptr() + n * per,
                   [](float v) { return static_cast<S>(v); });
  }
  return out;
}

template <typename S>
ResNet18<S>::ResNet18(nn::ParamStore<S>& store, const std::string& name, int in_channels) {
  stem_ = nn::Conv2d<S>(store, name + ".stem", in_channels, 64, 7, 2, 3, false);
  stem_bn_ = nn::BatchNorm<S>(store, name + ".stem_bn", 64);
  const int widths[4] = {64, 128, 256, 512};
  int in = 64;
  for (int stage = 0; stage < 4; ++stage) {
    for (int b = 0; b < 2; ++b) {
      const std::string p = name + ".layer" + std::to_string(stage + 1) + "." + std::to_string(b);
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      const int out = widths[stage];
      Block blk;
      blk.conv1 = nn::Conv2d<S>(store, p + ".conv1", in, out, 3, stride, 1, false);
      blk.bn1 = nn::BatchNorm<S>(store, p + ".bn1", out);
      blk.conv2 = nn::Conv2d<S>(store, p + ".conv2", out, out, 3, 1, 1, false);
      blk.bn2 = nn::BatchNorm<S>(store, p + ".bn2", out);
      if (stride != 1 || in != out) {
        blk.has_down = true;
        blk.down = nn::Conv2d<S>(store, p + ".down", in, out, 1, stride, 0, false);
        blk.down_bn = nn::BatchNorm<S>(store, p + ".down_bn", out);
      }
      blocks_.push_back(std::move(blk));
      in = out;
    }
  }
}

template <typename S>
Var<S> ResNet18<S>::operator()(const Var<S>& x, bool training) const {
  Var<S> y = nn::relu(stem_bn_(stem_(x), training));
  y = nn::max_pool2d(y, 3, 2, 1);
  for (const Block& b : blocks_) {
    Var<S> r = nn::relu(b.bn1(b.conv1(y), training));
    r = b.bn2(b.conv2(r), training);
    const Var<S> skip = b.has_down ? b.down_bn(b.down(y), training) : y;
    y = nn::relu(nn::add(r, skip));
  }
  return nn::global_avg_pool(y);
}

template <typename S>
ToyCnn<S>::ToyCnn(nn::ParamStore<S>& store, const std::string& name, int in_channels, int out_dim,
                  int first_stride) {
  const int w1 = std::max(8, out_dim / 4);
  const int w2 = std::max(8, out_dim / 2);
  c1_ = nn::Conv2d<S>(store, name + ".conv1", in_channels, w1, 3, first_stride, 1, false);
  b1_ = nn::BatchNorm<S>(store, name + ".bn1", w1);
  c2_ = nn::Conv2d<S>(store, name + ".conv2", w1, w2, 3, 2, 1, false);
  b2_ = nn::BatchNorm<S>(store, name + ".bn2", w2);
  c3_ = nn::Conv2d<S>(store, name + ".conv3", w2, out_dim, 3, 2, 1, false);
  b3_ = nn::BatchNorm<S>(store, name + ".bn3", out_dim);
}

template <typename S>
Var<S> ToyCnn<S>::operator()(const Var<S>& x, bool training) const {
  Var<S> y = nn::relu(b1_(c1_(x), training));
  y = nn::relu(b2_(c2_(y), training));
  y = nn::relu(b3_(c3_(y), training));
  return nn::global_avg_pool(y);
}

template <typename S>
Backbone<S>::Backbone(nn::ParamStore<S>& store, const std::string& name, unicon::Backbone kind, int in_channels,
                      int feature_dim, int reduced_dim, int first_stride)
    : kind_(kind) {
  if (kind == unicon::Backbone::kResNet18) {
    resnet_ = ResNet18<S>(store, name + ".resnet", in_channels);
    feature_dim_ = 512;
  } else {
    toy_ = ToyCnn<S>(store, name + ".cnn", in_channels, feature_dim, first_stride);
    feature_dim_ = feature_dim;
  }
  reduce_ = nn::Linear<S>(store, name + ".reduce", feature_dim_, reduced_dim);
}

template <typename S>
Var<S> Backbone<S>::operator()(const Var<S>& x, bool training) const {
  const Var<S> pooled = kind_ == unicon::Backbone::kResNet18 ? resnet_(x, training) : toy_(x, training);
  return reduce_(pooled);
}

template <typename S>
FaceEncoder<S>::FaceEncoder(nn::ParamStore<S>& store, const std::string& name, const EncoderConfig& config)
    : config_(config),
      backbone_(store, name, config.face_backbone, 3 * config.stack_size, config.feature_dim, config.reduced_dim, 2) {}

template <typename S>
Var<S> FaceEncoder<S>::encode_stacks(const Var<S>& frames, std::span<const int> rows, bool training) const {
  const int k = config_.stack_size;
  if (frames.value().rank() != 4 || frames.shape()[1] != 3) throw InputError("face encoder: expected [R, 3, s, s]");
  const int s = frames.shape()[2];
  if (s != config_.input_size || frames.shape()[3] != s) {
    throw InputError("face encoder: crops must be " + std::to_string(config_.input_size) + "x" +
                     std::to_string(config_.input_size));
  }
  if (rows.size() % static_cast<std::size_t>(k) != 0) throw InputError("face encoder: rows not a multiple of k");
  const int n = static_cast<int>(rows.size()) / k;
  const Var<S> stacked = nn::reshape(nn::gather_rows(frames, rows), {n, 3 * k, s, s});
  return backbone_(stacked, training);
}

template <typename S>
Var<S> FaceEncoder<S>::encode_track(const Tensor<S>& frames, bool training) const {
  const int t = frames.rows();
  if (t < 1) throw InputError("face encoder: empty track");
  const auto rows = stack_rows(0, t, 0, t - 1, config_.stack_size);
  return encode_stacks(Var<S>::constant(frames), rows, training);
}

template <typename S>
AudioEncoder<S>::AudioEncoder(nn::ParamStore<S>& store, const std::string& name, const EncoderConfig& config)
    : backbone_(store, name, config.audio_backbone, 1, config.feature_dim, config.reduced_dim, 1) {}

template <typename S>
Var<S> AudioEncoder<S>::operator()(const Var<S>& mfcc, bool training) const {
  const auto& sh = mfcc.shape();
  if (sh.size() != 4 || sh[1] != 1 || sh[2] != ingest::kMfccCoefficients) {
    throw InputError("audio encoder: expected [T, 1, 13, F], got " + nn::shape_str(sh));
  }
  return backbone_(mfcc, training);
}

template <typename S>
HeadMapEncoder<S>::HeadMapEncoder(nn::ParamStore<S>& store, const std::string& name, int spatial_dim) {
  c1_ = nn::Conv2d<S>(store, name + ".conv1", 3, 8, 3, 2, 1);
  c2_ = nn::Conv2d<S>(store, name + ".conv2", 8, 16, 3, 2, 1);
  c3_ = nn::Conv2d<S>(store, name + ".conv3", 16, 32, 3, 2, 1);
  c4_ = nn::Conv2d<S>(store, name + ".conv4", 32, spatial_dim, 3, 2, 1);
}

template <typename S>
Var<S> HeadMapEncoder<S>::operator()(const Var<S>& maps) const {
  const auto& sh = maps.shape();
  if (sh.size() != 4 || sh[1] != 3 || sh[2] != headmap::kMapSize || sh[3] != headmap::kMapSize) {
    throw InputError("head map encoder: expected [n, 3, 64, 64], got " + nn::shape_str(sh));
  }
  Var<S> y = nn::relu(c1_(maps));
  y = nn::relu(c2_(y));
  y = nn::relu(c3_(y));
  y = nn::relu(c4_(y));
  return nn::global_avg_pool(y);
}

#define UNICON_INSTANTIATE_ENCODERS(S)                                               \
  template Tensor<S> image_tensor<S>(std::span<const Image* const>);                 \
  template Tensor<S> mfcc_tensor<S>(std::span<const ingest::MfccWindow>);            \
  template Tensor<S> headmap_tensor<S>(std::span<const headmap::HeadMap>);           \
  template class ResNet18<S>;                                                        \
  template class ToyCnn<S>;                                                          \
  template class Backbone<S>;                                                        \
  template class FaceEncoder<S>;                                                     \
  template class AudioEncoder<S>;                                                    \
  template class HeadMapEncoder<S>;

UNICON_INSTANTIATE_ENCODERS(float)
UNICON_INSTANTIATE_ENCODERS(double)

}  // namespace unicon::encoders
