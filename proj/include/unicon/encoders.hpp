#pragma once

// Per-frame encoders: face-crop stacks -> v (T x d'), MFCC windows -> a
// (T x d'), head maps -> h (T x spatial_dim).

#include "unicon/config.hpp"
#include "unicon/headmap.hpp"
#include "unicon/ingest.hpp"
#include "unicon/nn/layers.hpp"

#include <span>
#include <string>
#include <vector>

namespace unicon::encoders {

// Replicate-padded stack rows: for t in [0, length) and offsets
// -k/2..k/2, the clamped frame index first + clamp(t + o, lo, hi) where
// [lo, hi] is the valid range relative to first. Output has length * k entries.
std::vector<int> stack_rows(int first, int length, int lo, int hi, int k);

// HWC uint8 images (all the same size) -> [n, 3, h, w] scaled to [-1, 1].
// Gray images are broadcast to three channels.
template <typename S>
nn::Tensor<S> image_tensor(std::span<const Image* const> images);

// [T, 1, 13, F] from MFCC windows.
template <typename S>
nn::Tensor<S> mfcc_tensor(std::span<const ingest::MfccWindow> windows);

// [n, 3, 64, 64] from head maps.
template <typename S>
nn::Tensor<S> headmap_tensor(std::span<const headmap::HeadMap> maps);

// Basic-block ResNet-18 trunk with a configurable number of input channels,
// ending in global average pooling (512-d).
template <typename S>
class ResNet18 {
 public:
  ResNet18() = default;
  ResNet18(nn::ParamStore<S>& store, const std::string& name, int in_channels);
  nn::Var<S> operator()(const nn::Var<S>& x, bool training) const;

 private:
  struct Block {
    nn::Conv2d<S> conv1, conv2, down;
    nn::BatchNorm<S> bn1, bn2, down_bn;
    bool has_down = false;
  };
  nn::Conv2d<S> stem_;
  nn::BatchNorm<S> stem_bn_;
  std::vector<Block> blocks_;
};

// Three strided conv + BN + ReLU layers and global average pooling.
template <typename S>
class ToyCnn {
 public:
  ToyCnn() = default;
  ToyCnn(nn::ParamStore<S>& store, const std::string& name, int in_channels, int out_dim, int first_stride);
  nn::Var<S> operator()(const nn::Var<S>& x, bool training) const;

 private:
  nn::Conv2d<S> c1_, c2_, c3_;
  nn::BatchNorm<S> b1_, b2_, b3_;
};

// Backbone phi (or psi) followed by the shared reduction to d'.
template <typename S>
class Backbone {
 public:
  Backbone() = default;
  Backbone(nn::ParamStore<S>& store, const std::string& name, unicon::Backbone kind, int in_channels,
           int feature_dim, int reduced_dim, int first_stride);
  nn::Var<S> operator()(const nn::Var<S>& x, bool training) const;
  int feature_dim() const { return feature_dim_; }

 private:
  unicon::Backbone kind_ = unicon::Backbone::kToyCnn;
  ToyCnn<S> toy_;
  ResNet18<S> resnet_;
  nn::Linear<S> reduce_;
  int feature_dim_ = 0;
};

template <typename S>
class FaceEncoder {
 public:
  FaceEncoder() = default;
  FaceEncoder(nn::ParamStore<S>& store, const std::string& name, const EncoderConfig& config);

  // frames: [R, 3, s, s] single crops; rows: k entries per output row
  // (see stack_rows). Returns [rows.size() / k, d'].
  nn::Var<S> encode_stacks(const nn::Var<S>& frames, std::span<const int> rows, bool training) const;
  // One track of T crops (already input_size x input_size) -> [T, d'].
  nn::Var<S> encode_track(const nn::Tensor<S>& frames, bool training) const;

 private:
  EncoderConfig config_;
  Backbone<S> backbone_;
};

template <typename S>
class AudioEncoder {
 public:
  AudioEncoder() = default;
  AudioEncoder(nn::ParamStore<S>& store, const std::string& name, const EncoderConfig& config);
  // [T, 1, 13, F] -> [T, d']
  nn::Var<S> operator()(const nn::Var<S>& mfcc, bool training) const;

 private:
  Backbone<S> backbone_;
};

// Four strided convolutions with ReLU and global average pooling, shared by
// self and pair maps: [n, 3, 64, 64] -> [n, spatial_dim].
template <typename S>
class HeadMapEncoder {
 public:
  HeadMapEncoder() = default;
  HeadMapEncoder(nn::ParamStore<S>& store, const std::string& name, int spatial_dim);
  nn::Var<S> operator()(const nn::Var<S>& maps) const;

 private:
  nn::Conv2d<S> c1_, c2_, c3_, c4_;
};

}  // namespace unicon::encoders
