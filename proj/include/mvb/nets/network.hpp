#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvb/nets/layers.hpp"
#include "mvb/nets/tensor.hpp"

namespace mvb::nets {

enum class Variant { kBasic, kMerged };
enum class Branch { kProbe = 0, kGallery = 1 };
/// Where the merged variant subtracts the branch maps relative to pool5.
enum class MergePoint { kAfterPool5, kBeforePool5 };

inline constexpr int kStageCount = 5;
inline constexpr std::array<int, kStageCount> kVggStageWidths{64, 128, 256, 512, 512};
inline constexpr std::array<int, kStageCount> kVggStageDepths{2, 2, 3, 3, 3};

struct NetworkConfig {
  Variant variant = Variant::kMerged;
  bool use_se = false;
  int se_reduction = 16;
  std::set<int> freeze_stages{1, 2};
  std::set<int> bn_stages{4, 5};
  /// Hidden widths of the merged classification head; a 2-way layer follows.
  std::vector<int> head_widths{1024, 256};
  /// Output width of the basic variant's projection layer.
  int embedding_width = 256;
  /// Channel multiplier applied to every backbone stage.
  double backbone_scale = 1.0;
  int input_size = 224;
  MergePoint merge_point = MergePoint::kAfterPool5;
  double bn_momentum = 0.9;

  void validate() const;
  int stage_channels(int stage) const;
  /// SE bottleneck width, rounded up when channels do not divide evenly.
  int se_bottleneck(int stage) const;
  /// Spatial side of the map that leaves the backbone.
  int feature_side() const;
  int feature_channels() const { return stage_channels(kStageCount); }
  int feature_length() const { return feature_side() * feature_side() * feature_channels(); }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class ParamRole {
  kConvWeight,
  kConvBias,
  kBnScale,
  kBnShift,
  kBnRunningMean,
  kBnRunningVar,
  kSeWeight,
  kSeBias,
  kFcWeight,
  kFcBias,
};

struct Parameter {
  std::string name;
  ParamRole role = ParamRole::kConvWeight;
  std::vector<int> shape;
  /// Backbone stage 1..5; 0 for heads.
  int stage = 0;
  AlignedBuffer<float> value;
  AlignedBuffer<float> grad;
  AlignedBuffer<float> velocity;

  std::size_t size() const { return value.size(); }
  bool is_batchnorm() const {
    return role == ParamRole::kBnScale || role == ParamRole::kBnShift ||
           role == ParamRole::kBnRunningMean || role == ParamRole::kBnRunningVar;
  }
  /// Running statistics are state, not optimized.
  bool optimizable() const {
    return role != ParamRole::kBnRunningMean && role != ParamRole::kBnRunningVar;
  }
  bool decays() const { return role == ParamRole::kConvWeight || role == ParamRole::kFcWeight ||
                               role == ParamRole::kSeWeight; }
};

enum class ParamScope { kShared, kProbe, kGallery };
std::string_view to_string(ParamScope scope);
inline ParamScope scope_of(Branch b) {
  return b == Branch::kProbe ? ParamScope::kProbe : ParamScope::kGallery;
}

struct ParameterEntry {
  std::string name;
  ParamScope scope;
  const Parameter* storage;
};

/// Owns every parameter tensor exactly once. Shared tensors (convolutions,
/// SE, heads) have one storage; batch-norm tensors have one per branch.
class NetworkState {
 public:
  Parameter& add_shared(Parameter p);
  Parameter& add_branch(Branch branch, Parameter p);

  std::vector<ParameterEntry> entries() const;
  Parameter* find(std::string_view name, ParamScope scope);
  const Parameter* find(std::string_view name, ParamScope scope) const;

 private:
  std::vector<std::unique_ptr<Parameter>> shared_;
  std::array<std::vector<std::unique_ptr<Parameter>>, 2> branch_;
};

struct BackboneTrace;
struct HeadTrace;

struct BasicOutput {
  std::vector<float> distances;
  RowMatrix<float> probe_vectors;
  RowMatrix<float> gallery_vectors;
};

/// Two-branch verification network over a VGG16-shaped backbone.
class SiameseNetwork {
 public:
  explicit SiameseNetwork(NetworkConfig config, std::uint64_t seed = 0);
  ~SiameseNetwork();
  SiameseNetwork(SiameseNetwork&&) noexcept;
  SiameseNetwork& operator=(SiameseNetwork&&) noexcept;
  SiameseNetwork(const SiameseNetwork&) = delete;
  SiameseNetwork& operator=(const SiameseNetwork&) = delete;

  const NetworkConfig& config() const { return config_; }
  NetworkState& state() { return state_; }
  const NetworkState& state() const { return state_; }

  /// Every tensor the given branch's feature path reads, in op order.
  std::vector<const Parameter*> referenced_by(Branch branch) const;
  /// Tensors read after the two branches meet (merged head) or by both
  /// branches' projection (basic).
  std::vector<const Parameter*> head_parameters() const;
  /// Parameters the optimizer updates: excludes frozen stages and BN running
  /// statistics.
  std::vector<Parameter*> trainable_parameters();
  void zero_grad();

  /// Inference-mode backbone (BN uses the branch's running statistics).
  Tensor backbone_forward(const Tensor& images, Branch branch) const;

  /// probe_maps - gallery_maps, elementwise.
  static Tensor merge(const Tensor& probe_maps, const Tensor& gallery_maps);
  /// Merged head: P(same identity) for each merged map.
  std::vector<float> classify(const Tensor& merged) const;
  /// Basic head: one embedding row per backbone map.
  RowMatrix<float> embed(const Tensor& maps) const;

  std::vector<float> merged_forward(const Tensor& probes, const Tensor& galleries) const;
  BasicOutput basic_forward(const Tensor& probes, const Tensor& galleries) const;

  /// Training-mode forward and backward over one minibatch of aligned pairs.
  /// labels[i] is 1 for same identity. Gradients accumulate into
  /// Parameter::grad; returns the mean loss.
  double accumulate_gradients(const Tensor& probes, const Tensor& galleries,
                              std::span<const int> labels, double margin);

 private:
  struct Op;

  void build(std::uint64_t seed);
  Tensor run_backbone(const Tensor& images, Branch branch, BackboneTrace* trace) const;
  void backprop_backbone(const Tensor& grad, Branch branch, const BackboneTrace& trace);
  RowMatrix<float> run_head(const RowMatrix<float>& x, HeadTrace* trace) const;
  void backprop_head(const RowMatrix<float>& dlogits, const HeadTrace& trace,
                     RowMatrix<float>* dx);

  NetworkConfig config_;
  NetworkState state_;
  std::array<std::vector<Op>, 2> ops_;
  std::size_t first_backprop_op_ = 0;
  std::vector<Parameter*> head_;  // weight, bias pairs
};

/// Flattens an NHWC tensor into an N x (H*W*C) matrix.
RowMatrix<float> flatten(const Tensor& t);

}  // namespace mvb::nets
