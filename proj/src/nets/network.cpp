#include "mvb/nets/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mvb/nets/losses.hpp"
#include "mvb/rng.hpp"

namespace mvb::nets {

// ---------------------------------------------------------------------------
// Configuration

void NetworkConfig::validate() const {
  if (!(backbone_scale > 0.0 && backbone_scale <= 1.0)) {
    throw std::invalid_argument("backbone_scale must be in (0, 1]");
  }
  if (se_reduction < 1) throw std::invalid_argument("se_reduction must be >= 1");
  for (int s : bn_stages) {
    if (s < 1 || s > kStageCount) throw std::invalid_argument("bn_stages must be within Conv1..Conv5");
  }
  for (int s : freeze_stages) {
    if (s < 1 || s > kStageCount) throw std::invalid_argument("freeze_stages must be within Conv1..Conv5");
  }
  if (input_size < 32) throw std::invalid_argument("input_size must be >= 32");
  if (embedding_width < 1) throw std::invalid_argument("embedding_width must be >= 1");
  for (int w : head_widths) {
    if (w < 1) throw std::invalid_argument("head widths must be positive");
  }
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) {
    throw std::invalid_argument("bn_momentum must be in [0, 1)");
  }
  if (feature_side() < 1) throw std::invalid_argument("input_size too small for the backbone");
}

int NetworkConfig::stage_channels(int stage) const {
  const int base = kVggStageWidths.at(static_cast<std::size_t>(stage - 1));
  return std::max(1, static_cast<int>(std::lround(base * backbone_scale)));
}

int NetworkConfig::se_bottleneck(int stage) const {
  const int c = stage_channels(stage);
  return (c + se_reduction - 1) / se_reduction;
}

int NetworkConfig::feature_side() const {
  const bool pre_pool = variant == Variant::kMerged && merge_point == MergePoint::kBeforePool5;
  int side = input_size;
  for (int s = 1; s <= kStageCount; ++s) {
    if (s == kStageCount && pre_pool) break;
    side /= 2;
  }
  return side;
}

std::string_view to_string(ParamScope scope) {
  switch (scope) {
    case ParamScope::kShared: return "shared";
    case ParamScope::kProbe: return "probe";
    case ParamScope::kGallery: return "gallery";
  }
  return "shared";
}

// ---------------------------------------------------------------------------
// Parameter storage

Parameter& NetworkState::add_shared(Parameter p) {
  shared_.push_back(std::make_unique<Parameter>(std::move(p)));
  return *shared_.back();
}

Parameter& NetworkState::add_branch(Branch branch, Parameter p) {
  auto& list = branch_[static_cast<std::size_t>(branch)];
  list.push_back(std::make_unique<Parameter>(std::move(p)));
  return *list.back();
}

std::vector<ParameterEntry> NetworkState::entries() const {
  std::vector<ParameterEntry> out;
  for (const auto& p : shared_) out.push_back({p->name, ParamScope::kShared, p.get()});
  for (const Branch b : {Branch::kProbe, Branch::kGallery}) {
    for (const auto& p : branch_[static_cast<std::size_t>(b)]) {
      out.push_back({p->name, scope_of(b), p.get()});
    }
  }
  return out;
}

Parameter* NetworkState::find(std::string_view name, ParamScope scope) {
  return const_cast<Parameter*>(std::as_const(*this).find(name, scope));
}

const Parameter* NetworkState::find(std::string_view name, ParamScope scope) const {
  const auto& list = scope == ParamScope::kShared ? shared_
                     : scope == ParamScope::kProbe ? branch_[0]
                                                   : branch_[1];
  for (const auto& p : list) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Network

struct SiameseNetwork::Op {
  enum class Kind { kConv, kBatchNorm, kRelu, kPool, kSe };
  Kind kind;
  int stage;
  int channels = 0;
  int bottleneck = 0;
  std::array<Parameter*, 4> params{};
};

struct BackboneTrace {
  struct Record {
    Tensor input;
    BatchNormCache<float> bn;
    std::vector<int> argmax;
    SeCache<float> se;
  };
  std::vector<Record> records;
};

struct HeadTrace {
  std::vector<RowMatrix<float>> inputs;
  std::vector<RowMatrix<float>> pre_activations;
};

namespace {

Parameter make_param(std::string name, ParamRole role, std::vector<int> shape, int stage) {
  Parameter p;
  p.name = std::move(name);
  p.role = role;
  p.shape = std::move(shape);
  p.stage = stage;
  std::size_t n = 1;
  for (int d : p.shape) n *= static_cast<std::size_t>(d);
  p.value.assign(n, 0.0F);
  p.grad.assign(n, 0.0F);
  p.velocity.assign(n, 0.0F);
  return p;
}

void fill_normal(Parameter& p, double stddev, Rng& rng) {
  for (auto& v : p.value) v = static_cast<float>(rng.normal(0.0, stddev));
}

float probability_from_logits(float z0, float z1) { return sigmoid(z1 - z0); }

}  // namespace

SiameseNetwork::SiameseNetwork(NetworkConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  build(seed);
}

SiameseNetwork::~SiameseNetwork() = default;
SiameseNetwork::SiameseNetwork(SiameseNetwork&&) noexcept = default;
SiameseNetwork& SiameseNetwork::operator=(SiameseNetwork&&) noexcept = default;

void SiameseNetwork::build(std::uint64_t seed) {
  auto rng = Rng::substream(seed, "nets.init");
  const bool pre_pool =
      config_.variant == Variant::kMerged && config_.merge_point == MergePoint::kBeforePool5;

  int in_c = 3;
  for (int s = 1; s <= kStageCount; ++s) {
    const int c = config_.stage_channels(s);
    for (int k = 1; k <= kVggStageDepths[static_cast<std::size_t>(s - 1)]; ++k) {
      const std::string prefix = "conv" + std::to_string(s) + "_" + std::to_string(k);
      auto& w = state_.add_shared(make_param(prefix + ".weight", ParamRole::kConvWeight, {3, 3, in_c, c}, s));
      fill_normal(w, std::sqrt(2.0 / (9.0 * in_c)), rng);
      auto& b = state_.add_shared(make_param(prefix + ".bias", ParamRole::kConvBias, {c}, s));
      for (auto& ops : ops_) {
        Op conv{Op::Kind::kConv, s, c, 0, {}};
        conv.params = {&w, &b, nullptr, nullptr};
        ops.push_back(conv);
      }
      if (config_.bn_stages.contains(s)) {
        for (const Branch br : {Branch::kProbe, Branch::kGallery}) {
          auto& gamma = state_.add_branch(br, make_param(prefix + ".bn.scale", ParamRole::kBnScale, {c}, s));
          auto& beta = state_.add_branch(br, make_param(prefix + ".bn.shift", ParamRole::kBnShift, {c}, s));
          auto& mean = state_.add_branch(br, make_param(prefix + ".bn.running_mean", ParamRole::kBnRunningMean, {c}, s));
          auto& var = state_.add_branch(br, make_param(prefix + ".bn.running_var", ParamRole::kBnRunningVar, {c}, s));
          std::fill(gamma.value.begin(), gamma.value.end(), 1.0F);
          std::fill(var.value.begin(), var.value.end(), 1.0F);
          Op bn{Op::Kind::kBatchNorm, s, c, 0, {}};
          bn.params = {&gamma, &beta, &mean, &var};
          ops_[static_cast<std::size_t>(br)].push_back(bn);
        }
      }
      for (auto& ops : ops_) ops.push_back(Op{Op::Kind::kRelu, s, c, 0, {}});
      in_c = c;
    }
    if (s == kStageCount && pre_pool) break;
    for (auto& ops : ops_) ops.push_back(Op{Op::Kind::kPool, s, c, 0, {}});
    if (config_.use_se && s >= 4) {
      const int r = config_.se_bottleneck(s);
      const std::string prefix = "se" + std::to_string(s);
      auto& w1 = state_.add_shared(make_param(prefix + ".fc1.weight", ParamRole::kSeWeight, {c, r}, s));
      auto& b1 = state_.add_shared(make_param(prefix + ".fc1.bias", ParamRole::kSeBias, {r}, s));
      auto& w2 = state_.add_shared(make_param(prefix + ".fc2.weight", ParamRole::kSeWeight, {r, c}, s));
      auto& b2 = state_.add_shared(make_param(prefix + ".fc2.bias", ParamRole::kSeBias, {c}, s));
      fill_normal(w1, std::sqrt(2.0 / c), rng);
      fill_normal(w2, std::sqrt(1.0 / r), rng);
      for (auto& ops : ops_) {
        Op se{Op::Kind::kSe, s, c, r, {}};
        se.params = {&w1, &b1, &w2, &b2};
        ops.push_back(se);
      }
    }
  }

  first_backprop_op_ = ops_[0].size();
  for (std::size_t i = 0; i < ops_[0].size(); ++i) {
    if (!config_.freeze_stages.contains(ops_[0][i].stage)) {
      first_backprop_op_ = i;
      break;
    }
  }

  const int flat = config_.feature_length();
  if (config_.variant == Variant::kMerged) {
    std::vector<int> widths = config_.head_widths;
    widths.push_back(2);
    int in = flat;
    for (std::size_t l = 0; l < widths.size(); ++l) {
      const std::string prefix = "head.fc" + std::to_string(l + 1);
      auto& w = state_.add_shared(make_param(prefix + ".weight", ParamRole::kFcWeight, {in, widths[l]}, 0));
      auto& b = state_.add_shared(make_param(prefix + ".bias", ParamRole::kFcBias, {widths[l]}, 0));
      const bool last = l + 1 == widths.size();
      fill_normal(w, std::sqrt((last ? 1.0 : 2.0) / in), rng);
      head_.push_back(&w);
      head_.push_back(&b);
      in = widths[l];
    }
  } else {
    auto& w = state_.add_shared(make_param("embed.weight", ParamRole::kFcWeight, {flat, config_.embedding_width}, 0));
    auto& b = state_.add_shared(make_param("embed.bias", ParamRole::kFcBias, {config_.embedding_width}, 0));
    fill_normal(w, std::sqrt(1.0 / flat), rng);
    head_.push_back(&w);
    head_.push_back(&b);
  }
}

std::vector<const Parameter*> SiameseNetwork::referenced_by(Branch branch) const {
  std::vector<const Parameter*> out;
  for (const Op& op : ops_[static_cast<std::size_t>(branch)]) {
    for (const Parameter* p : op.params) {
      if (p) out.push_back(p);
    }
  }
  if (config_.variant == Variant::kBasic) {
    for (const Parameter* p : head_) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> SiameseNetwork::head_parameters() const {
  return {head_.begin(), head_.end()};
}

std::vector<Parameter*> SiameseNetwork::trainable_parameters() {
  std::vector<Parameter*> out;
  for (const auto& e : state_.entries()) {
    auto* p = const_cast<Parameter*>(e.storage);
    if (!p->optimizable()) continue;
    if (p->stage != 0 && config_.freeze_stages.contains(p->stage)) continue;
    out.push_back(p);
  }
  return out;
}

void SiameseNetwork::zero_grad() {
  for (const auto& e : state_.entries()) {
    auto* p = const_cast<Parameter*>(e.storage);
    std::fill(p->grad.begin(), p->grad.end(), 0.0F);
  }
}

Tensor SiameseNetwork::run_backbone(const Tensor& images, Branch branch, BackboneTrace* trace) const {
  if (images.h != config_.input_size || images.w != config_.input_size || images.c != 3) {
    throw ShapeError("backbone expects N x " + std::to_string(config_.input_size) + " x " +
                     std::to_string(config_.input_size) + " x 3 input, got " + images.shape_string());
  }
  const auto& ops = ops_[static_cast<std::size_t>(branch)];
  if (trace) trace->records.assign(ops.size(), {});
  Tensor x = images;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const Op& op = ops[i];
    BackboneTrace::Record* rec = (trace && i >= first_backprop_op_) ? &trace->records[i] : nullptr;
    Tensor y;
    switch (op.kind) {
      case Op::Kind::kConv:
        conv3x3_forward(x, op.params[0]->value.data(), op.params[1]->value.data(), op.channels, y);
        break;
      case Op::Kind::kBatchNorm:
        if (trace) {
          BatchNormCache<float> scratch;
          batchnorm_forward_train(x, op.params[0]->value.data(), op.params[1]->value.data(),
                                  op.params[2]->value.data(), op.params[3]->value.data(),
                                  config_.bn_momentum, y, rec ? rec->bn : scratch);
        } else {
          batchnorm_forward_infer(x, op.params[0]->value.data(), op.params[1]->value.data(),
                                  op.params[2]->value.data(), op.params[3]->value.data(), y);
        }
        break;
      case Op::Kind::kRelu:
        y = x;
        relu_inplace(y);
        break;
      case Op::Kind::kPool: {
        std::vector<int> scratch;
        maxpool2x2_forward(x, y, rec ? rec->argmax : scratch);
        break;
      }
      case Op::Kind::kSe: {
        const SeParams<float> p{op.params[0]->value.data(), op.params[1]->value.data(),
                                op.params[2]->value.data(), op.params[3]->value.data(),
                                op.channels, op.bottleneck};
        SeCache<float> scratch;
        se_forward(x, p, y, rec ? rec->se : scratch);
        break;
      }
    }
    if (rec) rec->input = std::move(x);
    x = std::move(y);
  }
  return x;
}

void SiameseNetwork::backprop_backbone(const Tensor& grad, Branch branch, const BackboneTrace& trace) {
  const auto& ops = ops_[static_cast<std::size_t>(branch)];
  Tensor g = grad;
  for (std::size_t i = ops.size(); i-- > first_backprop_op_;) {
    const Op& op = ops[i];
    const auto& rec = trace.records[i];
    const bool need_dx = i > first_backprop_op_;
    const bool frozen = config_.freeze_stages.contains(op.stage);
    auto grad_of = [&](int k) -> float* {
      return frozen ? nullptr : op.params[static_cast<std::size_t>(k)]->grad.data();
    };
    Tensor dx;
    switch (op.kind) {
      case Op::Kind::kConv:
        conv3x3_backward(rec.input, op.params[0]->value.data(), g, grad_of(0), grad_of(1),
                         need_dx ? &dx : nullptr);
        break;
      case Op::Kind::kBatchNorm:
        batchnorm_backward(g, rec.bn, op.params[0]->value.data(), grad_of(0), grad_of(1), dx);
        break;
      case Op::Kind::kRelu:
        dx = std::move(g);
        for (std::size_t j = 0; j < dx.data.size(); ++j) {
          if (!(rec.input.data[j] > 0.0F)) dx.data[j] = 0.0F;
        }
        break;
      case Op::Kind::kPool:
        dx = Tensor(rec.input.n, rec.input.h, rec.input.w, rec.input.c);
        maxpool2x2_backward(g, rec.argmax, dx);
        break;
      case Op::Kind::kSe: {
        const SeParams<float> p{op.params[0]->value.data(), op.params[1]->value.data(),
                                op.params[2]->value.data(), op.params[3]->value.data(),
                                op.channels, op.bottleneck};
        se_backward(rec.input, g, p, rec.se, SeGrads<float>{grad_of(0), grad_of(1), grad_of(2), grad_of(3)},
                    need_dx ? &dx : nullptr);
        break;
      }
    }
    if (!need_dx) break;
    g = std::move(dx);
  }
}

Tensor SiameseNetwork::backbone_forward(const Tensor& images, Branch branch) const {
  return run_backbone(images, branch, nullptr);
}

RowMatrix<float> flatten(const Tensor& t) {
  RowMatrix<float> out(t.n, static_cast<Eigen::Index>(t.sample_size()));
  std::copy(t.data.begin(), t.data.end(), out.data());
  return out;
}

Tensor SiameseNetwork::merge(const Tensor& probe_maps, const Tensor& gallery_maps) {
  if (!probe_maps.same_shape(gallery_maps)) {
    throw ShapeError("merge: shape mismatch " + probe_maps.shape_string() + " vs " +
                     gallery_maps.shape_string());
  }
  Tensor out = probe_maps;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= gallery_maps.data[i];
  return out;
}

RowMatrix<float> SiameseNetwork::run_head(const RowMatrix<float>& x, HeadTrace* trace) const {
  const std::size_t layers = head_.size() / 2;
  RowMatrix<float> a = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const Parameter& w = *head_[2 * l];
    const Parameter& b = *head_[2 * l + 1];
    if (a.cols() != w.shape[0]) throw ShapeError("head input width mismatch");
    RowMatrix<float> z;
    fc_forward(a, w.value.data(), b.value.data(), w.shape[1], z);
    if (trace) trace->inputs.push_back(a);
    if (l + 1 == layers) return z;
    if (trace) trace->pre_activations.push_back(z);
    a = z.cwiseMax(0.0F);
  }
  return a;
}

void SiameseNetwork::backprop_head(const RowMatrix<float>& dlogits, const HeadTrace& trace,
                                   RowMatrix<float>* dx) {
  const std::size_t layers = head_.size() / 2;
  RowMatrix<float> g = dlogits;
  for (std::size_t l = layers; l-- > 0;) {
    Parameter& w = *head_[2 * l];
    Parameter& b = *head_[2 * l + 1];
    RowMatrix<float> din;
    const bool need = l > 0 || dx != nullptr;
    fc_backward(trace.inputs[l], w.value.data(), g, w.grad.data(), b.grad.data(), need ? &din : nullptr);
    if (l == 0) {
      if (dx) *dx = std::move(din);
      break;
    }
    const auto& pre = trace.pre_activations[l - 1];
    g = din.cwiseProduct(pre.unaryExpr([](float v) { return v > 0.0F ? 1.0F : 0.0F; }));
  }
}

std::vector<float> SiameseNetwork::classify(const Tensor& merged) const {
  if (config_.variant != Variant::kMerged) throw std::logic_error("classify needs the merged variant");
  const RowMatrix<float> logits = run_head(flatten(merged), nullptr);
  std::vector<float> p(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) p[static_cast<std::size_t>(i)] = probability_from_logits(logits(i, 0), logits(i, 1));
  return p;
}

RowMatrix<float> SiameseNetwork::embed(const Tensor& maps) const {
  if (config_.variant != Variant::kBasic) throw std::logic_error("embed needs the basic variant");
  const Parameter& w = *head_[0];
  const Parameter& b = *head_[1];
  const RowMatrix<float> flat = flatten(maps);
  if (flat.cols() != w.shape[0]) throw ShapeError("embedding input width mismatch");
  RowMatrix<float> out;
  fc_forward(flat, w.value.data(), b.value.data(), w.shape[1], out);
  return out;
}

std::vector<float> SiameseNetwork::merged_forward(const Tensor& probes, const Tensor& galleries) const {
  return classify(merge(backbone_forward(probes, Branch::kProbe),
                        backbone_forward(galleries, Branch::kGallery)));
}

BasicOutput SiameseNetwork::basic_forward(const Tensor& probes, const Tensor& galleries) const {
  if (probes.n != galleries.n) throw ShapeError("basic_forward: batch size mismatch");
  BasicOutput out;
  out.probe_vectors = embed(backbone_forward(probes, Branch::kProbe));
  out.gallery_vectors = embed(backbone_forward(galleries, Branch::kGallery));
  out.distances.resize(static_cast<std::size_t>(probes.n));
  for (int i = 0; i < probes.n; ++i) {
    out.distances[static_cast<std::size_t>(i)] =
        (out.probe_vectors.row(i) - out.gallery_vectors.row(i)).norm();
  }
  return out;
}

double SiameseNetwork::accumulate_gradients(const Tensor& probes, const Tensor& galleries,
                                            std::span<const int> labels, double margin) {
  const int n = probes.n;
  if (galleries.n != n || static_cast<int>(labels.size()) != n || n == 0) {
    throw ShapeError("accumulate_gradients: batch size mismatch");
  }
  BackboneTrace probe_trace, gallery_trace;
  const Tensor fp = run_backbone(probes, Branch::kProbe, &probe_trace);
  const Tensor fg = run_backbone(galleries, Branch::kGallery, &gallery_trace);
  const float inv_n = 1.0F / static_cast<float>(n);
  double loss = 0.0;

  Tensor dprobe(fp.n, fp.h, fp.w, fp.c);
  Tensor dgallery(fp.n, fp.h, fp.w, fp.c);
  if (config_.variant == Variant::kMerged) {
    const Tensor merged = merge(fp, fg);
    HeadTrace head_trace;
    const RowMatrix<float> logits = run_head(flatten(merged), &head_trace);
    RowMatrix<float> dlogits(n, 2);
    for (int i = 0; i < n; ++i) {
      const double z0 = logits(i, 0);
      const double z1 = logits(i, 1);
      const double zmax = std::max(z0, z1);
      const double lse = zmax + std::log(std::exp(z0 - zmax) + std::exp(z1 - zmax));
      const int y = labels[static_cast<std::size_t>(i)] ? 1 : 0;
      loss += lse - (y ? z1 : z0);
      const double p1 = std::exp(z1 - lse);
      dlogits(i, 0) = static_cast<float>(((1.0 - p1) - (y ? 0.0 : 1.0)) * inv_n);
      dlogits(i, 1) = static_cast<float>((p1 - (y ? 1.0 : 0.0)) * inv_n);
    }
    RowMatrix<float> dflat;
    backprop_head(dlogits, head_trace, &dflat);
    std::copy(dflat.data(), dflat.data() + dflat.size(), dprobe.data.begin());
    for (std::size_t j = 0; j < dprobe.data.size(); ++j) dgallery.data[j] = -dprobe.data[j];
  } else {
    Parameter& w = *head_[0];
    Parameter& b = *head_[1];
    const RowMatrix<float> flat_p = flatten(fp);
    const RowMatrix<float> flat_g = flatten(fg);
    RowMatrix<float> vp, vg;
    fc_forward(flat_p, w.value.data(), b.value.data(), w.shape[1], vp);
    fc_forward(flat_g, w.value.data(), b.value.data(), w.shape[1], vg);
    RowMatrix<float> dvp(vp.rows(), vp.cols());
    for (int i = 0; i < n; ++i) {
      const auto diff = (vp.row(i) - vg.row(i)).eval();
      const double d = diff.norm();
      const int y = labels[static_cast<std::size_t>(i)] ? 1 : 0;
      loss += contrastive_loss(d, y, margin);
      if (y) {
        dvp.row(i) = diff * (2.0F * inv_n);
      } else if (d > 1e-12) {
        dvp.row(i) = diff * static_cast<float>(contrastive_loss_grad(d, y, margin) / d * inv_n);
      } else {
        dvp.row(i).setZero();
      }
    }
    const RowMatrix<float> dvg = -dvp;
    RowMatrix<float> dflat_p, dflat_g;
    fc_backward(flat_p, w.value.data(), dvp, w.grad.data(), b.grad.data(), &dflat_p);
    fc_backward(flat_g, w.value.data(), dvg, w.grad.data(), b.grad.data(), &dflat_g);
    std::copy(dflat_p.data(), dflat_p.data() + dflat_p.size(), dprobe.data.begin());
    std::copy(dflat_g.data(), dflat_g.data() + dflat_g.size(), dgallery.data.begin());
  }
  backprop_backbone(dprobe, Branch::kProbe, probe_trace);
  backprop_backbone(dgallery, Branch::kGallery, gallery_trace);
  return loss / n;
}

}  // namespace mvb::nets
