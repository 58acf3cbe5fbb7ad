#pragma once

// The dual-stream fusion classifier: a mobile-style stream built from
// inverted-residual blocks, a dense-style stream built from densely connected
// blocks with compressing transitions, feature-level fusion of the pooled
// maps with squeeze-excitation channel attention, and a linear head.
//
// Everything is templated on the scalar type: float for training, double for
// finite-difference verification.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dualstream/image.hpp"
#include "dualstream/tensor.hpp"

namespace dualstream {

struct InvertedResidualSpec {
  int expansion = 4;
  int out_channels = 8;
  int stride = 1;
};

struct DenseBlockSpec {
  int layers = 2;
  int growth = 12;
};

struct ModelConfig {
  int input_channels = 1;
  int input_size = 224;
  int num_classes = 4;
  int mobile_stem_channels = 8;
  std::vector<InvertedResidualSpec> mobile_blocks = {{4, 8, 1}, {4, 16, 2}, {4, 16, 1}};
  int dense_stem_channels = 8;
  std::vector<DenseBlockSpec> dense_blocks = {{2, 12}, {2, 12}};
  double dense_compression = 0.5;  // transition 1x1 keeps floor(c * compression)
  int attention_reduction = 4;
  uint64_t seed = 0;

  int mobile_out_channels() const;
  int dense_out_channels() const;
  int fused_width() const { return mobile_out_channels() + dense_out_channels(); }
  int mobile_map_size() const;
  int dense_map_size() const;
  void validate() const;  // throws Error on an inconsistent config
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2dLayer {
  TensorT<T> weight;  // OCKK
  int stride = 1;
  int padding = 0;

  static Conv2dLayer init(int in_ch, int out_ch, int k, int stride, int padding, Rng& rng) {
    Conv2dLayer l;
    l.stride = stride;
    l.padding = padding;
    l.weight = TensorT<T>::zeros({out_ch, in_ch, k, k}, true);
    const double bound = std::sqrt(6.0 / (static_cast<double>(in_ch) * k * k));
    for (auto& v : l.weight.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    return l;
  }

  TensorT<T> forward(Tape<T>* tape, const TensorT<T>& x) const {
    return conv2d<T>(tape, x, weight, nullptr, stride, padding);
  }
};

template <typename T>
struct DepthwiseConv2dLayer {
  TensorT<T> weight;  // C1KK
  int stride = 1;
  int padding = 1;

  static DepthwiseConv2dLayer init(int channels, int k, int stride, int padding, Rng& rng) {
    DepthwiseConv2dLayer l;
    l.stride = stride;
    l.padding = padding;
    l.weight = TensorT<T>::zeros({channels, 1, k, k}, true);
    const double bound = std::sqrt(6.0 / (static_cast<double>(k) * k));
    for (auto& v : l.weight.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    return l;
  }

  TensorT<T> forward(Tape<T>* tape, const TensorT<T>& x) const {
    return depthwise_conv2d(tape, x, weight, stride, padding);
  }
};

template <typename T>
struct BatchNormLayer {
  TensorT<T> gamma;
  TensorT<T> beta;
  BatchNormState<T> state;

  static BatchNormLayer init(int channels) {
    BatchNormLayer l;
    l.gamma = TensorT<T>::full({channels}, T(1), true);
    l.beta = TensorT<T>::zeros({channels}, true);
    l.state.running_mean = TensorT<T>::zeros({channels});
    l.state.running_var = TensorT<T>::full({channels}, T(1));
    return l;
  }

  TensorT<T> forward(Tape<T>* tape, const TensorT<T>& x, bool training) {
    return batchnorm2d(tape, x, gamma, beta, state, training);
  }
};

template <typename T>
struct LinearLayer {
  TensorT<T> weight;  // out x in
  TensorT<T> bias;

  static LinearLayer init(int in_f, int out_f, Rng& rng) {
    LinearLayer l;
    l.weight = TensorT<T>::zeros({out_f, in_f}, true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_f));
    for (auto& v : l.weight.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    l.bias = TensorT<T>::zeros({out_f}, true);
    return l;
  }

  TensorT<T> forward(Tape<T>* tape, const TensorT<T>& x) const {
    return linear(tape, x, weight, &bias);
  }
};

// 1x1 expand (xT) -> bn -> relu6 -> 3x3 depthwise -> bn -> relu6 ->
// 1x1 project -> bn, residual add when stride 1 and channels match.
template <typename T>
struct InvertedResidual {
  Conv2dLayer<T> expand;
  BatchNormLayer<T> bn1;
  DepthwiseConv2dLayer<T> depthwise;
  BatchNormLayer<T> bn2;
  Conv2dLayer<T> project;
  BatchNormLayer<T> bn3;
  bool use_skip = false;

  static InvertedResidual init(int in_ch, const InvertedResidualSpec& spec, Rng& rng) {
    if (spec.expansion < 1 || spec.out_channels < 1 ||
        (spec.stride != 1 && spec.stride != 2))
      throw Error("inverted residual: bad block spec");
    InvertedResidual b;
    const int mid = in_ch * spec.expansion;
    b.expand = Conv2dLayer<T>::init(in_ch, mid, 1, 1, 0, rng);
    b.bn1 = BatchNormLayer<T>::init(mid);
    b.depthwise = DepthwiseConv2dLayer<T>::init(mid, 3, spec.stride, 1, rng);
    b.bn2 = BatchNormLayer<T>::init(mid);
    b.project = Conv2dLayer<T>::init(mid, spec.out_channels, 1, 1, 0, rng);
    b.bn3 = BatchNormLayer<T>::init(spec.out_channels);
    b.use_skip = spec.stride == 1 && in_ch == spec.out_channels;
    return b;
  }

  TensorT<T> forward(Tape<T>* tape, const TensorT<T>& x, bool training) {
    TensorT<T> h = relu6(tape, bn1.forward(tape, expand.forward(tape, x), training));
    h = relu6(tape, bn2.forward(tape, depthwise.forward(tape, h), training));
    h = bn3.forward(tape, project.forward(tape, h), training);
    if (use_skip) h = add(tape, h, x);
    return h;
  }
};

// One dense layer: bn -> relu -> 3x3 conv emitting `growth` channels; the
// block concatenates every layer's output onto its input.
template <typename T>
struct DenseLayer {
  BatchNormLayer<T> bn;
  Conv2dLayer<T> conv;

  static DenseLayer init(int in_ch, int growth, Rng& rng) {
    DenseLayer l;
    l.bn = BatchNormLayer<T>::init(in_ch);
    l.conv = Conv2dLayer<T>::init(in_ch, growth, 3, 1, 1, rng);
    return l;
  }

  TensorT<T> forward(Tape<T>* tape, const TensorT<T>& x, bool training) {
    return conv.forward(tape, relu(tape, bn.forward(tape, x, training)));
  }
};

template <typename T>
struct DenseBlock {
  std::vector<DenseLayer<T>> layers;

  static DenseBlock init(int in_ch, const DenseBlockSpec& spec, Rng& rng) {
    if (spec.layers < 1 || spec.growth < 1) throw Error("dense block: bad block spec");
    DenseBlock b;
    int c = in_ch;
    for (int i = 0; i < spec.layers; ++i) {
      b.layers.push_back(DenseLayer<T>::init(c, spec.growth, rng));
      c += spec.growth;
    }
    return b;
  }

  TensorT<T> forward(Tape<T>* tape, const TensorT<T>& x, bool training) {
    TensorT<T> acc = x;
    for (auto& layer : layers)
      acc = concat_channels(tape, acc, layer.forward(tape, acc, training));
    return acc;
  }
};

// bn -> relu -> 1x1 compression conv -> 2x2 average pool.
template <typename T>
struct Transition {
  BatchNormLayer<T> bn;
  Conv2dLayer<T> conv;

  static Transition init(int in_ch, int out_ch, Rng& rng) {
    Transition t;
    t.bn = BatchNormLayer<T>::init(in_ch);
    t.conv = Conv2dLayer<T>::init(in_ch, out_ch, 1, 1, 0, rng);
    return t;
  }

  TensorT<T> forward(Tape<T>* tape, const TensorT<T>& x, bool training) {
    return avg_pool2d_2x2(tape, conv.forward(tape, relu(tape, bn.forward(tape, x, training))));
  }
};

template <typename T>
struct MobileStream {
  Conv2dLayer<T> stem;
  BatchNormLayer<T> stem_bn;
  std::vector<InvertedResidual<T>> blocks;

  static MobileStream init(const ModelConfig& cfg, Rng& rng) {
    MobileStream s;
    s.stem = Conv2dLayer<T>::init(cfg.input_channels, cfg.mobile_stem_channels, 3, 2, 1, rng);
    s.stem_bn = BatchNormLayer<T>::init(cfg.mobile_stem_channels);
    int c = cfg.mobile_stem_channels;
    for (const auto& spec : cfg.mobile_blocks) {
      s.blocks.push_back(InvertedResidual<T>::init(c, spec, rng));
      c = spec.out_channels;
    }
    return s;
  }

  TensorT<T> forward(Tape<T>* tape, const TensorT<T>& x, bool training) {
    TensorT<T> h = relu6(tape, stem_bn.forward(tape, stem.forward(tape, x), training));
    for (auto& b : blocks) h = b.forward(tape, h, training);
    // The pooled head consumes rectified features; this also keeps the final
    // map non-negative, which the activation heatmaps rely on.
    return relu6(tape, h);
  }
};

template <typename T>
struct DenseStream {
  Conv2dLayer<T> stem;
  BatchNormLayer<T> stem_bn;
  std::vector<DenseBlock<T>> blocks;
  std::vector<Transition<T>> transitions;  // between consecutive blocks
  BatchNormLayer<T> final_bn;

  static DenseStream init(const ModelConfig& cfg, Rng& rng) {
    DenseStream s;
    s.stem = Conv2dLayer<T>::init(cfg.input_channels, cfg.dense_stem_channels, 3, 2, 1, rng);
    s.stem_bn = BatchNormLayer<T>::init(cfg.dense_stem_channels);
    int c = cfg.dense_stem_channels;
    for (size_t i = 0; i < cfg.dense_blocks.size(); ++i) {
      s.blocks.push_back(DenseBlock<T>::init(c, cfg.dense_blocks[i], rng));
      c += cfg.dense_blocks[i].layers * cfg.dense_blocks[i].growth;
      if (i + 1 < cfg.dense_blocks.size()) {
        const int compressed = static_cast<int>(c * cfg.dense_compression);
        s.transitions.push_back(Transition<T>::init(c, compressed, rng));
        c = compressed;
      }
    }
    s.final_bn = BatchNormLayer<T>::init(c);
    return s;
  }

  TensorT<T> forward(Tape<T>* tape, const TensorT<T>& x, bool training) {
    TensorT<T> h = relu(tape, stem_bn.forward(tape, stem.forward(tape, x), training));
    for (size_t i = 0; i < blocks.size(); ++i) {
      h = blocks[i].forward(tape, h, training);
      if (i < transitions.size()) h = transitions[i].forward(tape, h, training);
    }
    return relu(tape, final_bn.forward(tape, h, training));  // final pre-pool map
  }
};

// ---------------------------------------------------------------------------
// Fusion model
// ---------------------------------------------------------------------------

template <typename T>
struct FusionOutputs {
  TensorT<T> logits;      // N x classes
  TensorT<T> mobile_map;  // final mobile feature map (pre-pool)
  TensorT<T> dense_map;   // final dense feature map (pre-pool)
  TensorT<T> fused;       // attended fused vector, N x fused_width
  TensorT<T> attention;   // gate values s, N x fused_width
};

template <typename T>
struct FusionModelT {
  ModelConfig config;
  MobileStream<T> mobile;
  DenseStream<T> dense;
  LinearLayer<T> att1;  // fused -> fused/r
  LinearLayer<T> att2;  // fused/r -> fused
  LinearLayer<T> head;  // fused -> classes
  int epochs_completed = 0;

  static FusionModelT init(const ModelConfig& cfg) {
    cfg.validate();
    FusionModelT m;
    m.config = cfg;
    Rng rng(mix_seed(cfg.seed, 0xAC1DC0DEULL));
    m.mobile = MobileStream<T>::init(cfg, rng);
    m.dense = DenseStream<T>::init(cfg, rng);
    const int f = cfg.fused_width();
    m.att1 = LinearLayer<T>::init(f, f / cfg.attention_reduction, rng);
    m.att2 = LinearLayer<T>::init(f / cfg.attention_reduction, f, rng);
    m.head = LinearLayer<T>::init(f, cfg.num_classes, rng);
    return m;
  }

  // GAP both maps -> concat -> s = sigmoid(W2 relu(W1 f)) -> f*s.
  std::pair<TensorT<T>, TensorT<T>> fuse_and_attend(Tape<T>* tape, const TensorT<T>& map_a,
                                                    const TensorT<T>& map_b) {
    if (map_a.dim(0) != map_b.dim(0))
      throw Error("fuse_and_attend: batch size mismatch");
    TensorT<T> f = concat_channels(tape, global_avg_pool(tape, map_a),
                                   global_avg_pool(tape, map_b));
    TensorT<T> s = sigmoid(tape, att2.forward(tape, relu(tape, att1.forward(tape, f))));
    return {mul(tape, f, s), s};
  }

  FusionOutputs<T> forward(Tape<T>* tape, const TensorT<T>& x, bool training) {
    if (x.ndim() != 4 || x.dim(1) != config.input_channels)
      throw Error("forward: input must be N x " + std::to_string(config.input_channels) +
                  " x H x W, got " + shape_str(x.shape()));
    FusionOutputs<T> out;
    out.mobile_map = mobile.forward(tape, x, training);
    out.dense_map = dense.forward(tape, x, training);
    auto [fused, att] = fuse_and_attend(tape, out.mobile_map, out.dense_map);
    out.fused = fused;
    out.attention = att;
    out.logits = head.forward(tape, out.fused);
    return out;
  }

  std::vector<std::pair<std::string, TensorT<T>*>> named_parameters() {
    std::vector<std::pair<std::string, TensorT<T>*>> ps;
    ps.emplace_back("mobile.stem.weight", &mobile.stem.weight);
    ps.emplace_back("mobile.stem_bn.gamma", &mobile.stem_bn.gamma);
    ps.emplace_back("mobile.stem_bn.beta", &mobile.stem_bn.beta);
    for (size_t i = 0; i < mobile.blocks.size(); ++i) {
      auto& b = mobile.blocks[i];
      const std::string p = "mobile.block" + std::to_string(i) + ".";
      ps.emplace_back(p + "expand.weight", &b.expand.weight);
      ps.emplace_back(p + "bn1.gamma", &b.bn1.gamma);
      ps.emplace_back(p + "bn1.beta", &b.bn1.beta);
      ps.emplace_back(p + "depthwise.weight", &b.depthwise.weight);
      ps.emplace_back(p + "bn2.gamma", &b.bn2.gamma);
      ps.emplace_back(p + "bn2.beta", &b.bn2.beta);
      ps.emplace_back(p + "project.weight", &b.project.weight);
      ps.emplace_back(p + "bn3.gamma", &b.bn3.gamma);
      ps.emplace_back(p + "bn3.beta", &b.bn3.beta);
    }
    ps.emplace_back("dense.stem.weight", &dense.stem.weight);
    ps.emplace_back("dense.stem_bn.gamma", &dense.stem_bn.gamma);
    ps.emplace_back("dense.stem_bn.beta", &dense.stem_bn.beta);
    for (size_t i = 0; i < dense.blocks.size(); ++i) {
      for (size_t j = 0; j < dense.blocks[i].layers.size(); ++j) {
        auto& l = dense.blocks[i].layers[j];
        const std::string p =
            "dense.block" + std::to_string(i) + ".layer" + std::to_string(j) + ".";
        ps.emplace_back(p + "bn.gamma", &l.bn.gamma);
        ps.emplace_back(p + "bn.beta", &l.bn.beta);
        ps.emplace_back(p + "conv.weight", &l.conv.weight);
      }
      if (i < dense.transitions.size()) {
        auto& t = dense.transitions[i];
        const std::string p = "dense.trans" + std::to_string(i) + ".";
        ps.emplace_back(p + "bn.gamma", &t.bn.gamma);
        ps.emplace_back(p + "bn.beta", &t.bn.beta);
        ps.emplace_back(p + "conv.weight", &t.conv.weight);
      }
    }
    ps.emplace_back("dense.final_bn.gamma", &dense.final_bn.gamma);
    ps.emplace_back("dense.final_bn.beta", &dense.final_bn.beta);
    ps.emplace_back("att1.weight", &att1.weight);
    ps.emplace_back("att1.bias", &att1.bias);
    ps.emplace_back("att2.weight", &att2.weight);
    ps.emplace_back("att2.bias", &att2.bias);
    ps.emplace_back("head.weight", &head.weight);
    ps.emplace_back("head.bias", &head.bias);
    return ps;
  }

  // Batchnorm running statistics; saved with checkpoints, never optimized.
  std::vector<std::pair<std::string, TensorT<T>*>> named_buffers() {
    std::vector<std::pair<std::string, TensorT<T>*>> bs;
    auto put = [&bs](const std::string& name, BatchNormLayer<T>& bn) {
      bs.emplace_back(name + ".running_mean", &bn.state.running_mean);
      bs.emplace_back(name + ".running_var", &bn.state.running_var);
    };
    put("mobile.stem_bn", mobile.stem_bn);
    for (size_t i = 0; i < mobile.blocks.size(); ++i) {
      const std::string p = "mobile.block" + std::to_string(i) + ".";
      put(p + "bn1", mobile.blocks[i].bn1);
      put(p + "bn2", mobile.blocks[i].bn2);
      put(p + "bn3", mobile.blocks[i].bn3);
    }
    put("dense.stem_bn", dense.stem_bn);
    for (size_t i = 0; i < dense.blocks.size(); ++i) {
      for (size_t j = 0; j < dense.blocks[i].layers.size(); ++j)
        put("dense.block" + std::to_string(i) + ".layer" + std::to_string(j) + ".bn",
            dense.blocks[i].layers[j].bn);
      if (i < dense.transitions.size())
        put("dense.trans" + std::to_string(i) + ".bn", dense.transitions[i].bn);
    }
    put("dense.final_bn", dense.final_bn);
    return bs;
  }
};

using FusionModel = FusionModelT<float>;

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 29;
  int batch_size = 16;
  double learning_rate = 0.05;
  double momentum = 0.9;
  uint64_t seed = 0;
};

// Normalized samples packed as one NCHW block.
struct TensorDataset {
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<float> data;  // N*C*H*W
  std::vector<int> labels;
  std::vector<std::string> ids;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  Tensor gather(const std::vector<int64_t>& indices) const;
};

TensorDataset make_tensor_dataset(const std::vector<ImageSample>& samples,
                                  const NormalizationStats& stats);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double val_loss = 0;
  double val_accuracy = 0;
};

struct TrainCurve {
  std::vector<EpochStats> epochs;
};

// Momentum-SGD training loop over softmax cross-entropy. Deterministic given
// (model init, dataset, config): per-epoch shuffles derive from the seed. A
// trailing batch of one sample is merged into the previous batch (batchnorm
// needs at least two rows). on_epoch runs after each epoch (checkpointing).
TrainCurve train_model(FusionModel& model, const TensorDataset& train_set,
                       const TensorDataset& val_set, const TrainConfig& cfg,
                       const std::function<void(FusionModel&, int)>& on_epoch = {});

struct PredictionSet {
  std::vector<std::string> ids;
  std::vector<int> actual;
  std::vector<int> predicted;        // argmax, ties to the lowest class index
  std::vector<float> scores;         // N x K softmax probabilities
  int num_classes = 0;
};

PredictionSet predict(FusionModel& model, const TensorDataset& samples, int batch_size = 32);

// Loss + accuracy of eval-mode predictions (validation/test curves).
std::pair<double, double> evaluate_loss_accuracy(FusionModel& model,
                                                 const TensorDataset& samples,
                                                 int batch_size = 32);

// Expected feature-map geometry from the config alone (the shape contract).
struct ShapeReport {
  int mobile_channels = 0;
  int mobile_size = 0;
  int dense_channels = 0;
  int dense_size = 0;
  int fused_width = 0;
};
ShapeReport expected_shapes(const ModelConfig& cfg);

// Full-model finite-difference check at 64-bit on a tiny config: every
// parameter coordinate plus the input batch. Returns the worst relative error.
GradCheckResult gradient_check_fusion_model(uint64_t seed);

}  // namespace dualstream
