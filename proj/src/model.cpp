#include "dualstream/model.hpp"

#include <algorithm>
#include <string>

namespace dualstream {

namespace {

// Standard convolution output extent; throws when the kernel no longer fits.
int conv_extent(int in, int k, int stride, int padding, const char* where) {
  const int out = (in + 2 * padding - k) / stride + 1;
  if (in < 1 || out < 1)
    throw Error(std::string(where) + ": spatial extent collapses to " + std::to_string(out) +
                " (input " + std::to_string(in) + ")");
  return out;
}

}  // namespace

int ModelConfig::mobile_out_channels() const {
  return mobile_blocks.empty() ? mobile_stem_channels : mobile_blocks.back().out_channels;
}

int ModelConfig::dense_out_channels() const {
  int c = dense_stem_channels;
  for (size_t i = 0; i < dense_blocks.size(); ++i) {
    c += dense_blocks[i].layers * dense_blocks[i].growth;
    if (i + 1 < dense_blocks.size()) c = static_cast<int>(c * dense_compression);
  }
  return c;
}

int ModelConfig::mobile_map_size() const {
  int s = conv_extent(input_size, 3, 2, 1, "mobile stem");
  for (const auto& b : mobile_blocks) s = conv_extent(s, 3, b.stride, 1, "mobile block");
  return s;
}

int ModelConfig::dense_map_size() const {
  int s = conv_extent(input_size, 3, 2, 1, "dense stem");
  for (size_t i = 0; i + 1 < dense_blocks.size(); ++i) {
    s = s / 2;  // 2x2 average pool in the transition
    if (s < 1) throw Error("dense transition " + std::to_string(i) + ": map pooled away");
  }
  return s;
}

void ModelConfig::validate() const {
  if (input_channels < 1) throw Error("model config: input_channels must be >= 1");
  if (input_size < 4) throw Error("model config: input_size must be >= 4");
  if (num_classes < 2) throw Error("model config: num_classes must be >= 2");
  if (mobile_stem_channels < 1 || dense_stem_channels < 1)
    throw Error("model config: stem channels must be >= 1");
  for (const auto& b : mobile_blocks) {
    if (b.expansion < 1) throw Error("model config: inverted residual expansion must be >= 1");
    if (b.out_channels < 1) throw Error("model config: block out_channels must be >= 1");
    if (b.stride != 1 && b.stride != 2)
      throw Error("model config: block stride must be 1 or 2");
  }
  for (const auto& b : dense_blocks) {
    if (b.layers < 1 || b.growth < 1)
      throw Error("model config: dense blocks need layers >= 1 and growth >= 1");
  }
  if (dense_compression <= 0.0 || dense_compression > 1.0)
    throw Error("model config: dense_compression must be in (0,1]");
  {
    int c = dense_stem_channels;
    for (size_t i = 0; i + 1 < dense_blocks.size(); ++i) {
      c += dense_blocks[i].layers * dense_blocks[i].growth;
      c = static_cast<int>(c * dense_compression);
      if (c < 1) throw Error("model config: transition compresses channels to zero");
    }
  }
  if (attention_reduction < 1) throw Error("model config: attention_reduction must be >= 1");
  const int f = fused_width();
  if (f % attention_reduction != 0)
    throw Error("model config: attention_reduction " + std::to_string(attention_reduction) +
                " must divide the fused width " + std::to_string(f));
  mobile_map_size();  // throws if any stage collapses
  dense_map_size();
}

ShapeReport expected_shapes(const ModelConfig& cfg) {
  ShapeReport r;
  r.mobile_channels = cfg.mobile_out_channels();
  r.mobile_size = cfg.mobile_map_size();
  r.dense_channels = cfg.dense_out_channels();
  r.dense_size = cfg.dense_map_size();
  r.fused_width = cfg.fused_width();
  return r;
}

GradCheckResult gradient_check_fusion_model(uint64_t seed) {
  ModelConfig cfg;
  cfg.input_channels = 1;
  cfg.input_size = 8;
  cfg.num_classes = 3;
  cfg.mobile_stem_channels = 4;
  cfg.mobile_blocks = {{2, 4, 1}, {2, 6, 2}};  // first block exercises the skip path
  cfg.dense_stem_channels = 4;
  cfg.dense_blocks = {{1, 4}, {1, 4}};  // two blocks so one transition runs
  cfg.dense_compression = 0.5;
  cfg.attention_reduction = 2;
  cfg.seed = seed;

  auto model = FusionModelT<double>::init(cfg);

  Rng rng(mix_seed(seed, 0xF00DULL));
  TensorT<double> x = TensorT<double>::zeros({2, 1, 8, 8}, true);
  for (auto& v : x.values()) v = rng.normal();
  const std::vector<int> targets = {0, 1};

  std::vector<TensorT<double>> inputs;
  inputs.push_back(x);
  for (auto& [name, p] : model.named_parameters()) inputs.push_back(*p);

  // The inputs vector shares storage with the model parameters, so the
  // harness's coordinate perturbations reach the forward pass directly.
  // Training-mode batchnorm updates its running stats every call; reset them
  // so each finite-difference evaluation starts from identical state.
  auto fn = [&model, &x, &targets](Tape<double>* tape,
                                   std::vector<TensorT<double>>&) -> TensorT<double> {
    for (auto& [name, buf] : model.named_buffers()) {
      const bool is_var = name.size() >= 11 && name.rfind("running_var") == name.size() - 11;
      std::fill(buf->values().begin(), buf->values().end(), is_var ? 1.0 : 0.0);
    }
    auto out = model.forward(tape, x, /*training=*/true);
    return softmax_cross_entropy(tape, out.logits, targets);
  };

  return gradient_check("fusion_model_e2e", fn, inputs);
}

}  // namespace dualstream
