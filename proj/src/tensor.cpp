#include "dualstream/tensor.hpp"

namespace dualstream {

namespace {

using D = TensorT<double>;
using detail::nudge_from_kinks;
using detail::random_tensor;

std::vector<double> coeffs_for(const D& t, Rng& rng) {
  std::vector<double> c(static_cast<size_t>(t.size()));
  for (auto& v : c) v = rng.uniform(-1.0, 1.0);
  return c;
}

// Wraps an op returning a tensor into the scalar-valued form gradient_check
// expects: out = weighted_sum(op(inputs), fixed coefficients).
template <typename OpFn>
auto scalarized(OpFn op, std::vector<double> coeffs) {
  return [op, coeffs = std::move(coeffs)](Tape<double>* tape,
                                          std::vector<D>& inputs) -> D {
    D y = op(tape, inputs);
    return weighted_sum(tape, y, coeffs);
  };
}

}  // namespace

std::vector<GradCheckResult> gradient_check_suite(int num_seeds, uint64_t master_seed) {
  std::vector<GradCheckResult> results;
  for (int s = 0; s < num_seeds; ++s) {
    Rng rng(mix_seed(master_seed, static_cast<uint64_t>(s)));
    const std::string tag = "@seed" + std::to_string(s);

    {
      D x = random_tensor<double>({2, 3, 5, 5}, rng);
      D w = random_tensor<double>({4, 3, 3, 3}, rng, -0.5, 0.5);
      D b = random_tensor<double>({4}, rng, -0.5, 0.5);
      Rng crng(mix_seed(master_seed, 1000 + static_cast<uint64_t>(s)));
      auto c = coeffs_for(D::zeros({2, 4, 3, 3}), crng);
      results.push_back(gradient_check(
          "conv2d_s1p0" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) {
            return conv2d(t, in[0], in[1], &in[2], 1, 0);
          },
                     c),
          {x, w, b}));
      auto c2 = coeffs_for(D::zeros({2, 4, 3, 3}), crng);
      results.push_back(gradient_check(
          "conv2d_s2p1" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) {
            return conv2d(t, in[0], in[1], &in[2], 2, 1);
          },
                     c2),
          {x, w, b}));
    }
    {
      D x = random_tensor<double>({2, 3, 6, 6}, rng);
      D w = random_tensor<double>({3, 1, 3, 3}, rng, -0.5, 0.5);
      Rng crng(mix_seed(master_seed, 2000 + static_cast<uint64_t>(s)));
      auto c = coeffs_for(D::zeros({2, 3, 6, 6}), crng);
      results.push_back(gradient_check(
          "depthwise_s1p1" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) {
            return depthwise_conv2d(t, in[0], in[1], 1, 1);
          },
                     c),
          {x, w}));
      auto c2 = coeffs_for(D::zeros({2, 3, 3, 3}), crng);
      results.push_back(gradient_check(
          "depthwise_s2p1" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) {
            return depthwise_conv2d(t, in[0], in[1], 2, 1);
          },
                     c2),
          {x, w}));
    }
    {
      D x = random_tensor<double>({3, 4, 4, 4}, rng);
      D g = random_tensor<double>({4}, rng, 0.5, 1.5);
      D b = random_tensor<double>({4}, rng, -0.5, 0.5);
      Rng crng(mix_seed(master_seed, 3000 + static_cast<uint64_t>(s)));
      auto c = coeffs_for(D::zeros({3, 4, 4, 4}), crng);
      // Fresh state per call so the train-mode running-stat update cannot
      // perturb the finite-difference evaluations.
      results.push_back(gradient_check(
          "batchnorm_train" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) {
            BatchNormState<double> st;
            st.running_mean = D::zeros({4});
            st.running_var = D::full({4}, 1.0);
            return batchnorm2d(t, in[0], in[1], in[2], st, true);
          },
                     c),
          {x, g, b}));
      auto c2 = coeffs_for(D::zeros({3, 4, 4, 4}), crng);
      results.push_back(gradient_check(
          "batchnorm_eval" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) {
            BatchNormState<double> st;
            st.running_mean = D::full({4}, 0.1);
            st.running_var = D::full({4}, 0.9);
            return batchnorm2d(t, in[0], in[1], in[2], st, false);
          },
                     c2),
          {x, g, b}));
    }
    {
      D x = random_tensor<double>({2, 3, 4, 4}, rng);
      nudge_from_kinks(x, {0.0});
      Rng crng(mix_seed(master_seed, 4000 + static_cast<uint64_t>(s)));
      auto c = coeffs_for(x, crng);
      results.push_back(gradient_check(
          "relu" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) { return relu(t, in[0]); }, c),
          {x}));
      D x6 = random_tensor<double>({2, 3, 4, 4}, rng, -2.0, 8.0);
      nudge_from_kinks(x6, {0.0, 6.0});
      auto c6 = coeffs_for(x6, crng);
      results.push_back(gradient_check(
          "relu6" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) { return relu6(t, in[0]); }, c6),
          {x6}));
      D xs = random_tensor<double>({2, 7}, rng, -4.0, 4.0);
      auto cs = coeffs_for(xs, crng);
      results.push_back(gradient_check(
          "sigmoid" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) { return sigmoid(t, in[0]); }, cs),
          {xs}));
    }
    {
      D a = random_tensor<double>({2, 5}, rng);
      D b = random_tensor<double>({2, 5}, rng);
      Rng crng(mix_seed(master_seed, 5000 + static_cast<uint64_t>(s)));
      auto c = coeffs_for(a, crng);
      results.push_back(gradient_check(
          "add" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) { return add(t, in[0], in[1]); },
                     c),
          {a, b}));
      auto c2 = coeffs_for(a, crng);
      results.push_back(gradient_check(
          "mul" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) { return mul(t, in[0], in[1]); },
                     c2),
          {a, b}));
    }
    {
      D x = random_tensor<double>({2, 3, 4, 4}, rng);
      Rng crng(mix_seed(master_seed, 6000 + static_cast<uint64_t>(s)));
      auto c = coeffs_for(D::zeros({2, 3}), crng);
      results.push_back(gradient_check(
          "global_avg_pool" + tag,
          scalarized(
              [](Tape<double>* t, std::vector<D>& in) { return global_avg_pool(t, in[0]); },
              c),
          {x}));
      auto c2 = coeffs_for(D::zeros({2, 3, 2, 2}), crng);
      results.push_back(gradient_check(
          "avg_pool2d" + tag,
          scalarized(
              [](Tape<double>* t, std::vector<D>& in) { return avg_pool2d_2x2(t, in[0]); },
              c2),
          {x}));
    }
    {
      D a = random_tensor<double>({2, 3, 4, 4}, rng);
      D b = random_tensor<double>({2, 5, 4, 4}, rng);
      Rng crng(mix_seed(master_seed, 7000 + static_cast<uint64_t>(s)));
      auto c = coeffs_for(D::zeros({2, 8, 4, 4}), crng);
      results.push_back(gradient_check(
          "concat_channels" + tag,
          scalarized(
              [](Tape<double>* t, std::vector<D>& in) {
                return concat_channels(t, in[0], in[1]);
              },
              c),
          {a, b}));
    }
    {
      D x = random_tensor<double>({3, 6}, rng);
      D w = random_tensor<double>({4, 6}, rng, -0.5, 0.5);
      D b = random_tensor<double>({4}, rng, -0.5, 0.5);
      Rng crng(mix_seed(master_seed, 8000 + static_cast<uint64_t>(s)));
      auto c = coeffs_for(D::zeros({3, 4}), crng);
      results.push_back(gradient_check(
          "linear" + tag,
          scalarized([](Tape<double>* t, std::vector<D>& in) {
            return linear(t, in[0], in[1], &in[2]);
          },
                     c),
          {x, w, b}));
    }
    {
      D logits = random_tensor<double>({4, 5}, rng, -2.0, 2.0);
      std::vector<int> labels = {0, 2, 4, 1};
      results.push_back(gradient_check(
          "softmax_cross_entropy" + tag,
          [labels](Tape<double>* t, std::vector<D>& in) {
            return softmax_cross_entropy(t, in[0], labels);
          },
          {logits}));
    }
    {
      D x = random_tensor<double>({2, 3, 3, 3}, rng);
      results.push_back(gradient_check(
          "pick" + tag,
          [](Tape<double>* t, std::vector<D>& in) { return pick(t, in[0], 7); }, {x}));
    }
  }
  return results;
}

}  // namespace dualstream
