#pragma once

#include <cmath>
#include <vector>

#include "diveoff/autograd.hpp"
#include "diveoff/rng.hpp"
#include "diveoff/tensor.hpp"

namespace diveoff {

// Fully-connected network parameters: weights[l] is [in, out], biases[l] is
// [out]. Hidden layers use ReLU, the output layer is identity.
struct MlpParams {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  // He-uniform init on hidden layers. final_scale >= 0 overrides the output
  // layer scale (0 gives an exactly-zero head).
  static MlpParams init(const std::vector<int>& dims, RngStream& rng, double final_scale = -1.0) {
    require(dims.size() >= 2, "mlp: need at least input and output dims");
    MlpParams p;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
      const int in = dims[l], out = dims[l + 1];
      require(in > 0 && out > 0, "mlp: dims must be positive");
      const bool last = (l + 2 == dims.size());
      double limit = std::sqrt(6.0 / in);
      if (last && final_scale >= 0.0) limit = final_scale;
      Tensor w = Tensor::zeros({in, out});
      for (auto& v : w.data) v = rng.uniform(-limit, limit);
      p.weights.push_back(std::move(w));
      p.biases.push_back(Tensor::zeros({out}));
    }
    return p;
  }

  int in_dim() const { return weights.front().rows(); }
  int out_dim() const { return weights.back().cols(); }
  size_t layer_count() const { return weights.size(); }

  void collect(std::vector<Tensor*>& out) {
    for (size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
  }
  void collect(std::vector<const Tensor*>& out) const {
    for (size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }
};

namespace detail {
// y = x * W + b without a tape.
inline Tensor affine_raw(const Tensor& x, const Tensor& W, const Tensor& b) {
  require(x.cols() == W.rows(), "mlp_forward: input width mismatch");
  Tensor y = Tensor::zeros({x.rows(), W.cols()});
  auto ym = as_mat(y);
  ym.noalias() = as_mat(x) * as_mat(W);
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data.data(), b.size());
  return y;
}
}  // namespace detail

// ReLU on hidden layers, identity on the output layer.
inline Tensor mlp_forward(const MlpParams& p, const Tensor& x) {
  Tensor h = detail::affine_raw(x, p.weights[0], p.biases[0]);
  for (size_t l = 1; l < p.weights.size(); ++l) {
    for (auto& v : h.data) v = v > 0.0 ? v : 0.0;
    h = detail::affine_raw(h, p.weights[l], p.biases[l]);
  }
  return h;
}

// ReLU after every layer; used for trunks feeding linear heads.
inline Tensor mlp_hidden_forward(const MlpParams& p, const Tensor& x) {
  Tensor h = x;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    h = detail::affine_raw(h, p.weights[l], p.biases[l]);
    for (auto& v : h.data) v = v > 0.0 ? v : 0.0;
  }
  return h;
}

// Tape-registered view of an MlpParams.
struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

inline MlpVars register_mlp(Tape& tp, const MlpParams& p) {
  MlpVars v;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    v.weights.push_back(tp.leaf(p.weights[l]));
    v.biases.push_back(tp.leaf(p.biases[l]));
  }
  return v;
}

inline void collect_vars(const MlpVars& v, std::vector<Var>& out) {
  for (size_t l = 0; l < v.weights.size(); ++l) {
    out.push_back(v.weights[l]);
    out.push_back(v.biases[l]);
  }
}

inline Var mlp_forward(Tape& tp, const MlpVars& p, Var x, bool relu_last = false) {
  Var h = affine(tp, x, p.weights[0], p.biases[0]);
  for (size_t l = 1; l < p.weights.size(); ++l) {
    h = relu(tp, h);
    h = affine(tp, h, p.weights[l], p.biases[l]);
  }
  return relu_last ? relu(tp, h) : h;
}

inline Var mlp_hidden_forward(Tape& tp, const MlpVars& p, Var x) {
  Var h = x;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    h = affine(tp, h, p.weights[l], p.biases[l]);
    h = relu(tp, h);
  }
  return h;
}

}  // namespace diveoff
