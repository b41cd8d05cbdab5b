#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dslam/common.hpp"

namespace dslam::nn {

/// One named tensor with its gradient accumulator and Adam moments. Biases are
/// stored as (out x 1) matrices so every parameter goes through the same path.
struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd m1, m2;
  bool frozen = false;

  void init(const std::string& n, int rows, int cols) {
    name = n;
    value = Eigen::MatrixXd::Zero(rows, cols);
    grad = Eigen::MatrixXd::Zero(rows, cols);
    m1 = Eigen::MatrixXd::Zero(rows, cols);
    m2 = Eigen::MatrixXd::Zero(rows, cols);
  }
};

/// Affine layer; rows of x are samples. forward caches its input for the
/// matching backward call.
struct Linear {
  Param W;  // out x in
  Param b;  // out x 1
  Eigen::MatrixXd x_cache;

  void init(const std::string& name, int in, int out, double w_std, Rng& rng);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& g_out);
};

/// Rectified-linear with cached mask.
struct Relu {
  Eigen::MatrixXd mask;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& g_out) const;
};

/// Stack of affine layers with ReLU between them; the last layer is linear
/// unless relu_last is set.
struct Mlp {
  std::vector<Linear> layers;
  std::vector<Relu> relus;
  bool relu_last = false;

  void init(const std::string& name, const std::vector<int>& dims, bool relu_after_last,
            Rng& rng);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& g_out);
  void collect(std::vector<Param*>& out);
};

/// Self-attention over a single token: the softmax over one key is identically
/// 1, so the block reduces to out_proj(v_proj(in_proj(x))) while Wq and Wk are
/// carried (and checkpointed) with structurally zero gradients.
struct SingleTokenAttention {
  int n_heads = 3;
  int d_head = 64;
  Linear in_proj;   // d_in -> n_heads*d_head
  Linear wq, wk, wv;  // model -> model
  Linear out_proj;  // model -> d_out

  void init(const std::string& name, int d_in, int heads, int head_dim, int d_out, Rng& rng);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
  Eigen::MatrixXd backward(const Eigen::MatrixXd& g_out);
  void collect(std::vector<Param*>& out);
};

/// Adam step over a parameter registry; t is the 1-based step count shared by
/// every tensor. Frozen tensors are skipped entirely.
void adam_step(std::vector<Param*>& params, double lr, int t, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

void zero_grads(std::vector<Param*>& params);

}  // namespace dslam::nn
