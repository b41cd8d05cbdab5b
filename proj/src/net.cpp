#include "dslam/net.hpp"

namespace dslam::nn {

void Linear::init(const std::string& name, int in, int out, double w_std, Rng& rng) {
  W.init(name + ".W", out, in);
  b.init(name + ".b", out, 1);
  for (int r = 0; r < out; r++)
    for (int c = 0; c < in; c++) W.value(r, c) = rng.gauss() * w_std;
}

Eigen::MatrixXd Linear::forward(const Eigen::MatrixXd& x) {
  x_cache = x;
  return (x * W.value.transpose()).rowwise() + b.value.col(0).transpose();
}

Eigen::MatrixXd Linear::backward(const Eigen::MatrixXd& g_out) {
  W.grad.noalias() += g_out.transpose() * x_cache;
  b.grad.col(0).noalias() += g_out.colwise().sum().transpose();
  return g_out * W.value;
}

Eigen::MatrixXd Relu::forward(const Eigen::MatrixXd& x) {
  mask = (x.array() > 0.0).cast<double>();
  return x.cwiseProduct(mask);
}

Eigen::MatrixXd Relu::backward(const Eigen::MatrixXd& g_out) const {
  return g_out.cwiseProduct(mask);
}

void Mlp::init(const std::string& name, const std::vector<int>& dims, bool relu_after_last,
               Rng& rng) {
  relu_last = relu_after_last;
  layers.resize(dims.size() - 1);
  relus.resize(dims.size() - 1);
  for (size_t i = 0; i + 1 < dims.size(); i++) {
    const bool has_relu = relu_after_last || i + 2 < dims.size();
    const double w_std = has_relu ? std::sqrt(2.0 / dims[i]) : std::sqrt(1.0 / dims[i]);
    layers[i].init(name + "." + std::to_string(i), dims[i], dims[i + 1], w_std, rng);
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd h = x;
  for (size_t i = 0; i < layers.size(); i++) {
    h = layers[i].forward(h);
    if (relu_last || i + 1 < layers.size()) h = relus[i].forward(h);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Eigen::MatrixXd& g_out) {
  Eigen::MatrixXd g = g_out;
  for (size_t ri = layers.size(); ri-- > 0;) {
    if (relu_last || ri + 1 < layers.size()) g = relus[ri].backward(g);
    g = layers[ri].backward(g);
  }
  return g;
}

void Mlp::collect(std::vector<Param*>& out) {
  for (Linear& l : layers) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
}

void SingleTokenAttention::init(const std::string& name, int d_in, int heads, int head_dim,
                                int d_out, Rng& rng) {
  n_heads = heads;
  d_head = head_dim;
  const int model = heads * head_dim;
  in_proj.init(name + ".in", d_in, model, std::sqrt(1.0 / d_in), rng);
  wq.init(name + ".q", model, model, std::sqrt(1.0 / model), rng);
  wk.init(name + ".k", model, model, std::sqrt(1.0 / model), rng);
  wv.init(name + ".v", model, model, std::sqrt(1.0 / model), rng);
  out_proj.init(name + ".out", model, d_out, std::sqrt(1.0 / model), rng);
}

Eigen::MatrixXd SingleTokenAttention::forward(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd t = in_proj.forward(x);
  // With one token per sample the softmax over keys is 1 for every head, so
  // the attended value is exactly the value projection. q and k are computed
  // for parity with the stated block but cannot influence the output.
  wq.forward(t);
  wk.forward(t);
  const Eigen::MatrixXd v = wv.forward(t);
  return out_proj.forward(v);
}

Eigen::MatrixXd SingleTokenAttention::backward(const Eigen::MatrixXd& g_out) {
  const Eigen::MatrixXd g_v = out_proj.backward(g_out);
  const Eigen::MatrixXd g_t = wv.backward(g_v);
  return in_proj.backward(g_t);
}

void SingleTokenAttention::collect(std::vector<Param*>& out) {
  out.push_back(&in_proj.W);
  out.push_back(&in_proj.b);
  out.push_back(&wq.W);
  out.push_back(&wq.b);
  out.push_back(&wk.W);
  out.push_back(&wk.b);
  out.push_back(&wv.W);
  out.push_back(&wv.b);
  out.push_back(&out_proj.W);
  out.push_back(&out_proj.b);
}

void adam_step(std::vector<Param*>& params, double lr, int t, double beta1, double beta2,
               double eps) {
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (Param* p : params) {
    if (p->frozen) continue;
    p->m1 = beta1 * p->m1 + (1.0 - beta1) * p->grad;
    p->m2 = beta2 * p->m2 + (1.0 - beta2) * p->grad.cwiseProduct(p->grad);
    const Eigen::MatrixXd m_hat = p->m1 / bc1;
    const Eigen::MatrixXd v_hat = p->m2 / bc2;
    p->value.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps);
  }
}

void zero_grads(std::vector<Param*>& params) {
  for (Param* p : params) p->grad.setZero();
}

}  // namespace dslam::nn
