#include "numprobe/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "numprobe/error.hpp"

namespace numprobe::nn {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Mlp::Mlp(std::vector<int> widths, Rng& rng) : Mlp(zeros(std::move(widths))) {
  for (auto& layer : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
      layer.weight.data()[i] = rng.uniform(-bound, bound);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      layer.bias[i] = rng.uniform(-bound, bound);
  }
}

Mlp Mlp::zeros(std::vector<int> widths) {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least two widths");
  for (int w : widths)
    if (w < 1) throw ConfigError("MLP widths must be positive");
  Mlp net;
  net.widths_ = std::move(widths);
  for (std::size_t l = 0; l + 1 < net.widths_.size(); ++l)
    net.layers_.push_back({Matrix::Zero(net.widths_[l + 1], net.widths_[l]),
                           Vector::Zero(net.widths_[l + 1])});
  return net;
}

void Mlp::check_input(Eigen::Index rows) const {
  if (rows != input_dim())
    throw InputError("input dimension " + std::to_string(rows) +
                     " does not match network input " +
                     std::to_string(input_dim()));
}

Matrix Mlp::forward(const Matrix& x) const {
  check_input(x.rows());
  Matrix a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.unaryExpr([](double v) { return gelu(v); });
    a = std::move(z);
  }
  return a;
}

Matrix Mlp::forward(const Matrix& x, Cache& cache) const {
  check_input(x.rows());
  cache.inputs.clear();
  cache.pre.clear();
  Matrix a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    cache.inputs.push_back(std::move(a));
    if (l + 1 < layers_.size()) {
      a = z.unaryExpr([](double v) { return gelu(v); });
      cache.pre.push_back(std::move(z));
    } else {
      a = std::move(z);
    }
  }
  return a;
}

Vector Mlp::forward(std::span<const double> x) const {
  const Eigen::Map<const Matrix> column(x.data(), static_cast<Eigen::Index>(x.size()), 1);
  return forward(Matrix(column)).col(0);
}

Gradients Mlp::backward(const Cache& cache, const Matrix& d_output) const {
  Gradients grads(layers_.size());
  Matrix delta = d_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    grads[l].weight = delta * cache.inputs[l].transpose();
    grads[l].bias = delta.rowwise().sum();
    if (l > 0) {
      Matrix upstream = layers_[l].weight.transpose() * delta;
      delta = upstream.cwiseProduct(
          cache.pre[l - 1].unaryExpr([](double v) { return gelu_derivative(v); }));
    }
  }
  return grads;
}

Gradients Mlp::zero_gradients() const {
  Gradients g(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    g[l].weight = Matrix::Zero(layers_[l].weight.rows(), layers_[l].weight.cols());
    g[l].bias = Vector::Zero(layers_[l].bias.size());
  }
  return g;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_)
    n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        out.push_back(layer.weight(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.push_back(layer.bias[r]);
  }
  return out;
}

void Mlp::set_parameters(std::span<const double> params) {
  if (params.size() != parameter_count())
    throw InputError("parameter vector has wrong length");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        layer.weight(r, c) = params[k++];
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = params[k++];
  }
}

void Mlp::round_to_float() {
  auto to_f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (auto& layer : layers_) {
    layer.weight = layer.weight.unaryExpr(to_f32);
    layer.bias = layer.bias.unaryExpr(to_f32);
  }
}

std::uint64_t Mlp::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : parameters()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

Vector softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp();
  return e / e.sum();
}

double cross_entropy(std::span<const double> logits, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size())
    throw InputError("target class " + std::to_string(target) +
                     " out of range for " + std::to_string(logits.size()) +
                     " logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  return -(logits[static_cast<std::size_t>(target)] - mx - std::log(sum));
}

double cross_entropy_batch(const Matrix& logits, std::span<const int> targets,
                           Matrix* d_logits) {
  const Eigen::Index batch = logits.cols();
  if (static_cast<std::size_t>(batch) != targets.size())
    throw InputError("logits/targets batch mismatch");
  if (d_logits) d_logits->resize(logits.rows(), batch);
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logits.rows())
      throw InputError("target class " + std::to_string(t) + " out of range");
    const auto col = logits.col(i);
    const double mx = col.maxCoeff();
    const Vector e = (col.array() - mx).exp();
    const double sum = e.sum();
    total += -(col[t] - mx - std::log(sum));
    if (d_logits) {
      d_logits->col(i) = e / (sum * static_cast<double>(batch));
      (*d_logits)(t, i) -= 1.0 / static_cast<double>(batch);
    }
  }
  return total / static_cast<double>(batch);
}

double pinball(double tau, double q_hat, double y) {
  if (!(tau > 0.0 && tau < 1.0))
    throw InputError("pinball level must lie in (0, 1)");
  return std::max(tau * (y - q_hat), (1.0 - tau) * (q_hat - y));
}

double pinball_derivative(double tau, double q_hat, double y) {
  if (y > q_hat) return -tau;
  if (y < q_hat) return 1.0 - tau;
  return 0.0;
}

double mse_batch(const Matrix& predictions, std::span<const double> targets,
                 Matrix* d_predictions) {
  const Eigen::Index batch = predictions.cols();
  if (predictions.rows() != 1 || static_cast<std::size_t>(batch) != targets.size())
    throw InputError("prediction/target shape mismatch");
  if (d_predictions) d_predictions->resize(1, batch);
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double diff = predictions(0, i) - targets[static_cast<std::size_t>(i)];
    total += diff * diff;
    if (d_predictions) (*d_predictions)(0, i) = 2.0 * diff / static_cast<double>(batch);
  }
  return total / static_cast<double>(batch);
}

Adam::Adam(const Mlp& net, AdamConfig config)
    : config_(config), first_(net.zero_gradients()), second_(net.zero_gradients()) {}

void Adam::step(Mlp& net, const Gradients& grads) {
  auto& layers = net.layers();
  if (grads.size() != layers.size()) throw InputError("gradient/parameter shape mismatch");
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  const double wd = config_.weight_decay;

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    if (config_.decoupled_weight_decay) {
      if (wd != 0.0) param *= (1.0 - lr * wd);
      m = config_.beta1 * m + (1.0 - config_.beta1) * grad;
      v = config_.beta2 * v + (1.0 - config_.beta2) * grad.cwiseAbs2();
    } else {
      const auto g = (grad + wd * param).eval();
      m = config_.beta1 * m + (1.0 - config_.beta1) * g;
      v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseAbs2();
    }
    param.array() -= lr * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + config_.epsilon);
  };

  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads[l].weight.rows() != layers[l].weight.rows() ||
        grads[l].weight.cols() != layers[l].weight.cols())
      throw InputError("gradient/parameter shape mismatch");
    update(layers[l].weight, grads[l].weight, first_[l].weight, second_[l].weight);
    update(layers[l].bias, grads[l].bias, first_[l].bias, second_[l].bias);
  }
}

double StepLr::rate(int step) const {
  return base_rate * std::pow(gamma, static_cast<double>(step / step_size));
}

bool EarlyStopping::observe(double loss) {
  if (!seen_ || loss < best_) {
    seen_ = true;
    best_ = loss;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

AdamConfig TrainConfig::adam() const {
  AdamConfig a;
  a.learning_rate = learning_rate;
  a.weight_decay = weight_decay;
  a.decoupled_weight_decay = decoupled_weight_decay;
  return a;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (scheduler_step_size < 1) throw ConfigError("scheduler_step_size must be >= 1");
  if (!(scheduler_gamma > 0.0)) throw ConfigError("scheduler_gamma must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

History run_training(const std::string& phase, std::size_t n_train,
                     const TrainConfig& config, const TrainingLoop& loop) {
  config.validate();
  if (n_train == 0) throw InputError("empty training set");
  std::uint64_t tag = 0;
  for (char c : phase) tag = tag * 131 + static_cast<unsigned char>(c);
  Rng rng(derive_seed(config.seed, {0x747261696eULL, tag}));

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const StepLr schedule{config.learning_rate, config.scheduler_step_size,
                        config.scheduler_gamma};
  EarlyStopping stopper(config.patience);
  History history;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = schedule.rate(epoch);
    loop.set_learning_rate(lr);
    rng.shuffle(order);
    double total = 0.0;
    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t len = std::min(batch, n_train - start);
      const double loss =
          loop.train_batch(std::span<const std::size_t>(order.data() + start, len));
      total += loss * static_cast<double>(len);
    }
    const double train_loss = total / static_cast<double>(n_train);
    const double val_loss = loop.validate();
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw NumericError("non-finite loss in phase '" + phase + "' at epoch " +
                         std::to_string(epoch) + " (train " +
                         std::to_string(train_loss) + ", val " +
                         std::to_string(val_loss) + ", lr " +
                         std::to_string(lr) + ")");
    if (stopper.observe(val_loss)) loop.save_best();
    history.push_back({phase, epoch, train_loss, val_loss, lr});
    if (stopper.should_stop()) break;
  }
  loop.restore_best();
  return history;
}

}  // namespace numprobe::nn
