#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "numprobe/rng.hpp"

namespace numprobe::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Exact (erf-based) GELU.
double gelu(double x);
double gelu_derivative(double x);

struct Dense {
  Matrix weight;  // out x in
  Vector bias;    // out
};

using Gradients = std::vector<Dense>;

// Feedforward network: affine layers with GELU between them and an identity
// output. Batches are column-major: one example per column.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;  // input to each affine layer
    std::vector<Matrix> pre;     // pre-activation of each hidden layer
  };

  Mlp() = default;
  // Fan-in uniform init: W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(std::vector<int> widths, Rng& rng);
  static Mlp zeros(std::vector<int> widths);

  const std::vector<int>& widths() const { return widths_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  std::vector<Dense>& layers() { return layers_; }
  const std::vector<Dense>& layers() const { return layers_; }

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Cache& cache) const;
  Vector forward(std::span<const double> x) const;

  // Reverse-mode pass for d(loss)/d(output) given the cache of a forward call.
  Gradients backward(const Cache& cache, const Matrix& d_output) const;
  Gradients zero_gradients() const;

  std::size_t parameter_count() const;
  // Layer order; per layer the weight row-major, then the bias.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> params);
  void round_to_float();
  std::uint64_t checksum() const;

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<int> widths_;
  std::vector<Dense> layers_;
};

Vector softmax(const Vector& logits);

// -log softmax(logits)[target], max-subtracted.
double cross_entropy(std::span<const double> logits, int target);

// Mean cross-entropy over columns. When d_logits is set it receives the
// gradient of the mean loss.
double cross_entropy_batch(const Matrix& logits, std::span<const int> targets,
                           Matrix* d_logits);

// max(tau (y - q), (1 - tau) (q - y)); InputError unless 0 < tau < 1.
double pinball(double tau, double q_hat, double y);
// d pinball / d q_hat; 0 at the kink.
double pinball_derivative(double tau, double q_hat, double y);

// Mean squared error of a 1 x B prediction row.
double mse_batch(const Matrix& predictions, std::span<const double> targets,
                 Matrix* d_predictions);

struct AdamConfig {
  double learning_rate = 1e-5;
  double weight_decay = 1.0;
  // false: L2 term added to the gradient before the moments (coupled).
  // true: AdamW-style decay applied to the parameters directly.
  bool decoupled_weight_decay = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const Mlp& net, AdamConfig config);

  void step(Mlp& net, const Gradients& grads);
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  double learning_rate() const { return config_.learning_rate; }
  long steps() const { return steps_; }

 private:
  AdamConfig config_;
  Gradients first_;
  Gradients second_;
  long steps_ = 0;
};

// Learning rate multiplied by gamma every step_size scheduler steps.
struct StepLr {
  double base_rate = 1e-5;
  int step_size = 100;
  double gamma = 0.5;

  double rate(int step) const;
};

class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Returns true when `loss` is a new best.
  bool observe(double loss);
  bool should_stop() const { return since_best_ >= patience_; }
  double best() const { return best_; }

 private:
  int patience_;
  int since_best_ = 0;
  double best_ = 0.0;
  bool seen_ = false;
};

struct TrainConfig {
  double learning_rate = 1e-5;
  double weight_decay = 1.0;
  bool decoupled_weight_decay = false;
  int scheduler_step_size = 100;
  double scheduler_gamma = 0.5;
  int batch_size = 1024;
  int max_epochs = 600;
  int patience = 200;
  std::uint64_t seed = 0;

  AdamConfig adam() const;
  void validate() const;
};

struct EpochRecord {
  std::string phase;
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

using History = std::vector<EpochRecord>;

// Callbacks for one training phase. train_batch runs forward, backward and
// the optimiser step for the given example indices and returns the mean
// batch loss.
struct TrainingLoop {
  std::function<double(std::span<const std::size_t>)> train_batch;
  std::function<double()> validate;
  std::function<void()> save_best;
  std::function<void()> restore_best;
  std::function<void(double)> set_learning_rate;
};

// Seeded shuffling, one scheduler step per epoch, early stopping on the
// validation loss, and restore of the best state at the end. NumericError on
// a non-finite loss.
History run_training(const std::string& phase, std::size_t n_train,
                     const TrainConfig& config, const TrainingLoop& loop);

void write_mlp(std::ostream& out, const Mlp& net);
Mlp read_mlp(std::istream& in);

}  // namespace numprobe::nn
