#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csguide/domain.hpp"
#include "csguide/random.hpp"

namespace csguide::ml {

enum class Optimizer { Adam, Sgd };

struct MlpParams {
  std::vector<int> layer_widths{256, 128, 64};
  double dropout_rate = 0.3;
  double l2_coefficient = 0.001;
  bool batch_norm = true;
  int epochs = 100;
  double learning_rate = 0.001;
  int batch_size = 32;
  Optimizer optimizer = Optimizer::Adam;
  bool regularize_output = false;  // L2 on the output kernel as well as the hidden ones
  std::uint64_t seed = 0;

  void validate() const {
    if (layer_widths.empty()) throw Error("mlp needs at least one hidden layer");
    for (int w : layer_widths)
      if (w <= 0) throw Error("mlp layer widths must be positive");
    if (dropout_rate < 0 || dropout_rate >= 1) throw Error("mlp dropout_rate must be in [0, 1)");
    if (l2_coefficient < 0) throw Error("mlp l2_coefficient must be >= 0");
    if (epochs < 1 || batch_size < 1) throw Error("mlp epochs and batch_size must be positive");
    if (!(learning_rate > 0)) throw Error("mlp learning_rate must be positive");
  }
};

class NonFiniteLoss : public Error {
public:
  NonFiniteLoss(int epoch, int batch)
      : Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

private:
  int epoch_, batch_;
};

/// Fully connected network: hidden layers Dense -> BatchNorm -> ReLU ->
/// Dropout, sigmoid outputs, mean binary cross-entropy plus an L2 penalty
/// on the hidden kernels (and the output kernel when regularize_output).
///
/// Parameter tensors, in order: per hidden layer {W, gamma, beta}, then
/// {W_out, b_out}. Without batch norm, beta acts as the dense bias and gamma
/// is unused.
template <typename Scalar>
class Mlp {
public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  static constexpr Scalar kBnEpsilon = Scalar(1e-5);
  static constexpr Scalar kBnMomentum = Scalar(0.1);

  Mlp() = default;

  Mlp(int inputs, std::vector<int> hidden, int outputs, bool batch_norm, double dropout, double l2,
      bool regularize_output, Rng& rng)
      : inputs_(inputs), outputs_(outputs), hidden_(std::move(hidden)), batch_norm_(batch_norm), dropout_(dropout),
        l2_(l2), regularize_output_(regularize_output) {
    int fan_in = inputs;
    for (int width : hidden_) {
      params_.push_back(uniform(fan_in, width, std::sqrt(6.0 / fan_in), rng));
      params_.push_back(Matrix::Ones(1, width));
      params_.push_back(Matrix::Zero(1, width));
      running_.push_back(Matrix::Zero(1, width));
      running_.push_back(Matrix::Ones(1, width));
      fan_in = width;
    }
    params_.push_back(uniform(fan_in, outputs, std::sqrt(3.0 / fan_in), rng));
    params_.push_back(Matrix::Zero(1, outputs));
  }

  int inputs() const noexcept { return inputs_; }
  int outputs() const noexcept { return outputs_; }
  const std::vector<int>& hidden() const noexcept { return hidden_; }
  bool batch_norm() const noexcept { return batch_norm_; }
  double dropout() const noexcept { return dropout_; }
  double l2() const noexcept { return l2_; }
  bool regularize_output() const noexcept { return regularize_output_; }

  std::vector<Matrix>& params() noexcept { return params_; }
  const std::vector<Matrix>& params() const noexcept { return params_; }
  /// Running mean and variance per hidden layer.
  std::vector<Matrix>& running() noexcept { return running_; }
  const std::vector<Matrix>& running() const noexcept { return running_; }

  struct Cache {
    std::vector<Matrix> input, xhat, active, drop;
    std::vector<Row> inv_std;
    Matrix logits;
  };

  /// Output logits. Training mode uses batch statistics (and updates the
  /// running ones when update_running is set); dropout applies only when
  /// dropout_rng is given.
  Matrix forward(const Matrix& x, bool training, Rng* dropout_rng = nullptr, Cache* cache = nullptr,
                 bool update_running = false) {
    Matrix a = x;
    const Eigen::Index n = x.rows();
    if (cache) *cache = Cache{};
    for (std::size_t l = 0; l < hidden_.size(); ++l) {
      const Matrix& w = params_[3 * l];
      const Matrix& gamma = params_[3 * l + 1];
      const Matrix& beta = params_[3 * l + 2];
      Matrix z = a * w;
      Matrix y;
      Matrix xhat;
      Row inv_std;
      if (batch_norm_) {
        Row mean, var;
        if (training) {
          mean = z.colwise().mean();
          var = (z.rowwise() - mean).array().square().colwise().mean().matrix();
          if (update_running) {
            const Scalar unbias = n > 1 ? Scalar(n) / Scalar(n - 1) : Scalar(1);
            running_[2 * l] = (1 - kBnMomentum) * running_[2 * l] + kBnMomentum * mean;
            running_[2 * l + 1] = (1 - kBnMomentum) * running_[2 * l + 1] + kBnMomentum * unbias * var;
          }
        } else {
          mean = running_[2 * l];
          var = running_[2 * l + 1];
        }
        inv_std = (var.array() + kBnEpsilon).rsqrt().matrix();
        xhat = ((z.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
        y = (xhat.array().rowwise() * gamma.row(0).array()).matrix();
        y.rowwise() += beta.row(0);
      } else {
        y = z;
        y.rowwise() += beta.row(0);
      }
      Matrix active = (y.array() > Scalar(0)).template cast<Scalar>().matrix();
      Matrix h = y.cwiseMax(Scalar(0));
      Matrix drop;
      if (dropout_rng && dropout_ > 0) {
        const Scalar keep = Scalar(1) / Scalar(1 - dropout_);
        drop.resize(h.rows(), h.cols());
        for (Eigen::Index j = 0; j < drop.cols(); ++j)
          for (Eigen::Index i = 0; i < drop.rows(); ++i) drop(i, j) = dropout_rng->uniform() < dropout_ ? 0 : keep;
        h = h.cwiseProduct(drop);
      }
      if (cache) {
        cache->input.push_back(std::move(a));
        cache->xhat.push_back(std::move(xhat));
        cache->active.push_back(std::move(active));
        cache->drop.push_back(std::move(drop));
        cache->inv_std.push_back(std::move(inv_std));
      }
      a = std::move(h);
    }
    Matrix logits = a * params_[3 * hidden_.size()];
    logits.rowwise() += params_[3 * hidden_.size() + 1].row(0);
    if (cache) {
      cache->input.push_back(std::move(a));
      cache->logits = logits;
    }
    return logits;
  }

  Matrix predict_proba(const Matrix& x) {
    return forward(x, false).unaryExpr([](Scalar z) { return sigmoid(z); });
  }

  static Scalar sigmoid(Scalar z) {
    return z >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-z)) : std::exp(z) / (Scalar(1) + std::exp(z));
  }

  Scalar penalty() const {
    Scalar s = 0;
    for (std::size_t l = 0; l < hidden_.size(); ++l) s += params_[3 * l].squaredNorm();
    if (regularize_output_) s += params_[3 * hidden_.size()].squaredNorm();
    return Scalar(l2_) * s;
  }

  /// Mean element-wise binary cross-entropy from logits, plus the penalty.
  Scalar loss(const Matrix& logits, const Matrix& y) const {
    const Scalar bce =
        (logits.array().max(Scalar(0)) - logits.array() * y.array() + (-logits.array().abs()).exp().log1p()).mean();
    return bce + penalty();
  }

  /// Loss of one batch and gradients for every parameter tensor.
  Scalar loss_and_gradients(const Matrix& x, const Matrix& y, std::vector<Matrix>& grads, Rng* dropout_rng = nullptr,
                            bool update_running = false) {
    Cache cache;
    const Matrix logits = forward(x, true, dropout_rng, &cache, update_running);
    const Scalar value = loss(logits, y);
    const Scalar n = Scalar(x.rows());
    grads.resize(params_.size());

    const std::size_t out = 3 * hidden_.size();
    Matrix probs = logits.unaryExpr([](Scalar z) { return sigmoid(z); });
    Matrix d = (probs - y) / (n * Scalar(outputs_));
    grads[out].noalias() = cache.input.back().transpose() * d;
    if (regularize_output_) grads[out] += Scalar(2 * l2_) * params_[out];
    grads[out + 1] = d.colwise().sum();
    Matrix da = d * params_[out].transpose();

    for (std::size_t l = hidden_.size(); l-- > 0;) {
      if (cache.drop[l].size() > 0) da = da.cwiseProduct(cache.drop[l]);
      Matrix dy = da.cwiseProduct(cache.active[l]);
      Matrix dz;
      if (batch_norm_) {
        const Matrix& xhat = cache.xhat[l];
        grads[3 * l + 1] = dy.cwiseProduct(xhat).colwise().sum();
        grads[3 * l + 2] = dy.colwise().sum();
        Matrix dxhat = (dy.array().rowwise() * params_[3 * l + 1].row(0).array()).matrix();
        const Row sum_dxhat = dxhat.colwise().sum();
        const Row sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
        Matrix inner = n * dxhat;
        inner.rowwise() -= sum_dxhat;
        inner -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
        dz = ((inner.array().rowwise() * cache.inv_std[l].array()) / n).matrix();
      } else {
        grads[3 * l + 1] = Matrix::Zero(1, params_[3 * l + 1].cols());
        grads[3 * l + 2] = dy.colwise().sum();
        dz = std::move(dy);
      }
      grads[3 * l].noalias() = cache.input[l].transpose() * dz;
      grads[3 * l] += Scalar(2 * l2_) * params_[3 * l];
      if (l > 0) da = dz * params_[3 * l].transpose();
    }
    return value;
  }

private:
  static Matrix uniform(int rows, int cols, double limit, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = Scalar(rng.uniform(-limit, limit));
    return m;
  }

  int inputs_ = 0;
  int outputs_ = 0;
  std::vector<int> hidden_;
  bool batch_norm_ = true;
  double dropout_ = 0.0;
  double l2_ = 0.0;
  bool regularize_output_ = false;
  std::vector<Matrix> params_;
  std::vector<Matrix> running_;
};

/// Mini-batch training with a shuffled order per epoch. Returns the mean
/// training loss of each epoch.
template <typename Scalar>
std::vector<double> fit_mlp(Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& x,
                            const typename Mlp<Scalar>::Matrix& y, const MlpParams& params) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  const Eigen::Index n = x.rows();
  Rng order_rng(derive_seed(params.seed, 1));
  Rng dropout_rng(derive_seed(params.seed, 2));

  std::vector<Matrix> grads, m, v;
  for (const auto& p : net.params()) {
    m.push_back(Matrix::Zero(p.rows(), p.cols()));
    v.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  const Scalar beta1 = Scalar(0.9), beta2 = Scalar(0.999), eps = Scalar(1e-8);
  const Scalar lr = Scalar(params.learning_rate);
  long step = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::vector<double> epoch_losses;
  Matrix xb, yb;

  for (int epoch = 1; epoch <= params.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    Eigen::Index seen = 0;
    int batch = 0;
    for (Eigen::Index start = 0; start < n; start += params.batch_size, ++batch) {
      const Eigen::Index size = std::min<Eigen::Index>(params.batch_size, n - start);
      if (net.batch_norm() && size < 2 && n >= 2) continue;
      xb.resize(size, x.cols());
      yb.resize(size, y.cols());
      for (Eigen::Index i = 0; i < size; ++i) {
        xb.row(i) = x.row(order[static_cast<std::size_t>(start + i)]);
        yb.row(i) = y.row(order[static_cast<std::size_t>(start + i)]);
      }
      const Scalar loss = net.loss_and_gradients(xb, yb, grads, &dropout_rng, true);
      if (!std::isfinite(static_cast<double>(loss))) throw NonFiniteLoss(epoch, batch);
      total += static_cast<double>(loss) * static_cast<double>(size);
      seen += size;

      ++step;
      auto& ps = net.params();
      for (std::size_t k = 0; k < ps.size(); ++k) {
        if (!net.batch_norm() && k % 3 == 1 && k < 3 * net.hidden().size()) continue;
        if (params.optimizer == Optimizer::Sgd) {
          ps[k] -= lr * grads[k];
          continue;
        }
        m[k] = beta1 * m[k] + (1 - beta1) * grads[k];
        v[k] = beta2 * v[k] + (1 - beta2) * grads[k].cwiseAbs2();
        const Scalar c1 = 1 - std::pow(beta1, Scalar(step));
        const Scalar c2 = 1 - std::pow(beta2, Scalar(step));
        ps[k].array() -= lr * (m[k].array() / c1) / ((v[k].array() / c2).sqrt() + eps);
      }
    }
    epoch_losses.push_back(seen > 0 ? total / static_cast<double>(seen) : 0.0);
  }
  return epoch_losses;
}

}  // namespace csguide::ml
