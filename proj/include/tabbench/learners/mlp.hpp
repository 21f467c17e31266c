#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/core/rng.hpp"
#include "tabbench/learners/losses.hpp"
#include "tabbench/learners/types.hpp"

namespace tabbench {

struct MlpConfig {
  std::size_t epochs = 200;
  std::size_t patience = 5;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::size_t n_layers = 2;
  std::size_t layer_size = 128;
  double dropout = 0.25;
  std::size_t cat_embedding_size = 8;

  void validate() const {
    auto fail = [](const std::string& what) { throw ContractError("mlp config: " + what); };
    if (epochs < 1) fail("epochs must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (n_layers < 1) fail("n_layers must be >= 1");
    if (layer_size < 1) fail("layer_size must be >= 1");
    if (!(dropout >= 0.0 && dropout <= 0.5)) fail("dropout must be in [0, 0.5]");
    if (cat_embedding_size < 1) fail("cat_embedding_size must be >= 1");
  }

  static MlpConfig from_json(const nlohmann::json& j) {
    MlpConfig c;
    auto count = [](const nlohmann::json& v) { return static_cast<std::size_t>(std::llround(v.get<double>())); };
    for (const auto& [key, v] : j.items()) {
      if (key == "epochs") c.epochs = count(v);
      else if (key == "patience") c.patience = count(v);
      else if (key == "batch_size") c.batch_size = count(v);
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "n_layers") c.n_layers = count(v);
      else if (key == "layer_size") c.layer_size = count(v);
      else if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "cat_embedding_size") c.cat_embedding_size = count(v);
      else throw ContractError("mlp config: unknown hyperparameter '" + key + "'");
    }
    c.validate();
    return c;
  }
};

/// Fully connected network (linear -> ReLU -> dropout blocks) over numeric
/// inputs concatenated with per-column categorical embeddings. All
/// parameters live in one flat vector.
class MlpNetwork {
 public:
  using Mat = Eigen::MatrixXd;
  using MapMat = Eigen::Map<Mat>;
  using ConstMapMat = Eigen::Map<const Mat>;

  MlpNetwork() = default;

  MlpNetwork(std::size_t n_numeric, std::vector<std::size_t> cardinalities, std::size_t embedding,
             std::size_t n_layers, std::size_t width, std::size_t n_outputs)
      : n_numeric_(n_numeric),
        cardinalities_(std::move(cardinalities)),
        embedding_(embedding),
        n_layers_(n_layers),
        width_(width),
        n_outputs_(n_outputs) {
    std::size_t offset = 0;
    for (auto card : cardinalities_) {
      embedding_offset_.push_back(offset);
      offset += card * embedding_;
    }
    std::size_t in = input_width();
    for (std::size_t l = 0; l <= n_layers_; ++l) {
      const std::size_t out = l == n_layers_ ? n_outputs_ : width_;
      Layer layer{in, out, offset, offset + in * out};
      offset += in * out + out;
      layers_.push_back(layer);
      in = out;
    }
    params_.assign(offset, 0.0);
  }

  std::size_t input_width() const { return n_numeric_ + cardinalities_.size() * embedding_; }
  std::size_t n_outputs() const noexcept { return n_outputs_; }
  std::size_t n_numeric() const noexcept { return n_numeric_; }
  const std::vector<std::size_t>& cardinalities() const noexcept { return cardinalities_; }
  std::vector<double>& parameters() noexcept { return params_; }
  const std::vector<double>& parameters() const noexcept { return params_; }

  /// He-style uniform fan-in initialisation; embeddings uniform with unit
  /// variance; biases zero.
  void initialize(SplitMix64& rng) {
    std::fill(params_.begin(), params_.end(), 0.0);
    const double emb_limit = std::sqrt(3.0);
    for (std::size_t j = 0; j < cardinalities_.size(); ++j) {
      for (std::size_t i = 0; i < cardinalities_[j] * embedding_; ++i) {
        params_[embedding_offset_[j] + i] = rng.uniform(-emb_limit, emb_limit);
      }
    }
    for (const auto& layer : layers_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.in));
      for (std::size_t i = 0; i < layer.in * layer.out; ++i) {
        params_[layer.weight + i] = rng.uniform(-limit, limit);
      }
    }
  }

  /// Raw outputs (logits or regression values), dropout disabled.
  Mat forward(const Mat& numeric, std::span<const int> codes) const {
    Cache cache;
    return run_forward(numeric, codes, 0.0, nullptr, cache);
  }

  /// Mean loss of a batch and its gradient with respect to parameters().
  /// `dropout` > 0 requires `rng`.
  double loss_and_gradient(TaskKind task, const Mat& numeric, std::span<const int> codes,
                           std::span<const double> y, double dropout, SplitMix64* rng,
                           std::vector<double>& grad) const {
    Cache cache;
    const Mat out = run_forward(numeric, codes, dropout, rng, cache);
    const auto batch = static_cast<double>(out.rows());
    Mat d_out(out.rows(), out.cols());
    double loss = 0.0;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double target = y[static_cast<std::size_t>(r)];
      if (task == TaskKind::binary) {
        const double p = loss::sigmoid(out(r, 0));
        const double z = out(r, 0);
        // log(1 + e^z) - y z, computed stably
        loss += std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))) - target * z;
        d_out(r, 0) = (p - target) / batch;
      } else if (task == TaskKind::multiclass) {
        const double mx = out.row(r).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index k = 0; k < out.cols(); ++k) sum += std::exp(out(r, k) - mx);
        const auto cls = static_cast<Eigen::Index>(target);
        loss += std::log(sum) + mx - out(r, cls);
        for (Eigen::Index k = 0; k < out.cols(); ++k) {
          d_out(r, k) = (std::exp(out(r, k) - mx) / sum - (k == cls ? 1.0 : 0.0)) / batch;
        }
      } else {
        const double diff = out(r, 0) - target;
        loss += diff * diff;
        d_out(r, 0) = 2.0 * diff / batch;
      }
    }
    grad.assign(params_.size(), 0.0);
    backward(cache, d_out, codes, grad);
    return loss / batch;
  }

 private:
  struct Layer {
    std::size_t in, out;
    std::size_t weight;  // in x out, column-major
    std::size_t bias;
  };

  struct Cache {
    std::vector<Mat> activations;  // A_0 .. A_L (post dropout)
    std::vector<Mat> pre;          // Z_1 .. Z_L
    std::vector<Mat> masks;        // scaled dropout masks (empty when off)
  };

  ConstMapMat weight(const Layer& l) const {
    return ConstMapMat(params_.data() + l.weight, static_cast<Eigen::Index>(l.in), static_cast<Eigen::Index>(l.out));
  }
  Eigen::Map<const Eigen::RowVectorXd> bias(const Layer& l) const {
    return Eigen::Map<const Eigen::RowVectorXd>(params_.data() + l.bias, static_cast<Eigen::Index>(l.out));
  }

  Mat run_forward(const Mat& numeric, std::span<const int> codes, double dropout, SplitMix64* rng,
                  Cache& cache) const {
    const Eigen::Index b = numeric.rows();
    const std::size_t n_cat = cardinalities_.size();
    Mat a0(b, static_cast<Eigen::Index>(input_width()));
    if (n_numeric_ > 0) a0.leftCols(static_cast<Eigen::Index>(n_numeric_)) = numeric;
    for (std::size_t j = 0; j < n_cat; ++j) {
      const auto col = static_cast<Eigen::Index>(n_numeric_ + j * embedding_);
      for (Eigen::Index r = 0; r < b; ++r) {
        const auto code = static_cast<std::size_t>(codes[static_cast<std::size_t>(r) * n_cat + j]);
        const double* e = params_.data() + embedding_offset_[j] + code * embedding_;
        for (std::size_t t = 0; t < embedding_; ++t) a0(r, col + static_cast<Eigen::Index>(t)) = e[t];
      }
    }
    cache.activations.push_back(std::move(a0));
    for (std::size_t l = 0; l < n_layers_; ++l) {
      const Layer& layer = layers_[l];
      Mat z = cache.activations.back() * weight(layer);
      z.rowwise() += bias(layer);
      Mat a = z.cwiseMax(0.0);
      if (dropout > 0.0) {
        Mat mask(a.rows(), a.cols());
        const double keep = 1.0 - dropout;
        for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
        a = a.cwiseProduct(mask);
        cache.masks.push_back(std::move(mask));
      }
      cache.pre.push_back(std::move(z));
      cache.activations.push_back(std::move(a));
    }
    const Layer& head = layers_.back();
    Mat out = cache.activations.back() * weight(head);
    out.rowwise() += bias(head);
    return out;
  }

  void backward(const Cache& cache, const Mat& d_out, std::span<const int> codes, std::vector<double>& grad) const {
    auto grad_weight = [&](const Layer& l) {
      return MapMat(grad.data() + l.weight, static_cast<Eigen::Index>(l.in), static_cast<Eigen::Index>(l.out));
    };
    auto grad_bias = [&](const Layer& l) {
      return Eigen::Map<Eigen::RowVectorXd>(grad.data() + l.bias, static_cast<Eigen::Index>(l.out));
    };
    const Layer& head = layers_.back();
    grad_weight(head) = cache.activations.back().transpose() * d_out;
    grad_bias(head) = d_out.colwise().sum();
    Mat d_a = d_out * weight(head).transpose();
    for (std::size_t l = n_layers_; l-- > 0;) {
      const Layer& layer = layers_[l];
      Mat d_z = cache.masks.empty() ? d_a : Mat(d_a.cwiseProduct(cache.masks[l]));
      d_z = d_z.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
      grad_weight(layer) = cache.activations[l].transpose() * d_z;
      grad_bias(layer) = d_z.colwise().sum();
      d_a = d_z * weight(layer).transpose();
    }
    const std::size_t n_cat = cardinalities_.size();
    for (std::size_t j = 0; j < n_cat; ++j) {
      const auto col = static_cast<Eigen::Index>(n_numeric_ + j * embedding_);
      for (Eigen::Index r = 0; r < d_a.rows(); ++r) {
        const auto code = static_cast<std::size_t>(codes[static_cast<std::size_t>(r) * n_cat + j]);
        double* g = grad.data() + embedding_offset_[j] + code * embedding_;
        for (std::size_t t = 0; t < embedding_; ++t) g[t] += d_a(r, col + static_cast<Eigen::Index>(t));
      }
    }
  }

  std::size_t n_numeric_ = 0;
  std::vector<std::size_t> cardinalities_;
  std::size_t embedding_ = 0;
  std::size_t n_layers_ = 0;
  std::size_t width_ = 0;
  std::size_t n_outputs_ = 1;
  std::vector<std::size_t> embedding_offset_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

/// Decoupled weight decay Adam over a flat parameter vector.
class AdamW {
 public:
  AdamW(std::size_t n, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] -= lr_ * wd_ * params[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

namespace mlp_detail {

inline Eigen::MatrixXd gather_numeric(const Matrix& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(x.cols()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = x(rows[i], c);
  return out;
}

inline std::vector<int> gather_codes(const ModelInputs& in, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size() * in.n_cat);
  for (auto r : rows) {
    const auto row = in.code_row(r);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

inline Eigen::MatrixXd to_eigen(const Matrix& x) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x(r, c);
  return out;
}

inline Matrix from_eigen(const Eigen::MatrixXd& m) {
  Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  return out;
}

}  // namespace mlp_detail

class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(MlpNetwork net, TaskKind task, std::size_t n_classes, FitInfo info)
      : net_(std::move(net)), task_(task), n_classes_(n_classes), info_(std::move(info)) {}

  /// Raw network outputs on every row of `inputs`.
  Matrix raw_scores(const ModelInputs& inputs) const {
    check_schema(inputs);
    return mlp_detail::from_eigen(net_.forward(mlp_detail::to_eigen(inputs.numeric), inputs.codes));
  }

  PredictionMatrix predict(const ModelInputs& inputs) const {
    return loss::to_predictions(task_, raw_scores(inputs));
  }

  const FitInfo& info() const noexcept { return info_; }
  const MlpNetwork& network() const noexcept { return net_; }

 private:
  void check_schema(const ModelInputs& in) const {
    if (in.numeric.cols() != net_.n_numeric() || in.cardinalities != net_.cardinalities()) {
      throw ContractError("mlp predict: input schema differs from the training schema (numeric columns " +
                          std::to_string(in.numeric.cols()) + " vs " + std::to_string(net_.n_numeric()) + ")");
    }
  }

  MlpNetwork net_;
  TaskKind task_ = TaskKind::regression;
  std::size_t n_classes_ = 1;
  FitInfo info_;
};

/// Trains the network with AdamW on seeded shuffled mini-batches. With a
/// validation set, stops after `patience` epochs without improvement and
/// restores the best epoch's parameters.
inline MlpModel mlp_fit(const ModelInputs& train, std::span<const double> y_train, const ModelInputs* val,
                        std::span<const double> y_val, TaskKind task, std::size_t n_classes,
                        const MlpConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t n = train.rows();
  if (n < 1 || y_train.size() != n) throw ContractError("mlp: training rows and target differ");
  for (double v : train.numeric.data()) {
    if (!std::isfinite(v)) throw FitError("mlp: non-finite input feature");
  }
  const std::size_t n_out = task == TaskKind::multiclass ? n_classes : 1;
  MlpNetwork net(train.numeric.cols(), train.cardinalities, config.cat_embedding_size, config.n_layers,
                 config.layer_size, n_out);
  SplitMix64 rng(seed);
  net.initialize(rng);
  AdamW opt(net.parameters().size(), config.learning_rate, config.weight_decay);

  const bool has_val = val != nullptr && val->rows() > 0;
  Eigen::MatrixXd x_train_full = mlp_detail::to_eigen(train.numeric);
  Eigen::MatrixXd x_val_full = has_val ? mlp_detail::to_eigen(val->numeric) : Eigen::MatrixXd();

  auto eval_loss = [&](const Eigen::MatrixXd& x, std::span<const int> codes, std::span<const double> y) {
    return loss::from_raw(task, y, mlp_detail::from_eigen(net.forward(x, codes)));
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad, y_batch, best_params = net.parameters();
  double best_val = std::numeric_limits<double>::infinity();
  FitInfo info;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const auto batch = std::span<const std::size_t>(order).subspan(start, std::min(config.batch_size, n - start));
      const auto xb = mlp_detail::gather_numeric(train.numeric, batch);
      const auto cb = mlp_detail::gather_codes(train, batch);
      y_batch.resize(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) y_batch[i] = y_train[batch[i]];
      const double l = net.loss_and_gradient(task, xb, cb, y_batch, config.dropout, &rng, grad);
      if (!std::isfinite(l)) throw FitError("mlp: non-finite training loss at epoch " + std::to_string(epoch));
      opt.step(net.parameters(), grad);
    }
    const double train_loss = eval_loss(x_train_full, train.codes, y_train);
    if (!std::isfinite(train_loss)) throw FitError("mlp: non-finite training loss at epoch " + std::to_string(epoch));
    info.train_loss_history.push_back(train_loss);
    if (has_val) {
      const double v = eval_loss(x_val_full, val->codes, y_val);
      if (!std::isfinite(v)) throw FitError("mlp: non-finite validation loss at epoch " + std::to_string(epoch));
      info.val_loss_history.push_back(v);
      if (v < best_val) {
        best_val = v;
        info.best_iteration = epoch;
        best_params = net.parameters();
      } else if (epoch - info.best_iteration >= config.patience) {
        break;
      }
    } else {
      info.best_iteration = epoch;
      best_params = net.parameters();
    }
  }
  net.parameters() = best_params;
  info.train_loss = info.train_loss_history[info.best_iteration - 1];
  info.val_loss = has_val ? best_val : std::nan("");
  return MlpModel(std::move(net), task, n_classes, std::move(info));
}

}  // namespace tabbench
