#include "luskin/models.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "luskin/error.hpp"

namespace luskin {
namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> flat(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

bool sigmoid_output(ModelKind kind) { return kind != ModelKind::linear_svm; }

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::mlp: return "mlp";
    case ModelKind::linear_svm: return "linear_svm";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "logistic" || text == "lr") return ModelKind::logistic;
  if (text == "mlp") return ModelKind::mlp;
  if (text == "linear_svm" || text == "svm") return ModelKind::linear_svm;
  throw InvalidInput("unknown model type '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidInput("learning rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must lie in [0, 1)");
  if (iterations < 1) throw InvalidInput("iterations must be at least 1");
  if (!(l2 >= 0.0)) throw InvalidInput("regularization weight must be non-negative");
  for (auto h : hidden_layers) {
    if (h == 0) throw InvalidInput("hidden layers need at least one unit");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"momentum", momentum}, {"iterations", iterations},
          {"hidden_layers", hidden_layers}, {"l2", l2},             {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  c.learning_rate = doc.at("learning_rate").get<double>();
  c.momentum = doc.at("momentum").get<double>();
  c.iterations = doc.at("iterations").get<std::size_t>();
  c.hidden_layers = doc.at("hidden_layers").get<std::vector<std::size_t>>();
  c.l2 = doc.at("l2").get<double>();
  c.seed = doc.at("seed").get<std::uint64_t>();
  return c;
}

// ---------------------------------------------------------------- RiskScorer

RiskScorer::RiskScorer(ModelKind kind, std::vector<DenseLayer> layers, TrainConfig config)
    : kind_(kind), layers_(std::move(layers)), config_(std::move(config)) {
  if (layers_.empty()) throw InvalidInput("model needs at least one layer");
  if (kind_ != ModelKind::mlp && layers_.size() != 1) {
    throw InvalidInput("linear models have exactly one layer");
  }
  if (kind_ == ModelKind::mlp && layers_.size() < 2) {
    throw InvalidInput("mlp needs at least one hidden layer");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.weights.rows()) throw InvalidInput("layer bias size mismatch");
    if (i > 0 && l.weights.cols() != layers_[i - 1].weights.rows()) {
      throw InvalidInput("layer shapes do not chain");
    }
  }
  if (layers_.back().weights.rows() != 1) throw InvalidInput("output layer must have one unit");
}

RiskScorer RiskScorer::linear(ModelKind kind, Eigen::VectorXd weights, double bias) {
  DenseLayer l;
  l.weights = weights.transpose();
  l.bias = Eigen::VectorXd::Constant(1, bias);
  return RiskScorer(kind, {std::move(l)});
}

RiskScorer RiskScorer::initial(ModelKind kind, std::size_t input_dimension, const TrainConfig& config) {
  const auto d = static_cast<Eigen::Index>(input_dimension);
  if (kind != ModelKind::mlp) {
    RiskScorer m = linear(kind, Eigen::VectorXd::Zero(d), 0.0);
    m.config_ = config;
    return m;
  }
  if (config.hidden_layers.empty()) throw InvalidInput("mlp needs at least one hidden layer");
  std::mt19937_64 rng(config.seed);
  std::vector<DenseLayer> layers;
  Eigen::Index fan_in = d;
  auto make = [&](Eigen::Index out) {
    DenseLayer l;
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + out));
    l.weights.resize(out, fan_in);
    for (Eigen::Index c = 0; c < fan_in; ++c) {
      for (Eigen::Index r = 0; r < out; ++r) l.weights(r, c) = (2.0 * uniform01(rng) - 1.0) * a;
    }
    l.bias = Eigen::VectorXd::Zero(out);
    fan_in = out;
    return l;
  };
  for (auto h : config.hidden_layers) layers.push_back(make(static_cast<Eigen::Index>(h)));
  layers.push_back(make(1));
  return RiskScorer(kind, std::move(layers), config);
}

std::size_t RiskScorer::input_dimension() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weights.cols());
}

Eigen::VectorXd RiskScorer::logits(const Eigen::MatrixXd& features) const {
  if (static_cast<std::size_t>(features.cols()) != input_dimension()) {
    throw InvalidInput("feature dimension " + std::to_string(features.cols()) +
                       " does not match model dimension " + std::to_string(input_dimension()));
  }
  Eigen::MatrixXd a = features;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    const auto& l = layers_[i];
    a = ((a * l.weights.transpose()).rowwise() + l.bias.transpose()).array().tanh().matrix();
  }
  const auto& out = layers_.back();
  return (a * out.weights.transpose()).col(0).array() + out.bias(0);
}

double RiskScorer::score(std::span<const double> row) const {
  Eigen::Map<const Eigen::RowVectorXd> x(row.data(), static_cast<Eigen::Index>(row.size()));
  return score_all(Eigen::MatrixXd(x))(0);
}

Eigen::VectorXd RiskScorer::score_all(const Eigen::MatrixXd& features) const {
  Eigen::VectorXd z = logits(features);
  if (sigmoid_output(kind_)) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = sigmoid(z(i));
  }
  return z;
}

int RiskScorer::classify(std::span<const double> row, double threshold) const {
  return score(row) >= threshold ? 1 : 0;
}

std::size_t RiskScorer::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

Eigen::VectorXd RiskScorer::parameters() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  for (const auto& l : layers_) {
    out.segment(at, l.weights.size()) = Eigen::Map<const Eigen::VectorXd>(l.weights.data(), l.weights.size());
    at += l.weights.size();
    out.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return out;
}

void RiskScorer::set_parameters(const Eigen::VectorXd& flat_params) {
  if (static_cast<std::size_t>(flat_params.size()) != parameter_count()) {
    throw InvalidInput("parameter vector has wrong length");
  }
  Eigen::Index at = 0;
  for (auto& l : layers_) {
    Eigen::Map<Eigen::VectorXd>(l.weights.data(), l.weights.size()) = flat_params.segment(at, l.weights.size());
    at += l.weights.size();
    l.bias = flat_params.segment(at, l.bias.size());
    at += l.bias.size();
  }
}

nlohmann::json RiskScorer::to_json() const {
  auto layers = nlohmann::json::array();
  std::vector<std::size_t> dims{input_dimension()};
  for (const auto& l : layers_) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) rows.push_back(flat(l.weights.row(r).transpose()));
    layers.push_back({{"weights", rows}, {"bias", flat(l.bias)}});
    dims.push_back(static_cast<std::size_t>(l.weights.rows()));
  }
  return {{"variant", std::string(to_string(kind_))},
          {"dimensions", dims},
          {"layers", layers},
          {"default_threshold", default_threshold()},
          {"train_config", config_.to_json()}};
}

RiskScorer RiskScorer::from_json(const nlohmann::json& doc) {
  try {
    const auto kind = parse_model_kind(doc.at("variant").get<std::string>());
    std::vector<DenseLayer> layers;
    for (const auto& l : doc.at("layers")) {
      DenseLayer layer;
      const auto rows = l.at("weights").get<std::vector<std::vector<double>>>();
      const auto cols = rows.empty() ? std::size_t{0} : rows.front().size();
      layer.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw InvalidInput("ragged weight matrix");
        for (std::size_t c = 0; c < cols; ++c) {
          layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
      }
      const auto bias = l.at("bias").get<std::vector<double>>();
      layer.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
      layers.push_back(std::move(layer));
    }
    TrainConfig cfg;
    if (doc.contains("train_config")) cfg = TrainConfig::from_json(doc.at("train_config"));
    return RiskScorer(kind, std::move(layers), cfg);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed model document: ") + e.what());
  }
}

void RiskScorer::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

RiskScorer RiskScorer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open model file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed model file " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

bool RiskScorer::operator==(const RiskScorer& other) const {
  if (kind_ != other.kind_ || layers_.size() != other.layers_.size() || !(config_ == other.config_)) {
    return false;
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols()) return false;
    if (a.weights != b.weights || a.bias != b.bias) return false;
  }
  return true;
}

// ---------------------------------------------------------------- gradients

ForwardPass::ForwardPass(const RiskScorer& model, const Eigen::MatrixXd& features) {
  if (static_cast<std::size_t>(features.cols()) != model.input_dimension()) {
    throw InvalidInput("feature dimension does not match model");
  }
  const auto& layers = model.layers();
  activations.reserve(layers.size());
  activations.push_back(features);
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    const auto& l = layers[i];
    activations.push_back(
        ((activations.back() * l.weights.transpose()).rowwise() + l.bias.transpose()).array().tanh().matrix());
  }
  const auto& out = layers.back();
  logits = (activations.back() * out.weights.transpose()).col(0).array() + out.bias(0);
  scores = logits;
  if (sigmoid_output(model.kind())) {
    for (Eigen::Index i = 0; i < scores.size(); ++i) scores(i) = sigmoid(logits(i));
  }
}

Eigen::VectorXd ForwardPass::backward(const RiskScorer& model, const Eigen::VectorXd& logit_gradient) const {
  const auto& layers = model.layers();
  std::vector<Eigen::MatrixXd> grad_w(layers.size());
  std::vector<Eigen::VectorXd> grad_b(layers.size());
  Eigen::MatrixXd delta = logit_gradient;  // n x 1
  for (std::size_t i = layers.size(); i-- > 0;) {
    grad_w[i] = delta.transpose() * activations[i];
    grad_b[i] = delta.colwise().sum().transpose();
    if (i > 0) {
      const auto& a = activations[i];
      delta = ((delta * layers[i].weights).array() * (1.0 - a.array().square())).matrix();
    }
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(model.parameter_count()));
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.segment(at, grad_w[i].size()) = Eigen::Map<const Eigen::VectorXd>(grad_w[i].data(), grad_w[i].size());
    at += grad_w[i].size();
    out.segment(at, grad_b[i].size()) = grad_b[i];
    at += grad_b[i].size();
  }
  return out;
}

double mean_nll(const Eigen::VectorXd& logits, std::span<const int> labels, Eigen::VectorXd* logit_gradient) {
  const auto n = logits.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  if (logit_gradient) logit_gradient->resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = logits(i);
    const double y = labels[static_cast<std::size_t>(i)];
    // log(1 + e^z) - y z, evaluated without overflow
    loss += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - y * z;
    if (logit_gradient) (*logit_gradient)(i) = (sigmoid(z) - y) * inv_n;
  }
  return loss * inv_n;
}

void add_weight_decay(const RiskScorer& model, double l2, LossGradient& lg) {
  if (l2 == 0.0) return;
  Eigen::Index at = 0;
  for (const auto& l : model.layers()) {
    const auto w = Eigen::Map<const Eigen::VectorXd>(l.weights.data(), l.weights.size());
    lg.loss += 0.5 * l2 * w.squaredNorm();
    lg.gradient.segment(at, w.size()) += l2 * w;
    at += l.weights.size() + l.bias.size();
  }
}

LossGradient training_objective(const RiskScorer& model, const Eigen::MatrixXd& features,
                                std::span<const int> labels, double l2) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw InvalidInput("feature rows and labels differ in length");
  }
  ForwardPass pass(model, features);
  LossGradient lg;
  Eigen::VectorXd dz;
  if (sigmoid_output(model.kind())) {
    lg.loss = mean_nll(pass.logits, labels, &dz);
  } else {
    const auto n = pass.logits.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    dz = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = labels[static_cast<std::size_t>(i)] != 0 ? 1.0 : -1.0;
      const double slack = 1.0 - y * pass.logits(i);
      if (slack > 0.0) {
        lg.loss += slack;
        dz(i) = -y * inv_n;
      }
    }
    lg.loss *= inv_n;
  }
  lg.gradient = pass.backward(model, dz);
  add_weight_decay(model, l2, lg);
  return lg;
}

RiskScorer gradient_descent(RiskScorer model, const Objective& objective, const TrainConfig& config) {
  config.validate();
  Eigen::VectorXd theta = model.parameters();
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(theta.size());
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const LossGradient lg = objective(model);
    if (!std::isfinite(lg.loss) || !lg.gradient.allFinite()) throw NonFiniteLoss(it);
    velocity = config.momentum * velocity - config.learning_rate * lg.gradient;
    theta += velocity;
    if (!theta.allFinite()) throw NonFiniteLoss(it);
    model.set_parameters(theta);
  }
  return model;
}

void check_training_data(const Eigen::MatrixXd& features, std::span<const int> labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw InvalidInput("feature rows and labels differ in length");
  }
  if (labels.size() < 2) throw InvalidInput("training needs at least two rows");
  bool pos = false;
  bool neg = false;
  for (int y : labels) {
    if (y == 1) pos = true;
    else if (y == 0) neg = true;
    else throw InvalidInput("labels must be 0 or 1");
  }
  if (!pos || !neg) throw InvalidInput("training labels contain a single class");
  if (!features.allFinite()) throw InvalidInput("features contain non-finite values");
}

RiskScorer train(ModelKind kind, const Eigen::MatrixXd& features, std::span<const int> labels,
                 const TrainConfig& config) {
  check_training_data(features, labels);
  config.validate();
  if (kind == ModelKind::mlp && config.hidden_layers.empty()) {
    throw InvalidInput("mlp needs at least one hidden layer");
  }
  RiskScorer init = RiskScorer::initial(kind, static_cast<std::size_t>(features.cols()), config);
  return gradient_descent(
      std::move(init),
      [&](const RiskScorer& m) { return training_objective(m, features, labels, config.l2); }, config);
}

RiskScorer train_logistic(const Eigen::MatrixXd& features, std::span<const int> labels, const TrainConfig& config) {
  return train(ModelKind::logistic, features, labels, config);
}

RiskScorer train_mlp(const Eigen::MatrixXd& features, std::span<const int> labels, const TrainConfig& config) {
  return train(ModelKind::mlp, features, labels, config);
}

RiskScorer train_linear_svm(const Eigen::MatrixXd& features, std::span<const int> labels,
                            const TrainConfig& config) {
  return train(ModelKind::linear_svm, features, labels, config);
}

}  // namespace luskin
