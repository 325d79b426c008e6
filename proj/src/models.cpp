#include "tabadv/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>

#include <fmt/format.h>

#include "tabadv/errors.hpp"
#include "tabadv/rng.hpp"

namespace tabadv {

using nlohmann::json;

namespace {

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

// log(1 + exp(s)) without overflow.
double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

Eigen::Vector2d softmax(const Eigen::Vector2d& z) {
  const double m = z.maxCoeff();
  Eigen::Vector2d e = (z.array() - m).exp();
  return e / e.sum();
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::LR: return "LR";
    case ModelKind::LinearSVM: return "LinearSVM";
    case ModelKind::MLP: return "MLP";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "LR") return ModelKind::LR;
  if (name == "LinearSVM" || name == "SVM" || name == "LinearSVC") return ModelKind::LinearSVM;
  if (name == "MLP") return ModelKind::MLP;
  throw ConfigError(fmt::format("unknown model kind '{}'", name));
}

json TrainingConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"l2", l2},
          {"max_iter", max_iter}, {"tolerance", tolerance},
          {"mlp_learning_rate", mlp_learning_rate}, {"epochs", epochs},
          {"batch_size", batch_size}, {"beta1", beta1},
          {"beta2", beta2}, {"adam_epsilon", adam_epsilon},
          {"hidden", hidden}};
}

TrainingConfig TrainingConfig::from_json(const json& j) {
  TrainingConfig c;
  for (const auto& [key, _] : j.items()) {
    static const char* known[] = {"learning_rate", "l2", "max_iter", "tolerance", "mlp_learning_rate", "epochs",
                                  "batch_size", "beta1", "beta2", "adam_epsilon", "hidden"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ConfigError(fmt::format("unknown training key '{}'", key));
    }
  }
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.l2 = j.value("l2", c.l2);
  c.max_iter = j.value("max_iter", c.max_iter);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.mlp_learning_rate = j.value("mlp_learning_rate", c.mlp_learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.hidden = j.value("hidden", c.hidden);
  if (c.learning_rate <= 0 || c.mlp_learning_rate <= 0) throw ConfigError("learning rates must be positive");
  if (c.l2 < 0) throw ConfigError("l2 must be non-negative");
  if (c.max_iter < 1 || c.epochs < 1 || c.batch_size < 1) throw ConfigError("iteration budgets must be >= 1");
  for (int h : c.hidden) {
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  }
  return c;
}

BinaryMetrics binary_metrics(const Eigen::Ref<const Eigen::VectorXi>& truth,
                             const Eigen::Ref<const Eigen::VectorXi>& predicted) {
  if (truth.size() != predicted.size()) throw ContractError("binary_metrics: length mismatch");
  if (truth.size() == 0) throw ContractError("binary_metrics: empty input");
  BinaryMetrics m;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == 1;
    const bool p = predicted[i] == 1;
    if (t && p) ++m.tp;
    else if (!t && p) ++m.fp;
    else if (!t && !p) ++m.tn;
    else ++m.fn;
  }
  const auto n = static_cast<double>(truth.size());
  m.accuracy = static_cast<double>(m.tp + m.tn) / n;
  m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  return m;
}

Classifier Classifier::linear(ModelKind kind, Eigen::VectorXd w, double b) {
  if (kind == ModelKind::MLP) throw ContractError("Classifier::linear called with MLP kind");
  Classifier c;
  c.kind_ = kind;
  c.dim_ = static_cast<std::size_t>(w.size());
  c.w_ = std::move(w);
  c.b_ = b;
  return c;
}

Classifier Classifier::mlp(std::vector<Layer> layers) {
  if (layers.empty()) throw ContractError("MLP needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].weight.rows()) throw ContractError("MLP bias/weight shape mismatch");
    if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows()) {
      throw ContractError("MLP layer widths do not chain");
    }
  }
  if (layers.back().weight.rows() != 2) throw ContractError("MLP output layer must have 2 units");
  Classifier c;
  c.kind_ = ModelKind::MLP;
  c.dim_ = static_cast<std::size_t>(layers.front().weight.cols());
  c.layers_ = std::move(layers);
  return c;
}

void Classifier::check_dim(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (static_cast<std::size_t>(x.size()) != dim_) {
    throw ContractError(fmt::format("input length {} does not match model dimension {}", x.size(), dim_));
  }
}

Eigen::Vector2d Classifier::logits(const Eigen::Ref<const Eigen::VectorXd>& x, Trace* trace) const {
  Eigen::VectorXd a = x;
  if (trace) trace->act.push_back(a);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd z = layers_[l].weight * a + layers_[l].bias;
    const bool last = l + 1 == layers_.size();
    a = last ? z : Eigen::VectorXd(z.cwiseMax(0.0));
    if (trace) {
      trace->pre.push_back(std::move(z));
      trace->act.push_back(a);
    }
  }
  return a;
}

Eigen::VectorXd Classifier::backprop(const Trace& trace, const Eigen::Vector2d& upstream) const {
  Eigen::VectorXd g = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    g = layers_[l].weight.transpose() * g;
    if (l > 0) g = g.cwiseProduct((trace.pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return g;
}

ModelOutput Classifier::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_dim(x);
  ModelOutput out;
  if (kind_ == ModelKind::MLP) {
    out.scores = logits(x, nullptr);
    out.probabilities = softmax(out.scores);
  } else {
    const double s = linear_score(x);
    out.scores = Eigen::Vector2d(-s, s);
    if (kind_ == ModelKind::LR) {
      const double p = sigmoid(s);
      out.probabilities = Eigen::Vector2d(1.0 - p, p);
    }
  }
  out.label = out.scores[1] > out.scores[0] ? 1 : 0;
  return out;
}

int Classifier::predict_label(const Eigen::Ref<const Eigen::VectorXd>& x) const { return predict(x).label; }

Eigen::VectorXi Classifier::predict_labels(const Eigen::Ref<const RowMatrix>& x) const {
  if (static_cast<std::size_t>(x.cols()) != dim_) throw ContractError("predict_labels: dimension mismatch");
  // Row by row so labels agree bit-for-bit with predict().
  Eigen::VectorXi out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_label(x.row(i).transpose());
  return out;
}

double Classifier::loss(const Eigen::Ref<const Eigen::VectorXd>& x, int y) const {
  check_dim(x);
  switch (kind_) {
    case ModelKind::LR: {
      const double s = linear_score(x);
      return softplus(s) - y * s;
    }
    case ModelKind::LinearSVM: {
      const double yt = y == 1 ? 1.0 : -1.0;
      return std::max(0.0, 1.0 - yt * linear_score(x));
    }
    case ModelKind::MLP: {
      const Eigen::Vector2d z = logits(x, nullptr);
      const double m = z.maxCoeff();
      return m + std::log((z.array() - m).exp().sum()) - z[y];
    }
  }
  return 0.0;
}

Eigen::VectorXd Classifier::input_gradient(const Eigen::Ref<const Eigen::VectorXd>& x, int y) const {
  check_dim(x);
  if (kind_ == ModelKind::LinearSVM) {
    const double yt = y == 1 ? 1.0 : -1.0;
    if (yt * linear_score(x) >= 1.0) return Eigen::VectorXd::Zero(w_.size());
    return -yt * w_;
  }
  return attack_gradient(x, y);
}

Eigen::VectorXd Classifier::attack_gradient(const Eigen::Ref<const Eigen::VectorXd>& x, int y) const {
  check_dim(x);
  switch (kind_) {
    case ModelKind::LR:
      return (sigmoid(linear_score(x)) - y) * w_;
    case ModelKind::LinearSVM:
      return (y == 1 ? -1.0 : 1.0) * w_;
    case ModelKind::MLP: {
      Trace trace;
      const Eigen::Vector2d z = logits(x, &trace);
      Eigen::Vector2d up = softmax(z);
      up[y] -= 1.0;
      return backprop(trace, up);
    }
  }
  return {};
}

double Classifier::score_margin(const Eigen::Ref<const Eigen::VectorXd>& x, int g, Eigen::VectorXd* grad) const {
  check_dim(x);
  const double sign = g == 1 ? 1.0 : -1.0;
  if (kind_ != ModelKind::MLP) {
    if (grad) *grad = 2.0 * sign * w_;
    return 2.0 * sign * linear_score(x);
  }
  Trace trace;
  const Eigen::Vector2d z = logits(x, &trace);
  const Eigen::Vector2d up(-sign, sign);
  if (grad) *grad = backprop(trace, up);
  return up.dot(z);
}

double Classifier::output_margin(const Eigen::Ref<const Eigen::VectorXd>& x, int g, Eigen::VectorXd* grad) const {
  check_dim(x);
  const double sign = g == 1 ? 1.0 : -1.0;
  switch (kind_) {
    case ModelKind::LinearSVM: {
      if (grad) *grad = Eigen::VectorXd::Zero(w_.size());
      return predict_label(x) == g ? 1.0 : -1.0;
    }
    case ModelKind::LR: {
      const double p = sigmoid(linear_score(x));
      if (grad) *grad = sign * 2.0 * p * (1.0 - p) * w_;
      return sign * (2.0 * p - 1.0);
    }
    case ModelKind::MLP: {
      Trace trace;
      const Eigen::Vector2d p = softmax(logits(x, &trace));
      // d(p1 - p0)/dz = 2 p1 p0 (-1, 1)
      if (grad) *grad = backprop(trace, Eigen::Vector2d(-sign, sign) * (2.0 * p[0] * p[1]));
      return sign * (p[1] - p[0]);
    }
  }
  return 0.0;
}

json Classifier::to_json() const {
  json j;
  j["format"] = "tabadv-model";
  j["version"] = 1;
  j["kind"] = std::string(to_string(kind_));
  j["dim"] = dim_;
  j["seed"] = seed;
  j["config"] = config.to_json();
  j["metrics"] = {{"accuracy", metrics.test.accuracy}, {"precision", metrics.test.precision},
                  {"recall", metrics.test.recall}, {"iterations", metrics.iterations},
                  {"final_loss", metrics.final_loss}, {"converged", metrics.converged}};
  if (kind_ == ModelKind::MLP) {
    json layers = json::array();
    for (const auto& layer : layers_) {
      std::vector<double> w;
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.push_back(layer.weight(r, c));
      }
      layers.push_back({{"rows", layer.weight.rows()}, {"cols", layer.weight.cols()}, {"weight", w},
                        {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())}});
    }
    j["layers"] = layers;
  } else {
    j["weights"] = std::vector<double>(w_.data(), w_.data() + w_.size());
    j["bias"] = b_;
  }
  return j;
}

Classifier Classifier::from_json(const json& j) {
  try {
    if (j.at("format") != "tabadv-model" || j.at("version") != 1) throw IoError("unsupported checkpoint format");
    const ModelKind kind = model_kind_from_string(j.at("kind").get<std::string>());
    Classifier c;
    if (kind == ModelKind::MLP) {
      std::vector<Layer> layers;
      for (const auto& jl : j.at("layers")) {
        const auto rows = jl.at("rows").get<Eigen::Index>();
        const auto cols = jl.at("cols").get<Eigen::Index>();
        const auto w = jl.at("weight").get<std::vector<double>>();
        const auto b = jl.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
          throw IoError("checkpoint layer has inconsistent sizes");
        }
        Layer layer;
        layer.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            w.data(), rows, cols);
        layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
        layers.push_back(std::move(layer));
      }
      c = mlp(std::move(layers));
    } else {
      const auto w = j.at("weights").get<std::vector<double>>();
      c = linear(kind, Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())),
                 j.at("bias").get<double>());
    }
    if (c.dim() != j.at("dim").get<std::size_t>()) throw IoError("checkpoint dimension mismatch");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.config = TrainingConfig::from_json(j.at("config"));
    const auto& m = j.at("metrics");
    c.metrics.test.accuracy = m.at("accuracy").get<double>();
    c.metrics.test.precision = m.at("precision").get<double>();
    c.metrics.test.recall = m.at("recall").get<double>();
    c.metrics.iterations = m.at("iterations").get<int>();
    c.metrics.final_loss = m.at("final_loss").get<double>();
    c.metrics.converged = m.at("converged").get<bool>();
    return c;
  } catch (const json::exception& e) {
    throw IoError(fmt::format("malformed checkpoint: {}", e.what()));
  }
}

namespace {

Classifier train_linear(const Eigen::Ref<const RowMatrix>& x, const Eigen::Ref<const Eigen::VectorXi>& y,
                        ModelKind kind, const TrainingConfig& cfg) {
  const auto n = static_cast<double>(x.rows());
  const Eigen::VectorXd yd = y.cast<double>();
  const Eigen::VectorXd yt = 2.0 * yd.array() - 1.0;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  double b = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  TrainingMetrics tm;

  for (int it = 0; it < cfg.max_iter; ++it) {
    const Eigen::VectorXd s = (x * w).array() + b;
    double data_loss = 0.0;
    Eigen::VectorXd r(x.rows());  // d loss_i / d s_i
    if (kind == ModelKind::LR) {
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        data_loss += softplus(s[i]) - yd[i] * s[i];
        r[i] = sigmoid(s[i]) - yd[i];
      }
    } else {
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        const double m = yt[i] * s[i];
        data_loss += std::max(0.0, 1.0 - m);
        r[i] = m < 1.0 ? -yt[i] : 0.0;
      }
    }
    const double loss = data_loss / n + 0.5 * cfg.l2 * w.squaredNorm();
    tm.final_loss = loss;
    tm.iterations = it;
    if (std::abs(prev - loss) < cfg.tolerance) {
      tm.converged = true;
      break;
    }
    prev = loss;
    const Eigen::VectorXd gw = x.transpose() * r / n + cfg.l2 * w;
    const double gb = r.sum() / n;
    w -= cfg.learning_rate * gw;
    b -= cfg.learning_rate * gb;
    tm.iterations = it + 1;
  }
  Classifier c = Classifier::linear(kind, std::move(w), b);
  c.metrics = tm;
  return c;
}

struct AdamSlot {
  Eigen::MatrixXd mw, vw;
  Eigen::VectorXd mb, vb;
};

Classifier train_mlp(const Eigen::Ref<const RowMatrix>& x, const Eigen::Ref<const Eigen::VectorXi>& y,
                     const TrainingConfig& cfg, std::uint64_t seed) {
  std::vector<int> widths = {static_cast<int>(x.cols())};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(2);

  Rng init(derive_seed(seed, "mlp-init"));
  std::vector<Classifier::Layer> layers;
  std::vector<AdamSlot> adam;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / fan_in);
    Classifier::Layer layer;
    layer.weight.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = init.uniform(-limit, limit);
    }
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    adam.push_back({Eigen::MatrixXd::Zero(fan_out, fan_in), Eigen::MatrixXd::Zero(fan_out, fan_in),
                    Eigen::VectorXd::Zero(fan_out), Eigen::VectorXd::Zero(fan_out)});
    layers.push_back(std::move(layer));
  }

  Rng shuffler(derive_seed(seed, "mlp-shuffle"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);

  const std::size_t n_layers = layers.size();
  long step = 0;
  TrainingMetrics tm;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffler.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto bsz = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd a0(bsz, x.cols());
      Eigen::VectorXi yb(bsz);
      for (Eigen::Index i = 0; i < bsz; ++i) {
        a0.row(i) = x.row(order[start + static_cast<std::size_t>(i)]);
        yb[i] = y[order[start + static_cast<std::size_t>(i)]];
      }

      std::vector<Eigen::MatrixXd> acts{a0};
      std::vector<Eigen::MatrixXd> pres;
      for (std::size_t l = 0; l < n_layers; ++l) {
        Eigen::MatrixXd z = acts.back() * layers[l].weight.transpose();
        z.rowwise() += layers[l].bias.transpose();
        pres.push_back(z);
        acts.push_back(l + 1 == n_layers ? z : Eigen::MatrixXd(z.cwiseMax(0.0)));
      }

      Eigen::MatrixXd g = acts.back();  // logits -> dL/dlogits
      for (Eigen::Index i = 0; i < bsz; ++i) {
        const double m = g.row(i).maxCoeff();
        const double lse = m + std::log((g.row(i).array() - m).exp().sum());
        epoch_loss += lse - g(i, yb[i]);
        for (Eigen::Index k = 0; k < 2; ++k) g(i, k) = std::exp(g(i, k) - lse);
        g(i, yb[i]) -= 1.0;
      }
      g /= static_cast<double>(bsz);

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t l = n_layers; l-- > 0;) {
        const Eigen::MatrixXd gw = g.transpose() * acts[l];
        const Eigen::VectorXd gb = g.colwise().sum().transpose();
        if (l > 0) {
          g = (g * layers[l].weight).cwiseProduct((pres[l - 1].array() > 0.0).cast<double>().matrix());
        }
        auto& s = adam[l];
        s.mw = cfg.beta1 * s.mw + (1.0 - cfg.beta1) * gw;
        s.vw = cfg.beta2 * s.vw + (1.0 - cfg.beta2) * gw.cwiseProduct(gw);
        s.mb = cfg.beta1 * s.mb + (1.0 - cfg.beta1) * gb;
        s.vb = cfg.beta2 * s.vb + (1.0 - cfg.beta2) * gb.cwiseProduct(gb);
        layers[l].weight.array() -=
            cfg.mlp_learning_rate * (s.mw.array() / c1) / ((s.vw.array() / c2).sqrt() + cfg.adam_epsilon);
        layers[l].bias.array() -=
            cfg.mlp_learning_rate * (s.mb.array() / c1) / ((s.vb.array() / c2).sqrt() + cfg.adam_epsilon);
      }
    }
    tm.final_loss = epoch_loss / static_cast<double>(x.rows());
    tm.iterations = epoch + 1;
  }
  tm.converged = true;
  Classifier c = Classifier::mlp(std::move(layers));
  c.metrics = tm;
  return c;
}

}  // namespace

Classifier train(const Eigen::Ref<const RowMatrix>& x, const Eigen::Ref<const Eigen::VectorXi>& y, ModelKind kind,
                 const TrainingConfig& cfg, std::uint64_t seed) {
  if (x.rows() == 0 || x.cols() == 0) throw ContractError("train: empty training matrix");
  if (x.rows() != y.size()) throw ContractError("train: label count does not match rows");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) throw ContractError("train: labels must be 0 or 1");
  }
  Classifier c = kind == ModelKind::MLP ? train_mlp(x, y, cfg, seed) : train_linear(x, y, kind, cfg);
  c.config = cfg;
  c.seed = seed;
  return c;
}

Classifier train(const EncodedDataset& data, ModelKind kind, const TrainingConfig& cfg, std::uint64_t seed) {
  Classifier c = train(data.x_train, data.y_train, kind, cfg, seed);
  c.metrics.test = evaluate(c, data);
  return c;
}

BinaryMetrics evaluate(const Classifier& model, const EncodedDataset& data) {
  if (data.x_test.rows() == 0) throw ContractError("evaluate: dataset has no test rows");
  return binary_metrics(data.y_test, model.predict_labels(data.x_test));
}

void save_checkpoint(const Classifier& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << model.to_json().dump(1) << '\n';
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

Classifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return Classifier::from_json(j);
}

}  // namespace tabadv
