#include "tabadv/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "tabadv/errors.hpp"

namespace tabadv {

using nlohmann::json;

namespace {

Eigen::VectorXd clip01(const Eigen::VectorXd& v) { return v.cwiseMax(0.0).cwiseMin(1.0); }

Eigen::VectorXd sign(const Eigen::VectorXd& v) {
  return v.unaryExpr([](double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); });
}

struct Start {
  int original_pred;
  int guide;
};

Start start(const Classifier& model, const Eigen::VectorXd& x, int y, const AttackConfig& cfg, AttackKind kind) {
  if (cfg.kind != kind) {
    throw ContractError(fmt::format("{} called with a {} config", to_string(kind), to_string(cfg.kind)));
  }
  if (static_cast<std::size_t>(x.size()) != model.dim()) throw ContractError("attack input has wrong dimension");
  if (y != 0 && y != 1) throw ContractError("attack label must be 0 or 1");
  const int pred = model.predict_label(x);
  return {pred, cfg.label_source == LabelSource::Predicted ? pred : y};
}

AdversarialExample finish(const Classifier& model, const Eigen::VectorXd& x, Eigen::VectorXd perturbed, int y,
                          int original_pred, AttackKind kind, int iterations) {
  AdversarialExample ex;
  ex.original = x;
  ex.perturbed = std::move(perturbed);
  ex.true_label = y;
  ex.original_pred = original_pred;
  ex.adversarial_pred = model.predict_label(ex.perturbed);
  ex.success = ex.adversarial_pred != y;
  ex.kind = kind;
  ex.iterations_used = iterations;
  return ex;
}

}  // namespace

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::FGSM: return "FGSM";
    case AttackKind::PGD: return "PGD";
    case AttackKind::DeepFool: return "DeepFool";
    case AttackKind::CW: return "CW";
    case AttackKind::LowProFool: return "LowProFool";
  }
  return "?";
}

AttackKind attack_kind_from_string(std::string_view name) {
  if (name == "FGSM") return AttackKind::FGSM;
  if (name == "PGD") return AttackKind::PGD;
  if (name == "DeepFool") return AttackKind::DeepFool;
  if (name == "CW" || name == "C&W") return AttackKind::CW;
  if (name == "LowProFool") return AttackKind::LowProFool;
  throw ConfigError(fmt::format("unknown attack kind '{}'", name));
}

std::string_view to_string(LabelSource source) {
  return source == LabelSource::Predicted ? "predicted" : "true";
}

NormKind AttackConfig::norm() const { return bounded() ? NormKind::Linf : NormKind::L2; }

AttackConfig AttackConfig::defaults(AttackKind kind) {
  AttackConfig c;
  c.kind = kind;
  switch (kind) {
    case AttackKind::FGSM: c.max_iter = 1; break;
    case AttackKind::PGD:
      c.max_iter = 2 * static_cast<int>(std::ceil(c.epsilon / c.step_size - 1e-9)) + 1;
      break;
    case AttackKind::DeepFool: c.max_iter = 100; break;
    case AttackKind::CW: c.max_iter = 10; break;
    case AttackKind::LowProFool: c.max_iter = 100; break;
  }
  return c;
}

void AttackConfig::validate() const {
  auto fail = [&](const std::string& msg) { throw ConfigError(fmt::format("{}: {}", to_string(kind), msg)); };
  if (bounded() && !(epsilon > 0.0)) fail("epsilon must be > 0");
  if (kind == AttackKind::PGD && !(step_size > 0.0)) fail("step_size must be > 0");
  if (max_iter < 1) fail("max_iter must be >= 1");
  if (overshoot < 0.0) fail("overshoot must be >= 0");
  if (kind == AttackKind::CW) {
    if (!(initial_constant > 0.0)) fail("initial_constant must be > 0");
    if (search_steps < 1) fail("search_steps must be >= 1");
    if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  }
  if (confidence < 0.0) fail("confidence must be >= 0");
  if (tradeoff < 0.0) fail("tradeoff must be >= 0");
  if (kind == AttackKind::LowProFool && !(lpf_step > 0.0)) fail("step must be > 0");
}

json AttackConfig::to_json() const {
  json j = {{"kind", std::string(to_string(kind))},
            {"norm", norm() == NormKind::Linf ? "linf" : "l2"},
            {"label_source", std::string(to_string(label_source))},
            {"max_iter", max_iter}};
  switch (kind) {
    case AttackKind::FGSM:
      j["epsilon"] = epsilon;
      break;
    case AttackKind::PGD:
      j["epsilon"] = epsilon;
      j["step_size"] = step_size;
      j["early_stop"] = early_stop;
      break;
    case AttackKind::DeepFool:
      j["overshoot"] = overshoot;
      break;
    case AttackKind::CW:
      j["initial_constant"] = initial_constant;
      j["search_steps"] = search_steps;
      j["confidence"] = confidence;
      j["learning_rate"] = learning_rate;
      break;
    case AttackKind::LowProFool:
      j["tradeoff"] = tradeoff;
      j["step"] = lpf_step;
      break;
  }
  return j;
}

AttackConfig AttackConfig::from_json(const json& j) {
  try {
    AttackConfig c = defaults(attack_kind_from_string(j.at("kind").get<std::string>()));
    static const char* known[] = {"kind", "norm", "label_source", "max_iter", "epsilon", "step_size", "early_stop",
                                  "overshoot", "initial_constant", "search_steps", "confidence", "learning_rate",
                                  "tradeoff", "step"};
    for (const auto& [key, _] : j.items()) {
      if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
        throw ConfigError(fmt::format("unknown attack key '{}'", key));
      }
    }
    c.epsilon = j.value("epsilon", c.epsilon);
    c.step_size = j.value("step_size", c.step_size);
    if (c.kind == AttackKind::PGD && !j.contains("max_iter")) {
      c.max_iter = 2 * static_cast<int>(std::ceil(c.epsilon / c.step_size - 1e-9)) + 1;
    }
    c.max_iter = j.value("max_iter", c.max_iter);
    c.early_stop = j.value("early_stop", c.early_stop);
    c.overshoot = j.value("overshoot", c.overshoot);
    c.initial_constant = j.value("initial_constant", c.initial_constant);
    c.search_steps = j.value("search_steps", c.search_steps);
    c.confidence = j.value("confidence", c.confidence);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.tradeoff = j.value("tradeoff", c.tradeoff);
    c.lpf_step = j.value("step", c.lpf_step);
    if (j.contains("label_source")) {
      const auto src = j["label_source"].get<std::string>();
      if (src == "predicted") c.label_source = LabelSource::Predicted;
      else if (src == "true") c.label_source = LabelSource::True;
      else throw ConfigError(fmt::format("unknown label_source '{}'", src));
    }
    if (j.contains("norm")) {
      const auto n = j["norm"].get<std::string>();
      if (n != (c.norm() == NormKind::Linf ? "linf" : "l2")) {
        throw ConfigError(fmt::format("{} uses a fixed norm; '{}' is not supported", to_string(c.kind), n));
      }
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("malformed attack config: {}", e.what()));
  }
}

AdversarialExample fgsm(const Classifier& model, const Eigen::VectorXd& x, int y, const AttackConfig& cfg) {
  const auto s = start(model, x, y, cfg, AttackKind::FGSM);
  Eigen::VectorXd adv = clip01(x + cfg.epsilon * sign(model.attack_gradient(x, s.guide)));
  return finish(model, x, std::move(adv), y, s.original_pred, AttackKind::FGSM, 1);
}

AdversarialExample pgd(const Classifier& model, const Eigen::VectorXd& x, int y, const AttackConfig& cfg) {
  const auto s = start(model, x, y, cfg, AttackKind::PGD);
  Eigen::VectorXd adv = x;
  int it = 0;
  while (it < cfg.max_iter) {
    Eigen::VectorXd step = adv + cfg.step_size * sign(model.attack_gradient(adv, s.guide));
    step = step.array().max(x.array() - cfg.epsilon).min(x.array() + cfg.epsilon).matrix();
    adv = clip01(step);
    ++it;
    if (cfg.early_stop && model.predict_label(adv) != y) break;
  }
  return finish(model, x, std::move(adv), y, s.original_pred, AttackKind::PGD, it);
}

AdversarialExample deepfool(const Classifier& model, const Eigen::VectorXd& x, int y, const AttackConfig& cfg) {
  const auto s = start(model, x, y, cfg, AttackKind::DeepFool);
  // Models with probabilities are linearized on p_guide - p_other, the rest on
  // their scores. Steps accumulate on the clipped iterate; the overshoot only
  // applies to the candidate tested for a flip.
  const bool probs = model.has_probabilities();
  Eigen::VectorXd current = x;
  Eigen::VectorXd candidate = x;
  int it = 0;
  bool aborted = false;
  while (it < cfg.max_iter && model.predict_label(candidate) == s.guide) {
    Eigen::VectorXd grad;
    const double margin =
        probs ? model.output_margin(current, s.guide, &grad) : model.score_margin(current, s.guide, &grad);
    const double gnorm2 = grad.squaredNorm();
    const double step = margin / gnorm2;
    if (gnorm2 == 0.0 || !std::isfinite(step)) {
      aborted = true;
      break;
    }
    current = clip01(current - step * grad);
    candidate = clip01(x + (1.0 + cfg.overshoot) * (current - x));
    ++it;
  }
  auto ex = finish(model, x, std::move(candidate), y, s.original_pred, AttackKind::DeepFool, it);
  ex.aborted = aborted;
  return ex;
}

AdversarialExample carlini_wagner_l2(const Classifier& model, const Eigen::VectorXd& x, int y,
                                     const AttackConfig& cfg) {
  const auto s = start(model, x, y, cfg, AttackKind::CW);
  if (model.predict_label(x) != s.guide) return finish(model, x, x, y, s.original_pred, AttackKind::CW, 0);

  // Work in w-space: x' = (tanh(w) + 1) / 2. The smoother keeps atanh finite at 0 and 1.
  constexpr double kSmoother = 0.999999;
  const Eigen::VectorXd w0 = ((2.0 * x.array() - 1.0) * kSmoother).atanh().matrix();
  auto to_x = [](const Eigen::VectorXd& w) -> Eigen::VectorXd { return ((w.array().tanh() + 1.0) / 2.0).matrix(); };

  double c = cfg.initial_constant;
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();

  std::optional<Eigen::VectorXd> best_success;
  double best_success_l2 = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_failed = to_x(w0);
  double best_failed_l2 = (best_failed - x).squaredNorm();
  int iterations = 0;

  for (int search = 0; search < cfg.search_steps; ++search) {
    Eigen::VectorXd w = w0;
    bool found = false;
    for (int i = 0; i < cfg.max_iter; ++i) {
      const Eigen::VectorXd xp = to_x(w);
      Eigen::VectorXd margin_grad;
      const double margin = model.output_margin(xp, s.guide, &margin_grad);
      Eigen::VectorXd grad_x = 2.0 * (xp - x);
      if (margin > -cfg.confidence) grad_x += c * margin_grad;
      const Eigen::VectorXd dxdw = ((1.0 - w.array().tanh().square()) / 2.0).matrix();
      w -= cfg.learning_rate * grad_x.cwiseProduct(dxdw);
      ++iterations;

      Eigen::VectorXd cand = to_x(w);
      const double l2 = (cand - x).squaredNorm();
      if (model.predict_label(cand) != s.guide) {
        found = true;
        if (l2 < best_success_l2) {
          best_success_l2 = l2;
          best_success = std::move(cand);
        }
      } else if (l2 < best_failed_l2) {
        best_failed_l2 = l2;
        best_failed = std::move(cand);
      }
    }
    if (found) {
      upper = std::min(upper, c);
      c = (lower + upper) / 2.0;
    } else {
      lower = std::max(lower, c);
      c = std::isinf(upper) ? c * 2.0 : (lower + upper) / 2.0;
    }
  }
  Eigen::VectorXd out = best_success ? *best_success : best_failed;
  return finish(model, x, clip01(out), y, s.original_pred, AttackKind::CW, iterations);
}

AdversarialExample lowprofool(const Classifier& model, const Eigen::VectorXd& x, int y,
                              const Eigen::VectorXd& importance, const AttackConfig& cfg,
                              const FeatureSchema& schema) {
  if (!schema.numerical_only()) {
    throw ContractError(fmt::format("LowProFool needs a numerical-only schema; '{}' has categorical features",
                                    schema.dataset_name));
  }
  const auto s = start(model, x, y, cfg, AttackKind::LowProFool);
  if (importance.size() != x.size()) throw ContractError("LowProFool importance has wrong length");
  const int target = 1 - s.guide;
  const Eigen::VectorXd v2 = importance.cwiseProduct(importance);

  Eigen::VectorXd delta = Eigen::VectorXd::Zero(x.size());
  std::optional<Eigen::VectorXd> best;
  double best_norm = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < cfg.max_iter; ++it) {
    Eigen::VectorXd grad = model.attack_gradient(x + delta, target);
    const double wnorm = importance.cwiseProduct(delta).norm();
    if (wnorm > 0.0) grad += cfg.tradeoff * v2.cwiseProduct(delta) / wnorm;
    delta -= cfg.lpf_step * grad;
    delta = clip01(x + delta) - x;

    const Eigen::VectorXd cand = x + delta;
    if (model.predict_label(cand) != s.guide) {
      const double n = importance.cwiseProduct(delta).norm();
      if (n < best_norm) {
        best_norm = n;
        best = cand;
      }
    }
  }
  Eigen::VectorXd out = best ? *best : Eigen::VectorXd(x + delta);
  return finish(model, x, clip01(out), y, s.original_pred, AttackKind::LowProFool, it);
}

Eigen::VectorXd pearson_importance(const EncodedDataset& data) {
  const auto n = data.x_train.rows();
  if (n < 2) throw ContractError("pearson_importance needs at least 2 training rows");
  const auto cols = data.encoder.numerical_columns();
  if (cols.empty()) throw ContractError("pearson_importance needs numerical features");

  const Eigen::VectorXd yv = data.y_train.cast<double>();
  const Eigen::VectorXd yc = yv.array() - yv.mean();
  const double ynorm = yc.norm();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(data.x_train.cols());
  for (std::size_t c : cols) {
    const Eigen::VectorXd col = data.x_train.col(static_cast<Eigen::Index>(c));
    const Eigen::VectorXd xc = col.array() - col.mean();
    const double xnorm = xc.norm();
    if (xnorm < 1e-12 || ynorm < 1e-12) continue;
    v[static_cast<Eigen::Index>(c)] = std::abs(xc.dot(yc) / (xnorm * ynorm));
  }
  const double total = v.norm();
  if (total == 0.0) throw ContractError("pearson_importance: every numerical feature is constant");
  return v / total;
}

std::vector<AdversarialExample> run_attack(const Classifier& model, const EncodedDataset& data,
                                           const AttackConfig& cfg) {
  cfg.validate();
  Eigen::VectorXd importance;
  if (cfg.kind == AttackKind::LowProFool) {
    if (!data.schema.numerical_only()) {
      throw ContractError(fmt::format("LowProFool is not applicable to '{}'", data.schema.dataset_name));
    }
    importance = pearson_importance(data);
  }
  std::vector<AdversarialExample> out;
  out.reserve(static_cast<std::size_t>(data.x_test.rows()));
  for (Eigen::Index i = 0; i < data.x_test.rows(); ++i) {
    const Eigen::VectorXd x = data.x_test.row(i).transpose();
    const int y = data.y_test[i];
    AdversarialExample ex;
    switch (cfg.kind) {
      case AttackKind::FGSM: ex = fgsm(model, x, y, cfg); break;
      case AttackKind::PGD: ex = pgd(model, x, y, cfg); break;
      case AttackKind::DeepFool: ex = deepfool(model, x, y, cfg); break;
      case AttackKind::CW: ex = carlini_wagner_l2(model, x, y, cfg); break;
      case AttackKind::LowProFool: ex = lowprofool(model, x, y, importance, cfg, data.schema); break;
    }
    ex.row_id = data.test_rows.at(static_cast<std::size_t>(i));
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace tabadv
