#include "tabadv/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "tabadv/errors.hpp"
#include "tabadv/rng.hpp"

namespace tabadv {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FiveNumber, n, min, q1, median, q3, max)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MetricMeans, n, sparsity, l1, l2, linf, deviation, sensitivity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GroupStats, l2, deviation, sensitivity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GroupComparison, successful, unsuccessful, complete)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BinaryMetrics, accuracy, precision, recall, tp, fp, tn, fn)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainingMetrics, test, iterations, final_loss, converged)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ViolationReport, n_examples, immutability, feasibility, interdependency)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PerturbationCounts, features, counts, n_examples)

namespace {

const std::set<std::string> kConfigKeys = {"datasets",      "models",         "attacks",  "seed",
                                           "effectiveness_threshold", "train_fraction", "output_dir",
                                           "parallelism",   "training",       "case_reports", "dump_examples"};

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ConfigError("config lists no datasets");
  if (models.empty()) throw ConfigError("config lists no models");
  if (attacks.empty()) throw ConfigError("config lists no attacks");
  if (!(effectiveness_threshold >= 0.0 && effectiveness_threshold <= 1.0)) {
    throw ConfigError("effectiveness_threshold must lie in [0, 1]");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
  if (case_reports < 0) throw ConfigError("case_reports must be nonnegative");
  for (const auto& a : attacks) a.validate();
}

json ExperimentConfig::to_json() const {
  json j;
  j["datasets"] = json::array();
  for (const auto& d : datasets) j["datasets"].push_back(d.generic_string());
  j["models"] = json::array();
  for (auto m : models) j["models"].push_back(std::string(to_string(m)));
  j["attacks"] = json::array();
  for (const auto& a : attacks) j["attacks"].push_back(a.to_json());
  j["seed"] = seed;
  j["effectiveness_threshold"] = effectiveness_threshold;
  j["train_fraction"] = train_fraction;
  j["output_dir"] = output_dir.generic_string();
  j["parallelism"] = parallelism;
  j["training"] = training.to_json();
  j["case_reports"] = case_reports;
  j["dump_examples"] = dump_examples;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kConfigKeys.count(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
  ExperimentConfig cfg;
  try {
    for (const auto& d : j.at("datasets")) cfg.datasets.push_back(resolve(d.get<std::string>(), base_dir));
    if (j.contains("models")) {
      for (const auto& m : j.at("models")) cfg.models.push_back(model_kind_from_string(m.get<std::string>()));
    } else {
      cfg.models = {ModelKind::LR, ModelKind::LinearSVM, ModelKind::MLP};
    }
    for (const auto& a : j.at("attacks")) {
      if (a.is_string()) {
        cfg.attacks.push_back(AttackConfig::defaults(attack_kind_from_string(a.get<std::string>())));
      } else {
        cfg.attacks.push_back(AttackConfig::from_json(a));
      }
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.effectiveness_threshold = j.value("effectiveness_threshold", cfg.effectiveness_threshold);
    cfg.train_fraction = j.value("train_fraction", cfg.train_fraction);
    if (j.contains("output_dir")) cfg.output_dir = resolve(j.at("output_dir").get<std::string>(), base_dir);
    cfg.parallelism = j.value("parallelism", cfg.parallelism);
    if (j.contains("training")) cfg.training = TrainingConfig::from_json(j.at("training"));
    cfg.case_reports = j.value("case_reports", cfg.case_reports);
    cfg.dump_examples = j.value("dump_examples", cfg.dump_examples);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("bad experiment config: {}", e.what()));
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(j, path.parent_path());
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  j.erase("parallelism");
  j["datasets"] = json::array();
  for (const auto& d : datasets) j["datasets"].push_back(d.filename().generic_string());
  return fmt::format("{:016x}", fnv1a64(j.dump()));
}

CellSelector CellSelector::parse(std::string_view text) {
  CellSelector sel;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("selector item '{}' lacks '='", item));
    const std::string_view key = item.substr(0, eq);
    const std::string value(item.substr(eq + 1));
    try {
      if (key == "dataset") {
        sel.datasets.push_back(value);
      } else if (key == "model") {
        sel.models.push_back(model_kind_from_string(value));
      } else if (key == "attack") {
        sel.attacks.push_back(attack_kind_from_string(value));
      } else {
        throw ConfigError(fmt::format("unknown selector key '{}'", key));
      }
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  }
  return sel;
}

bool CellSelector::matches(std::string_view dataset, ModelKind model) const {
  const bool d = datasets.empty() || std::find(datasets.begin(), datasets.end(), dataset) != datasets.end();
  const bool m = models.empty() || std::find(models.begin(), models.end(), model) != models.end();
  return d && m;
}

bool CellSelector::matches(std::string_view dataset, ModelKind model, AttackKind attack) const {
  return matches(dataset, model) &&
         (attacks.empty() || std::find(attacks.begin(), attacks.end(), attack) != attacks.end());
}

GroupComparison compare_groups(const std::vector<MetricRecord>& records) {
  GroupComparison out;
  std::vector<double> l2[2], dev[2], sen[2];
  for (const auto& r : records) {
    const int g = r.success ? 1 : 0;
    l2[g].push_back(r.l2);
    dev[g].push_back(r.deviation);
    sen[g].push_back(r.sensitivity);
  }
  out.successful = {five_number_summary(l2[1]), five_number_summary(dev[1]), five_number_summary(sen[1])};
  out.unsuccessful = {five_number_summary(l2[0]), five_number_summary(dev[0]), five_number_summary(sen[0])};
  out.complete = !l2[0].empty() && !l2[1].empty();
  return out;
}

std::size_t BenchmarkResult::failures() const {
  std::size_t n = 0;
  for (const auto& m : models) n += m.error.has_value();
  for (const auto& c : cells) n += c.error.has_value();
  return n;
}

const DatasetContext* BenchmarkResult::dataset(std::string_view name) const {
  for (const auto& d : datasets) {
    if (d->schema.dataset_name == name) return d.get();
  }
  return nullptr;
}

json BenchmarkResult::to_json() const {
  json j;
  j["config"] = config.to_json();
  j["config_hash"] = config.hash();
  j["models"] = json::array();
  for (const auto& m : models) {
    json jm = {{"dataset", m.dataset}, {"model", std::string(to_string(m.model))}, {"training", m.training}};
    if (m.error) jm["error"] = *m.error;
    j["models"].push_back(std::move(jm));
  }
  j["cells"] = json::array();
  for (const auto& c : cells) {
    json jc = {{"dataset", c.dataset},
               {"model", std::string(to_string(c.model))},
               {"attack", c.attack.to_json()},
               {"n_examples", c.n_examples},
               {"success_rate", c.success_rate},
               {"all", c.all},
               {"successful", c.successful},
               {"unsuccessful", c.unsuccessful},
               {"groups", c.groups},
               {"violations", c.violations},
               {"counts", c.counts},
               {"gated", c.gated}};
    if (c.error) jc["error"] = *c.error;
    j["cells"].push_back(std::move(jc));
  }
  return j;
}

BenchmarkResult BenchmarkResult::from_json(const json& j) {
  BenchmarkResult r;
  try {
    r.config = ExperimentConfig::from_json(j.at("config"));
    for (const auto& jm : j.at("models")) {
      ModelReport m;
      m.dataset = jm.at("dataset").get<std::string>();
      m.model = model_kind_from_string(jm.at("model").get<std::string>());
      m.training = jm.at("training").get<TrainingMetrics>();
      if (jm.contains("error")) m.error = jm.at("error").get<std::string>();
      r.models.push_back(std::move(m));
    }
    for (const auto& jc : j.at("cells")) {
      CellReport c;
      c.dataset = jc.at("dataset").get<std::string>();
      c.model = model_kind_from_string(jc.at("model").get<std::string>());
      c.attack = AttackConfig::from_json(jc.at("attack"));
      c.n_examples = jc.at("n_examples").get<std::size_t>();
      c.success_rate = jc.at("success_rate").get<double>();
      c.all = jc.at("all").get<MetricMeans>();
      c.successful = jc.at("successful").get<MetricMeans>();
      c.unsuccessful = jc.at("unsuccessful").get<MetricMeans>();
      c.groups = jc.at("groups").get<GroupComparison>();
      c.violations = jc.at("violations").get<ViolationReport>();
      c.counts = jc.at("counts").get<PerturbationCounts>();
      c.gated = jc.at("gated").get<bool>();
      if (jc.contains("error")) c.error = jc.at("error").get<std::string>();
      r.cells.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw IoError(fmt::format("malformed results file: {}", e.what()));
  }
  return r;
}

std::shared_ptr<const DatasetContext> load_dataset_context(const std::filesystem::path& schema_path,
                                                           double train_fraction, std::uint64_t seed) {
  auto ctx = std::make_shared<DatasetContext>();
  ctx->schema = load_schema(schema_path);
  ctx->table = load_dataset(ctx->schema);
  ctx->data = fit_encoder(ctx->table, ctx->schema, train_fraction, seed);
  ctx->stats = fit_feature_stats(ctx->data);
  return ctx;
}

namespace {

Classifier obtain_model(const DatasetContext& ctx, ModelKind kind, const ExperimentConfig& cfg,
                        const RunOptions& options) {
  std::optional<std::filesystem::path> path;
  if (options.checkpoint_dir) {
    path = *options.checkpoint_dir / fmt::format("{}_{}.json", ctx.schema.dataset_name, to_string(kind));
    if (std::filesystem::exists(*path)) {
      Classifier c = load_checkpoint(*path);
      if (c.kind() == kind && c.seed == cfg.seed && c.dim() == ctx.data.dim() &&
          c.config.to_json() == cfg.training.to_json()) {
        c.metrics.test = evaluate(c, ctx.data);
        return c;
      }
    }
  }
  Classifier c = train(ctx.data, kind, cfg.training, cfg.seed);
  if (path) {
    std::filesystem::create_directories(path->parent_path());
    save_checkpoint(c, *path);
  }
  return c;
}

void run_cell(CellReport& cell, const Classifier& model, const DatasetContext& ctx, const ExperimentConfig& cfg) {
  cell.examples = run_attack(model, ctx.data, cell.attack);
  cell.records = measure_all(cell.examples, ctx.data.encoder, ctx.stats);
  cell.n_examples = cell.examples.size();
  cell.success_rate = success_rate(cell.examples);
  cell.all = mean_metrics(cell.records);
  cell.successful = mean_metrics(cell.records, true);
  cell.unsuccessful = mean_metrics(cell.records, false);
  cell.groups = compare_groups(cell.records);
  cell.violations = violation_report(cell.examples, ctx.schema, ctx.data.encoder);
  cell.counts = perturbation_counts(cell.examples, ctx.data.encoder);
  cell.gated = cell.success_rate < cfg.effectiveness_threshold;
}

}  // namespace

BenchmarkResult run_benchmark(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  std::mutex log_mutex;
  auto log = [&](const std::string& line) {
    if (!options.log) return;
    std::lock_guard lock(log_mutex);
    options.log(line);
  };

  BenchmarkResult result;
  result.config = cfg;
  for (const auto& path : cfg.datasets) {
    const FeatureSchema schema = load_schema(path);
    const bool wanted = std::any_of(cfg.models.begin(), cfg.models.end(),
                                    [&](ModelKind m) { return options.only.matches(schema.dataset_name, m); });
    if (!wanted) continue;
    log(fmt::format("loading {}", schema.dataset_name));
    result.datasets.push_back(load_dataset_context(path, cfg.train_fraction, cfg.seed));
  }

  struct Unit {
    const DatasetContext* ctx;
    ModelKind model;
  };
  std::vector<Unit> units;
  for (const auto& ctx : result.datasets) {
    for (auto m : cfg.models) {
      if (options.only.matches(ctx->schema.dataset_name, m)) units.push_back({ctx.get(), m});
    }
  }

  std::vector<ModelReport> models(units.size());
  std::vector<std::vector<CellReport>> cells(units.size());

  auto work = [&](std::size_t u) {
    const auto& [ctx, kind] = units[u];
    const std::string& name = ctx->schema.dataset_name;
    ModelReport& mr = models[u];
    mr.dataset = name;
    mr.model = kind;
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<Classifier> model;
    try {
      model = obtain_model(*ctx, kind, cfg, options);
      mr.training = model->metrics;
    } catch (const std::exception& e) {
      mr.error = e.what();
    }
    mr.seconds = elapsed(t0);
    log(mr.error ? fmt::format("{}/{}: training failed: {}", name, to_string(kind), *mr.error)
                 : fmt::format("{}/{}: accuracy {:.4f} ({:.1f}s)", name, to_string(kind),
                               mr.training.test.accuracy, mr.seconds));
    if (!options.run_attacks) return;

    for (const auto& attack : cfg.attacks) {
      if (attack.kind == AttackKind::LowProFool && !ctx->schema.numerical_only()) continue;
      if (!options.only.matches(name, kind, attack.kind)) continue;
      CellReport cell;
      cell.dataset = name;
      cell.model = kind;
      cell.attack = attack;
      const auto t1 = std::chrono::steady_clock::now();
      if (!model) {
        cell.error = "model unavailable: " + *mr.error;
      } else {
        try {
          run_cell(cell, *model, *ctx, cfg);
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
      }
      cell.seconds = elapsed(t1);
      log(cell.error ? fmt::format("{}/{}/{}: failed: {}", name, to_string(kind), to_string(attack.kind),
                                   *cell.error)
                     : fmt::format("{}/{}/{}: success {:.4f}{} ({:.1f}s)", name, to_string(kind),
                                   to_string(attack.kind), cell.success_rate, cell.gated ? " gated" : "",
                                   cell.seconds));
      cells[u].push_back(std::move(cell));
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.parallelism), units.size());
  if (workers <= 1) {
    for (std::size_t u = 0; u < units.size(); ++u) work(u);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t u = next++; u < units.size(); u = next++) work(u);
      });
    }
  }

  result.models = std::move(models);
  for (auto& group : cells) {
    for (auto& c : group) result.cells.push_back(std::move(c));
  }
  return result;
}

}  // namespace tabadv
