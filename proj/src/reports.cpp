#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "tabadv/csv.hpp"
#include "tabadv/errors.hpp"
#include "tabadv/harness.hpp"

namespace tabadv {

using nlohmann::json;

namespace {

using csv::format_double;
using csv::format_fixed;

class Writer {
 public:
  Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError(fmt::format("cannot write {}", path.string()));
  }
  std::ostream& stream() { return out_; }
  void row(const std::vector<std::string>& fields) { csv::write_row(out_, fields); }

 private:
  std::ofstream out_;
};

std::string header_line(const BenchmarkResult& r) {
  return fmt::format("config_hash={} seed={}", r.config.hash(), r.config.seed);
}

std::string model_name(ModelKind m) { return std::string(to_string(m)); }
std::string attack_name(AttackKind a) { return std::string(to_string(a)); }

std::vector<AttackKind> attack_columns(const BenchmarkResult& r) {
  std::vector<AttackKind> out;
  for (const auto& c : r.cells) {
    if (std::find(out.begin(), out.end(), c.attack.kind) == out.end()) out.push_back(c.attack.kind);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<std::string, ModelKind>> model_rows(const BenchmarkResult& r) {
  std::vector<std::pair<std::string, ModelKind>> out;
  for (const auto& m : r.models) out.emplace_back(m.dataset, m.model);
  return out;
}

const CellReport* find_cell(const BenchmarkResult& r, const std::string& dataset, ModelKind model,
                            AttackKind attack) {
  for (const auto& c : r.cells) {
    if (c.dataset == dataset && c.model == model && c.attack.kind == attack) return &c;
  }
  return nullptr;
}

void write_markdown_table(const std::filesystem::path& path, const BenchmarkResult& r, const std::string& title,
                          const std::vector<std::string>& head, const std::vector<std::vector<std::string>>& rows,
                          const std::string& footer = {}) {
  Writer w(path);
  auto& out = w.stream();
  out << "<!-- " << header_line(r) << " -->\n\n## " << title << "\n\n|";
  for (const auto& h : head) out << ' ' << h << " |";
  out << "\n|";
  for (std::size_t i = 0; i < head.size(); ++i) out << (i < 2 ? " --- |" : " ---: |");
  out << '\n';
  for (const auto& row : rows) {
    out << '|';
    for (const auto& cell : row) out << ' ' << cell << " |";
    out << '\n';
  }
  if (!footer.empty()) out << '\n' << footer << '\n';
}

void emit_accuracy(const BenchmarkResult& r, const std::filesystem::path& dir) {
  {
    Writer w(dir / "accuracy.csv");
    w.stream() << "# " << header_line(r) << '\n';
    w.row({"dataset", "model", "accuracy", "precision", "recall", "iterations", "converged", "error"});
    for (const auto& m : r.models) {
      const auto& t = m.training;
      w.row({m.dataset, model_name(m.model), format_double(t.test.accuracy), format_double(t.test.precision),
             format_double(t.test.recall), std::to_string(t.iterations), t.converged ? "true" : "false",
             m.error.value_or("")});
    }
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : r.models) {
    const auto& t = m.training.test;
    if (m.error) {
      rows.push_back({m.dataset, model_name(m.model), "failed", "", ""});
    } else {
      rows.push_back({m.dataset, model_name(m.model), format_fixed(t.accuracy, 4), format_fixed(t.precision, 4),
                      format_fixed(t.recall, 4)});
    }
  }
  write_markdown_table(dir / "accuracy.md", r, "Test accuracy", {"Dataset", "Model", "Accuracy", "Precision", "Recall"},
                       rows);
}

void emit_success(const BenchmarkResult& r, const std::filesystem::path& dir) {
  const auto attacks = attack_columns(r);
  std::vector<std::string> head{"dataset", "model"};
  for (auto a : attacks) head.push_back(attack_name(a));
  {
    Writer w(dir / "success_rates.csv");
    w.stream() << "# " << header_line(r) << '\n';
    w.row(head);
    for (const auto& [dataset, model] : model_rows(r)) {
      std::vector<std::string> row{dataset, model_name(model)};
      for (auto a : attacks) {
        const auto* c = find_cell(r, dataset, model, a);
        row.push_back(c && !c->error ? format_double(c->success_rate) : "");
      }
      w.row(row);
    }
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& [dataset, model] : model_rows(r)) {
    std::vector<std::string> row{dataset, model_name(model)};
    for (auto a : attacks) {
      const auto* c = find_cell(r, dataset, model, a);
      row.push_back(!c ? "-" : c->error ? "failed" : format_fixed(100.0 * c->success_rate, 2));
    }
    rows.push_back(std::move(row));
  }
  head[0] = "Dataset";
  head[1] = "Model";
  write_markdown_table(dir / "success_rates.md", r, "Attack success rate (%)", head, rows);
}

struct MetricColumn {
  std::string key;
  std::string title;
  double MetricMeans::*field;
};

const std::vector<MetricColumn>& metric_columns() {
  static const std::vector<MetricColumn> cols = {
      {"sparsity", "Mean sparsity", &MetricMeans::sparsity}, {"l1", "Mean l1 distance", &MetricMeans::l1},
      {"l2", "Mean l2 distance", &MetricMeans::l2},          {"linf", "Mean linf distance", &MetricMeans::linf},
      {"md", "Mean deviation (Mahalanobis)", &MetricMeans::deviation},
      {"sen", "Mean sensitivity", &MetricMeans::sensitivity}};
  return cols;
}

void emit_metrics(const BenchmarkResult& r, const std::filesystem::path& dir) {
  {
    Writer w(dir / "metrics.csv");
    w.stream() << "# " << header_line(r) << '\n';
    w.row({"dataset", "model", "attack", "n_examples", "success_rate", "mean_sparsity", "mean_l1", "mean_l2",
           "mean_linf", "mean_md", "mean_sen", "gated"});
    for (const auto& c : r.cells) {
      if (c.error) continue;
      w.row({c.dataset, model_name(c.model), attack_name(c.attack.kind), std::to_string(c.n_examples),
             format_double(c.success_rate), format_double(c.all.sparsity), format_double(c.all.l1),
             format_double(c.all.l2), format_double(c.all.linf), format_double(c.all.deviation),
             format_double(c.all.sensitivity), c.gated ? "true" : "false"});
    }
  }
  {
    Writer w(dir / "metrics_by_group.csv");
    w.stream() << "# " << header_line(r) << '\n';
    w.row({"dataset", "model", "attack", "group", "n", "mean_sparsity", "mean_l1", "mean_l2", "mean_linf",
           "mean_md", "mean_sen"});
    for (const auto& c : r.cells) {
      if (c.error) continue;
      for (const auto& [group, m] : {std::pair<std::string, const MetricMeans*>{"all", &c.all},
                                     {"successful", &c.successful},
                                     {"unsuccessful", &c.unsuccessful}}) {
        w.row({c.dataset, model_name(c.model), attack_name(c.attack.kind), group, std::to_string(m->n),
               format_double(m->sparsity), format_double(m->l1), format_double(m->l2), format_double(m->linf),
               format_double(m->deviation), format_double(m->sensitivity)});
      }
    }
  }

  const auto attacks = attack_columns(r);
  for (const auto& col : metric_columns()) {
    std::vector<std::string> head{"Dataset", "Model"};
    for (auto a : attacks) head.push_back(attack_name(a));
    std::vector<std::vector<std::string>> rows;
    for (const auto& [dataset, model] : model_rows(r)) {
      std::vector<std::string> row{dataset, model_name(model)};
      for (auto a : attacks) {
        const auto* c = find_cell(r, dataset, model, a);
        if (!c) {
          row.push_back("-");
        } else if (c->error) {
          row.push_back("failed");
        } else {
          const int decimals = col.key == "sparsity" ? 2 : 4;
          row.push_back(format_fixed(c->all.*col.field, decimals) + (c->gated ? " †" : ""));
        }
      }
      rows.push_back(std::move(row));
    }
    write_markdown_table(dir / fmt::format("metric_{}.md", col.key), r, col.title, head, rows,
                         fmt::format("† success rate below {:.0f}%; value kept but excluded from comparison.",
                                     100.0 * r.config.effectiveness_threshold));
  }
}

void emit_boxplot(const BenchmarkResult& r, const std::filesystem::path& dir) {
  Writer w(dir / "boxplot.csv");
  w.stream() << "# " << header_line(r) << '\n';
  w.row({"dataset", "model", "attack", "group", "metric", "n", "min", "q1", "median", "q3", "max", "complete"});
  for (const auto& c : r.cells) {
    if (c.error) continue;
    for (const auto& [group, g] : {std::pair<std::string, const GroupStats*>{"successful", &c.groups.successful},
                                   {"unsuccessful", &c.groups.unsuccessful}}) {
      for (const auto& [metric, s] : {std::pair<std::string, const FiveNumber*>{"l2", &g->l2},
                                      {"md", &g->deviation},
                                      {"sen", &g->sensitivity}}) {
        w.row({c.dataset, model_name(c.model), attack_name(c.attack.kind), group, metric, std::to_string(s->n),
               format_double(s->min), format_double(s->q1), format_double(s->median), format_double(s->q3),
               format_double(s->max), c.groups.complete ? "true" : "false"});
      }
    }
  }
}

void emit_heatmap(const BenchmarkResult& r, const std::filesystem::path& dir) {
  Writer w(dir / "heatmap.csv");
  w.stream() << "# " << header_line(r) << '\n';
  w.row({"dataset", "model", "attack", "feature", "count", "n_examples"});
  for (const auto& c : r.cells) {
    if (c.error) continue;
    for (std::size_t f = 0; f < c.counts.features.size(); ++f) {
      w.row({c.dataset, model_name(c.model), attack_name(c.attack.kind), c.counts.features[f],
             std::to_string(c.counts.counts[f]), std::to_string(c.counts.n_examples)});
    }
  }
}

void emit_violations(const BenchmarkResult& r, const std::filesystem::path& dir) {
  Writer w(dir / "violations.csv");
  w.stream() << "# " << header_line(r) << '\n';
  w.row({"dataset", "model", "attack", "check", "feature", "count", "n_examples"});
  for (const auto& c : r.cells) {
    if (c.error) continue;
    const std::vector<std::string> key{c.dataset, model_name(c.model), attack_name(c.attack.kind)};
    auto emit = [&](const std::string& check, const std::string& feature, std::size_t count) {
      auto row = key;
      row.insert(row.end(), {check, feature, std::to_string(count), std::to_string(c.violations.n_examples)});
      w.row(row);
    };
    for (const auto& [f, n] : c.violations.immutability) emit("immutability", f, n);
    for (const auto& [f, n] : c.violations.feasibility) emit("feasibility", f, n);
    emit("interdependency", "", c.violations.interdependency);
  }
}

void emit_failures(const BenchmarkResult& r, const std::filesystem::path& dir) {
  Writer w(dir / "failures.csv");
  w.stream() << "# " << header_line(r) << '\n';
  w.row({"dataset", "model", "attack", "error"});
  for (const auto& m : r.models) {
    if (m.error) w.row({m.dataset, model_name(m.model), "", *m.error});
  }
  for (const auto& c : r.cells) {
    if (c.error) w.row({c.dataset, model_name(c.model), attack_name(c.attack.kind), *c.error});
  }
}

void emit_examples(const BenchmarkResult& r, const std::filesystem::path& dir) {
  const auto sub = dir / "examples";
  std::filesystem::create_directories(sub);
  for (const auto& c : r.cells) {
    if (c.error || c.examples.empty()) continue;
    const DatasetContext* ctx = r.dataset(c.dataset);
    if (!ctx) continue;
    Writer w(sub / fmt::format("{}_{}_{}.csv", c.dataset, model_name(c.model), attack_name(c.attack.kind)));
    w.stream() << "# " << header_line(r) << '\n';
    std::vector<std::string> head{"row_id", "true_label", "original_pred", "adversarial_pred", "success",
                                  "iterations", "l1", "l2", "linf", "md", "sen", "sparsity"};
    for (const auto& f : ctx->schema.features) {
      head.push_back(f.name);
      head.push_back(f.name + "_adv");
    }
    w.row(head);
    for (std::size_t i = 0; i < c.examples.size(); ++i) {
      const auto& ex = c.examples[i];
      const auto& m = c.records[i];
      std::vector<std::string> row{std::to_string(ex.row_id),        std::to_string(ex.true_label),
                                   std::to_string(ex.original_pred), std::to_string(ex.adversarial_pred),
                                   ex.success ? "1" : "0",           std::to_string(ex.iterations_used),
                                   format_double(m.l1),              format_double(m.l2),
                                   format_double(m.linf),            format_double(m.deviation),
                                   format_double(m.sensitivity),     std::to_string(m.sparsity)};
      const auto before = ctx->data.encoder.decode(ex.original);
      const auto after = ctx->data.encoder.decode(ex.perturbed);
      for (std::size_t f = 0; f < before.size(); ++f) {
        row.push_back(value_to_string(before[f]));
        row.push_back(value_to_string(after[f]));
      }
      w.row(row);
    }
  }
}

void emit_cases(const BenchmarkResult& r, const std::filesystem::path& dir) {
  if (r.config.case_reports == 0) return;
  const auto sub = dir / "cases";
  std::filesystem::create_directories(sub);
  for (const auto& [dataset, model] : model_rows(r)) {
    const DatasetContext* ctx = r.dataset(dataset);
    if (!ctx) continue;
    std::vector<const CellReport*> cells;
    for (const auto& c : r.cells) {
      if (c.dataset == dataset && c.model == model && !c.error && !c.examples.empty()) cells.push_back(&c);
    }
    if (cells.empty()) continue;
    const std::size_t n = cells.front()->examples.size();

    // Rows flipped by the most attacks come first; test order breaks ties.
    std::vector<std::pair<std::size_t, std::size_t>> ranked;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t hits = 0;
      for (const auto* c : cells) hits += c->examples[i].success && c->examples[i].original_pred == c->examples[i].true_label;
      if (hits > 0) ranked.emplace_back(hits, i);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    ranked.resize(std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(r.config.case_reports)));

    Writer w(sub / fmt::format("{}_{}.txt", dataset, model_name(model)));
    w.stream() << "# " << header_line(r) << "\n\n";
    for (const auto& [hits, i] : ranked) {
      const auto& first = cells.front()->examples[i];
      std::vector<std::pair<std::string, Eigen::VectorXd>> perturbed;
      for (const auto* c : cells) perturbed.emplace_back(attack_name(c->attack.kind), c->examples[i].perturbed);
      const std::string title = fmt::format("Case #{} ({} / {}, true label {})", first.row_id, dataset,
                                            model_name(model), first.true_label);
      w.stream() << format_case_report(title, ctx->schema, ctx->data.encoder, first.original, perturbed);
      for (const auto* c : cells) {
        const auto& ex = c->examples[i];
        std::vector<std::string> notes;
        notes.push_back(ex.success ? "success" : "no flip");
        for (const auto& f : check_immutability(ex, ctx->schema, ctx->data.encoder)) notes.push_back("immutable " + f);
        for (const auto& v : check_feasibility(ex, ctx->schema, ctx->data.encoder)) {
          if (v.violated) notes.push_back(fmt::format("infeasible {}={:.2f}", v.feature, v.perturbed));
        }
        for (const auto* rule : check_interdependency(ex, ctx->schema.interdependencies, ctx->schema,
                                                      ctx->data.encoder)) {
          notes.push_back(fmt::format("inconsistent {}/{}", rule->source, rule->derived));
        }
        w.stream() << fmt::format("  {}: {}\n", attack_name(c->attack.kind), fmt::join(notes, ", "));
      }
      w.stream() << "  (* marks a changed feature)\n\n";
    }
  }
}

void emit_run_info(const BenchmarkResult& r, const std::filesystem::path& dir) {
  json j;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["timestamp"] = stamp;
  j["config_hash"] = r.config.hash();
  j["seed"] = r.config.seed;
  j["parallelism"] = r.config.parallelism;
  j["failures"] = r.failures();
  j["timings"] = json::array();
  for (const auto& m : r.models) {
    j["timings"].push_back({{"dataset", m.dataset}, {"model", model_name(m.model)}, {"seconds", m.seconds}});
  }
  for (const auto& c : r.cells) {
    j["timings"].push_back({{"dataset", c.dataset},
                            {"model", model_name(c.model)},
                            {"attack", attack_name(c.attack.kind)},
                            {"seconds", c.seconds}});
  }
  Writer w(dir / "run_info.json");
  w.stream() << j.dump(2) << '\n';
}

}  // namespace

void emit_reports(const BenchmarkResult& result, const std::filesystem::path& dir) {
  if (result.models.empty() && result.cells.empty()) throw ContractError("no reports to emit");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));

  emit_accuracy(result, dir);
  if (!result.cells.empty()) {
    emit_success(result, dir);
    emit_metrics(result, dir);
    emit_boxplot(result, dir);
    emit_heatmap(result, dir);
    emit_violations(result, dir);
  }
  emit_failures(result, dir);
  if (result.config.dump_examples) emit_examples(result, dir);
  emit_cases(result, dir);
  {
    Writer w(dir / "results.json");
    w.stream() << result.to_json().dump(1) << '\n';
  }
  emit_run_info(result, dir);
}

}  // namespace tabadv
