#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "csguide/evaluation.hpp"
#include "csguide/ml/predictor.hpp"
#include "csguide/pipeline.hpp"
#include "csguide/qual_features.hpp"
#include "csguide/quant_features.hpp"
#include "csguide/synthcohort.hpp"
#include "csguide/text.hpp"
#include "support.hpp"

using namespace csguide;
using namespace csguide::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] criterion %d: %s -- %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome quant_exactness() {
  const auto start = Clock::now();
  const CourseCatalog catalog = standard_catalog();
  Rng rng(20240901);
  long weeks = 0, mismatches = 0;
  std::array<long, kQuantCount> fired{};
  std::string first;
  for (int s = 0; s < 1000; ++s) {
    const auto sem = random_semester(rng, catalog, "Q" + std::to_string(s));
    const auto got = extract_quant(sem, catalog);
    for (std::size_t w = 0; w < got.size(); ++w, ++weeks) {
      const auto want = quant_oracle(sem, static_cast<int>(w) + 1, catalog);
      for (std::size_t k = 0; k < kQuantCount; ++k) fired[k] += want.test_index(k) ? 1 : 0;
      if (got[w] != want) {
        if (first.empty())
          first = sem.student_id + " week " + std::to_string(w + 1) + ": {" + got[w].encode() + "} vs oracle {" +
                  want.encode() + "}";
        ++mismatches;
      }
    }
  }
  const double t = seconds_since(start);
  std::string detail = "1000 semesters, " + std::to_string(weeks) + " weeks, " + std::to_string(mismatches) +
                       " mismatches, " + fixed(t, 2) + " s, rarest flag fired " +
                       std::to_string(*std::min_element(fired.begin(), fired.end())) + " times";
  if (!first.empty()) detail += "; first: " + first;
  const bool all_exercised = std::all_of(fired.begin(), fired.end(), [](long n) { return n > 0; });
  return {mismatches == 0 && all_exercised && t < 10.0, detail};
}

Outcome rule_table_fidelity() {
  const auto start = Clock::now();
  const RuleTable table = RuleTable::load(data_path("rule_table.json"));
  const auto rows = load_closures(fixture_path("rule_closures.tsv"));
  int matched = 0;
  std::string first;
  for (const auto& row : rows) {
    if (expand_rule(table, row.trigger) == row.expected) ++matched;
    else if (first.empty())
      first = std::string(row.trigger.code()) + " -> {" + expand_rule(table, row.trigger).encode() + "}";
  }
  const double t = seconds_since(start);
  std::string detail = std::to_string(matched) + "/" + std::to_string(rows.size()) + " rows, " + fixed(t, 3) + " s";
  if (!first.empty()) detail += "; first mismatch " + first;
  return {rows.size() == kTriggerCount && matched == static_cast<int>(rows.size()) && t < 1.0, detail};
}

Outcome escalation_scenarios() {
  const auto start = Clock::now();
  const RuleEngine engine = standard_engine();
  const auto scenarios = load_scenarios(fixture_path("escalation_scenarios.txt"));
  int passed = 0;
  std::string first;
  for (const auto& s : scenarios) {
    const std::string diff = check_scenario(engine, s);
    if (diff.empty()) ++passed;
    else if (first.empty()) first = diff;
  }
  const double t = seconds_since(start);
  std::string detail =
      std::to_string(passed) + "/" + std::to_string(scenarios.size()) + " scenarios, " + fixed(t, 3) + " s";
  if (!first.empty()) detail += "; first failure " + first;
  return {scenarios.size() >= 50 && passed == static_cast<int>(scenarios.size()) && t < 5.0, detail};
}

// Shared by criteria 4 and 6.
struct Benchmark {
  std::vector<ComparisonRow> rows;
  std::vector<MethodPredictions> methods;
  std::vector<GroundTruthRecord> truth;
  std::size_t train_samples = 0, test_samples = 0;
  double seconds = 0;
};

std::vector<ml::EncodedSample> featurize(const SyntheticCohort& cohort, const CourseCatalog& catalog,
                                         const Lexicon& lexicon, std::vector<std::pair<std::string, int>>* keys,
                                         std::vector<WeeklyDecision>* rule_decisions, const RuleEngine& engine) {
  QualOptions options;
  options.lexicon = &lexicon;
  const auto qual = extract_qual_all(cohort.semesters, options, 1);
  std::map<std::pair<std::string, int>, InterventionSet> labels;
  for (const auto& r : cohort.labels) labels[{r.student_id, r.semester_week}] = r.labeled_interventions;
  std::vector<ml::EncodedSample> out;
  for (std::size_t i = 0; i < cohort.semesters.size(); ++i) {
    const auto& sem = cohort.semesters[i];
    const auto quant = extract_quant(sem, catalog);
    if (rule_decisions) {
      auto d = engine.run_semester(sem, quant, qual[i].weeks);
      rule_decisions->insert(rule_decisions->end(), d.begin(), d.end());
    }
    for (std::size_t w = 0; w < quant.size(); ++w) {
      const int week = static_cast<int>(w) + 1;
      const auto& label = labels.at({sem.student_id, week});
      out.push_back(ml::encode(week, sem.calendar, quant[w], qual[i].weeks[w], &label));
      if (keys) keys->emplace_back(sem.student_id, week);
    }
  }
  return out;
}

const Benchmark& benchmark() {
  static const Benchmark bench = [] {
    Benchmark b;
    const auto start = Clock::now();
    const RuleEngine engine = standard_engine();
    const PhraseBank bank = PhraseBank::load(data_path("phrase_bank.json"));
    const Lexicon lexicon = Lexicon::load(data_path("lexicon.json"));
    CohortConfig cfg;
    cfg.calendar = standard_calendar();
    cfg.catalog = standard_catalog();
    cfg.archetype_mix = default_archetype_mix();
    cfg.student_count = 227;
    cfg.seed = 42;
    cfg.id_prefix = "TR";
    const auto train_cohort = generate_cohort(cfg, bank, engine);
    cfg.student_count = 107;
    cfg.seed = 43;
    cfg.id_prefix = "TE";
    const auto test_cohort = generate_cohort(cfg, bank, engine);

    const auto train = featurize(train_cohort, cfg.catalog, lexicon, nullptr, nullptr, engine);
    std::vector<std::pair<std::string, int>> keys;
    std::vector<WeeklyDecision> rules;
    const auto test = featurize(test_cohort, cfg.catalog, lexicon, &keys, &rules, engine);
    b.train_samples = train.size();
    b.test_samples = test.size();
    b.truth = test_cohort.labels;
    b.methods.push_back({"rule_based", rules});

    auto as_decisions = [&](const ml::PredictorModel& model) {
      const auto predicted = ml::predict_all(model, test);
      std::vector<WeeklyDecision> out(predicted.size());
      for (std::size_t i = 0; i < predicted.size(); ++i) {
        out[i].student_id = keys[i].first;
        out[i].semester_week = keys[i].second;
        out[i].interventions = predicted[i];
      }
      return out;
    };
    b.methods.push_back({"cart", as_decisions(ml::train_cart(train))});
    ml::ForestParams fp;
    fp.bootstrap_seed = 42;
    b.methods.push_back({"forest", as_decisions(ml::train_forest(train, fp))});
    ml::MlpParams mp;
    mp.seed = 42;
    b.methods.push_back({"mlp", as_decisions(ml::train_mlp(train, mp))});

    ComparisonOptions options;
    options.level = 0.90;
    options.resamples = 1000;
    options.seed = 42;
    b.rows = compare_predictors(b.methods, b.truth, options);
    b.seconds = seconds_since(start);
    return b;
  }();
  return bench;
}

Outcome ml_oracle_equivalence() {
  const Benchmark& b = benchmark();
  const std::map<std::string, double> thresholds = {{"cart", 0.93}, {"forest", 0.94}, {"mlp", 0.94}};
  bool pass = b.seconds < 300.0 && b.train_samples >= 3300 && b.train_samples <= 3500;
  std::string detail = std::to_string(b.train_samples) + " train / " + std::to_string(b.test_samples) + " test entries;";
  for (const auto& row : b.rows) {
    detail += " " + row.method + " F1 " + fixed(row.micro.f1);
    auto it = thresholds.find(row.method);
    if (it != thresholds.end()) {
      detail += " (>= " + fixed(it->second, 2) + ")";
      pass = pass && row.micro.f1 >= it->second;
    }
    detail += ";";
  }
  detail += " " + fixed(b.seconds, 1) + " s";
  return {pass, detail};
}

Outcome metric_formulas() {
  struct Case {
    ConfusionCounts c;
    double accuracy, precision, recall, f1;
  };
  // Expected values worked out by hand from the counts.
  const std::vector<Case> cases = {
      {{5, 90, 3, 2}, 95.0 / 100.0, 5.0 / 8.0, 5.0 / 7.0, 2.0 / 3.0},
      {{0, 10, 0, 5}, 10.0 / 15.0, 0.0, 0.0, 0.0},
      {{0, 10, 0, 0}, 1.0, 0.0, 0.0, 0.0},
      {{0, 6, 4, 0}, 0.6, 0.0, 0.0, 0.0},
      {{7, 3, 0, 0}, 1.0, 1.0, 1.0, 1.0},
      {{1, 0, 1, 1}, 1.0 / 3.0, 0.5, 0.5, 0.5},
      {{3, 0, 0, 9}, 0.25, 1.0, 0.25, 0.4},
      {{10, 0, 30, 0}, 0.25, 0.25, 1.0, 0.4},
      {{1234, 56789, 321, 123}, 58023.0 / 58467.0, 1234.0 / 1555.0, 1234.0 / 1357.0, 2468.0 / 2912.0},
      {{0, 0, 3, 2}, 0.0, 0.0, 0.0, 0.0},
  };
  double worst = 0;
  int bad = 0;
  for (const auto& k : cases) {
    const MetricsReport m = metrics(k.c);
    const double err = std::max({std::abs(m.accuracy - k.accuracy), std::abs(m.precision - k.precision),
                                 std::abs(m.recall - k.recall), std::abs(m.f1 - k.f1)});
    worst = std::max(worst, err);
    if (err > 1e-12) ++bad;
  }
  bool zero_total_rejected = false;
  try {
    metrics(ConfusionCounts{});
  } catch (const Error&) {
    zero_total_rejected = true;
  }
  return {bad == 0 && zero_total_rejected,
          std::to_string(cases.size() - bad) + "/" + std::to_string(cases.size()) +
              " matrices, max abs error " + text::format_double(worst) +
              (zero_total_rejected ? ", empty matrix rejected" : ", empty matrix NOT rejected")};
}

Outcome ci_stability() {
  const Benchmark& b = benchmark();
  double widest = 0;
  std::string widest_at;
  bool deterministic = true;
  for (const auto& m : b.methods) {
    const auto per_student = per_student_metrics(m.decisions, b.truth);
    const auto a = bootstrap_ci(per_student, 0.90, 1000, 42, 1);
    const auto c = bootstrap_ci(per_student, 0.90, 1000, 42, 4);
    for (auto [x, y, name] : {std::tuple{a.accuracy, c.accuracy, "accuracy"}, std::tuple{a.precision, c.precision, "precision"},
                              std::tuple{a.recall, c.recall, "recall"}, std::tuple{a.f1, c.f1, "f1"}}) {
      if (x.lo != y.lo || x.hi != y.hi || x.point != y.point) deterministic = false;
      if (x.half_width() > widest) {
        widest = x.half_width();
        widest_at = m.method + " " + name;
      }
    }
  }
  for (const auto& row : b.rows)
    for (const Interval* i : {&row.intervals.accuracy, &row.intervals.precision, &row.intervals.recall, &row.intervals.f1})
      if (i->half_width() > widest) widest = i->half_width();
  return {widest <= 0.02 && deterministic, "max half-width " + fixed(widest) + " (" + widest_at +
                                               "), repeat runs " + (deterministic ? "identical" : "DIFFER")};
}

Outcome journal_fallback() {
  const auto start = Clock::now();
  const Lexicon lexicon = Lexicon::load(data_path("lexicon.json"));
  const auto lines = text::split(read_file(data_path("journal_corpus.tsv")), '\n');
  int total = 0, covered = 0, covered_ok = 0, negatives = 0, negatives_clean = 0;
  std::string first;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = text::split(lines[i], '\t');
    if (cells.size() != 7) throw Error("journal corpus: malformed row " + std::to_string(i));
    ++total;
    WeeklyReport r;
    r.student_id = cells[0];
    r.journal_cs = text::unescape_cell(cells[4]);
    r.journal_noncs = text::unescape_cell(cells[5]);
    r.journal_personal = text::unescape_cell(cells[6]);
    const QualFeatures got = annotate_fallback(r, lexicon).flags;
    const QualFeatures want = QualFeatures::decode(cells[3]);
    if (cells[2] == "1") {
      ++covered;
      if (got == want) ++covered_ok;
      else if (first.empty()) first = cells[0] + " {" + got.encode() + "} expected {" + want.encode() + "}";
    }
    if (cells[1] == "negative") {
      ++negatives;
      if (got.none()) ++negatives_clean;
      else if (first.empty()) first = cells[0] + " fired {" + got.encode() + "}";
    }
  }
  const double t = seconds_since(start);
  std::string detail = std::to_string(total) + " entries; covered exact " + std::to_string(covered_ok) + "/" +
                       std::to_string(covered) + "; negatives silent " + std::to_string(negatives_clean) + "/" +
                       std::to_string(negatives) + "; " + fixed(t, 3) + " s";
  if (!first.empty()) detail += "; first miss " + first;
  return {total >= 200 && covered_ok == covered && negatives_clean == negatives && negatives > 0 && t < 2.0, detail};
}

double max_gradient_error(bool batch_norm, double dropout) {
  using Net = ml::Mlp<double>;
  Rng init(7);
  Net net(5, {4, 3}, 3, batch_norm, dropout, 0.01, true, init);
  Rng data_rng(11);
  Net::Matrix x(6, 5), y(6, 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = data_rng.uniform(-1, 1);
    for (Eigen::Index j = 0; j < y.cols(); ++j) y(i, j) = data_rng.bernoulli(0.5) ? 1 : 0;
  }
  for (auto& p : net.params())
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] += data_rng.uniform(-0.3, 0.3);

  const Rng mask(99);
  std::vector<Net::Matrix> grads;
  Rng r0 = mask;
  net.loss_and_gradients(x, y, grads, dropout > 0 ? &r0 : nullptr);
  auto objective = [&] {
    Rng r = mask;
    return net.loss(net.forward(x, true, dropout > 0 ? &r : nullptr), y);
  };
  const double h = 1e-6;
  double worst = 0;
  for (std::size_t p = 0; p < net.params().size(); ++p) {
    if (!batch_norm && p % 3 == 1 && p + 2 < net.params().size()) continue;  // unused gamma
    auto& m = net.params()[p];
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      const double saved = m.data()[k];
      m.data()[k] = saved + h;
      const double up = objective();
      m.data()[k] = saved - h;
      const double down = objective();
      m.data()[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads[p].data()[k];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

Outcome gradient_check() {
  const double with_bn = max_gradient_error(true, 0.0);
  const double without_bn = max_gradient_error(false, 0.0);
  const double with_dropout = max_gradient_error(true, 0.3);
  const double worst = std::max({with_bn, without_bn, with_dropout});
  char buf[160];
  std::snprintf(buf, sizeof buf, "max relative error %.2e (batch norm %.2e, plain %.2e, dropout %.2e)", worst,
                with_bn, without_bn, with_dropout);
  return {worst < 1e-4, buf};
}

Outcome pipeline_determinism() {
  const auto start = Clock::now();
  const fs::path root = fs::temp_directory_path() / ("csguide_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  auto run_once = [&](const std::string& name, const std::string& workers) {
    const std::string out = (root / name).string();
    std::ostringstream sink, log;
    auto run = [&](std::vector<std::string> args) {
      args.insert(args.begin(), {"csguide", "--seed", "7", "--workers", workers, "--out", out});
      const int rc = cli::run(args, sink, log);
      if (rc != 0) throw Error("pipeline step '" + args[7] + "' exited " + std::to_string(rc) + ": " + log.str());
    };
    const std::string corpus = out + "/corpus.tsv", quant = out + "/quant.tsv", qual = out + "/qual.tsv";
    run({"synth", "--students", "60", "--late-posting", "0.05", "--typo", "0.02", "--skip-journal", "0.05"});
    run({"ingest", "--reports", out + "/reports.tsv"});
    run({"extract", "--corpus", corpus});
    run({"train", "--corpus", corpus, "--quant", quant, "--qual", qual, "--labels", out + "/labels.tsv"});
    run({"evaluate", "--corpus", corpus, "--quant", quant, "--qual", qual, "--labels", out + "/labels.tsv",
         "--models", out});
  };
  run_once("first", "1");
  run_once("second", "3");
  const std::vector<std::string> artifacts = {"reports.tsv",     "corpus.tsv",       "quant.tsv",     "qual.tsv",
                                              "model_cart.txt",  "model_forest.txt", "model_mlp.txt", "comparison.tsv",
                                              "comparison.json", "training_mlp.json"};
  int identical = 0;
  std::string differs;
  for (const auto& a : artifacts) {
    if (read_file(root / "first" / a) == read_file(root / "second" / a)) ++identical;
    else differs += " " + a;
  }
  fs::remove_all(root);
  const double t = seconds_since(start);
  std::string detail = std::to_string(identical) + "/" + std::to_string(artifacts.size()) +
                       " artifacts byte-identical across two runs (1 and 3 workers), " + fixed(t, 1) + " s";
  if (!differs.empty()) detail += "; differing:" + differs;
  return {identical == static_cast<int>(artifacts.size()), detail};
}

}  // namespace

int main() {
  report(1, "quantitative extraction matches brute-force oracle", quant_exactness);
  report(2, "rule table closures match golden file", rule_table_fidelity);
  report(3, "escalation golden scenarios", escalation_scenarios);
  report(4, "ML oracle equivalence on held-out cohort", ml_oracle_equivalence);
  report(5, "metric formulas on fixed confusion matrices", metric_formulas);
  report(6, "bootstrap interval width and determinism", ci_stability);
  report(7, "fallback qualitative extraction on journal corpus", journal_fallback);
  report(8, "MLP analytic gradients vs finite differences", gradient_check);
  report(9, "pipeline determinism", pipeline_determinism);
  std::printf("%d of 9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
