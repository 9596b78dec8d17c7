#include "csguide/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "csguide/evaluation.hpp"
#include "csguide/ingestion.hpp"
#include "csguide/parallel.hpp"
#include "csguide/quant_features.hpp"
#include "csguide/rule_engine.hpp"
#include "csguide/synthcohort.hpp"
#include "csguide/text.hpp"

#ifndef CSGUIDE_DATA_DIR
#define CSGUIDE_DATA_DIR "data"
#endif

namespace csguide::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kVersion = "csguide 1.0.0";

std::string file_hash(const fs::path& p) { return text::hex64(text::fnv1a(read_file(p))); }

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ostringstream s;
  fn(s);
  write_text(path, s.str());
}

class Manifest {
public:
  Manifest(std::string command, const RunConfig& config) : command_(std::move(command)), config_(config) {}

  void input(const std::string& name, const fs::path& p) { inputs_[name] = {{"path", p.string()}, {"hash", file_hash(p)}}; }
  void output(const std::string& name, const fs::path& p) {
    outputs_[name] = {{"path", p.filename().string()}, {"hash", file_hash(p)}};
  }
  void arg(const std::string& name, json value) { args_[name] = std::move(value); }

  void write() const {
    json doc = {{"command", command_},
                {"version", kVersion},
                {"seed", config_.seed},
                {"config_hash", config_.hash()},
                {"config", json::parse(config_.to_json())},
                {"args", args_},
                {"inputs", inputs_},
                {"outputs", outputs_}};
    write_text(config_.out / ("manifest_" + command_ + ".json"), doc.dump(2) + "\n");
  }

private:
  std::string command_;
  const RunConfig& config_;
  json inputs_ = json::object(), outputs_ = json::object(), args_ = json::object();
};

RuleEngine load_engine(const RunConfig& c) { return {RuleTable::load(c.rule_table), ConflictOverlay::load(c.overlay)}; }

std::vector<StudentSemester> load_corpus(const fs::path& path, const AcademicCalendar& calendar) {
  return read_corpus(read_file(path), calendar);
}

template <typename Enum>
std::vector<std::vector<FlagSet<Enum>>> load_matrix(const fs::path& path, const std::vector<StudentSemester>& corpus) {
  auto m = read_feature_matrix<Enum>(read_file(path));
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < m.student_ids.size(); ++i) index[m.student_ids[i]] = i;
  std::vector<std::vector<FlagSet<Enum>>> out;
  for (const auto& sem : corpus) {
    auto it = index.find(sem.student_id);
    if (it == index.end()) throw Error(path.filename().string() + ": no rows for student '" + sem.student_id + "'");
    if (m.rows[it->second].size() != sem.reports.size())
      throw Error(path.filename().string() + ": week count differs for student '" + sem.student_id + "'");
    out.push_back(m.rows[it->second]);
  }
  return out;
}

std::vector<std::string> ids_of(const std::vector<StudentSemester>& corpus) {
  std::vector<std::string> ids;
  for (const auto& s : corpus) ids.push_back(s.student_id);
  return ids;
}

QualOptions qual_options(const RunConfig& c, const Lexicon& lex, const PromptTemplate* prompt, AnnotationCache* cache) {
  QualOptions o;
  o.mode = c.annotator;
  o.lexicon = &lex;
  o.prompt = prompt;
  o.remote = c.remote;
  o.cache = cache;
  return o;
}

std::vector<WeeklyDecision> decisions_from(const std::vector<InterventionSet>& predicted,
                                           const std::vector<std::pair<std::string, int>>& keys) {
  std::vector<WeeklyDecision> out(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    out[i].student_id = keys[i].first;
    out[i].semester_week = keys[i].second;
    out[i].interventions = predicted[i];
  }
  return out;
}

std::vector<WeeklyDecision> rule_decisions(const RunConfig& config, const FeatureInputs& in,
                                           const AcademicCalendar& calendar) {
  const auto corpus = load_corpus(in.corpus, calendar);
  const auto quant = load_matrix<QuantFlag>(in.quant, corpus);
  const auto qual = load_matrix<QualFlag>(in.qual, corpus);
  const RuleEngine engine = load_engine(config);
  std::vector<WeeklyDecision> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto d = engine.run_semester(corpus[i], quant[i], qual[i]);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

fs::path model_path(const fs::path& dir, ml::ModelKind kind) {
  return dir / ("model_" + std::string(ml::to_string(kind)) + ".txt");
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

RunConfig RunConfig::defaults() {
  const fs::path data = CSGUIDE_DATA_DIR;
  RunConfig c;
  c.calendar = data / "calendar.conf";
  c.catalog = data / "catalog.conf";
  c.rule_table = data / "rule_table.json";
  c.overlay = data / "conflict_overlay.json";
  c.lexicon = data / "lexicon.json";
  c.prompt_template = data / "prompt_template.json";
  c.phrase_bank = data / "phrase_bank.json";
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  RunConfig c = defaults();
  const fs::path base = path.parent_path();
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw UsageError("config '" + path.string() + "': " + e.what());
  }
  auto resolve = [&](const char* key, fs::path& target) {
    if (!doc.contains(key)) return;
    fs::path p = doc[key].get<std::string>();
    target = p.is_absolute() ? p : base / p;
  };
  try {
    resolve("calendar", c.calendar);
    resolve("catalog", c.catalog);
    resolve("rule_table", c.rule_table);
    resolve("overlay", c.overlay);
    resolve("lexicon", c.lexicon);
    resolve("prompt_template", c.prompt_template);
    resolve("phrase_bank", c.phrase_bank);
    resolve("out", c.out);
    c.seed = doc.value("seed", c.seed);
    c.workers = doc.value("workers", c.workers);
    if (doc.contains("annotator")) {
      const json& a = doc["annotator"];
      const std::string mode = a.value("mode", "fallback");
      if (mode != "fallback" && mode != "remote") throw UsageError("annotator mode must be remote or fallback");
      c.annotator = mode == "remote" ? AnnotatorMode::Remote : AnnotatorMode::Fallback;
      c.remote.endpoint_url = a.value("endpoint", c.remote.endpoint_url);
      c.remote.model_name = a.value("model", c.remote.model_name);
      c.remote.temperature = a.value("temperature", c.remote.temperature);
      c.remote.max_retries = a.value("max_retries", c.remote.max_retries);
      c.remote.timeout = std::chrono::milliseconds(a.value("timeout_ms", static_cast<long>(c.remote.timeout.count())));
    }
    if (doc.contains("cart")) {
      const json& j = doc["cart"];
      c.cart.max_depth = j.value("max_depth", c.cart.max_depth);
      c.cart.min_samples_split = j.value("min_samples_split", c.cart.min_samples_split);
      c.cart.min_samples_leaf = j.value("min_samples_leaf", c.cart.min_samples_leaf);
      c.cart.balanced_class_weight = j.value("class_weight", std::string("balanced")) == "balanced";
      c.cart.max_rules_per_target = j.value("max_rules_per_target", c.cart.max_rules_per_target);
      c.cart.min_samples_for_rule = j.value("min_samples_for_rule", c.cart.min_samples_for_rule);
    }
    if (doc.contains("forest")) {
      const json& j = doc["forest"];
      c.forest.tree_count = j.value("tree_count", c.forest.tree_count);
      c.forest.max_depth = j.value("max_depth", c.forest.max_depth);
      c.forest.min_rule_frequency = j.value("min_rule_frequency", c.forest.min_rule_frequency);
      c.forest.bootstrap = j.value("bootstrap", c.forest.bootstrap);
      c.forest.min_samples_split = j.value("min_samples_split", c.forest.min_samples_split);
      c.forest.min_samples_leaf = j.value("min_samples_leaf", c.forest.min_samples_leaf);
    }
    if (doc.contains("mlp")) {
      const json& j = doc["mlp"];
      c.mlp.layer_widths = j.value("layer_widths", c.mlp.layer_widths);
      c.mlp.dropout_rate = j.value("dropout_rate", c.mlp.dropout_rate);
      c.mlp.l2_coefficient = j.value("l2_coefficient", c.mlp.l2_coefficient);
      c.mlp.batch_norm = j.value("batch_norm", c.mlp.batch_norm);
      c.mlp.epochs = j.value("epochs", c.mlp.epochs);
      c.mlp.learning_rate = j.value("learning_rate", c.mlp.learning_rate);
      c.mlp.batch_size = j.value("batch_size", c.mlp.batch_size);
      c.mlp.regularize_output = j.value("regularize_output", c.mlp.regularize_output);
      const std::string opt = j.value("optimizer", std::string("adam"));
      if (opt != "adam" && opt != "sgd") throw UsageError("mlp optimizer must be adam or sgd");
      c.mlp.optimizer = opt == "adam" ? ml::Optimizer::Adam : ml::Optimizer::Sgd;
    }
  } catch (const json::exception& e) {
    throw UsageError("config '" + path.string() + "': " + e.what());
  }
  return c;
}

void RunConfig::validate() const {
  for (const fs::path* p : {&calendar, &catalog, &rule_table, &overlay, &lexicon, &phrase_bank})
    if (!fs::exists(*p)) throw UsageError("config references missing file '" + p->string() + "'");
  if (annotator == AnnotatorMode::Remote && !fs::exists(prompt_template))
    throw UsageError("config references missing file '" + prompt_template.string() + "'");
  cart.validate();
  forest.validate();
  mlp.validate();
  remote.validate();
}

std::string RunConfig::to_json() const {
  json doc = {{"calendar", calendar.string()},
              {"catalog", catalog.string()},
              {"rule_table", rule_table.string()},
              {"overlay", overlay.string()},
              {"lexicon", lexicon.string()},
              {"prompt_template", prompt_template.string()},
              {"phrase_bank", phrase_bank.string()},
              {"seed", seed},
              {"annotator",
               {{"mode", annotator == AnnotatorMode::Remote ? "remote" : "fallback"},
                {"endpoint", remote.endpoint_url},
                {"model", remote.model_name},
                {"temperature", remote.temperature},
                {"max_retries", remote.max_retries},
                {"timeout_ms", remote.timeout.count()}}},
              {"cart",
               {{"max_depth", cart.max_depth},
                {"min_samples_split", cart.min_samples_split},
                {"min_samples_leaf", cart.min_samples_leaf},
                {"class_weight", cart.balanced_class_weight ? "balanced" : "none"},
                {"max_rules_per_target", cart.max_rules_per_target},
                {"min_samples_for_rule", cart.min_samples_for_rule}}},
              {"forest",
               {{"tree_count", forest.tree_count},
                {"max_depth", forest.max_depth},
                {"min_rule_frequency", forest.min_rule_frequency},
                {"bootstrap", forest.bootstrap},
                {"min_samples_split", forest.min_samples_split},
                {"min_samples_leaf", forest.min_samples_leaf}}},
              {"mlp",
               {{"layer_widths", mlp.layer_widths},
                {"dropout_rate", mlp.dropout_rate},
                {"l2_coefficient", mlp.l2_coefficient},
                {"batch_norm", mlp.batch_norm},
                {"epochs", mlp.epochs},
                {"learning_rate", mlp.learning_rate},
                {"batch_size", mlp.batch_size},
                {"regularize_output", mlp.regularize_output},
                {"optimizer", mlp.optimizer == ml::Optimizer::Adam ? "adam" : "sgd"}}}};
  return doc.dump();
}

std::string RunConfig::hash() const { return text::hex64(text::fnv1a(to_json())); }

void Logger::log(std::string_view level, std::string_view event, const std::string& fields_json) {
  if (!sink_) return;
  json rec = {{"level", level}, {"event", event}};
  const json fields = json::parse(fields_json);
  for (const auto& [k, v] : fields.items()) rec[k] = v;
  *sink_ << rec.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& config, const IngestArgs& args, std::ostream& out, Logger& log) {
  const AcademicCalendar calendar = load_calendar(config.calendar);
  const CourseCatalog catalog = CourseCatalog::load(config.catalog);
  const IngestResult result =
      ingest(read_file(args.reports), calendar, catalog, ReportFormat{}, BuildOptions{args.keep_latest});

  Manifest m("ingest", config);
  m.input("reports", args.reports);
  m.input("calendar", config.calendar);
  m.input("catalog", config.catalog);
  m.arg("keep_latest", args.keep_latest);

  const fs::path issues = config.out / "issues.tsv";
  write_with(issues, [&](std::ostream& s) { write_issues(s, result.issues); });
  m.output("issues", issues);
  std::size_t errors = 0;
  for (const auto& i : result.issues) {
    errors += i.is_error() ? 1 : 0;
    log.log(i.is_error() ? "error" : "warning", "ingest.issue",
            json{{"kind", i.kind}, {"row", i.row}, {"student_id", i.student_id}, {"week", i.week}, {"reason", i.reason}}
                .dump());
  }
  if (!result.has_errors()) {
    const fs::path corpus = config.out / "corpus.tsv";
    write_with(corpus, [&](std::ostream& s) { write_corpus(s, result.semesters); });
    m.output("corpus", corpus);
  }
  m.write();
  out << "ingest: " << result.semesters.size() << " students, " << result.issues.size() << " issues (" << errors
      << " errors)\n";
  return result.has_errors() ? kDataError : kOk;
}

int cmd_extract(const RunConfig& config, const ExtractArgs& args, std::ostream& out, Logger& log) {
  const AcademicCalendar calendar = load_calendar(config.calendar);
  const CourseCatalog catalog = CourseCatalog::load(config.catalog);
  const auto corpus = load_corpus(args.corpus, calendar);
  const Lexicon lexicon = Lexicon::load(config.lexicon);
  std::optional<PromptTemplate> prompt;
  if (config.annotator == AnnotatorMode::Remote) prompt = PromptTemplate::load(config.prompt_template);

  const fs::path cache_path = args.cache.value_or(config.out / "annotation_cache.jsonl");
  AnnotationCache cache;
  cache.load(cache_path);

  std::vector<std::vector<QuantFeatures>> quant;
  for (const auto& sem : corpus) quant.push_back(extract_quant(sem, catalog));

  unsigned workers = std::max(1u, config.workers);
  if (config.annotator == AnnotatorMode::Remote) workers = std::min(workers, 4u);
  std::vector<QualExtraction> qual;
  try {
    qual = extract_qual_all(corpus, qual_options(config, lexicon, prompt ? &*prompt : nullptr, &cache), workers);
  } catch (const Error& e) {
    if (config.annotator == AnnotatorMode::Remote) throw AnnotatorFailure(e.what());
    throw;
  }

  std::size_t failures = 0;
  std::vector<AuditRecord> audit;
  std::vector<std::vector<QualFeatures>> qual_rows;
  for (std::size_t i = 0; i < qual.size(); ++i) {
    for (const auto& [week, reason] : qual[i].failures) {
      ++failures;
      log.log("warning", "extract.remote_failed",
              json{{"student_id", corpus[i].student_id}, {"week", week}, {"reason", reason}, {"fallback", true}}.dump());
    }
    audit.insert(audit.end(), qual[i].audit.begin(), qual[i].audit.end());
    qual_rows.push_back(qual[i].weeks);
  }

  Manifest m("extract", config);
  m.input("corpus", args.corpus);
  m.input("catalog", config.catalog);
  m.input("lexicon", config.lexicon);
  if (prompt) m.input("prompt_template", config.prompt_template);
  const auto ids = ids_of(corpus);
  const fs::path quant_path = config.out / "quant.tsv", qual_path = config.out / "qual.tsv",
                 audit_path = config.out / "audit.jsonl";
  write_with(quant_path, [&](std::ostream& s) { write_feature_matrix<QuantFlag>(s, ids, quant); });
  write_with(qual_path, [&](std::ostream& s) { write_feature_matrix<QualFlag>(s, ids, qual_rows); });
  write_with(audit_path, [&](std::ostream& s) { write_audit(s, audit); });
  if (cache_path.has_parent_path()) fs::create_directories(cache_path.parent_path());
  cache.save(cache_path);
  m.output("quant", quant_path);
  m.output("qual", qual_path);
  m.output("audit", audit_path);
  m.arg("annotator", config.annotator == AnnotatorMode::Remote ? "remote" : "fallback");
  m.write();
  out << "extract: " << corpus.size() << " students, " << audit.size() << " annotated weeks, " << failures
      << " remote failures (fallback used)\n";
  return kOk;
}

std::vector<ml::EncodedSample> load_samples(const FeatureInputs& inputs, const fs::path* labels,
                                            const AcademicCalendar& calendar,
                                            std::vector<std::pair<std::string, int>>* keys) {
  const auto corpus = load_corpus(inputs.corpus, calendar);
  const auto quant = load_matrix<QuantFlag>(inputs.quant, corpus);
  const auto qual = load_matrix<QualFlag>(inputs.qual, corpus);
  std::map<std::pair<std::string, int>, InterventionSet> by_key;
  if (labels)
    for (const auto& r : read_labels(read_file(*labels))) by_key[{r.student_id, r.semester_week}] = r.labeled_interventions;
  std::vector<ml::EncodedSample> out;
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t w = 0; w < corpus[i].reports.size(); ++w) {
      const int week = static_cast<int>(w) + 1;
      const InterventionSet* label = nullptr;
      if (labels) {
        auto it = by_key.find({corpus[i].student_id, week});
        if (it == by_key.end()) {
          missing.push_back(corpus[i].student_id + ":" + std::to_string(week));
          continue;
        }
        label = &it->second;
      }
      out.push_back(ml::encode(week, calendar, quant[i][w], qual[i][w], label));
      if (keys) keys->emplace_back(corpus[i].student_id, week);
    }
  }
  if (!missing.empty()) throw KeyMismatch(std::move(missing), {});
  return out;
}

int cmd_predict(const RunConfig& config, const PredictArgs& args, std::ostream& out, Logger& log) {
  const AcademicCalendar calendar = load_calendar(config.calendar);
  std::vector<WeeklyDecision> decisions;
  Manifest m("predict", config);
  m.input("corpus", args.features.corpus);
  m.input("quant", args.features.quant);
  m.input("qual", args.features.qual);
  m.arg("method", args.method);
  if (args.method == "rules") {
    decisions = rule_decisions(config, args.features, calendar);
  } else if (args.method == "model") {
    const auto model = ml::load_model(read_file(args.model));
    m.input("model", args.model);
    std::vector<std::pair<std::string, int>> keys;
    const auto samples = load_samples(args.features, nullptr, calendar, &keys);
    decisions = decisions_from(ml::predict_all(model, samples), keys);
  } else {
    throw UsageError("predict --method must be 'rules' or 'model'");
  }
  const fs::path path = config.out / "decisions.jsonl";
  write_with(path, [&](std::ostream& s) { write_decisions(s, decisions); });
  m.output("decisions", path);
  m.write();
  log.log("info", "predict.done", json{{"weeks", decisions.size()}, {"method", args.method}}.dump());
  out << "predict: " << decisions.size() << " weekly decisions\n";
  return kOk;
}

int cmd_train(const RunConfig& config, const TrainArgs& args, std::ostream& out, Logger& log) {
  const AcademicCalendar calendar = load_calendar(config.calendar);
  const auto samples = load_samples(args.features, &args.labels, calendar);
  std::vector<ml::ModelKind> kinds;
  if (args.method == "all") kinds = {ml::ModelKind::Cart, ml::ModelKind::Forest, ml::ModelKind::Mlp};
  else kinds = {ml::parse_model_kind(args.method)};

  Manifest m("train", config);
  m.input("corpus", args.features.corpus);
  m.input("quant", args.features.quant);
  m.input("qual", args.features.qual);
  m.input("labels", args.labels);
  m.arg("method", args.method);
  for (ml::ModelKind kind : kinds) {
    ml::PredictorModel model;
    switch (kind) {
      case ml::ModelKind::Cart: model = ml::train_cart(samples, config.cart, config.workers); break;
      case ml::ModelKind::Forest: {
        ml::ForestParams p = config.forest;
        p.bootstrap_seed = config.seed;
        model = ml::train_forest(samples, p, config.workers);
        break;
      }
      case ml::ModelKind::Mlp: {
        ml::MlpParams p = config.mlp;
        p.seed = config.seed;
        model = ml::train_mlp(samples, p);
        break;
      }
    }
    const fs::path path = model_path(config.out, kind);
    write_with(path, [&](std::ostream& s) { ml::save_model(s, model); });
    const fs::path manifest = config.out / ("training_" + std::string(ml::to_string(kind)) + ".json");
    write_text(manifest, ml::training_manifest(model) + "\n");
    m.output(std::string(ml::to_string(kind)), path);
    m.output(std::string(ml::to_string(kind)) + "_manifest", manifest);
    log.log("info", "train.done", json{{"method", ml::to_string(kind)}, {"samples", samples.size()}}.dump());
    out << "train: " << ml::to_string(kind) << " on " << samples.size() << " samples -> " << path.filename().string()
        << '\n';
  }
  m.write();
  return kOk;
}

int cmd_evaluate(const RunConfig& config, const EvaluateArgs& args, std::ostream& out, Logger& log) {
  const AcademicCalendar calendar = load_calendar(config.calendar);
  const auto truth = read_labels(read_file(args.labels));
  std::vector<MethodPredictions> methods;
  methods.push_back({"rule_based", rule_decisions(config, args.features, calendar)});

  Manifest m("evaluate", config);
  m.input("corpus", args.features.corpus);
  m.input("quant", args.features.quant);
  m.input("qual", args.features.qual);
  m.input("labels", args.labels);
  std::vector<std::pair<std::string, int>> keys;
  std::vector<ml::EncodedSample> samples;
  for (ml::ModelKind kind : {ml::ModelKind::Cart, ml::ModelKind::Forest, ml::ModelKind::Mlp}) {
    const fs::path path = model_path(args.models_dir, kind);
    if (args.models_dir.empty() || !fs::exists(path)) continue;
    if (samples.empty()) samples = load_samples(args.features, nullptr, calendar, &keys);
    const auto model = ml::load_model(read_file(path));
    m.input(std::string(ml::to_string(kind)), path);
    methods.push_back({std::string(ml::to_string(kind)), decisions_from(ml::predict_all(model, samples), keys)});
  }

  ComparisonOptions options{args.level, args.resamples, config.seed, std::max(1u, config.workers)};
  const auto rows = compare_predictors(methods, truth, options);
  const fs::path table = config.out / "comparison.tsv", report = config.out / "comparison.json";
  write_with(table, [&](std::ostream& s) { write_comparison_table(s, rows); });
  write_text(report, comparison_json(rows, options) + "\n");
  m.output("table", table);
  m.output("report", report);
  m.arg("resamples", args.resamples);
  m.arg("level", args.level);
  m.write();
  for (const auto& r : rows)
    log.log("info", "evaluate.method", json{{"method", r.method}, {"f1", r.micro.f1}, {"accuracy", r.micro.accuracy}}.dump());
  write_comparison_table(out, rows);
  return kOk;
}

int cmd_synth(const RunConfig& config, const SynthArgs& args, std::ostream& out, Logger& log) {
  CohortConfig cc;
  cc.student_count = args.students;
  cc.calendar = load_calendar(config.calendar);
  cc.catalog = CourseCatalog::load(config.catalog);
  cc.archetype_mix = default_archetype_mix();
  cc.seed = config.seed;
  cc.id_prefix = args.id_prefix;
  NoiseConfig noise{args.late_posting_rate, args.late_posting_weeks, args.typo_rate, args.skipped_journal_rate};
  noise.validate();

  const PhraseBank bank = PhraseBank::load(config.phrase_bank);
  const RuleEngine engine = load_engine(config);
  SyntheticCohort cohort = generate_cohort(cc, bank, engine, std::max(1u, config.workers));
  const auto observed = inject_noise(cohort.semesters, noise, cc.catalog, derive_seed(config.seed, 0x7379ULL));

  std::vector<WeeklyReport> raw;
  for (const auto& sem : observed) {
    auto r = to_raw_reports(sem);
    raw.insert(raw.end(), r.begin(), r.end());
  }
  std::vector<std::vector<QuantFeatures>> true_quant;
  for (const auto& sem : cohort.semesters) true_quant.push_back(extract_quant(sem, cc.catalog));
  const auto ids = ids_of(cohort.semesters);

  Manifest m("synth", config);
  m.input("calendar", config.calendar);
  m.input("catalog", config.catalog);
  m.input("phrase_bank", config.phrase_bank);
  m.input("rule_table", config.rule_table);
  m.input("overlay", config.overlay);
  m.arg("students", args.students);
  m.arg("id_prefix", args.id_prefix);
  m.arg("noise", {{"late_posting_rate", noise.late_posting_rate},
                  {"late_posting_weeks", noise.late_posting_weeks},
                  {"typo_rate", noise.typo_rate},
                  {"skipped_journal_rate", noise.skipped_journal_rate}});

  const fs::path reports = config.out / "reports.tsv", labels = config.out / "labels.tsv",
                 tq = config.out / "true_qual.tsv", tn = config.out / "true_quant.tsv",
                 arch = config.out / "archetypes.tsv";
  write_with(reports, [&](std::ostream& s) { write_reports(s, raw); });
  write_with(labels, [&](std::ostream& s) { write_labels(s, cohort.labels); });
  write_with(tq, [&](std::ostream& s) { write_feature_matrix<QualFlag>(s, ids, cohort.true_qual); });
  write_with(tn, [&](std::ostream& s) { write_feature_matrix<QuantFlag>(s, ids, true_quant); });
  write_with(arch, [&](std::ostream& s) {
    s << "student_id\tarchetype\n";
    for (const auto& t : cohort.traces) s << t.student_id << '\t' << to_string(t.archetype) << '\n';
  });
  for (const auto& [name, p] : std::vector<std::pair<std::string, fs::path>>{
           {"reports", reports}, {"labels", labels}, {"true_qual", tq}, {"true_quant", tn}, {"archetypes", arch}})
    m.output(name, p);
  m.write();
  log.log("info", "synth.done", json{{"students", args.students}, {"weeks", cohort.labels.size()}}.dump());
  out << "synth: " << args.students << " students, " << cohort.labels.size() << " weekly entries\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Logger log(&err);
  auto error_record = [&](std::string_view kind, const std::string& message, int code) {
    log.log("error", "fatal", json{{"kind", kind}, {"message", message}, {"exit_code", code}}.dump());
    return code;
  };

  CLI::App app{"Academic monitoring pipeline: ingest reports, extract features, recommend interventions."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_path, annotator, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  app.add_option("--config", config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed recorded in every manifest");
  app.add_option("--workers", workers, "Worker threads (default: available cores)");
  app.add_option("--annotator", annotator, "Qualitative annotator")->check(CLI::IsMember({"remote", "fallback"}));
  app.add_option("--out", out_dir, "Output directory");

  IngestArgs ingest_args;
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse, align and clean raw weekly reports");
  ingest_cmd->add_option("--reports", ingest_args.reports, "Raw report file")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_flag("--keep-latest", ingest_args.keep_latest, "Keep the later of duplicate weeks");

  ExtractArgs extract_args;
  std::string cache_path;
  auto* extract_cmd = app.add_subcommand("extract", "Compute quantitative and qualitative feature matrices");
  extract_cmd->add_option("--corpus", extract_args.corpus, "Cleaned corpus")->required()->check(CLI::ExistingFile);
  extract_cmd->add_option("--cache", cache_path, "Annotation cache file");

  auto feature_options = [](CLI::App* cmd, FeatureInputs& f) {
    cmd->add_option("--corpus", f.corpus, "Cleaned corpus")->required()->check(CLI::ExistingFile);
    cmd->add_option("--quant", f.quant, "Quantitative matrix")->required()->check(CLI::ExistingFile);
    cmd->add_option("--qual", f.qual, "Qualitative matrix")->required()->check(CLI::ExistingFile);
  };

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Recommend interventions per student-week");
  feature_options(predict_cmd, predict_args.features);
  predict_cmd->add_option("--method", predict_args.method, "rules or model")->check(CLI::IsMember({"rules", "model"}));
  predict_cmd->add_option("--model", predict_args.model, "Model file for --method model");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train intervention predictors");
  feature_options(train_cmd, train_args.features);
  train_cmd->add_option("--labels", train_args.labels, "Labeled corpus")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--method", train_args.method, "cart, forest, mlp or all")
      ->check(CLI::IsMember({"cart", "forest", "mlp", "all"}));

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Compare rule engine and trained models against labels");
  feature_options(eval_cmd, eval_args.features);
  eval_cmd->add_option("--labels", eval_args.labels, "Labeled corpus")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--models", eval_args.models_dir, "Directory holding model_<method>.txt files");
  eval_cmd->add_option("--resamples", eval_args.resamples, "Bootstrap resamples");
  eval_cmd->add_option("--level", eval_args.level, "Confidence level");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a labeled synthetic cohort");
  synth_cmd->add_option("--students", synth_args.students, "Number of students")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--id-prefix", synth_args.id_prefix, "Student id prefix");
  synth_cmd->add_option("--late-posting", synth_args.late_posting_rate, "Late-posting rate per course");
  synth_cmd->add_option("--late-weeks", synth_args.late_posting_weeks, "Weeks a late grade is delayed");
  synth_cmd->add_option("--typo", synth_args.typo_rate, "Course-code typo rate per course");
  synth_cmd->add_option("--skip-journal", synth_args.skipped_journal_rate, "Skipped-journal rate per report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    return error_record("UsageError", e.what(), kUsage);
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig::defaults() : RunConfig::load(config_path);
    if (seed) config.seed = *seed;
    config.workers = workers ? *workers : default_workers();
    if (!annotator.empty()) config.annotator = annotator == "remote" ? AnnotatorMode::Remote : AnnotatorMode::Fallback;
    if (!out_dir.empty()) config.out = out_dir;
    config.validate();
    fs::create_directories(config.out);
    if (!cache_path.empty()) extract_args.cache = fs::path(cache_path);
    if (predict_cmd->parsed() && predict_args.method == "model" && predict_args.model.empty())
      throw UsageError("predict --method model requires --model");

    log.log("info", "start",
            json{{"command", app.get_subcommands().front()->get_name()}, {"seed", config.seed}, {"workers", config.workers}}
                .dump());
    if (ingest_cmd->parsed()) return cmd_ingest(config, ingest_args, out, log);
    if (extract_cmd->parsed()) return cmd_extract(config, extract_args, out, log);
    if (predict_cmd->parsed()) return cmd_predict(config, predict_args, out, log);
    if (train_cmd->parsed()) return cmd_train(config, train_args, out, log);
    if (eval_cmd->parsed()) return cmd_evaluate(config, eval_args, out, log);
    if (synth_cmd->parsed()) return cmd_synth(config, synth_args, out, log);
    return error_record("UsageError", "no subcommand", kUsage);
  } catch (const UsageError& e) {
    return error_record("UsageError", e.what(), kUsage);
  } catch (const AnnotatorFailure& e) {
    return error_record("AnnotatorFailure", e.what(), kAnnotatorError);
  } catch (const KeyMismatch& e) {
    return error_record("KeyMismatch", e.what(), kDataError);
  } catch (const Error& e) {
    return error_record("DataError", e.what(), kDataError);
  } catch (const json::exception& e) {
    return error_record("DataError", e.what(), kDataError);
  } catch (const fs::filesystem_error& e) {
    return error_record("DataError", e.what(), kDataError);
  }
}

}  // namespace csguide::cli
