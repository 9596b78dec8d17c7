#include "csguide/qual_features.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "csguide/parallel.hpp"
#include "csguide/text.hpp"

namespace csguide {

using nlohmann::json;

namespace {

QualFeatures flags_from_codes(const json& arr) {
  QualFeatures out;
  for (const auto& c : arr) out.set(parse_code<QualFlag>(c.get<std::string>()));
  return out;
}

char category_of(QualFlag f) { return code_of(f).front(); }

bool match_at(const std::vector<std::string>& tokens, std::size_t pos, const std::vector<std::string>& phrase) {
  if (pos + phrase.size() > tokens.size()) return false;
  for (std::size_t k = 0; k < phrase.size(); ++k)
    if (tokens[pos + k] != phrase[k]) return false;
  return true;
}

bool contains_sequence(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i)
    if (match_at(tokens, i, phrase)) return true;
  return false;
}

std::vector<std::string> tokenize_phrase(std::string_view phrase) {
  auto sentences = tokenize_sentences(phrase);
  std::vector<std::string> out;
  for (auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

json result_to_schema(const AnnotationResult& r) {
  json flags = json::object();
  for (std::size_t i = 0; i < kQualCount; ++i)
    flags[std::string(FlagTraits<QualFlag>::codes[i])] = r.flags.test_index(i);
  json rationales = json::object();
  for (const auto& [k, v] : r.rationales) rationales[k] = v;
  return {{"flags", flags}, {"rationales", rationales}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Prompt
// ---------------------------------------------------------------------------

void PromptTemplate::validate() const {
  std::array<int, kQualCount> seen{};
  for (const auto& [flag, text] : feature_definitions) {
    (void)text;
    ++seen[static_cast<std::size_t>(flag)];
  }
  for (std::size_t i = 0; i < kQualCount; ++i)
    if (seen[i] != 1)
      throw Error("prompt template: " + std::string(FlagTraits<QualFlag>::codes[i]) + " defined " +
                  std::to_string(seen[i]) + " times");
  for (char cat : {'A', 'H', 'P', 'O'}) {
    auto covers = [cat](const PromptExample& e) {
      for (QualFlag f : e.flags.members())
        if (category_of(f) == cat) return true;
      return false;
    };
    if (std::none_of(positive_examples.begin(), positive_examples.end(), covers))
      throw Error(std::string("prompt template: no positive example for category ") + cat);
    if (std::none_of(negative_examples.begin(), negative_examples.end(), covers))
      throw Error(std::string("prompt template: no negative example for category ") + cat);
  }
}

PromptTemplate PromptTemplate::parse_json(std::string_view content) {
  PromptTemplate t;
  try {
    const json doc = json::parse(content);
    t.version = doc.at("version").get<std::string>();
    t.instruction = doc.at("instruction").get<std::string>();
    t.freshman_context = doc.at("freshman_context").get<std::string>();
    for (const auto& def : doc.at("feature_definitions"))
      t.feature_definitions.emplace_back(parse_code<QualFlag>(def.at(0).get<std::string>()),
                                         def.at(1).get<std::string>());
    auto examples = [](const json& arr) {
      std::vector<PromptExample> out;
      for (const auto& e : arr)
        out.push_back({e.at("journal").get<std::string>(), flags_from_codes(e.at("flags")), e.value("note", "")});
      return out;
    };
    t.positive_examples = examples(doc.at("positive_examples"));
    t.negative_examples = examples(doc.at("negative_examples"));
    t.output_schema_hint = doc.at("output_schema_hint").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(std::string("prompt template: ") + e.what());
  }
  t.validate();
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) { return parse_json(read_file(path)); }

std::string journal_block(const WeeklyReport& report) {
  if (report.journals_empty()) return std::string(kEmptyJournalMarker);
  auto section = [](std::string_view header, const std::string& body) {
    return std::string(header) + "\n" + (body.empty() ? std::string("(none)") : body) + "\n";
  };
  return section("CS COURSES:", report.journal_cs) + section("OTHER COURSES:", report.journal_noncs) +
         section("PERSONAL:", report.journal_personal);
}

std::string build_prompt(const PromptTemplate& tmpl, const WeeklyReport& report, const AcademicCalendar& calendar) {
  std::ostringstream out;
  out << tmpl.instruction << "\n\n" << tmpl.freshman_context << "\n\n";
  out << "Semester week " << report.semester_week << " of " << calendar.final_week << ". Drop deadline: week "
      << calendar.drop_deadline_week << ". Late drop deadline: week " << calendar.late_drop_deadline_week
      << ". Final week: " << calendar.final_week << ".\n\n";
  out << "Features:\n";
  for (const auto& [flag, desc] : tmpl.feature_definitions) out << "- " << code_of(flag) << ": " << desc << '\n';
  out << "\nExamples that SHOULD be flagged:\n";
  for (const auto& e : tmpl.positive_examples) out << "Journal: \"" << e.journal << "\" -> " << e.flags.encode() << '\n';
  out << "\nExamples that must NOT be flagged:\n";
  for (const auto& e : tmpl.negative_examples) {
    out << "Journal: \"" << e.journal << "\" -> not " << e.flags.encode();
    if (!e.note.empty()) out << " (" << e.note << ")";
    out << '\n';
  }
  out << "\n" << tmpl.output_schema_hint << "\n\nJournal:\n" << journal_block(report) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Annotation parsing
// ---------------------------------------------------------------------------

void AnnotatorConfig::validate() const {
  if (temperature < 0) throw Error("annotator temperature must be >= 0");
  if (max_retries < 0) throw Error("annotator max_retries must be >= 0");
}

AnnotationResult parse_annotation(std::string_view generated_text) {
  const std::string raw(generated_text);
  json doc;
  try {
    doc = json::parse(generated_text);
  } catch (const json::exception&) {
    throw MalformedAnnotation("response is not valid JSON", raw);
  }
  if (!doc.is_object()) throw MalformedAnnotation("response is not an object", raw);
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (key != "flags" && key != "rationales") throw MalformedAnnotation("unexpected key '" + key + "'", raw);
  }
  if (!doc.contains("flags") || !doc["flags"].is_object()) throw MalformedAnnotation("missing 'flags' object", raw);

  AnnotationResult r;
  r.raw_response = raw;
  r.source = "remote";
  std::array<bool, kQualCount> seen{};
  for (const auto& [key, value] : doc["flags"].items()) {
    auto flag = try_parse_code<QualFlag>(key);
    if (!flag) throw MalformedAnnotation("unknown flag '" + key + "'", raw);
    if (!value.is_boolean()) throw MalformedAnnotation("flag '" + key + "' is not a boolean", raw);
    seen[static_cast<std::size_t>(*flag)] = true;
    r.flags.set(*flag, value.get<bool>());
  }
  for (std::size_t i = 0; i < kQualCount; ++i)
    if (!seen[i]) throw MalformedAnnotation("flag '" + std::string(FlagTraits<QualFlag>::codes[i]) + "' missing", raw);

  const json rationales = doc.value("rationales", json::object());
  if (!rationales.is_object()) throw MalformedAnnotation("'rationales' is not an object", raw);
  for (const auto& [key, value] : rationales.items()) {
    auto flag = try_parse_code<QualFlag>(key);
    if (!flag) throw MalformedAnnotation("rationale for unknown flag '" + key + "'", raw);
    if (!value.is_string()) throw MalformedAnnotation("rationale for '" + key + "' is not text", raw);
    if (!r.flags.test(*flag)) throw MalformedAnnotation("rationale for unset flag '" + key + "'", raw);
    r.rationales[key] = value.get<std::string>();
  }
  for (QualFlag f : r.flags.members()) {
    auto it = r.rationales.find(std::string(code_of(f)));
    if (it == r.rationales.end() || text::trim(it->second).empty())
      throw MalformedAnnotation("flag '" + std::string(code_of(f)) + "' has no rationale", raw);
  }
  return r;
}

std::string remote_request_body(const AnnotatorConfig& config, std::string_view prompt) {
  json body = {{"model", config.model_name},
               {"prompt", std::string(prompt)},
               {"stream", false},
               {"format", "json"},
               {"options", {{"temperature", config.temperature}}}};
  return body.dump();
}

// ---------------------------------------------------------------------------
// Lexicon
// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> tokenize_sentences(std::string_view text_in) {
  std::string text;
  text.reserve(text_in.size());
  for (std::size_t i = 0; i < text_in.size(); ++i) {
    // U+2018 / U+2019 -> apostrophe
    if (i + 2 < text_in.size() && static_cast<unsigned char>(text_in[i]) == 0xE2 &&
        static_cast<unsigned char>(text_in[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(text_in[i + 2]) == 0x98 || static_cast<unsigned char>(text_in[i + 2]) == 0x99)) {
      text += '\'';
      i += 2;
      continue;
    }
    text += text_in[i];
  }
  text = text::to_lower(text);

  std::vector<std::vector<std::string>> sentences(1);
  std::string token;
  auto flush_token = [&] {
    while (!token.empty() && token.back() == '\'') token.pop_back();
    while (!token.empty() && token.front() == '\'') token.erase(token.begin());
    if (!token.empty()) sentences.back().push_back(token);
    token.clear();
  };
  for (char c : text) {
    const bool word = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'';
    if (word) {
      token += c;
      continue;
    }
    flush_token();
    if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') {
      if (!sentences.back().empty()) sentences.emplace_back();
    }
  }
  flush_token();
  if (sentences.back().empty()) sentences.pop_back();
  return sentences;
}

Lexicon Lexicon::parse_json(std::string_view content) {
  Lexicon lex;
  try {
    const json doc = json::parse(content);
    lex.negation_window_ = doc.value("negation_window", 3u);
    for (const auto& n : doc.at("negators")) lex.negators_.push_back(text::to_lower(n.get<std::string>()));
    for (const auto& [group, list] : doc.at("sentence_guards").items()) {
      (void)group;
      for (const auto& g : list) lex.guards_.push_back(tokenize_phrase(g.get<std::string>()));
    }
    for (const auto& [code, list] : doc.at("phrases").items()) {
      const QualFlag flag = parse_code<QualFlag>(code);
      for (const auto& p : list) {
        auto tokens = tokenize_phrase(p.get<std::string>());
        if (tokens.empty()) throw Error("lexicon: empty phrase for " + code);
        lex.phrases_.emplace_back(flag, std::move(tokens));
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("lexicon: ") + e.what());
  }
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) { return parse_json(read_file(path)); }

AnnotationResult Lexicon::annotate(std::string_view input) const {
  AnnotationResult r;
  r.source = "fallback";
  for (const auto& sentence : tokenize_sentences(input)) {
    const bool guarded = std::any_of(guards_.begin(), guards_.end(),
                                     [&](const Tokens& g) { return contains_sequence(sentence, g); });
    if (guarded) continue;
    for (const auto& [flag, phrase] : phrases_) {
      if (r.flags.test(flag)) continue;
      for (std::size_t pos = 0; pos + phrase.size() <= sentence.size(); ++pos) {
        if (!match_at(sentence, pos, phrase)) continue;
        const std::size_t from = pos >= negation_window_ ? pos - negation_window_ : 0;
        const bool negated = std::any_of(sentence.begin() + from, sentence.begin() + pos, [&](const std::string& t) {
          return std::find(negators_.begin(), negators_.end(), t) != negators_.end();
        });
        if (negated) continue;
        r.flags.set(flag);
        r.rationales[std::string(code_of(flag))] = text::join(phrase, " ");
        break;
      }
    }
  }
  r.raw_response = result_to_schema(r).dump();
  return r;
}

AnnotationResult annotate_fallback(const WeeklyReport& report, const Lexicon& lexicon) {
  return lexicon.annotate(report.journal_cs + "\n" + report.journal_noncs + "\n" + report.journal_personal);
}

void promote_illness(std::vector<QualFeatures>& weeks) {
  bool previous = false;
  for (auto& f : weeks) {
    const bool ill = f[QualFlag::H1_1] || f[QualFlag::H1_2];
    f.set(QualFlag::H1_2, ill && previous);
    f.set(QualFlag::H1_1, ill && !previous);
    previous = ill;
  }
}

// ---------------------------------------------------------------------------
// Cache and audit
// ---------------------------------------------------------------------------

std::optional<AnnotationResult> AnnotationCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void AnnotationCache::put(const std::string& key, const AnnotationResult& value) {
  std::lock_guard lock(mutex_);
  entries_[key] = value;
}

std::size_t AnnotationCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::string AnnotationCache::key(const WeeklyReport& report, std::string_view source) {
  return report.student_id + "|" + std::to_string(report.semester_week) + "|" +
         text::hex64(text::fnv1a(journal_block(report))) + "|" + std::string(source);
}

void AnnotationCache::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  std::lock_guard lock(mutex_);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    AnnotationResult r;
    r.flags = flags_from_codes(rec.at("flags"));
    for (const auto& [k, v] : rec.at("rationales").items()) r.rationales[k] = v.get<std::string>();
    r.raw_response = rec.at("raw_response").get<std::string>();
    r.source = rec.at("source").get<std::string>();
    entries_[rec.at("key").get<std::string>()] = std::move(r);
  }
}

void AnnotationCache::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write cache '" + path.string() + "'");
  std::lock_guard lock(mutex_);
  for (const auto& [key, r] : entries_) {
    json rec = {{"key", key},
                {"flags", r.flags.codes()},
                {"rationales", r.rationales},
                {"raw_response", r.raw_response},
                {"source", r.source}};
    out << rec.dump() << '\n';
  }
}

void write_audit(std::ostream& out, const std::vector<AuditRecord>& records) {
  for (const auto& a : records) {
    json rec = {{"student_id", a.student_id},   {"week", a.week},
                {"source", a.source},           {"prompt_hash", a.prompt_hash},
                {"raw_response", a.raw_response}, {"flags", a.flags.codes()},
                {"rationales", a.rationales}};
    if (!a.error.empty()) rec["error"] = a.error;
    out << rec.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

QualExtraction extract_qual(const StudentSemester& semester, const QualOptions& options) {
  if (!options.lexicon) throw Error("extract_qual: a lexicon is required");
  if (options.mode == AnnotatorMode::Remote && !options.prompt)
    throw Error("extract_qual: remote mode requires a prompt template");

  QualExtraction out;
  out.weeks.resize(semester.reports.size());
  for (std::size_t i = 0; i < semester.reports.size(); ++i) {
    const WeeklyReport& report = semester.reports[i];
    if (report.missing) continue;

    AuditRecord audit;
    audit.student_id = semester.student_id;
    audit.week = report.semester_week;
    std::optional<AnnotationResult> result;

    if (options.mode == AnnotatorMode::Remote) {
      const std::string prompt = build_prompt(*options.prompt, report, semester.calendar);
      audit.prompt_hash = text::hex64(text::fnv1a(prompt));
      const std::string key =
          AnnotationCache::key(report, "remote:" + options.remote.model_name + ":" + options.prompt->version);
      if (options.cache) result = options.cache->get(key);
      if (!result) {
        try {
          result = annotate_remote(options.remote, prompt);
          if (options.cache) options.cache->put(key, *result);
        } catch (const Error& e) {
          audit.error = e.what();
          out.failures.emplace_back(report.semester_week, e.what());
        }
      }
    }
    if (!result) {
      if (audit.prompt_hash.empty()) audit.prompt_hash = text::hex64(text::fnv1a(journal_block(report)));
      const std::string key = AnnotationCache::key(report, "fallback");
      if (options.cache) result = options.cache->get(key);
      if (!result) {
        result = annotate_fallback(report, *options.lexicon);
        if (options.cache) options.cache->put(key, *result);
      }
    }

    out.weeks[i] = result->flags;
    audit.source = result->source;
    audit.raw_response = result->raw_response;
    audit.rationales = result->rationales;
    out.audit.push_back(std::move(audit));
  }
  promote_illness(out.weeks);
  for (auto& a : out.audit) a.flags = out.weeks[a.week - 1];
  return out;
}

std::vector<QualExtraction> extract_qual_all(const std::vector<StudentSemester>& semesters, const QualOptions& options,
                                             unsigned workers) {
  std::vector<QualExtraction> out(semesters.size());
  parallel_for(semesters.size(), workers, [&](std::size_t i) { out[i] = extract_qual(semesters[i], options); });
  return out;
}

}  // namespace csguide
