#pragma once

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "csguide/domain.hpp"
#include "csguide/ingestion.hpp"

namespace csguide {

class MalformedAnnotation : public Error {
public:
  MalformedAnnotation(const std::string& reason, std::string raw_response)
      : Error("malformed annotation: " + reason), raw_response_(std::move(raw_response)) {}
  const std::string& raw_response() const noexcept { return raw_response_; }

private:
  std::string raw_response_;
};

class TransportError : public Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Prompt
// ---------------------------------------------------------------------------

struct PromptExample {
  std::string journal;
  QualFeatures flags;  // expected flags (positive) or flags that must not fire (negative)
  std::string note;
};

struct PromptTemplate {
  std::string version;
  std::string instruction;
  std::string freshman_context;
  std::vector<std::pair<QualFlag, std::string>> feature_definitions;
  std::vector<PromptExample> positive_examples;
  std::vector<PromptExample> negative_examples;
  std::string output_schema_hint;

  /// Every code defined exactly once; one positive and one negative example
  /// for each of the A, H, P, O categories.
  void validate() const;

  static PromptTemplate parse_json(std::string_view content);
  static PromptTemplate load(const std::filesystem::path& path);
};

inline constexpr std::string_view kEmptyJournalMarker = "(journal is empty)";

/// Journal fields under CS COURSES / OTHER COURSES / PERSONAL headers.
std::string journal_block(const WeeklyReport& report);

std::string build_prompt(const PromptTemplate& tmpl, const WeeklyReport& report, const AcademicCalendar& calendar);

// ---------------------------------------------------------------------------
// Annotation
// ---------------------------------------------------------------------------

struct AnnotatorConfig {
  std::string endpoint_url = "http://127.0.0.1:11434/api/generate";
  std::string model_name = "llama3.1:8b";
  double temperature = 0.1;
  int max_retries = 2;
  std::chrono::milliseconds timeout{60000};

  void validate() const;
};

struct AnnotationResult {
  QualFeatures flags;
  std::map<std::string, std::string> rationales;  // flag code -> evidence
  std::string raw_response;
  std::string source;  // "remote" or "fallback"

  friend bool operator==(const AnnotationResult&, const AnnotationResult&) = default;
};

/// Strict schema: {"flags": {all 14 codes: bool}, "rationales": {code: text}}
/// with a non-empty rationale for exactly the true flags.
AnnotationResult parse_annotation(std::string_view generated_text);

/// Request body sent to the generation endpoint.
std::string remote_request_body(const AnnotatorConfig& config, std::string_view prompt);

/// POSTs the prompt and parses the `response` field of the reply. Retries
/// transport failures and malformed output up to config.max_retries times.
AnnotationResult annotate_remote(const AnnotatorConfig& config, std::string_view prompt);

// ---------------------------------------------------------------------------
// Lexicon fallback
// ---------------------------------------------------------------------------

/// Phrase lists per flag with sentence-level guards (hypothetical, resolved,
/// already-acted-on) and a preceding-token negation window.
class Lexicon {
public:
  static Lexicon parse_json(std::string_view content);
  static Lexicon load(const std::filesystem::path& path);

  AnnotationResult annotate(std::string_view text) const;

private:
  using Tokens = std::vector<std::string>;
  std::vector<std::pair<QualFlag, Tokens>> phrases_;
  std::vector<Tokens> guards_;
  std::vector<std::string> negators_;
  std::size_t negation_window_ = 3;
};

/// Tokenized sentences: lowercase words of [a-z0-9'] split at . ! ? ; and
/// newlines.
std::vector<std::vector<std::string>> tokenize_sentences(std::string_view text);

AnnotationResult annotate_fallback(const WeeklyReport& report, const Lexicon& lexicon);

/// Consecutive-illness pass: a week with illness (H1.1 or H1.2) directly
/// after a week with illness becomes H1.2; otherwise H1.1.
void promote_illness(std::vector<QualFeatures>& weeks);

// ---------------------------------------------------------------------------
// Semester extraction
// ---------------------------------------------------------------------------

/// Thread-safe map keyed by (student, week, journal hash, source).
class AnnotationCache {
public:
  std::optional<AnnotationResult> get(const std::string& key) const;
  void put(const std::string& key, const AnnotationResult& value);
  std::size_t size() const;

  void load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  static std::string key(const WeeklyReport& report, std::string_view source);

private:
  mutable std::mutex mutex_;
  std::map<std::string, AnnotationResult> entries_;
};

struct AuditRecord {
  std::string student_id;
  int week = 0;
  std::string source;
  std::string prompt_hash;
  std::string raw_response;
  QualFeatures flags;
  std::map<std::string, std::string> rationales;
  std::string error;  // remote failure that triggered fallback
};

void write_audit(std::ostream& out, const std::vector<AuditRecord>& records);

enum class AnnotatorMode { Fallback, Remote };

struct QualOptions {
  AnnotatorMode mode = AnnotatorMode::Fallback;
  const Lexicon* lexicon = nullptr;  // required
  const PromptTemplate* prompt = nullptr;  // required for Remote
  AnnotatorConfig remote;
  AnnotationCache* cache = nullptr;
};

struct QualExtraction {
  std::vector<QualFeatures> weeks;
  std::vector<AuditRecord> audit;
  std::vector<std::pair<int, std::string>> failures;  // (week, remote error)
};

/// Missing weeks are all-false; remote failures fall back to the lexicon.
QualExtraction extract_qual(const StudentSemester& semester, const QualOptions& options);

/// extract_qual over many students with `workers` threads.
std::vector<QualExtraction> extract_qual_all(const std::vector<StudentSemester>& semesters, const QualOptions& options,
                                             unsigned workers);

}  // namespace csguide
