#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seqsum/error.hpp"

namespace seqsum {

struct Token {
  std::string text;
  bool is_numeric = false;

  // Identity is the text; is_numeric is derived from it.
  friend bool operator==(const Token& a, const Token& b) { return a.text == b.text; }
};

using TokenList = std::vector<Token>;

// Optional sign, optional single decimal point, at least one digit.
bool looks_numeric(std::string_view text);

// Lowercases, splits on whitespace and ASCII punctuation, keeps numerals such as
// "25.5" or "-3" whole and drops punctuation-only pieces.
TokenList tokenize(std::string_view text);

// Tokens joined by single spaces. Display only.
std::string detokenize(std::span<const Token> tokens);

enum class SectionClass : int {
  kIntroduction = 0,
  kRelatedWork,
  kMethods,
  kResults,
  kDiscussions,
  kConclusion,
  kOther,
};

inline constexpr std::size_t kNumSectionClasses = 7;

std::string_view section_class_name(SectionClass c);
std::optional<SectionClass> parse_section_class(std::string_view name);

// Maps lowercase keywords to a section class. Lookup order is fixed:
// Results > Conclusion > Discussions > Methods > RelatedWork > Introduction,
// keywords within a class in insertion order.
class Gazetteer {
 public:
  Gazetteer() = default;

  void add(std::string keyword, SectionClass cls);
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, SectionClass>>& entries() const { return entries_; }

  // Parses "keyword<TAB>class" lines; '#' starts a comment.
  static Gazetteer parse(std::istream& in, const std::string& source_name = "<stream>");
  static Gazetteer load(const std::filesystem::path& path);
  static const Gazetteer& builtin();

 private:
  std::vector<std::pair<std::string, SectionClass>> entries_;
};

SectionClass classify_section(std::string_view section_title, const Gazetteer& gazetteer);

struct Sentence {
  std::size_t index = 0;
  TokenList tokens;
  SectionClass section = SectionClass::kOther;
  std::string raw_section_title;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Document {
  std::string id;
  TokenList title_tokens;
  TokenList abstract_tokens;
  std::vector<TokenList> key_phrases;
  std::vector<Sentence> sentences;
  std::vector<TokenList> highlights;
  std::vector<std::string> asjc_codes;

  friend bool operator==(const Document&, const Document&) = default;
};

struct LoadOptions {
  // A training corpus must have at least one sentence per document.
  bool require_sentences = true;
  const Gazetteer* gazetteer = nullptr;  // null selects Gazetteer::builtin()
};

// One JSON document per line. Blank lines are skipped. Errors name the line.
std::vector<Document> parse_corpus(std::istream& in, const LoadOptions& options = {},
                                   const std::string& source_name = "<stream>");
std::vector<Document> load_corpus(const std::filesystem::path& path,
                                  const LoadOptions& options = {});

// Inverse of parse_corpus: consecutive sentences sharing a raw section title are
// written as one section.
std::string serialize_document(const Document& doc);
void write_corpus(std::ostream& out, std::span<const Document> docs);

struct CorpusStats {
  std::size_t n_documents = 0;
  double avg_labels = 0.0;
  double avg_sentences = 0.0;
  double avg_sentence_length = 0.0;
};

// labels, when given, holds one 0/1 list per document.
CorpusStats corpus_stats(std::span<const Document> docs,
                         const std::vector<std::vector<int>>* labels = nullptr);

}  // namespace seqsum
