#include "seqsum/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace seqsum {

namespace {

using nlohmann::json;

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

// Length of the numeral starting at `pos`, or 0. A numeral must not run into a
// following word character ("25kg" is a word, not a numeral).
std::size_t match_numeral(std::string_view s, std::size_t pos) {
  std::size_t i = pos;
  const std::size_t n = s.size();
  if (i < n && (s[i] == '+' || s[i] == '-')) {
    if (pos > 0 && is_word_byte(static_cast<unsigned char>(s[pos - 1]))) return 0;
    ++i;
  }
  std::size_t digits = 0;
  while (i < n && is_digit(static_cast<unsigned char>(s[i]))) {
    ++i;
    ++digits;
  }
  if (i + 1 < n && s[i] == '.' && is_digit(static_cast<unsigned char>(s[i + 1]))) {
    ++i;
    while (i < n && is_digit(static_cast<unsigned char>(s[i]))) {
      ++i;
      ++digits;
    }
  }
  if (digits == 0) return 0;
  if (i < n && is_word_byte(static_cast<unsigned char>(s[i]))) return 0;
  return i - pos;
}

constexpr std::array<SectionClass, 6> kLookupOrder = {
    SectionClass::kResults,     SectionClass::kConclusion,  SectionClass::kDiscussions,
    SectionClass::kMethods,     SectionClass::kRelatedWork, SectionClass::kIntroduction,
};

constexpr std::array<std::string_view, kNumSectionClasses> kSectionNames = {
    "introduction", "related_work", "methods", "results", "discussions", "conclusion", "other",
};

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

Error line_error(const std::string& source, std::size_t line, const std::string& what) {
  return Error(source + ":" + std::to_string(line) + ": " + what);
}

std::string required_string(const json& obj, const char* key, const std::string& source,
                            std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw line_error(source, line, std::string("missing required field \"") + key + "\"");
  if (!it->is_string()) throw line_error(source, line, std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

std::string optional_string(const json& obj, const char* key, const std::string& source,
                            std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw line_error(source, line, std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

std::vector<std::string> optional_string_list(const json& obj, const char* key,
                                              const std::string& source, std::size_t line) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_array()) throw line_error(source, line, std::string("field \"") + key + "\" must be an array");
  for (const auto& v : *it) {
    if (!v.is_string())
      throw line_error(source, line, std::string("field \"") + key + "\" must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::vector<TokenList> tokenize_all(const std::vector<std::string>& texts) {
  std::vector<TokenList> out;
  for (const auto& t : texts) {
    auto toks = tokenize(t);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

Document parse_document(const json& obj, const Gazetteer& gaz, const LoadOptions& options,
                        const std::string& source, std::size_t line) {
  if (!obj.is_object()) throw line_error(source, line, "expected a JSON object");
  Document doc;
  doc.id = required_string(obj, "id", source, line);
  if (doc.id.empty()) throw line_error(source, line, "empty id");
  doc.title_tokens = tokenize(optional_string(obj, "title", source, line));
  doc.abstract_tokens = tokenize(optional_string(obj, "abstract", source, line));
  doc.key_phrases = tokenize_all(optional_string_list(obj, "key_phrases", source, line));
  doc.asjc_codes = optional_string_list(obj, "asjc", source, line);
  doc.highlights = tokenize_all(optional_string_list(obj, "highlights", source, line));

  auto sections = obj.find("sections");
  if (sections == obj.end()) throw line_error(source, line, "missing required field \"sections\"");
  if (!sections->is_array()) throw line_error(source, line, "field \"sections\" must be an array");
  for (const auto& sec : *sections) {
    if (!sec.is_object()) throw line_error(source, line, "section entries must be objects");
    const std::string title = optional_string(sec, "title", source, line);
    const SectionClass cls = classify_section(title, gaz);
    for (const auto& raw : optional_string_list(sec, "sentences", source, line)) {
      auto toks = tokenize(raw);
      if (toks.empty()) continue;
      Sentence s;
      s.index = doc.sentences.size();
      s.tokens = std::move(toks);
      s.section = cls;
      s.raw_section_title = title;
      doc.sentences.push_back(std::move(s));
    }
  }
  if (options.require_sentences && doc.sentences.empty())
    throw line_error(source, line, "document \"" + doc.id + "\" has empty sentences");
  return doc;
}

json tokens_to_json_list(const std::vector<TokenList>& lists) {
  json arr = json::array();
  for (const auto& l : lists) arr.push_back(detokenize(l));
  return arr;
}

}  // namespace

bool looks_numeric(std::string_view text) {
  return !text.empty() && match_numeral(text, 0) == text.size();
}

TokenList tokenize(std::string_view text) {
  TokenList out;
  const std::string lowered = to_lower(text);
  const std::string_view s = lowered;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (std::size_t len = match_numeral(s, i); len > 0) {
      out.push_back(Token{std::string(s.substr(i, len)), true});
      i += len;
      continue;
    }
    if (is_word_byte(c)) {
      std::size_t j = i;
      while (j < s.size() && is_word_byte(static_cast<unsigned char>(s[j]))) ++j;
      std::string word(s.substr(i, j - i));
      const bool numeric = looks_numeric(word);
      out.push_back(Token{std::move(word), numeric});
      i = j;
      continue;
    }
    ++i;  // punctuation
  }
  return out;
}

std::string detokenize(std::span<const Token> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i].text;
  }
  return out;
}

std::string_view section_class_name(SectionClass c) {
  return kSectionNames.at(static_cast<std::size_t>(c));
}

std::optional<SectionClass> parse_section_class(std::string_view name) {
  const std::string lowered = to_lower(name);
  for (std::size_t i = 0; i < kSectionNames.size(); ++i)
    if (kSectionNames[i] == lowered) return static_cast<SectionClass>(i);
  if (lowered == "relatedwork" || lowered == "related work") return SectionClass::kRelatedWork;
  if (lowered == "discussion") return SectionClass::kDiscussions;
  return std::nullopt;
}

void Gazetteer::add(std::string keyword, SectionClass cls) {
  entries_.emplace_back(to_lower(keyword), cls);
}

Gazetteer Gazetteer::parse(std::istream& in, const std::string& source_name) {
  Gazetteer gaz;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw line_error(source_name, line_no, "expected keyword<TAB>class");
    std::string keyword = trim(std::string_view(line).substr(0, tab));
    std::string cls_name = trim(std::string_view(line).substr(tab + 1));
    auto cls = parse_section_class(cls_name);
    if (!cls) throw line_error(source_name, line_no, "unknown section class \"" + cls_name + "\"");
    if (keyword.empty()) throw line_error(source_name, line_no, "empty keyword");
    gaz.add(std::move(keyword), *cls);
  }
  if (gaz.empty()) throw Error(source_name + ": gazetteer has no entries");
  return gaz;
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("gazetteer not found: " + path.string());
  return parse(in, path.string());
}

const Gazetteer& Gazetteer::builtin() {
  // Mirrors resources/gazetteer.tsv.
  static const Gazetteer gaz = [] {
    Gazetteer g;
    for (const char* k : {"result", "finding", "experiment", "evaluation"}) g.add(k, SectionClass::kResults);
    for (const char* k : {"conclu", "summary", "future work"}) g.add(k, SectionClass::kConclusion);
    g.add("discussion", SectionClass::kDiscussions);
    for (const char* k : {"method", "material", "approach", "procedure", "data"})
      g.add(k, SectionClass::kMethods);
    for (const char* k : {"related work", "background", "literature", "previous work", "prior work"})
      g.add(k, SectionClass::kRelatedWork);
    for (const char* k : {"introduction", "motivation", "overview"}) g.add(k, SectionClass::kIntroduction);
    return g;
  }();
  return gaz;
}

SectionClass classify_section(std::string_view section_title, const Gazetteer& gazetteer) {
  const std::string title = to_lower(section_title);
  for (SectionClass cls : kLookupOrder) {
    for (const auto& [keyword, kcls] : gazetteer.entries()) {
      if (kcls == cls && title.find(keyword) != std::string::npos) return cls;
    }
  }
  return SectionClass::kOther;
}

std::vector<Document> parse_corpus(std::istream& in, const LoadOptions& options,
                                   const std::string& source_name) {
  const Gazetteer& gaz = options.gazetteer ? *options.gazetteer : Gazetteer::builtin();
  std::vector<Document> docs;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw line_error(source_name, line_no, std::string("malformed JSON: ") + e.what());
    }
    Document doc = parse_document(obj, gaz, options, source_name, line_no);
    auto [it, inserted] = seen.emplace(doc.id, line_no);
    if (!inserted)
      throw line_error(source_name, line_no,
                       "duplicate id \"" + doc.id + "\" (first seen on line " +
                           std::to_string(it->second) + ")");
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<Document> load_corpus(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("corpus not found: " + path.string());
  return parse_corpus(in, options, path.string());
}

std::string serialize_document(const Document& doc) {
  json obj = json::object();
  obj["id"] = doc.id;
  obj["title"] = detokenize(doc.title_tokens);
  obj["abstract"] = detokenize(doc.abstract_tokens);
  obj["key_phrases"] = tokens_to_json_list(doc.key_phrases);
  obj["asjc"] = doc.asjc_codes;
  obj["highlights"] = tokens_to_json_list(doc.highlights);
  json sections = json::array();
  for (std::size_t i = 0; i < doc.sentences.size();) {
    const std::string& title = doc.sentences[i].raw_section_title;
    json sents = json::array();
    std::size_t j = i;
    for (; j < doc.sentences.size() && doc.sentences[j].raw_section_title == title; ++j)
      sents.push_back(detokenize(doc.sentences[j].tokens));
    sections.push_back(json{{"title", title}, {"sentences", std::move(sents)}});
    i = j;
  }
  obj["sections"] = std::move(sections);
  return obj.dump();
}

void write_corpus(std::ostream& out, std::span<const Document> docs) {
  for (const auto& d : docs) out << serialize_document(d) << '\n';
}

CorpusStats corpus_stats(std::span<const Document> docs, const std::vector<std::vector<int>>* labels) {
  if (docs.empty()) throw Error("corpus_stats: empty corpus");
  if (labels && labels->size() != docs.size())
    throw Error("corpus_stats: " + std::to_string(labels->size()) + " label lists for " +
                std::to_string(docs.size()) + " documents");
  CorpusStats stats;
  stats.n_documents = docs.size();
  double total_sentences = 0.0;
  double total_tokens = 0.0;
  double total_positive = 0.0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& doc = docs[d];
    total_sentences += static_cast<double>(doc.sentences.size());
    for (const auto& s : doc.sentences) total_tokens += static_cast<double>(s.tokens.size());
    if (labels) {
      const auto& l = (*labels)[d];
      if (l.size() != doc.sentences.size())
        throw Error("corpus_stats: document \"" + doc.id + "\" has " +
                    std::to_string(doc.sentences.size()) + " sentences but " +
                    std::to_string(l.size()) + " labels");
      for (int v : l) total_positive += v != 0 ? 1.0 : 0.0;
    }
  }
  const double n = static_cast<double>(docs.size());
  stats.avg_labels = total_positive / n;
  stats.avg_sentences = total_sentences / n;
  stats.avg_sentence_length = total_sentences > 0 ? total_tokens / total_sentences : 0.0;
  return stats;
}

}  // namespace seqsum
