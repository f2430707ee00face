#pragma once

// The four automated scores, each on 0..100:
//
//   readability  clamp(FRE, 0, 100), FRE = 206.835 - 1.015 W/S - 84.6 Syl/W
//   fluency      clamp(1 - (ppl - 20) / 100, 0, 1) * 100, ppl = exp(-mean logprob)
//   grammar      clamp(1 - d / 10, 0, 1) * 100, d = errors per 100 words
//   complexity   clamp(depth / d_max, 0, 1) * 100
//
// The error density unit (per 100 words) and d_max = 10 are interpretations;
// both are parameters.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "morphgen/error.hpp"
#include "morphgen/item_model.hpp"
#include "morphgen/llm_gateway.hpp"
#include "morphgen/surface_form.hpp"
#include "morphgen/text.hpp"
#include "morphgen/token_logprobs.hpp"

namespace morphgen {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// ---------------------------------------------------------------------------
// Backend contracts

struct GrammarMatch {
  std::size_t offset = 0;
  std::size_t length = 0;
  std::string rule;
  std::string message;
};

class GrammarBackend {
 public:
  virtual ~GrammarBackend() = default;
  virtual std::vector<GrammarMatch> check(const std::string& text) = 0;
  virtual std::string name() const = 0;
};

struct ParsedToken {
  std::string text;
  std::string pos;
  std::optional<int> head;  // index in the sentence, -1 for the root
};

struct ParsedSentence {
  std::vector<ParsedToken> tokens;
  std::optional<int> depth;  // used when heads are absent
};

struct ParseOutput {
  std::vector<ParsedSentence> sentences;
};

class ParseBackend {
 public:
  virtual ~ParseBackend() = default;
  virtual ParseOutput parse(const std::string& text) = 0;
  virtual std::string name() const = 0;
  virtual bool heuristic() const { return false; }
};

class LogprobBackend {
 public:
  virtual ~LogprobBackend() = default;
  virtual TokenLogprobs logprobs(const std::string& text) = 0;
  virtual std::string name() const = 0;
};

struct Backends {
  std::shared_ptr<GrammarBackend> grammar;
  std::shared_ptr<ParseBackend> parse;
  std::shared_ptr<LogprobBackend> logprob;
};

// ---------------------------------------------------------------------------
// Counting

inline int count_syllables(std::string_view word) {
  std::string w = text::lower(word);
  if (std::none_of(w.begin(), w.end(), [](char c) { return text::is_alpha(c); })) {
    throw ValidationError("count_syllables: no letters in \"" + std::string(word) + "\"");
  }
  auto vowel = [](char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; };
  std::string letters;
  for (char c : w) {
    if (text::is_alpha(c)) letters.push_back(c);
  }
  int groups = 0;
  std::size_t last_start = 0;
  for (std::size_t i = 0; i < letters.size(); ++i) {
    if (vowel(letters[i]) && (i == 0 || !vowel(letters[i - 1]))) {
      ++groups;
      last_start = i;
    }
  }
  // terminal silent e: the final group is a lone "e" at the end of the word
  const bool silent_e =
      letters.size() >= 2 && letters.back() == 'e' && last_start == letters.size() - 1 && groups > 1;
  if (silent_e) --groups;
  return std::max(groups, 1);
}

// Sentences end at runs of . ! ? followed by whitespace or end of text, and at
// line breaks. Fragments without words are dropped.
inline std::vector<std::string> split_sentences(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (text::word_count(cur) > 0) out.emplace_back(text::trim(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '\n' || c == '\r') {
      flush();
      continue;
    }
    cur.push_back(c);
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i + 1;
      while (j < s.size() && (s[j] == '.' || s[j] == '!' || s[j] == '?')) cur.push_back(s[j++]);
      // closing quotes or brackets stay with the sentence
      while (j < s.size() && (s[j] == '"' || s[j] == '\'' || s[j] == ')')) cur.push_back(s[j++]);
      i = j - 1;
      if (j >= s.size() || text::is_space(s[j])) flush();
    }
  }
  flush();
  return out;
}

struct LinguisticFeatures {
  int word_count = 0;
  int sentence_count = 0;
  int syllable_count = 0;
  double avg_word_length = 0;
  double avg_sentence_length = 0;
  double unique_word_ratio = 0;
  std::map<std::string, double> pos_distribution;  // empty without a parse
  std::optional<int> max_dependency_depth;         // absent without a parse
};

inline int word_syllables(std::string_view w) {
  return std::any_of(w.begin(), w.end(), [](char c) { return text::is_alpha(c); }) ? count_syllables(w) : 1;
}

inline LinguisticFeatures lexical_features(std::string_view s) {
  LinguisticFeatures f;
  const auto words = text::words(s);
  f.word_count = static_cast<int>(words.size());
  f.sentence_count = static_cast<int>(split_sentences(s).size());
  if (words.empty()) return f;
  std::set<std::string> uniq;
  std::size_t chars = 0;
  for (const auto& w : words) {
    f.syllable_count += word_syllables(w);
    chars += w.size();
    uniq.insert(text::lower(w));
  }
  f.avg_word_length = static_cast<double>(chars) / static_cast<double>(words.size());
  f.avg_sentence_length = f.sentence_count ? static_cast<double>(f.word_count) / f.sentence_count : 0.0;
  f.unique_word_ratio = static_cast<double>(uniq.size()) / static_cast<double>(words.size());
  return f;
}

// ---------------------------------------------------------------------------
// Individual metrics

struct ReadabilityResult {
  double score = 0;
  double fre = 0;
  int words = 0;
  int sentences = 0;
  int syllables = 0;
};

inline double fre_formula(double words, double sentences, double syllables) {
  return 206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words);
}

inline double readability_from_fre(double fre) { return std::clamp(fre, 0.0, 100.0); }

inline ReadabilityResult readability(std::string_view s) {
  auto f = lexical_features(s);
  if (f.word_count == 0 || f.sentence_count == 0) throw ValidationError("readability: text has no words");
  ReadabilityResult r;
  r.words = f.word_count;
  r.sentences = f.sentence_count;
  r.syllables = f.syllable_count;
  r.fre = fre_formula(r.words, r.sentences, r.syllables);
  r.score = readability_from_fre(r.fre);
  return r;
}

inline double fluency_from_perplexity(double ppl) { return clamp01(1.0 - (ppl - 20.0) / 100.0) * 100.0; }

inline double perplexity(const TokenLogprobs& lp) {
  lp.check();
  if (lp.logprobs.empty()) throw ValidationError("perplexity: no tokens");
  double sum = 0;
  for (double v : lp.logprobs) sum += v;
  return std::exp(-sum / static_cast<double>(lp.logprobs.size()));
}

struct FluencyResult {
  double score = 0;
  double perplexity = 0;
  std::size_t tokens = 0;
  std::string backend;
};

inline FluencyResult fluency(std::string_view s, LogprobBackend* backend) {
  if (backend == nullptr) throw CapabilityError("fluency needs a logprob backend");
  auto lp = backend->logprobs(std::string(s));
  FluencyResult r;
  r.perplexity = perplexity(lp);
  r.score = fluency_from_perplexity(r.perplexity);
  r.tokens = lp.logprobs.size();
  r.backend = lp.backend.empty() ? backend->name() : lp.backend;
  return r;
}

inline double grammar_from_density(double d) { return clamp01(1.0 - d / 10.0) * 100.0; }

inline double error_density(std::size_t errors, std::size_t words) {
  if (words == 0) throw ValidationError("error density: zero words");
  return static_cast<double>(errors) / static_cast<double>(words) * 100.0;
}

struct GrammarResult {
  double score = 0;
  std::size_t error_count = 0;
  double density = 0;
  std::vector<GrammarMatch> matches;
};

inline GrammarResult grammar(std::string_view s, GrammarBackend* backend) {
  if (backend == nullptr) throw CapabilityError("grammar needs a grammar backend");
  const auto words = text::word_count(s);
  if (words == 0) throw ValidationError("grammar: text has no words");
  GrammarResult r;
  r.matches = backend->check(std::string(s));
  r.error_count = r.matches.size();
  r.density = error_density(r.error_count, words);
  r.score = grammar_from_density(r.density);
  return r;
}

inline constexpr double kDefaultMaxDepth = 10.0;

inline double complexity_from_depth(int depth, double d_max = kDefaultMaxDepth) {
  if (!(d_max > 0)) throw ConfigError("d_max must be positive");
  return clamp01(static_cast<double>(depth) / d_max) * 100.0;
}

// Depth of a sentence: root at 1. Uses heads when every token has one.
inline int sentence_depth(const ParsedSentence& s) {
  const bool have_heads =
      !s.tokens.empty() && std::all_of(s.tokens.begin(), s.tokens.end(), [](const ParsedToken& t) { return t.head.has_value(); });
  if (!have_heads) {
    if (!s.depth) throw ValidationError("parsed sentence has neither heads nor a depth");
    return *s.depth;
  }
  const int n = static_cast<int>(s.tokens.size());
  int best = 0;
  for (int i = 0; i < n; ++i) {
    int d = 1, cur = i, steps = 0;
    while (*s.tokens[cur].head >= 0) {
      int h = *s.tokens[cur].head;
      if (h >= n) throw ValidationError("parse head index out of range");
      cur = h;
      ++d;
      if (++steps > n) throw ValidationError("parse heads form a cycle");
    }
    best = std::max(best, d);
  }
  return best;
}

struct ComplexityResult {
  double score = 0;
  int depth = 0;
  double d_max = kDefaultMaxDepth;
  bool heuristic = false;
  std::string backend;
  LinguisticFeatures features;
};

inline ComplexityResult complexity(std::string_view s, ParseBackend* backend, double d_max = kDefaultMaxDepth) {
  if (backend == nullptr) throw CapabilityError("complexity needs a parse backend");
  ComplexityResult r;
  r.features = lexical_features(s);
  if (r.features.word_count == 0) throw ValidationError("complexity: text has no words");
  auto parsed = backend->parse(std::string(s));
  std::map<std::string, std::size_t> tags;
  std::size_t total = 0;
  int depth = 0;
  for (const auto& sent : parsed.sentences) {
    if (sent.tokens.empty()) continue;
    depth = std::max(depth, sentence_depth(sent));
    for (const auto& t : sent.tokens) {
      ++tags[t.pos.empty() ? "X" : t.pos];
      ++total;
    }
  }
  if (depth < 1) throw ValidationError("parse backend returned no tokens");
  for (const auto& [tag, n] : tags) r.features.pos_distribution[tag] = static_cast<double>(n) / static_cast<double>(total);
  r.features.max_dependency_depth = depth;
  r.depth = depth;
  r.d_max = d_max;
  r.score = complexity_from_depth(depth, d_max);
  r.heuristic = backend->heuristic();
  r.backend = backend->name();
  return r;
}

// ---------------------------------------------------------------------------
// Built-in fallback parser: suffix-based POS tags and a depth estimate of a
// root level plus one level per subordinating marker or comma.

class FallbackParser : public ParseBackend {
 public:
  std::string name() const override { return "fallback-heuristic"; }
  bool heuristic() const override { return true; }

  static bool is_subordinator(std::string_view w) {
    static const std::set<std::string> markers = {
        "after",  "although", "as",    "because", "before", "if",    "once",  "since",  "than",
        "that",   "though",   "unless", "until",  "when",   "whenever", "where", "whereas",
        "wherever", "whether", "which", "while",  "who",    "whom",  "whose"};
    return markers.count(text::lower(w)) > 0;
  }

  static std::string tag(std::string_view word) {
    static const std::map<std::string, std::string> closed = {
        {"the", "DET"},   {"a", "DET"},     {"an", "DET"},    {"this", "DET"},  {"that", "SCONJ"}, {"these", "DET"},
        {"those", "DET"}, {"each", "DET"},  {"every", "DET"}, {"i", "PRON"},    {"you", "PRON"},   {"he", "PRON"},
        {"she", "PRON"},  {"it", "PRON"},   {"we", "PRON"},   {"they", "PRON"}, {"me", "PRON"},    {"him", "PRON"},
        {"her", "PRON"},  {"us", "PRON"},   {"them", "PRON"}, {"what", "PRON"}, {"which", "PRON"}, {"who", "PRON"},
        {"in", "ADP"},    {"on", "ADP"},    {"at", "ADP"},    {"of", "ADP"},    {"to", "ADP"},     {"from", "ADP"},
        {"with", "ADP"},  {"by", "ADP"},    {"for", "ADP"},   {"into", "ADP"},  {"about", "ADP"},  {"and", "CCONJ"},
        {"or", "CCONJ"},  {"but", "CCONJ"}, {"is", "AUX"},    {"are", "AUX"},   {"was", "AUX"},    {"were", "AUX"},
        {"be", "AUX"},    {"does", "AUX"},  {"do", "AUX"},    {"did", "AUX"},   {"can", "AUX"},    {"will", "AUX"},
        {"not", "PART"},  {"no", "DET"}};
    std::string w = text::lower(word);
    if (auto it = closed.find(w); it != closed.end()) return it->second;
    if (std::all_of(w.begin(), w.end(), [](char c) { return text::is_digit(c); })) return "NUM";
    if (is_subordinator(w)) return "SCONJ";
    auto ends = [&](std::string_view suf) { return w.size() > suf.size() + 1 && text::ends_with(w, suf); };
    if (ends("ly")) return "ADV";
    if (ends("ing") || ends("ed") || ends("ize") || ends("ise") || ends("ify")) return "VERB";
    if (ends("ful") || ends("ous") || ends("able") || ends("ible") || ends("less") || ends("ive") || ends("ic") ||
        ends("al")) {
      return "ADJ";
    }
    return "NOUN";
  }

  ParseOutput parse(const std::string& s) override {
    ParseOutput out;
    for (const auto& sentence : split_sentences(s)) {
      ParsedSentence ps;
      int markers = 0;
      for (char c : sentence) {
        if (c == ',') ++markers;
      }
      for (const auto& w : text::words(sentence)) {
        if (is_subordinator(w)) ++markers;
        ps.tokens.push_back({w, tag(w), std::nullopt});
      }
      if (ps.tokens.empty()) continue;
      ps.depth = (ps.tokens.size() > 1 ? 2 : 1) + markers;
      out.sentences.push_back(std::move(ps));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Adapters over the gateway and the mock script

class GatewayLogprobs : public LogprobBackend {
 public:
  explicit GatewayLogprobs(std::shared_ptr<Gateway> gw) : gw_(std::move(gw)) {}
  TokenLogprobs logprobs(const std::string& s) override { return gw_->logprobs(s); }
  std::string name() const override { return gw_->config().model_name; }

 private:
  std::shared_ptr<Gateway> gw_;
};

// Each occurrence of a scripted grammar pattern is one error.
class MockGrammar : public GrammarBackend {
 public:
  explicit MockGrammar(std::shared_ptr<MockBackend> mock) : mock_(std::move(mock)) {}
  std::vector<GrammarMatch> check(const std::string& s) override {
    std::vector<GrammarMatch> out;
    for (const auto& rule : mock_->grammar_rules()) {
      for (auto it = std::sregex_iterator(s.begin(), s.end(), rule.re); it != std::sregex_iterator(); ++it) {
        if (it->length(0) == 0) continue;
        out.push_back({static_cast<std::size_t>(it->position(0)), static_cast<std::size_t>(it->length(0)),
                       rule.grammar_rule, "mock rule " + rule.pattern});
      }
    }
    std::sort(out.begin(), out.end(), [](const GrammarMatch& a, const GrammarMatch& b) { return a.offset < b.offset; });
    return out;
  }
  std::string name() const override { return "mock"; }

 private:
  std::shared_ptr<MockBackend> mock_;
};

// ---------------------------------------------------------------------------
// Per-item report

struct MetricGap {
  std::string metric;
  std::string reason;
};

struct MetricRaw {
  std::optional<std::size_t> error_count;
  std::optional<double> error_density;
  std::optional<double> fre;
  std::optional<double> perplexity;
  std::optional<int> depth;
  double d_max = kDefaultMaxDepth;
  std::string grammar_backend;
  std::string parse_backend;
  bool parse_heuristic = false;
  std::string logprob_backend;
};

struct MetricReport {
  std::optional<double> grammar;
  std::optional<double> complexity;
  std::optional<double> readability;
  std::optional<double> fluency;
  LinguisticFeatures features;
  MetricRaw raw;
  std::vector<MetricGap> gaps;
};

struct MetricOptions {
  double d_max = kDefaultMaxDepth;
};

inline MetricReport score_text(const std::string& s, const Backends& b, const MetricOptions& opt = {}) {
  MetricReport rep;
  auto r = readability(s);
  rep.readability = r.score;
  rep.raw.fre = r.fre;
  rep.features = lexical_features(s);
  rep.raw.d_max = opt.d_max;

  auto attempt = [&](const char* metric, auto&& fn) {
    try {
      fn();
    } catch (const CapabilityError& e) {
      rep.gaps.push_back({metric, e.what()});
    } catch (const TransportError& e) {
      rep.gaps.push_back({metric, std::string("backend unavailable: ") + e.what()});
    } catch (const TransientError& e) {
      rep.gaps.push_back({metric, std::string("backend unavailable: ") + e.what()});
    } catch (const RequestError& e) {
      rep.gaps.push_back({metric, std::string("backend rejected request: ") + e.what()});
    }
  };

  if (!b.grammar) {
    rep.gaps.push_back({"grammar", "no grammar backend configured"});
  } else {
    attempt("grammar", [&] {
      auto g = grammar(s, b.grammar.get());
      rep.grammar = g.score;
      rep.raw.error_count = g.error_count;
      rep.raw.error_density = g.density;
      rep.raw.grammar_backend = b.grammar->name();
    });
  }
  if (!b.parse) {
    rep.gaps.push_back({"complexity", "no parse backend configured"});
  } else {
    attempt("complexity", [&] {
      auto c = complexity(s, b.parse.get(), opt.d_max);
      rep.complexity = c.score;
      rep.features = c.features;
      rep.raw.depth = c.depth;
      rep.raw.parse_backend = c.backend;
      rep.raw.parse_heuristic = c.heuristic;
    });
  }
  if (!b.logprob) {
    rep.gaps.push_back({"fluency", "no logprob backend configured"});
  } else {
    attempt("fluency", [&] {
      auto f = fluency(s, b.logprob.get());
      rep.fluency = f.score;
      rep.raw.perplexity = f.perplexity;
      rep.raw.logprob_backend = f.backend;
    });
  }
  return rep;
}

inline MetricReport score_item(const Item& item, const Backends& b, const MetricOptions& opt = {}) {
  if (text::trim(item.stem).empty()) throw ValidationError("score_item: item stem is empty");
  return score_text(metric_text(item), b, opt);
}

namespace detail {
template <class T>
nlohmann::ordered_json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}
}  // namespace detail

inline nlohmann::ordered_json report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["grammar"] = detail::opt_json(r.grammar);
  j["complexity"] = detail::opt_json(r.complexity);
  j["readability"] = detail::opt_json(r.readability);
  j["fluency"] = detail::opt_json(r.fluency);
  nlohmann::ordered_json raw;
  raw["error_count"] = detail::opt_json(r.raw.error_count);
  raw["error_density"] = detail::opt_json(r.raw.error_density);
  raw["fre"] = detail::opt_json(r.raw.fre);
  raw["perplexity"] = detail::opt_json(r.raw.perplexity);
  raw["depth"] = detail::opt_json(r.raw.depth);
  raw["d_max"] = r.raw.d_max;
  raw["grammar_backend"] = r.raw.grammar_backend;
  raw["parse_backend"] = r.raw.parse_backend;
  raw["parse_heuristic"] = r.raw.parse_heuristic;
  raw["logprob_backend"] = r.raw.logprob_backend;
  j["raw"] = raw;
  const auto& f = r.features;
  nlohmann::ordered_json feats;
  feats["word_count"] = f.word_count;
  feats["sentence_count"] = f.sentence_count;
  feats["syllable_count"] = f.syllable_count;
  feats["avg_word_length"] = f.avg_word_length;
  feats["avg_sentence_length"] = f.avg_sentence_length;
  feats["unique_word_ratio"] = f.unique_word_ratio;
  feats["pos_distribution"] = f.pos_distribution;
  feats["max_dependency_depth"] = detail::opt_json(f.max_dependency_depth);
  j["features"] = feats;
  j["gaps"] = nlohmann::ordered_json::array();
  for (const auto& g : r.gaps) j["gaps"].push_back({{"metric", g.metric}, {"reason", g.reason}});
  return j;
}

}  // namespace morphgen
