#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eegcap/dataset.hpp"
#include "eegcap/embedding.hpp"
#include "eegcap/errors.hpp"
#include "eegcap/inference.hpp"
#include "eegcap/rng.hpp"
#include "eegcap/util.hpp"

namespace eegcap {

// ---------------------------------------------------------------------------
// Porter stemmer (the 1980 algorithm). Operates on lowercase ASCII words;
// anything containing a non-letter is returned unchanged.
// ---------------------------------------------------------------------------
class PorterStemmer {
 public:
  static std::string stem(const std::string& word) {
    for (char c : word)
      if (c < 'a' || c > 'z') return word;
    if (word.size() <= 2) return word;
    std::string w = word;
    step1a(w);
    step1b(w);
    step1c(w);
    step2(w);
    step3(w);
    step4(w);
    step5(w);
    return w;
  }

 private:
  static bool is_consonant(const std::string& w, size_t i) {
    const char c = w[i];
    if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') return false;
    if (c == 'y') return i == 0 ? true : !is_consonant(w, i - 1);
    return true;
  }

  // number of VC sequences in the stem
  static int measure(const std::string& w, size_t len) {
    int m = 0;
    size_t i = 0;
    while (i < len && is_consonant(w, i)) ++i;
    while (i < len) {
      while (i < len && !is_consonant(w, i)) ++i;
      if (i >= len) break;
      ++m;
      while (i < len && is_consonant(w, i)) ++i;
    }
    return m;
  }

  static bool contains_vowel(const std::string& w, size_t len) {
    for (size_t i = 0; i < len; ++i)
      if (!is_consonant(w, i)) return true;
    return false;
  }

  static bool double_consonant(const std::string& w, size_t len) {
    return len >= 2 && w[len - 1] == w[len - 2] && is_consonant(w, len - 1);
  }

  // consonant-vowel-consonant, final consonant not w, x or y
  static bool cvc(const std::string& w, size_t len) {
    if (len < 3) return false;
    if (!is_consonant(w, len - 3) || is_consonant(w, len - 2) || !is_consonant(w, len - 1))
      return false;
    const char c = w[len - 1];
    return c != 'w' && c != 'x' && c != 'y';
  }

  static bool ends_with(const std::string& w, const char* suffix) {
    const size_t n = std::string(suffix).size();
    return w.size() >= n && w.compare(w.size() - n, n, suffix) == 0;
  }

  // replace suffix when the measure of the remaining stem clears min_m
  static bool replace(std::string& w, const char* suffix, const char* repl, int min_m) {
    if (!ends_with(w, suffix)) return false;
    const size_t stem_len = w.size() - std::string(suffix).size();
    if (measure(w, stem_len) <= min_m) return true;  // matched but not applied
    w = w.substr(0, stem_len) + repl;
    return true;
  }

  static void step1a(std::string& w) {
    if (ends_with(w, "sses")) w.resize(w.size() - 2);
    else if (ends_with(w, "ies")) w.resize(w.size() - 2);
    else if (ends_with(w, "ss")) {}
    else if (ends_with(w, "s")) w.resize(w.size() - 1);
  }

  static void step1b(std::string& w) {
    bool cleanup = false;
    if (ends_with(w, "eed")) {
      if (measure(w, w.size() - 3) > 0) w.resize(w.size() - 1);
    } else if (ends_with(w, "ed") && contains_vowel(w, w.size() - 2)) {
      w.resize(w.size() - 2);
      cleanup = true;
    } else if (ends_with(w, "ing") && contains_vowel(w, w.size() - 3)) {
      w.resize(w.size() - 3);
      cleanup = true;
    }
    if (cleanup) {
      if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) w.push_back('e');
      else if (double_consonant(w, w.size()) && !ends_with(w, "l") && !ends_with(w, "s") &&
               !ends_with(w, "z"))
        w.resize(w.size() - 1);
      else if (measure(w, w.size()) == 1 && cvc(w, w.size())) w.push_back('e');
    }
  }

  static void step1c(std::string& w) {
    if (ends_with(w, "y") && contains_vowel(w, w.size() - 1)) w[w.size() - 1] = 'i';
  }

  static void step2(std::string& w) {
    static const std::pair<const char*, const char*> rules[] = {
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
        {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
        {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
        {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"}, {"biliti", "ble"}};
    for (const auto& [suf, rep] : rules)
      if (replace(w, suf, rep, 0)) return;
  }

  static void step3(std::string& w) {
    static const std::pair<const char*, const char*> rules[] = {
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
        {"ical", "ic"},  {"ful", ""},   {"ness", ""}};
    for (const auto& [suf, rep] : rules)
      if (replace(w, suf, rep, 0)) return;
  }

  static void step4(std::string& w) {
    static const char* suffixes[] = {"al",   "ance", "ence", "er",  "ic",  "able", "ible",
                                     "ant",  "ement", "ment", "ent", "ou",  "ism",  "ate",
                                     "iti",  "ous",  "ive",  "ize"};
    if (ends_with(w, "ion")) {
      const size_t stem_len = w.size() - 3;
      if (stem_len >= 1 && (w[stem_len - 1] == 's' || w[stem_len - 1] == 't') &&
          measure(w, stem_len) > 1)
        w.resize(stem_len);
      return;
    }
    for (const char* suf : suffixes) {
      if (ends_with(w, suf)) {
        const size_t stem_len = w.size() - std::string(suf).size();
        if (measure(w, stem_len) > 1) w.resize(stem_len);
        return;
      }
    }
  }

  static void step5(std::string& w) {
    if (ends_with(w, "e")) {
      const int m = measure(w, w.size() - 1);
      if (m > 1 || (m == 1 && !cvc(w, w.size() - 1))) w.resize(w.size() - 1);
    }
    if (double_consonant(w, w.size()) && ends_with(w, "l") && measure(w, w.size()) > 1)
      w.resize(w.size() - 1);
  }
};

// ---------------------------------------------------------------------------
// BLEU-N: modified n-gram precision with clipping, geometric mean over 1..N,
// brevity penalty; zero clipped counts take an epsilon floor (recorded).
// ---------------------------------------------------------------------------

struct BleuResult {
  double score = 0.0;
  bool empty_candidate = false;
  bool smoothed = false;  // epsilon floor applied to some order
  static constexpr double kEpsilon = 1e-9;
};

namespace detail {

inline std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& toks,
                                                            int n) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[std::vector<std::string>(toks.begin() + static_cast<long>(i),
                                      toks.begin() + static_cast<long>(i + n))];
  return counts;
}

}  // namespace detail

inline BleuResult bleu_n_detail(const std::string& candidate,
                                const std::vector<std::string>& references, int n) {
  if (n < 1) raise(ErrorCode::ShapeMismatch, "BLEU order must be >= 1");
  if (references.empty()) raise(ErrorCode::EmptyReference, "BLEU needs at least one reference");
  BleuResult res;
  const auto cand = word_tokenize(candidate);
  if (cand.empty()) {
    res.empty_candidate = true;
    return res;
  }
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(word_tokenize(r));

  double log_sum = 0.0;
  for (int order = 1; order <= n; ++order) {
    const auto cand_counts = detail::ngram_counts(cand, order);
    size_t total = 0, clipped = 0;
    for (const auto& [gram, count] : cand_counts) {
      total += static_cast<size_t>(count);
      int best_ref = 0;
      for (const auto& ref : refs) {
        const auto rc = detail::ngram_counts(ref, order);
        auto it = rc.find(gram);
        if (it != rc.end()) best_ref = std::max(best_ref, it->second);
      }
      clipped += static_cast<size_t>(std::min(count, best_ref));
    }
    double p;
    if (total == 0 || clipped == 0) {
      p = BleuResult::kEpsilon / std::max<size_t>(total, 1);
      res.smoothed = true;
    } else {
      p = static_cast<double>(clipped) / static_cast<double>(total);
    }
    log_sum += std::log(p);
  }

  // closest reference length; ties go to the shorter reference
  const size_t c = cand.size();
  size_t r_best = refs[0].size();
  for (const auto& ref : refs) {
    const auto diff = [&](size_t rl) {
      return rl > c ? rl - c : c - rl;
    };
    if (diff(ref.size()) < diff(r_best) || (diff(ref.size()) == diff(r_best) && ref.size() < r_best))
      r_best = ref.size();
  }
  const double bp = c >= r_best ? 1.0 : std::exp(1.0 - static_cast<double>(r_best) / c);
  res.score = bp * std::exp(log_sum / n);
  return res;
}

inline double bleu_n(const std::string& candidate, const std::vector<std::string>& references,
                     int n) {
  return bleu_n_detail(candidate, references, n).score;
}

// ---------------------------------------------------------------------------
// ROUGE-N (n-gram overlap F1) and ROUGE-L (LCS F-measure, beta = 1.2).
// ---------------------------------------------------------------------------

inline double rouge_n(const std::string& candidate, const std::string& reference, int n) {
  if (word_tokenize(reference).empty()) raise(ErrorCode::EmptyReference, "ROUGE reference empty");
  const auto cc = detail::ngram_counts(word_tokenize(candidate), n);
  const auto rc = detail::ngram_counts(word_tokenize(reference), n);
  size_t overlap = 0, cand_total = 0, ref_total = 0;
  for (const auto& [g, c] : cc) cand_total += static_cast<size_t>(c);
  for (const auto& [g, c] : rc) ref_total += static_cast<size_t>(c);
  for (const auto& [g, c] : cc) {
    auto it = rc.find(g);
    if (it != rc.end()) overlap += static_cast<size_t>(std::min(c, it->second));
  }
  if (cand_total == 0 || ref_total == 0 || overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / cand_total;
  const double r = static_cast<double>(overlap) / ref_total;
  return 2.0 * p * r / (p + r);
}

namespace detail {

inline size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

inline constexpr double kRougeLBeta = 1.2;

inline double rouge_l(const std::string& candidate, const std::string& reference) {
  const auto cand = word_tokenize(candidate);
  const auto ref = word_tokenize(reference);
  if (ref.empty()) raise(ErrorCode::EmptyReference, "ROUGE reference empty");
  if (cand.empty()) return 0.0;
  const size_t lcs = detail::lcs_length(cand, ref);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / cand.size();
  const double r = static_cast<double>(lcs) / ref.size();
  const double b2 = kRougeLBeta * kRougeLBeta;
  return (1.0 + b2) * r * p / (r + b2 * p);
}

// ---------------------------------------------------------------------------
// METEOR: exact then Porter-stem unigram alignment (greedy, earliest
// unmatched reference position per candidate position, in candidate order),
// F_mean = 10PR/(R+9P), fragmentation penalty 0.5*(chunks/matches)^3.
// ---------------------------------------------------------------------------

inline double meteor(const std::string& candidate, const std::string& reference) {
  const auto cand = word_tokenize(candidate);
  const auto ref = word_tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0;

  std::vector<int> cand_to_ref(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);
  // stage 1: exact; stage 2: stem
  for (int stage = 0; stage < 2; ++stage) {
    for (size_t i = 0; i < cand.size(); ++i) {
      if (cand_to_ref[i] >= 0) continue;
      for (size_t j = 0; j < ref.size(); ++j) {
        if (ref_used[j]) continue;
        const bool match = stage == 0
                               ? cand[i] == ref[j]
                               : PorterStemmer::stem(cand[i]) == PorterStemmer::stem(ref[j]);
        if (match) {
          cand_to_ref[i] = static_cast<int>(j);
          ref_used[j] = true;
          break;
        }
      }
    }
  }

  size_t matches = 0;
  size_t chunks = 0;
  int prev_ref = -2;
  for (size_t i = 0; i < cand.size(); ++i) {
    if (cand_to_ref[i] < 0) {
      prev_ref = -2;
      continue;
    }
    ++matches;
    if (cand_to_ref[i] != prev_ref + 1) ++chunks;
    prev_ref = cand_to_ref[i];
  }
  if (matches == 0) return 0.0;
  const double p = static_cast<double>(matches) / cand.size();
  const double r = static_cast<double>(matches) / ref.size();
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

// ---------------------------------------------------------------------------
// BERTScore-style greedy cosine matching. The offline fallback embedder maps
// each token to a deterministic hashed unit vector, so identical tokens score
// 1 and unrelated tokens score near 0; results are flagged non-comparable to
// published numbers.
// ---------------------------------------------------------------------------

class TokenEmbedder {
 public:
  virtual ~TokenEmbedder() = default;
  virtual std::vector<double> embed(const std::string& token) const = 0;
  virtual std::string name() const = 0;
};

class HashedTokenEmbedder : public TokenEmbedder {
 public:
  explicit HashedTokenEmbedder(int dim = 128, uint64_t seed = 0) : dim_(dim), seed_(seed) {}

  std::vector<double> embed(const std::string& token) const override {
    Rng rng(fnv1a64(token.data(), token.size()) ^ seed_);
    auto v = rng.normal_vec(static_cast<size_t>(dim_));
    const double n = l2_norm(v);
    for (auto& x : v) x /= n;
    return v;
  }

  std::string name() const override { return "hashed-fallback"; }

 private:
  int dim_;
  uint64_t seed_;
};

inline std::unique_ptr<TokenEmbedder> make_token_embedder(const std::string& key) {
  if (key == "hashed") return std::make_unique<HashedTokenEmbedder>();
  raise(ErrorCode::BackendUnavailable,
        "token embedder '" + key + "' is not installed; use 'hashed'");
}

struct BertScoreResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline BertScoreResult bert_score_detail(const std::string& candidate, const std::string& reference,
                                         const TokenEmbedder& embedder) {
  const auto cand = word_tokenize(candidate);
  const auto ref = word_tokenize(reference);
  if (cand.empty() || ref.empty()) return {};
  std::vector<std::vector<double>> ce, re;
  for (const auto& t : cand) ce.push_back(embedder.embed(t));
  for (const auto& t : ref) re.push_back(embedder.embed(t));
  double p = 0.0;
  for (const auto& c : ce) {
    double best = -1.0;
    for (const auto& r : re) best = std::max(best, cosine(c, r));
    p += best;
  }
  p /= static_cast<double>(ce.size());
  double r = 0.0;
  for (const auto& rv : re) {
    double best = -1.0;
    for (const auto& c : ce) best = std::max(best, cosine(rv, c));
    r += best;
  }
  r /= static_cast<double>(re.size());
  BertScoreResult out{p, r, 0.0};
  if (p + r > 0) out.f1 = 2.0 * p * r / (p + r);
  return out;
}

inline double bert_score(const std::string& candidate, const std::string& reference,
                         const TokenEmbedder& embedder) {
  return bert_score_detail(candidate, reference, embedder).f1;
}

// ---------------------------------------------------------------------------
// Classification report: accuracy, per-subject accuracy, row-stochastic
// confusion matrix in LabelSet order.
// ---------------------------------------------------------------------------

struct ClassificationReport {
  double accuracy = 0.0;
  std::map<int, double> per_subject_accuracy;
  std::vector<std::vector<int>> confusion_counts;    // [gold][pred]
  std::vector<std::vector<double>> confusion_matrix;  // row-normalized
  size_t n = 0;
};

inline ClassificationReport classification_report(
    const std::vector<std::tuple<std::string, std::string, int>>& pred_gold_subject,
    const LabelSet& labels) {
  ClassificationReport rep;
  const size_t L = labels.size();
  rep.confusion_counts.assign(L, std::vector<int>(L, 0));
  rep.confusion_matrix.assign(L, std::vector<double>(L, 0.0));
  std::map<int, std::pair<size_t, size_t>> subj;  // subject -> (correct, total)
  size_t correct = 0;
  for (const auto& [pred, gold, subject] : pred_gold_subject) {
    const int pi = labels.index_of(pred);
    const int gi = labels.index_of(gold);
    ++rep.confusion_counts[static_cast<size_t>(gi)][static_cast<size_t>(pi)];
    auto& s = subj[subject];
    ++s.second;
    if (pi == gi) {
      ++correct;
      ++s.first;
    }
    ++rep.n;
  }
  if (rep.n) rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.n);
  for (const auto& [sid, cnt] : subj)
    rep.per_subject_accuracy[sid] =
        cnt.second ? static_cast<double>(cnt.first) / static_cast<double>(cnt.second) : 0.0;
  for (size_t g = 0; g < L; ++g) {
    size_t row_total = 0;
    for (size_t p = 0; p < L; ++p) row_total += static_cast<size_t>(rep.confusion_counts[g][p]);
    if (row_total)
      for (size_t p = 0; p < L; ++p)
        rep.confusion_matrix[g][p] =
            static_cast<double>(rep.confusion_counts[g][p]) / static_cast<double>(row_total);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Grounding metrics. Containment is case-insensitive whole-word phrase match
// on Porter-stemmed tokens, so plural surface forms count ("mushrooms"
// contains "mushroom"); labels with " or " match on any alternative. When
// pred != ref and both objects appear in the text, TN takes precedence over
// FP.
// ---------------------------------------------------------------------------

struct GroundingCounts {
  size_t tp = 0;   // pred == ref, text contains ref
  size_t fng = 0;  // pred == ref, text lacks ref
  size_t tn = 0;   // pred != ref, text contains ref
  size_t fp = 0;   // pred != ref, text contains pred (not ref)
  size_t fn = 0;   // pred != ref, text contains neither

  size_t total() const { return tp + fng + tn + fp + fn; }
};

namespace detail {

inline bool contains_phrase(const std::vector<std::string>& text_stems,
                            const std::string& phrase) {
  std::vector<std::string> want;
  for (const auto& w : word_tokenize(phrase)) want.push_back(PorterStemmer::stem(w));
  if (want.empty()) return false;
  if (want.size() > text_stems.size()) return false;
  for (size_t i = 0; i + want.size() <= text_stems.size(); ++i) {
    bool all = true;
    for (size_t j = 0; j < want.size(); ++j)
      if (text_stems[i + j] != want[j]) {
        all = false;
        break;
      }
    if (all) return true;
  }
  return false;
}

inline std::vector<std::string> label_alternatives(const std::string& label) {
  std::vector<std::string> alts;
  size_t start = 0;
  while (true) {
    const size_t pos = label.find(" or ", start);
    if (pos == std::string::npos) {
      alts.push_back(label.substr(start));
      break;
    }
    alts.push_back(label.substr(start, pos - start));
    start = pos + 4;
  }
  return alts;
}

inline bool text_contains_label(const std::string& text, const std::string& label) {
  std::vector<std::string> stems;
  for (const auto& w : word_tokenize(text)) stems.push_back(PorterStemmer::stem(w));
  for (const auto& alt : label_alternatives(label))
    if (contains_phrase(stems, alt)) return true;
  return false;
}

}  // namespace detail

inline GroundingCounts grounding_metrics(const std::vector<GenerationRecord>& records) {
  GroundingCounts g;
  for (const auto& r : records) {
    const bool has_ref = detail::text_contains_label(r.generated_text, r.reference_object);
    if (r.predicted_object == r.reference_object) {
      has_ref ? ++g.tp : ++g.fng;
    } else if (has_ref) {
      ++g.tn;
    } else if (detail::text_contains_label(r.generated_text, r.predicted_object)) {
      ++g.fp;
    } else {
      ++g.fn;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Judge scoring. The client is an external HTTP service or a mock; replies
// must contain "fluency: <1..5>" and "adequacy: <1..5>" in any surrounding
// text. Unparseable or out-of-range replies exclude the record (counted).
// ---------------------------------------------------------------------------

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  // returns the raw reply text for one record
  virtual std::string rate(const GenerationRecord& record, const std::string& rubric) = 0;
};

class MockJudgeClient : public JudgeClient {
 public:
  explicit MockJudgeClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}

  std::string rate(const GenerationRecord&, const std::string&) override {
    if (replies_.empty()) raise(ErrorCode::JudgeUnavailable, "mock judge has no replies left");
    const std::string r = replies_.front();
    if (replies_.size() > 1) replies_.erase(replies_.begin());
    return r;
  }

 private:
  std::vector<std::string> replies_;
};

struct JudgeScores {
  double mean_fluency = 0.0;
  double mean_adequacy = 0.0;
  size_t n_scored = 0;
  size_t n_failed = 0;
  std::string rubric;
};

namespace detail {

inline std::optional<int> parse_score_after(const std::string& reply, const std::string& key) {
  std::string lower;
  for (char c : reply) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  const size_t pos = lower.find(key);
  if (pos == std::string::npos) return std::nullopt;
  size_t i = pos + key.size();
  while (i < lower.size() && !std::isdigit(static_cast<unsigned char>(lower[i]))) {
    // stop scanning if we run into a letter that starts another word far away
    if (i - (pos + key.size()) > 8) return std::nullopt;
    ++i;
  }
  if (i >= lower.size()) return std::nullopt;
  int value = 0;
  while (i < lower.size() && std::isdigit(static_cast<unsigned char>(lower[i]))) {
    value = value * 10 + (lower[i] - '0');
    ++i;
  }
  if (value < 1 || value > 5) return std::nullopt;
  return value;
}

}  // namespace detail

inline JudgeScores judge_scores(const std::vector<GenerationRecord>& records, JudgeClient& client,
                                const std::string& rubric) {
  JudgeScores out;
  out.rubric = rubric;
  double flu = 0.0, ade = 0.0;
  for (const auto& r : records) {
    std::string reply;
    try {
      reply = client.rate(r, rubric);
    } catch (const Error&) {
      ++out.n_failed;
      continue;
    }
    const auto f = detail::parse_score_after(reply, "fluency");
    const auto a = detail::parse_score_after(reply, "adequacy");
    if (!f || !a) {
      ++out.n_failed;  // UnparseableReply: excluded, counted
      continue;
    }
    flu += *f;
    ade += *a;
    ++out.n_scored;
  }
  if (out.n_scored) {
    out.mean_fluency = flu / static_cast<double>(out.n_scored);
    out.mean_adequacy = ade / static_cast<double>(out.n_scored);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-journal metric report: every corpus value is the arithmetic mean of
// per-record scores.
// ---------------------------------------------------------------------------

struct MetricValues {
  double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;
  double bleu1 = 0.0, bleu4 = 0.0;
  double meteor_score = 0.0;
  double bert = 0.0;
  size_t count = 0;
};

struct MetricReport {
  std::string variant;
  MetricValues pooled;
  std::map<int, MetricValues> per_subject;
  std::optional<JudgeScores> judge;
  std::string bert_embedder;
  size_t n_errors = 0;
};

inline MetricReport compute_metric_report(const std::vector<GenerationRecord>& records,
                                          const TokenEmbedder& embedder) {
  MetricReport rep;
  rep.bert_embedder = embedder.name();
  if (!records.empty()) rep.variant = records.front().variant;
  auto add = [&](MetricValues& mv, const GenerationRecord& r) {
    mv.rouge1 += rouge_n(r.generated_text, r.reference_caption, 1);
    mv.rouge2 += rouge_n(r.generated_text, r.reference_caption, 2);
    mv.rougeL += rouge_l(r.generated_text, r.reference_caption);
    mv.bleu1 += bleu_n(r.generated_text, {r.reference_caption}, 1);
    mv.bleu4 += bleu_n(r.generated_text, {r.reference_caption}, 4);
    mv.meteor_score += meteor(r.generated_text, r.reference_caption);
    mv.bert += bert_score(r.generated_text, r.reference_caption, embedder);
    ++mv.count;
  };
  for (const auto& r : records) {
    if (!r.error.empty()) {
      ++rep.n_errors;
      continue;
    }
    add(rep.pooled, r);
    add(rep.per_subject[r.subject_id], r);
  }
  auto finish = [](MetricValues& mv) {
    if (!mv.count) return;
    const double n = static_cast<double>(mv.count);
    mv.rouge1 /= n;
    mv.rouge2 /= n;
    mv.rougeL /= n;
    mv.bleu1 /= n;
    mv.bleu4 /= n;
    mv.meteor_score /= n;
    mv.bert /= n;
  };
  finish(rep.pooled);
  for (auto& [sid, mv] : rep.per_subject) finish(mv);
  return rep;
}

}  // namespace eegcap
