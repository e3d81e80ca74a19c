#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "eegcap/checkpoint.hpp"
#include "eegcap/errors.hpp"
#include "eegcap/optim.hpp"
#include "eegcap/rng.hpp"
#include "eegcap/tensor.hpp"
#include "eegcap/util.hpp"

namespace eegcap {

// The five experimental conditions. ALL/OBJ_RAND_EMB/NO_STAGE2 prompts carry
// both slots; ONLY_EEG drops the object slot, ONLY_OBJ drops the image slot.
enum class Variant { All, OnlyEeg, OnlyObj, ObjRandEmb, NoStage2 };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::All: return "ALL";
    case Variant::OnlyEeg: return "ONLY_EEG";
    case Variant::OnlyObj: return "ONLY_OBJ";
    case Variant::ObjRandEmb: return "OBJ_RAND_EMB";
    case Variant::NoStage2: return "NO_STAGE2";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "ALL") return Variant::All;
  if (s == "ONLY_EEG") return Variant::OnlyEeg;
  if (s == "ONLY_OBJ") return Variant::OnlyObj;
  if (s == "OBJ_RAND_EMB") return Variant::ObjRandEmb;
  if (s == "NO_STAGE2") return Variant::NoStage2;
  raise(ErrorCode::BadConfig, "unknown variant " + s);
}

inline bool variant_has_image_slot(Variant v) { return v != Variant::OnlyObj; }
inline bool variant_has_object_slot(Variant v) { return v != Variant::OnlyEeg; }

// Whitespace-plus-punctuation tokenizer with byte fallback, built from the
// caption corpus. Ids: 7 specials, 256 byte tokens, then the corpus
// vocabulary in lexicographic order.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kImage = 3;
  static constexpr int kSystem = 4;
  static constexpr int kUser = 5;
  static constexpr int kAssistant = 6;
  static constexpr int kByteBase = 7;
  static constexpr int kCorpusBase = kByteBase + 256;

  static Tokenizer build(const std::vector<std::string>& corpus) {
    std::set<std::string> vocab;
    for (const auto& text : corpus)
      for (const auto& w : word_tokenize(text)) vocab.insert(w);
    Tokenizer t;
    t.corpus_tokens_.assign(vocab.begin(), vocab.end());
    t.rebuild_lookup();
    return t;
  }

  static Tokenizer from_tokens(std::vector<std::string> tokens) {
    Tokenizer t;
    t.corpus_tokens_ = std::move(tokens);
    t.rebuild_lookup();
    return t;
  }

  int vocab_size() const { return kCorpusBase + static_cast<int>(corpus_tokens_.size()); }
  const std::vector<std::string>& corpus_tokens() const { return corpus_tokens_; }

  // Word-level encode; unknown words fall back to their UTF-8 bytes.
  std::vector<int> encode_text(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : word_tokenize(text)) {
      auto it = lookup_.find(w);
      if (it != lookup_.end()) {
        ids.push_back(it->second);
      } else {
        for (unsigned char c : w) ids.push_back(kByteBase + static_cast<int>(c));
      }
    }
    return ids;
  }

  std::string token_text(int id) const {
    if (id >= kCorpusBase && id < vocab_size())
      return corpus_tokens_[static_cast<size_t>(id - kCorpusBase)];
    if (id >= kByteBase && id < kCorpusBase) return std::string(1, static_cast<char>(id - kByteBase));
    switch (id) {
      case kPad: return "<pad>";
      case kBos: return "<bos>";
      case kEos: return "<eos>";
      case kImage: return "<image>";
      case kSystem: return "<|system|>";
      case kUser: return "<|user|>";
      case kAssistant: return "<|assistant|>";
    }
    raise(ErrorCode::OutOfVocab, "token id " + std::to_string(id));
  }

  // Join word tokens with spaces; punctuation and byte tokens attach to the
  // previous token.
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
      if (id < kCorpusBase && id >= kByteBase) {
        out.push_back(static_cast<char>(id - kByteBase));
        continue;
      }
      if (id < kByteBase) continue;  // specials render as nothing
      const std::string w = token_text(id);
      const bool punct = w.size() == 1 && !std::isalnum(static_cast<unsigned char>(w[0]));
      if (!out.empty() && !punct) out.push_back(' ');
      out += w;
    }
    return out;
  }

 private:
  void rebuild_lookup() {
    lookup_.clear();
    for (size_t i = 0; i < corpus_tokens_.size(); ++i)
      lookup_[corpus_tokens_[i]] = kCorpusBase + static_cast<int>(i);
  }

  std::vector<std::string> corpus_tokens_;
  std::map<std::string, int> lookup_;
};

// Chat prompt template with the literal slot markers "<image>" and
// "<object_string>".
struct PromptTemplate {
  std::vector<std::pair<std::string, std::string>> messages = {
      {"system", "You are a helpful assistant."},
      {"user", "<image> <object_string> Describe this in one sentence:"}};

  void validate() const {
    bool has_system = false;
    int n_image = 0, n_object = 0;
    for (const auto& [role, content] : messages) {
      if (role == "system") has_system = true;
      for (size_t pos = content.find("<image>"); pos != std::string::npos;
           pos = content.find("<image>", pos + 1))
        ++n_image;
      for (size_t pos = content.find("<object_string>"); pos != std::string::npos;
           pos = content.find("<object_string>", pos + 1))
        ++n_object;
    }
    if (!has_system) raise(ErrorCode::BadConfig, "prompt template needs a system message");
    if (n_image > 1 || n_object > 1)
      raise(ErrorCode::BadConfig, "slot markers may appear at most once");
  }
};

using Span = std::pair<int, int>;  // [first, second), token indices

struct AssembledPrompt {
  std::vector<int> token_ids;
  std::optional<Span> image_slot_span;
  std::optional<Span> object_slot_span;
  int bos_id = Tokenizer::kBos;
  int eos_id = Tokenizer::kEos;
  int pad_id = Tokenizer::kPad;
};

// Render the template to token ids for a variant. The object string is
// tokenized in place of its marker and its span recorded; the image marker
// becomes the single <image> token.
inline AssembledPrompt apply_chat_template(const Tokenizer& tok, const PromptTemplate& tmpl,
                                           const std::optional<std::string>& object_string,
                                           Variant variant) {
  tmpl.validate();
  if (variant_has_object_slot(variant) && !object_string)
    raise(ErrorCode::MissingObjectString,
          std::string("variant ") + variant_name(variant) + " requires an object string");

  AssembledPrompt out;
  out.token_ids.push_back(Tokenizer::kBos);
  for (const auto& [role, content] : tmpl.messages) {
    if (role == "system") out.token_ids.push_back(Tokenizer::kSystem);
    else if (role == "user") out.token_ids.push_back(Tokenizer::kUser);
    else raise(ErrorCode::BadConfig, "unknown role " + role);

    size_t pos = 0;
    while (pos < content.size()) {
      const size_t img = content.find("<image>", pos);
      const size_t obj = content.find("<object_string>", pos);
      const size_t next = std::min(img, obj);
      if (next == std::string::npos) {
        for (int id : tok.encode_text(content.substr(pos))) out.token_ids.push_back(id);
        break;
      }
      for (int id : tok.encode_text(content.substr(pos, next - pos))) out.token_ids.push_back(id);
      if (next == img) {
        if (variant_has_image_slot(variant)) {
          const int at = static_cast<int>(out.token_ids.size());
          out.token_ids.push_back(Tokenizer::kImage);
          out.image_slot_span = Span{at, at + 1};
        }
        pos = next + std::string("<image>").size();
      } else {
        if (variant_has_object_slot(variant)) {
          const auto ids = tok.encode_text(*object_string);
          const int at = static_cast<int>(out.token_ids.size());
          for (int id : ids) out.token_ids.push_back(id);
          out.object_slot_span = Span{at, at + static_cast<int>(ids.size())};
        }
        pos = next + std::string("<object_string>").size();
      }
    }
  }
  out.token_ids.push_back(Tokenizer::kAssistant);
  return out;
}

enum class RowProvenance { TokenTable, ProjectedMm, ObjectLabel };

// A [T,E] embedding sequence plus per-row provenance. `rows` is a graph node
// so stage-2/3 gradients can flow back into spliced projector outputs.
struct TokenEmbeddingSequence {
  TensorPtr rows;  // [T, E]
  std::vector<RowProvenance> provenance;

  int length() const { return rows->shape[0]; }
  int width() const { return rows->shape[1]; }
};

struct LmConfig {
  int vocab = 0;  // filled from the tokenizer
  int width = 128;
  int heads = 4;
  int blocks = 4;
  int max_seq = 160;
};

struct DecodeParams {
  int max_new_tokens = 32;
  bool greedy = true;
  double temperature = 1.0;
  uint64_t sample_seed = 0;
};

// Small causal decoder: learned token + positional embeddings, pre-norm
// blocks of multi-head attention and a GELU MLP, untied output head. Serves
// as the frozen backend the projector trains against; briefly pretrained on
// the caption corpus so generation is non-degenerate.
class TinyLm {
 public:
  TinyLm(LmConfig cfg, Tokenizer tokenizer, uint64_t init_seed)
      : cfg_(cfg), tok_(std::move(tokenizer)), init_seed_(init_seed) {
    cfg_.vocab = tok_.vocab_size();
    if (cfg_.width % cfg_.heads != 0)
      raise(ErrorCode::BadConfig, "LM width must be divisible by head count");
    Rng rng = Rng(init_seed).fork("lm-init");
    auto init = [&](const std::string& name, std::vector<int> shape, double std) {
      auto t = Tensor::make(std::move(shape));
      for (auto& v : t->v) v = rng.normal(0.0, std);
      return params_.add(name, t);
    };
    auto zeros = [&](const std::string& name, std::vector<int> shape) {
      return params_.add(name, Tensor::make(std::move(shape)));
    };
    auto ones = [&](const std::string& name, std::vector<int> shape) {
      auto t = Tensor::make(std::move(shape));
      for (auto& v : t->v) v = 1.0;
      return params_.add(name, t);
    };

    init("lm.tok_emb", {cfg_.vocab, cfg_.width}, 0.02);
    init("lm.pos_emb", {cfg_.max_seq, cfg_.width}, 0.02);
    const int dh = cfg_.width / cfg_.heads;
    for (int b = 0; b < cfg_.blocks; ++b) {
      const std::string tag = "lm.blk" + std::to_string(b);
      ones(tag + ".ln1.g", {cfg_.width});
      zeros(tag + ".ln1.b", {cfg_.width});
      for (int h = 0; h < cfg_.heads; ++h) {
        const std::string ht = tag + ".h" + std::to_string(h);
        init(ht + ".q.w", {dh, cfg_.width}, 0.02);
        zeros(ht + ".q.b", {dh});
        init(ht + ".k.w", {dh, cfg_.width}, 0.02);
        zeros(ht + ".k.b", {dh});
        init(ht + ".v.w", {dh, cfg_.width}, 0.02);
        zeros(ht + ".v.b", {dh});
      }
      init(tag + ".attn_out.w", {cfg_.width, cfg_.width}, 0.02);
      zeros(tag + ".attn_out.b", {cfg_.width});
      ones(tag + ".ln2.g", {cfg_.width});
      zeros(tag + ".ln2.b", {cfg_.width});
      init(tag + ".fc.w", {4 * cfg_.width, cfg_.width}, 0.02);
      zeros(tag + ".fc.b", {4 * cfg_.width});
      init(tag + ".proj.w", {cfg_.width, 4 * cfg_.width}, 0.02);
      zeros(tag + ".proj.b", {cfg_.width});
    }
    ones("lm.ln_f.g", {cfg_.width});
    zeros("lm.ln_f.b", {cfg_.width});
    init("lm.head", {cfg_.vocab, cfg_.width}, 0.02);
  }

  const LmConfig& config() const { return cfg_; }
  const Tokenizer& tokenizer() const { return tok_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  int width() const { return cfg_.width; }
  uint64_t init_seed() const { return init_seed_; }

  // Exact token-table lookup rows; every row tagged TokenTable.
  TokenEmbeddingSequence embed_tokens(const std::vector<int>& ids) const {
    for (int id : ids)
      if (id < 0 || id >= cfg_.vocab) raise(ErrorCode::OutOfVocab, "token id " + std::to_string(id));
    TokenEmbeddingSequence seq;
    seq.rows = ops::gather_rows(params_.find("lm.tok_emb"), ids);
    seq.provenance.assign(ids.size(), RowProvenance::TokenTable);
    return seq;
  }

  // Replace slot rows: the image span receives h_mm (one graph row, repeated
  // across the span), the object span receives the token-table rows of the
  // retokenized object string, padded/truncated to the span length with
  // <pad>-row fill.
  TokenEmbeddingSequence splice(const TokenEmbeddingSequence& seq,
                                const std::optional<Span>& image_span, const TensorPtr& h_mm,
                                const std::optional<Span>& object_span,
                                const std::optional<std::string>& object_string) const {
    if (static_cast<bool>(image_span) != static_cast<bool>(h_mm))
      raise(ErrorCode::SpanMismatch, "image span and h_mm must be provided together");
    if (static_cast<bool>(object_span) != static_cast<bool>(object_string))
      raise(ErrorCode::SpanMismatch, "object span and object string must be provided together");
    const int T = seq.length();
    TokenEmbeddingSequence out = seq;
    auto check_span = [&](const Span& s) {
      if (s.first < 0 || s.second > T || s.first >= s.second)
        raise(ErrorCode::SpanMismatch, "span outside sequence");
    };
    if (image_span && object_span) {
      if (std::max(image_span->first, object_span->first) <
          std::min(image_span->second, object_span->second))
        raise(ErrorCode::SpanMismatch, "slot spans overlap");
    }
    if (image_span) {
      check_span(*image_span);
      if (h_mm->numel() != static_cast<size_t>(width()))
        raise(ErrorCode::WidthMismatch, "h_mm width mismatch");
      for (int r = image_span->first; r < image_span->second; ++r) {
        out.rows = ops::replace_row(out.rows, r, h_mm);
        out.provenance[static_cast<size_t>(r)] = RowProvenance::ProjectedMm;
      }
    }
    if (object_span) {
      check_span(*object_span);
      std::vector<int> ids = tok_.encode_text(*object_string);
      const int span_len = object_span->second - object_span->first;
      ids.resize(static_cast<size_t>(span_len), Tokenizer::kPad);  // truncate or pad
      for (int r = 0; r < span_len; ++r) {
        auto row = ops::gather_rows(params_.find("lm.tok_emb"), {ids[static_cast<size_t>(r)]});
        out.rows = ops::replace_row(out.rows, object_span->first + r, row);
        out.provenance[static_cast<size_t>(object_span->first + r)] = RowProvenance::ObjectLabel;
      }
    }
    return out;
  }

  // Alternative H_mm placement: prepend the projected row ahead of the token
  // embeddings instead of replacing the image slot.
  TokenEmbeddingSequence splice_prepend(const TokenEmbeddingSequence& seq,
                                        const TensorPtr& h_mm) const {
    if (h_mm->shape.size() != 2 || h_mm->shape[0] != 1 || h_mm->shape[1] != width())
      raise(ErrorCode::WidthMismatch, "h_mm must be a [1, width] row");
    TokenEmbeddingSequence out;
    out.rows = ops::concat_rows(h_mm, seq.rows);
    out.provenance.reserve(seq.provenance.size() + 1);
    out.provenance.push_back(RowProvenance::ProjectedMm);
    out.provenance.insert(out.provenance.end(), seq.provenance.begin(), seq.provenance.end());
    return out;
  }

  // Full forward on injected embeddings -> logits [T, vocab].
  TensorPtr forward_with_embeddings(const TensorPtr& embs) const {
    if (embs->shape.size() != 2 || embs->shape[1] != cfg_.width)
      raise(ErrorCode::WidthMismatch, "embedding width does not match LM width");
    const int T = embs->shape[0];
    if (T > cfg_.max_seq) raise(ErrorCode::ShapeMismatch, "sequence longer than max_seq");
    std::vector<int> positions(static_cast<size_t>(T));
    for (int i = 0; i < T; ++i) positions[static_cast<size_t>(i)] = i;
    auto x = ops::add(embs, ops::gather_rows(params_.find("lm.pos_emb"), positions));
    const int dh = cfg_.width / cfg_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int b = 0; b < cfg_.blocks; ++b) {
      const std::string tag = "lm.blk" + std::to_string(b);
      auto xn = ops::layernorm(x, params_.find(tag + ".ln1.g"), params_.find(tag + ".ln1.b"));
      std::vector<TensorPtr> head_outs;
      for (int h = 0; h < cfg_.heads; ++h) {
        const std::string ht = tag + ".h" + std::to_string(h);
        auto q = ops::add_bias(ops::matmul_nt(xn, params_.find(ht + ".q.w")), params_.find(ht + ".q.b"));
        auto k = ops::add_bias(ops::matmul_nt(xn, params_.find(ht + ".k.w")), params_.find(ht + ".k.b"));
        auto v = ops::add_bias(ops::matmul_nt(xn, params_.find(ht + ".v.w")), params_.find(ht + ".v.b"));
        auto att = ops::causal_softmax(ops::scale(ops::matmul_nt(q, k), scale));
        head_outs.push_back(ops::matmul(att, v));
      }
      auto merged = head_outs.size() == 1 ? head_outs[0] : ops::concat_cols(head_outs);
      auto attn = ops::add_bias(ops::matmul_nt(merged, params_.find(tag + ".attn_out.w")),
                                params_.find(tag + ".attn_out.b"));
      x = ops::add(x, attn);
      auto xm = ops::layernorm(x, params_.find(tag + ".ln2.g"), params_.find(tag + ".ln2.b"));
      auto hden = ops::gelu(ops::add_bias(ops::matmul_nt(xm, params_.find(tag + ".fc.w")),
                                          params_.find(tag + ".fc.b")));
      auto mlp = ops::add_bias(ops::matmul_nt(hden, params_.find(tag + ".proj.w")),
                               params_.find(tag + ".proj.b"));
      x = ops::add(x, mlp);
    }
    auto xf = ops::layernorm(x, params_.find("lm.ln_f.g"), params_.find("lm.ln_f.b"));
    return ops::matmul_nt(xf, params_.find("lm.head"));
  }

  // Standard id-based forward; the embedding-injection path must match this
  // exactly on slot-free prompts.
  TensorPtr forward_ids(const std::vector<int>& ids) const {
    auto table = params_.find("lm.tok_emb");
    auto embs = Tensor::make({static_cast<int>(ids.size()), cfg_.width});
    for (size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] < 0 || ids[r] >= cfg_.vocab)
        raise(ErrorCode::OutOfVocab, "token id " + std::to_string(ids[r]));
      for (int c = 0; c < cfg_.width; ++c)
        embs->v[r * static_cast<size_t>(cfg_.width) + static_cast<size_t>(c)] =
            table->v[static_cast<size_t>(ids[r]) * cfg_.width + static_cast<size_t>(c)];
    }
    return forward_with_embeddings(embs);
  }

  // Greedy (or temperature-sampled) decoding from an embedding prefix.
  // Returns generated token ids, stopping at <eos> or max_new_tokens.
  std::vector<int> generate_ids(const TensorPtr& prompt_embs, const DecodeParams& dp) const {
    auto table = params_.find("lm.tok_emb");
    TensorPtr cur = prompt_embs;
    std::vector<int> generated;
    Rng sampler(dp.sample_seed);
    for (int step = 0; step < dp.max_new_tokens; ++step) {
      if (cur->shape[0] >= cfg_.max_seq) break;
      auto logits = forward_with_embeddings(cur);
      const int T = logits->shape[0];
      const double* last = &logits->v[static_cast<size_t>(T - 1) * cfg_.vocab];
      int next = 0;
      if (dp.greedy) {
        for (int j = 1; j < cfg_.vocab; ++j)
          if (last[j] > last[next]) next = j;  // ties keep the lowest id
      } else {
        double mx = last[0];
        for (int j = 1; j < cfg_.vocab; ++j) mx = std::max(mx, last[j]);
        std::vector<double> p(static_cast<size_t>(cfg_.vocab));
        double sum = 0.0;
        for (int j = 0; j < cfg_.vocab; ++j) {
          p[static_cast<size_t>(j)] = std::exp((last[j] - mx) / std::max(1e-6, dp.temperature));
          sum += p[static_cast<size_t>(j)];
        }
        double r = sampler.uniform() * sum, acc = 0.0;
        for (int j = 0; j < cfg_.vocab; ++j) {
          acc += p[static_cast<size_t>(j)];
          if (r <= acc) {
            next = j;
            break;
          }
        }
      }
      if (next == Tokenizer::kEos) break;
      generated.push_back(next);
      auto row = Tensor::make({1, cfg_.width});
      for (int c = 0; c < cfg_.width; ++c)
        row->v[static_cast<size_t>(c)] =
            table->v[static_cast<size_t>(next) * cfg_.width + static_cast<size_t>(c)];
      cur = ops::concat_rows(cur, row);
    }
    return generated;
  }

  std::string generate_from_embeddings(const TensorPtr& prompt_embs, const DecodeParams& dp) const {
    return tok_.decode(generate_ids(prompt_embs, dp));
  }

  uint64_t param_checksum() const { return live_param_checksum(params_); }

  Checkpoint to_checkpoint(uint64_t seed) const {
    Checkpoint ck;
    ck.header["kind"] = "lm";
    ck.header["seed"] = seed;
    ck.header["config"] = {{"width", cfg_.width},
                           {"heads", cfg_.heads},
                           {"blocks", cfg_.blocks},
                           {"max_seq", cfg_.max_seq}};
    ck.header["corpus_tokens"] = tok_.corpus_tokens();
    params_to_checkpoint(params_, ck);
    return ck;
  }

  static TinyLm from_checkpoint(const Checkpoint& ck) {
    const auto& c = ck.header.at("config");
    LmConfig cfg;
    cfg.width = c.at("width").get<int>();
    cfg.heads = c.at("heads").get<int>();
    cfg.blocks = c.at("blocks").get<int>();
    cfg.max_seq = c.at("max_seq").get<int>();
    Tokenizer tok =
        Tokenizer::from_tokens(ck.header.at("corpus_tokens").get<std::vector<std::string>>());
    TinyLm lm(cfg, std::move(tok), ck.header.value("seed", uint64_t{0}));
    checkpoint_to_params(ck, lm.params_);
    return lm;
  }

 private:
  LmConfig cfg_;
  Tokenizer tok_;
  uint64_t init_seed_;
  ParamSet params_;
};

struct LmPretrainExample {
  std::string object_label;
  std::string caption;
  // external embedding (e.g. the planted class target) injected at the image
  // slot during pretraining; empty = keep the <image> token embedding
  std::vector<double> external;
};

struct LmPretrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 3e-4;
  uint64_t seed = 0;
};

// Brief next-token pretraining over chat-formatted caption examples (plain
// unmasked objective). When examples carry external embeddings, a fixed
// random read-in map places them at the <image> slot, which is what makes the
// frozen LM able to consume soft prompts there at all: stages 2 and 3 then
// have to train the projector to land in that learned neighborhood. Examples
// alternate between the full prompt and the object-free (ONLY_EEG-shaped)
// prompt, so the slot pathway carries weight of its own rather than being
// shadowed by the object tokens.
inline double pretrain_lm(TinyLm& lm, const PromptTemplate& tmpl,
                          const std::vector<LmPretrainExample>& examples,
                          const LmPretrainConfig& cfg) {
  size_t ext_dim = 0;
  for (const auto& e : examples)
    if (!e.external.empty()) {
      if (ext_dim && e.external.size() != ext_dim)
        raise(ErrorCode::DimMismatch, "pretraining externals must share one dimension");
      ext_dim = e.external.size();
    }
  // fixed, untrained injector; its convention survives only through what the
  // LM weights learn to read
  std::vector<double> injector;
  if (ext_dim) {
    Rng rng = Rng(cfg.seed).fork("lm-pretrain-injector");
    const double std = std::sqrt(2.0 / static_cast<double>(ext_dim + lm.width()));
    injector = rng.normal_vec(static_cast<size_t>(lm.width()) * ext_dim, 0.0, std);
  }

  struct Prepared {
    std::vector<int> ids;
    std::optional<Span> image_span;
    TensorPtr slot_row;  // constant [1,E] or null
  };
  std::vector<Prepared> prepared;
  size_t index = 0;
  for (const auto& e : examples) {
    Prepared p;
    const bool with_object = e.external.empty() || (index++ % 2 == 0);
    auto prompt = apply_chat_template(lm.tokenizer(), tmpl, e.object_label,
                                      with_object ? Variant::All : Variant::OnlyEeg);
    p.ids = prompt.token_ids;
    for (int id : lm.tokenizer().encode_text(e.caption)) p.ids.push_back(id);
    p.ids.push_back(Tokenizer::kEos);
    p.image_span = prompt.image_slot_span;
    if (!e.external.empty() && p.image_span) {
      p.slot_row = Tensor::make({1, lm.width()});
      for (int r = 0; r < lm.width(); ++r) {
        double acc = 0.0;
        for (size_t c = 0; c < ext_dim; ++c)
          acc += injector[static_cast<size_t>(r) * ext_dim + c] * e.external[c];
        p.slot_row->v[static_cast<size_t>(r)] = acc;
      }
    }
    prepared.push_back(std::move(p));
  }

  Rng shuffle_rng = Rng(cfg.seed).fork("lm-pretrain");
  AdamW opt(lm.params(), {cfg.learning_rate, 0.9, 0.999, 1e-8, 0.0});
  std::vector<size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), size_t{0});
  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double total = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      lm.params().zero_grad();
      double batch_loss = 0.0;
      for (size_t i = start; i < end; ++i) {
        const auto& p = prepared[order[i]];
        auto seq = lm.embed_tokens(p.ids);
        if (p.slot_row) seq = lm.splice(seq, p.image_span, p.slot_row, std::nullopt, std::nullopt);
        auto logits = lm.forward_with_embeddings(seq.rows);
        std::vector<int> targets(p.ids.begin() + 1, p.ids.end());
        targets.push_back(-1);  // final position predicts nothing
        auto loss = ops::softmax_ce_mean(logits, targets, -1);
        auto scaled = ops::scale(loss, 1.0 / static_cast<double>(end - start));
        autodiff::backward(scaled);
        batch_loss += loss->v[0];
      }
      opt.step();
      total += batch_loss;
      count += end - start;
    }
    last_epoch_loss = count ? total / static_cast<double>(count) : 0.0;
  }
  return last_epoch_loss;
}

inline double pretrain_lm(TinyLm& lm, const PromptTemplate& tmpl,
                          const std::vector<std::pair<std::string, std::string>>& label_captions,
                          const LmPretrainConfig& cfg) {
  std::vector<LmPretrainExample> examples;
  for (const auto& [label, caption] : label_captions) examples.push_back({label, caption, {}});
  return pretrain_lm(lm, tmpl, examples, cfg);
}

}  // namespace eegcap
