#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "udkit/conllu.hpp"
#include "udkit/encoder.hpp"
#include "udkit/heads.hpp"
#include "udkit/subword.hpp"

namespace udkit {

struct ModelConfig {
  EncoderConfig encoder;  // vocab_size is taken from the subword vocabulary
  ParserDims parser;
};

struct ModelVocabs {
  TagVocab upos;
  TagVocab feats;
  TagVocab lemma;  // lemma-script tags
  TagVocab deprel;
};

// Lemma-script tag for one (form, lemma) pair.
std::string lemma_tag(const std::string& form, const std::string& lemma);

// Tag inventories from fully annotated training sentences.
ModelVocabs build_vocabs(const std::vector<conllu::Sentence>& sentences);

// Task index order used for the four layer-attention sets.
enum class Task { kUpos = 0, kFeats = 1, kLemma = 2, kDeps = 3 };
inline constexpr int kNumTasks = 4;

struct ForwardOptions {
  bool training = false;
  bool encoder_trainable = true;
  double layer_output_dropout = 0.5;
  double layer_dropout = 0.1;
  Rng* rng = nullptr;  // required when training
};

struct SentenceOutputs {
  Var upos;
  Var feats;
  Var lemma;
  BiaffineParser::Projected parse;
  Var arcs;  // dependent-major n x (n + 1)
};

struct WordPrediction {
  std::string upos;
  std::string feats;
  std::string lemma;
  int head = 0;
  std::string deprel;
};

class Model {
 public:
  Model(ModelConfig config, subword::Vocab vocab, ModelVocabs vocabs, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const subword::Vocab& vocab() const { return vocab_; }
  const ModelVocabs& vocabs() const { return vocabs_; }
  Encoder& encoder() { return *encoder_; }
  LayerAttention& layer_attention(Task t) { return *attention_[static_cast<std::size_t>(t)]; }
  BiaffineParser& parser() { return *parser_; }

  std::vector<Parameter*> parameters();

  subword::Segmentation segment(const std::vector<std::string>& words) const;

  // `seg` may carry masked piece ids.
  SentenceOutputs forward(Graph& g, const subword::Segmentation& seg, const ForwardOptions& opts);

  std::vector<WordPrediction> predict(const std::vector<std::string>& words);
  // Copy of `sentence` with UPOS, FEATS, LEMMA, HEAD and DEPREL replaced by
  // predictions; other columns pass through.
  conllu::Sentence annotate(const conllu::Sentence& sentence);

  // Model directory layout: model.meta + vocab.txt + checkpoint files.
  void save_meta(const std::filesystem::path& dir) const;
  void save_weights(const std::filesystem::path& checkpoint_path);
  // Loads model.meta and vocab.txt from the checkpoint's directory, then the
  // weights.
  static std::unique_ptr<Model> load(const std::filesystem::path& checkpoint_path);

 private:
  ModelConfig config_;
  subword::Vocab vocab_;
  ModelVocabs vocabs_;
  std::unique_ptr<Encoder> encoder_;
  std::vector<std::unique_ptr<LayerAttention>> attention_;
  std::unique_ptr<TaggerHead> upos_, feats_, lemma_;
  std::unique_ptr<BiaffineParser> parser_;
};

}  // namespace udkit
