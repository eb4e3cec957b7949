#include "udkit/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "udkit/checkpoint.hpp"
#include "udkit/graph_decode.hpp"
#include "udkit/lemma_script.hpp"

namespace udkit {
namespace {

constexpr const char* kMetaMagic = "udkit-model 1";
constexpr const char* kTaskNames[kNumTasks] = {"upos", "feats", "lemma", "deps"};

std::vector<std::string> column(const std::vector<conllu::Sentence>& sentences,
                                std::string (*get)(const conllu::Token&)) {
  std::vector<std::string> out;
  for (const auto& s : sentences) {
    for (const auto& t : s.tokens) out.push_back(get(t));
  }
  return out;
}

std::string require(const std::optional<std::string>& v, const char* field, const conllu::Token& t) {
  if (!v) throw std::invalid_argument("word " + std::to_string(t.id) + " ('" + t.form + "') has no " + field);
  return *v;
}

void write_tags(std::ostream& out, const char* section, const TagVocab& v) {
  out << '[' << section << "]\n";
  out << "fallback\t" << v.fallback() << '\n';
  for (const auto& t : v.known()) out << "tag\t" << t << '\n';
}

}  // namespace

std::string lemma_tag(const std::string& form, const std::string& lemma) {
  return lemma::encode_tag(lemma::compute_lemma_script(std::string_view(form), std::string_view(lemma)));
}

ModelVocabs build_vocabs(const std::vector<conllu::Sentence>& sentences) {
  ModelVocabs v;
  const auto upos = column(sentences, [](const conllu::Token& t) { return require(t.upos, "UPOS", t); });
  const auto feats = column(sentences, [](const conllu::Token& t) { return t.feats; });
  const auto lemmas = column(sentences, [](const conllu::Token& t) {
    return lemma_tag(t.form, require(t.lemma, "LEMMA", t));
  });
  const auto deprels = column(sentences, [](const conllu::Token& t) { return require(t.deprel, "DEPREL", t); });
  v.upos = TagVocab::build(upos);
  v.feats = TagVocab::build(feats);
  v.lemma = TagVocab::build(lemmas);
  v.deprel = TagVocab::build(deprels);
  return v;
}

Model::Model(ModelConfig config, subword::Vocab vocab, ModelVocabs vocabs, std::uint64_t init_seed)
    : config_(std::move(config)), vocab_(std::move(vocab)), vocabs_(std::move(vocabs)) {
  config_.encoder.vocab_size = vocab_.size();
  Rng rng(init_seed);
  encoder_ = std::make_unique<Encoder>(config_.encoder, rng);
  for (const char* name : kTaskNames) {
    attention_.push_back(std::make_unique<LayerAttention>(name, config_.encoder.num_layers));
  }
  const int h = config_.encoder.hidden;
  upos_ = std::make_unique<TaggerHead>("upos.classifier", h, vocabs_.upos.size(), rng);
  feats_ = std::make_unique<TaggerHead>("feats.classifier", h, vocabs_.feats.size(), rng);
  lemma_ = std::make_unique<TaggerHead>("lemma.classifier", h, vocabs_.lemma.size(), rng);
  parser_ = std::make_unique<BiaffineParser>("deps.parser", h, config_.parser, vocabs_.deprel.size(), rng);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = encoder_->parameters();
  for (auto& a : attention_) {
    for (auto* p : a->parameters()) out.push_back(p);
  }
  for (auto* head : {upos_.get(), feats_.get(), lemma_.get()}) {
    for (auto* p : head->parameters()) out.push_back(p);
  }
  for (auto* p : parser_->parameters()) out.push_back(p);
  return out;
}

subword::Segmentation Model::segment(const std::vector<std::string>& words) const {
  const auto max_len = static_cast<std::size_t>(config_.encoder.max_positions);
  return subword::segment_sentence(words, vocab_, max_len, max_len / 2);
}

SentenceOutputs Model::forward(Graph& g, const subword::Segmentation& seg, const ForwardOptions& opts) {
  if (opts.training && opts.rng == nullptr) throw std::invalid_argument("training forward needs an Rng");
  std::vector<Var> states = encoder_->forward_sentence(g, seg, vocab_, opts.encoder_trainable);
  std::vector<int> first(seg.first_piece_index.size());
  for (std::size_t i = 0; i < first.size(); ++i) first[i] = static_cast<int>(seg.first_piece_index[i]) - 1;
  for (auto& s : states) {
    if (opts.training) s = g.dropout(s, opts.layer_output_dropout);
    s = g.gather_rows(s, first);
  }
  const int layers = config_.encoder.num_layers;
  std::vector<Var> emb;
  for (int t = 0; t < kNumTasks; ++t) {
    const auto mask = opts.training ? sample_layer_dropout(layers, opts.layer_dropout, *opts.rng)
                                    : std::vector<bool>(static_cast<std::size_t>(layers), false);
    emb.push_back(attention_[static_cast<std::size_t>(t)]->forward(g, states, mask));
  }
  SentenceOutputs out;
  out.upos = upos_->forward(g, emb[0]);
  out.feats = feats_->forward(g, emb[1]);
  out.lemma = lemma_->forward(g, emb[2]);
  out.parse = parser_->project(g, emb[3]);
  out.arcs = parser_->arc_scores(g, out.parse);
  return out;
}

std::vector<WordPrediction> Model::predict(const std::vector<std::string>& words) {
  if (words.empty()) return {};
  const auto seg = segment(words);
  Graph g;
  const auto out = forward(g, seg, {});
  const auto n = static_cast<Eigen::Index>(words.size());

  // Per-dependent log-softmax over the candidate heads, then decode.
  const Matrix& arcs = g.value(out.arcs);
  Matrix normalized = Matrix::Zero(n, n + 1);
  for (Eigen::Index j = 0; j < n; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (i != j + 1) mx = std::max(mx, arcs(j, i));
    }
    double z = 0.0;
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (i != j + 1) z += std::exp(arcs(j, i) - mx);
    }
    const double log_z = mx + std::log(z);
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (i != j + 1) normalized(j, i) = arcs(j, i) - log_z;
    }
  }
  const std::vector<int> heads = decode::max_arborescence(head_major(normalized));
  const auto labels = argmax_rows(g.value(parser_->label_scores(g, out.parse, heads)));
  const auto upos = argmax_rows(g.value(out.upos));
  const auto feats = argmax_rows(g.value(out.feats));
  const auto lemma = argmax_rows(g.value(out.lemma));

  std::vector<WordPrediction> result(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto& w = result[i];
    w.upos = vocabs_.upos.decode(upos[i]);
    w.feats = vocabs_.feats.decode(feats[i]);
    w.lemma = lemma::apply_lemma_script(lemma::decode_tag(vocabs_.lemma.decode(lemma[i])), words[i]).lemma;
    w.head = heads[i];
    w.deprel = vocabs_.deprel.decode(labels[i]);
  }
  return result;
}

conllu::Sentence Model::annotate(const conllu::Sentence& sentence) {
  conllu::Sentence out = sentence;
  const auto pred = predict(sentence.forms());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto& t = out.tokens[i];
    t.upos = pred[i].upos;
    t.feats = pred[i].feats;
    t.lemma = pred[i].lemma;
    t.head = pred[i].head;
    t.deprel = pred[i].deprel;
  }
  return out;
}

void Model::save_meta(const std::filesystem::path& dir) const {
  std::ostringstream out;
  const auto& e = config_.encoder;
  out << kMetaMagic << '\n';
  out << "num_layers = " << e.num_layers << '\n'
      << "num_heads = " << e.num_heads << '\n'
      << "hidden = " << e.hidden << '\n'
      << "feedforward = " << e.feedforward << '\n'
      << "max_positions = " << e.max_positions << '\n'
      << "arc_dim = " << config_.parser.arc << '\n'
      << "tag_dim = " << config_.parser.tag << '\n';
  write_tags(out, "upos", vocabs_.upos);
  write_tags(out, "feats", vocabs_.feats);
  write_tags(out, "lemma", vocabs_.lemma);
  write_tags(out, "deprel", vocabs_.deprel);
  auto write_atomic = [&](const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw std::runtime_error("cannot write " + tmp.string());
      f << text;
    }
    std::filesystem::rename(tmp, path);
  };
  write_atomic(dir / "model.meta", out.str());
  std::ostringstream vocab_text;
  for (const auto& p : vocab_.pieces()) vocab_text << p << '\n';
  write_atomic(dir / "vocab.txt", vocab_text.str());
}

void Model::save_weights(const std::filesystem::path& checkpoint_path) {
  checkpoint::write(checkpoint_path, checkpoint::export_parameters(parameters()));
}

std::unique_ptr<Model> Model::load(const std::filesystem::path& checkpoint_path) {
  const auto dir = checkpoint_path.parent_path();
  const auto meta_path = dir / "model.meta";
  std::ifstream in(meta_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + meta_path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetaMagic) {
    throw std::runtime_error(meta_path.string() + " is not a model description");
  }
  std::map<std::string, int> sizes;
  std::map<std::string, std::pair<std::vector<std::string>, std::string>> tags;
  std::string section;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      tags[section];
      continue;
    }
    if (section.empty()) {
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) throw std::runtime_error("malformed line in " + meta_path.string() + ": " + line);
      sizes[line.substr(0, eq)] = std::stoi(line.substr(eq + 3));
      continue;
    }
    const auto tab = line.find('\t');
    const std::string kind = line.substr(0, tab);
    const std::string value = tab == std::string::npos ? std::string() : line.substr(tab + 1);
    if (kind == "fallback") {
      tags[section].second = value;
    } else if (kind == "tag") {
      tags[section].first.push_back(value);
    } else {
      throw std::runtime_error("malformed line in " + meta_path.string() + ": " + line);
    }
  }
  auto size = [&](const char* key) {
    auto it = sizes.find(key);
    if (it == sizes.end()) throw std::runtime_error(meta_path.string() + " lacks " + key);
    return it->second;
  };
  auto vocab_of = [&](const char* key) {
    auto it = tags.find(key);
    if (it == tags.end()) throw std::runtime_error(meta_path.string() + " lacks section " + key);
    return TagVocab::from_list(it->second.first, it->second.second);
  };
  ModelConfig config;
  config.encoder.num_layers = size("num_layers");
  config.encoder.num_heads = size("num_heads");
  config.encoder.hidden = size("hidden");
  config.encoder.feedforward = size("feedforward");
  config.encoder.max_positions = size("max_positions");
  config.parser.arc = size("arc_dim");
  config.parser.tag = size("tag_dim");
  ModelVocabs vocabs{vocab_of("upos"), vocab_of("feats"), vocab_of("lemma"), vocab_of("deprel")};
  auto model = std::make_unique<Model>(config, subword::Vocab::load(dir / "vocab.txt"), std::move(vocabs), 0);
  checkpoint::import_parameters(model->parameters(), checkpoint::read(checkpoint_path));
  return model;
}

}  // namespace udkit
