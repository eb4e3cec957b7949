#include "udkit/encoder.hpp"

#include <cmath>
#include <limits>

#include "udkit/checkpoint.hpp"

namespace udkit {
namespace {

constexpr double kInitStd = 0.02;

std::unique_ptr<Parameter> make(const std::string& name, Shape shape, Rng* rng, bool decay = true,
                                double fill = 0.0) {
  auto p = std::make_unique<Parameter>(name, std::move(shape), ParamGroup::kEncoder, decay);
  if (rng) {
    p->init_normal(*rng, kInitStd);
  } else {
    p->value.setConstant(fill);
  }
  return p;
}

}  // namespace

void EncoderConfig::validate() const {
  if (num_layers < 1 || num_heads < 1 || hidden < 1 || feedforward < 1 || max_positions < 8 ||
      vocab_size < 1) {
    throw std::invalid_argument("encoder sizes must be positive (max_positions >= 8)");
  }
  if (hidden % num_heads != 0) {
    throw std::invalid_argument("hidden size " + std::to_string(hidden) +
                                " is not divisible by the head count " + std::to_string(num_heads));
  }
  for (double p : {attention_dropout, hidden_dropout}) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("encoder dropout must be in [0, 1)");
  }
}

Encoder::Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto h = static_cast<std::size_t>(config_.hidden);
  const auto f = static_cast<std::size_t>(config_.feedforward);
  word_emb_ = make("encoder.embeddings.word", {static_cast<std::size_t>(config_.vocab_size), h}, &rng);
  pos_emb_ = make("encoder.embeddings.position", {static_cast<std::size_t>(config_.max_positions), h}, &rng);
  emb_ln_g_ = make("encoder.embeddings.norm.gain", {h}, nullptr, false, 1.0);
  emb_ln_b_ = make("encoder.embeddings.norm.bias", {h}, nullptr, false);
  for (int i = 0; i < config_.num_layers; ++i) {
    const std::string p = "encoder.layer." + std::to_string(i) + ".";
    Layer l;
    l.q_w = make(p + "attention.query.weight", {h, h}, &rng);
    l.q_b = make(p + "attention.query.bias", {h}, nullptr, false);
    l.k_w = make(p + "attention.key.weight", {h, h}, &rng);
    l.k_b = make(p + "attention.key.bias", {h}, nullptr, false);
    l.v_w = make(p + "attention.value.weight", {h, h}, &rng);
    l.v_b = make(p + "attention.value.bias", {h}, nullptr, false);
    l.o_w = make(p + "attention.output.weight", {h, h}, &rng);
    l.o_b = make(p + "attention.output.bias", {h}, nullptr, false);
    l.ln1_g = make(p + "attention.norm.gain", {h}, nullptr, false, 1.0);
    l.ln1_b = make(p + "attention.norm.bias", {h}, nullptr, false);
    l.ff1_w = make(p + "ffn.inner.weight", {h, f}, &rng);
    l.ff1_b = make(p + "ffn.inner.bias", {f}, nullptr, false);
    l.ff2_w = make(p + "ffn.outer.weight", {f, h}, &rng);
    l.ff2_b = make(p + "ffn.outer.bias", {h}, nullptr, false);
    l.ln2_g = make(p + "ffn.norm.gain", {h}, nullptr, false, 1.0);
    l.ln2_b = make(p + "ffn.norm.bias", {h}, nullptr, false);
    layers_.push_back(std::move(l));
  }
}

std::vector<Parameter*> Encoder::parameters() {
  std::vector<Parameter*> out{word_emb_.get(), pos_emb_.get(), emb_ln_g_.get(), emb_ln_b_.get()};
  for (auto& l : layers_) {
    for (auto* p : {&l.q_w, &l.q_b, &l.k_w, &l.k_b, &l.v_w, &l.v_b, &l.o_w, &l.o_b, &l.ln1_g,
                    &l.ln1_b, &l.ff1_w, &l.ff1_b, &l.ff2_w, &l.ff2_b, &l.ln2_g, &l.ln2_b}) {
      out.push_back(p->get());
    }
  }
  return out;
}

Var Encoder::layer_forward(Graph& g, const Layer& l, Var x, bool trainable) {
  auto P = [&](const std::unique_ptr<Parameter>& p) { return g.param(*p, trainable); };
  auto linear = [&](Var in, const std::unique_ptr<Parameter>& w, const std::unique_ptr<Parameter>& b) {
    return g.add_row(g.matmul(in, P(w)), P(b));
  };
  const Var q = linear(x, l.q_w, l.q_b);
  const Var k = linear(x, l.k_w, l.k_b);
  const Var v = linear(x, l.v_w, l.v_b);
  const int d = config_.hidden / config_.num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Var> heads;
  for (int h = 0; h < config_.num_heads; ++h) {
    const Var qh = g.slice_cols(q, h * d, d);
    const Var kh = g.slice_cols(k, h * d, d);
    const Var vh = g.slice_cols(v, h * d, d);
    Var att = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), scale));
    att = g.dropout(att, config_.attention_dropout);
    heads.push_back(g.matmul(att, vh));
  }
  const Var ctx = heads.size() == 1 ? heads[0] : g.concat_cols(heads);
  Var attn_out = g.dropout(linear(ctx, l.o_w, l.o_b), config_.hidden_dropout);
  const Var h1 = g.layer_norm(g.add(x, attn_out), P(l.ln1_g), P(l.ln1_b));
  Var ff = linear(g.gelu(linear(h1, l.ff1_w, l.ff1_b)), l.ff2_w, l.ff2_b);
  ff = g.dropout(ff, config_.hidden_dropout);
  return g.layer_norm(g.add(h1, ff), P(l.ln2_g), P(l.ln2_b));
}

std::vector<Var> Encoder::forward(Graph& g, std::span<const int> ids, bool trainable) {
  if (ids.empty()) throw std::invalid_argument("encoder input is empty");
  if (ids.size() > static_cast<std::size_t>(config_.max_positions)) {
    throw std::invalid_argument("encoder input of " + std::to_string(ids.size()) +
                                " pieces exceeds max_positions " + std::to_string(config_.max_positions) +
                                "; window it first");
  }
  for (int id : ids) {
    if (id < 0 || id >= config_.vocab_size) {
      throw std::out_of_range("piece id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(config_.vocab_size));
    }
  }
  std::vector<int> positions(ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
  Var x = g.add(g.gather_rows(g.param(*word_emb_, trainable), ids),
                g.gather_rows(g.param(*pos_emb_, trainable), positions));
  x = g.layer_norm(x, g.param(*emb_ln_g_, trainable), g.param(*emb_ln_b_, trainable));
  x = g.dropout(x, config_.hidden_dropout);
  std::vector<Var> outputs;
  for (const auto& layer : layers_) {
    x = layer_forward(g, layer, x, trainable);
    outputs.push_back(x);
  }
  return outputs;
}

std::vector<Var> Encoder::forward_sentence(Graph& g, const subword::Segmentation& seg,
                                           const subword::Vocab& vocab, bool trainable) {
  const auto& pieces = seg.pieces;
  if (pieces.size() < 2) throw std::invalid_argument("segmentation lacks [CLS]/[SEP]");
  const auto inner = static_cast<Eigen::Index>(pieces.size() - 2);
  if (seg.window_plan.empty()) {
    auto outs = forward(g, pieces, trainable);
    for (auto& o : outs) o = g.slice_rows(o, 1, inner);
    return outs;
  }
  std::vector<std::vector<Var>> kept(static_cast<std::size_t>(config_.num_layers));
  for (const auto& win : seg.window_plan) {
    std::vector<int> ids{vocab.start_id()};
    ids.insert(ids.end(), pieces.begin() + 1 + static_cast<std::ptrdiff_t>(win.begin),
               pieces.begin() + 1 + static_cast<std::ptrdiff_t>(win.end));
    ids.push_back(vocab.end_id());
    const auto outs = forward(g, ids, trainable);
    const auto offset = static_cast<Eigen::Index>(1 + win.keep_begin - win.begin);
    const auto count = static_cast<Eigen::Index>(win.keep_end - win.keep_begin);
    for (std::size_t l = 0; l < outs.size(); ++l) kept[l].push_back(g.slice_rows(outs[l], offset, count));
  }
  std::vector<Var> result;
  for (auto& parts : kept) result.push_back(g.concat_rows(parts));
  return result;
}

std::vector<Matrix> Encoder::encode(std::span<const int> ids) {
  Graph g;
  const auto outs = forward(g, ids, false);
  std::vector<Matrix> result;
  for (Var v : outs) result.push_back(g.value(v));
  return result;
}

void Encoder::save(const std::filesystem::path& path) {
  checkpoint::write(path, checkpoint::export_parameters(parameters()));
}

void Encoder::load(const std::filesystem::path& path) {
  checkpoint::import_parameters(parameters(), checkpoint::read(path), true);
}

LayerAttention::LayerAttention(const std::string& name, int num_layers)
    : w_(std::make_unique<Parameter>(name + ".layer_attention.weights",
                                     Shape{static_cast<std::size_t>(num_layers)}, ParamGroup::kTask, false)),
      c_(std::make_unique<Parameter>(name + ".layer_attention.scale", Shape{1}, ParamGroup::kTask, false)) {
  if (num_layers < 1) throw std::invalid_argument("layer attention needs at least one layer");
  c_->value(0, 0) = 1.0;
}

namespace {

Matrix drop_offsets(const std::vector<bool>& dropped, Eigen::Index layers) {
  if (static_cast<Eigen::Index>(dropped.size()) != layers) {
    throw std::invalid_argument("layer dropout mask has " + std::to_string(dropped.size()) +
                                " entries for " + std::to_string(layers) + " layers");
  }
  Matrix offsets = Matrix::Zero(1, layers);
  bool alive = false;
  for (Eigen::Index i = 0; i < layers; ++i) {
    if (dropped[static_cast<std::size_t>(i)]) {
      offsets(0, i) = -std::numeric_limits<double>::infinity();
    } else {
      alive = true;
    }
  }
  if (!alive) throw std::invalid_argument("layer dropout mask drops every layer");
  return offsets;
}

}  // namespace

Var LayerAttention::forward(Graph& g, std::span<const Var> states, const std::vector<bool>& dropped) {
  const Eigen::Index layers = w_->value.cols();
  if (static_cast<Eigen::Index>(states.size()) != layers) {
    throw std::invalid_argument("layer attention over " + std::to_string(layers) + " layers got " +
                                std::to_string(states.size()) + " states");
  }
  const Var weights = g.softmax_rows(g.add_const(g.param(*w_), drop_offsets(dropped, layers)));
  std::vector<Var> terms;
  for (Eigen::Index i = 0; i < layers; ++i) {
    if (dropped[static_cast<std::size_t>(i)]) continue;
    terms.push_back(g.scale_by(states[static_cast<std::size_t>(i)], g.element(weights, 0, i)));
  }
  const Var mix = terms.size() == 1 ? terms[0] : g.add_n(terms);
  return g.scale_by(mix, g.param(*c_));
}

Matrix LayerAttention::mixing_weights(const std::vector<bool>& dropped) const {
  Graph g;
  Parameter copy = *w_;
  return g.value(g.softmax_rows(g.add_const(g.param(copy, false), drop_offsets(dropped, w_->value.cols()))));
}

std::vector<bool> sample_layer_dropout(int num_layers, double prob, Rng& rng) {
  if (prob < 0.0 || prob >= 1.0) throw std::invalid_argument("layer dropout must be in [0, 1)");
  std::vector<bool> mask(static_cast<std::size_t>(num_layers));
  for (;;) {
    bool alive = false;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = rng.bernoulli(prob);
      alive = alive || !mask[i];
    }
    if (alive || mask.empty()) return mask;
  }
}

}  // namespace udkit
