#include "udkit/heads.hpp"

#include <algorithm>

namespace udkit {
namespace {

constexpr double kInitStd = 0.02;

std::unique_ptr<Parameter> task_param(const std::string& name, Shape shape, Rng* rng, bool decay = true) {
  auto p = std::make_unique<Parameter>(name, std::move(shape), ParamGroup::kTask, decay);
  if (rng) p->init_normal(*rng, kInitStd);
  return p;
}

std::unique_ptr<Parameter> xavier(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  auto p = std::make_unique<Parameter>(name, Shape{in, out}, ParamGroup::kTask, true);
  p->init_normal(rng, std::sqrt(2.0 / static_cast<double>(in + out)));
  return p;
}

}  // namespace

TagVocab TagVocab::build(std::span<const std::string> occurrences) {
  TagVocab v;
  std::map<std::string, std::size_t> counts;
  for (const auto& t : occurrences) {
    if (counts[t]++ == 0) {
      v.index_.emplace(t, v.size());
      v.tags_.push_back(t);
    }
  }
  std::size_t top = 0;
  for (const auto& [tag, count] : counts) {
    if (count > top) {
      top = count;
      v.fallback_ = tag;
    }
  }
  return v;
}

TagVocab TagVocab::from_list(std::vector<std::string> tags, std::string fallback) {
  TagVocab v;
  for (auto& t : tags) {
    if (!v.index_.emplace(t, v.size()).second) throw std::invalid_argument("duplicate tag '" + t + "'");
    v.tags_.push_back(std::move(t));
  }
  v.fallback_ = std::move(fallback);
  return v;
}

int TagVocab::index(const std::string& tag) const {
  auto it = index_.find(tag);
  return it == index_.end() ? kUnknown : it->second;
}

const std::string& TagVocab::decode(int index) const {
  if (index == kUnknown) return fallback_;
  return tags_.at(static_cast<std::size_t>(index));
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()), 0);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

TaggerHead::TaggerHead(const std::string& name, int hidden, int num_tags, Rng& rng)
    : weight_(xavier(name + ".weight", static_cast<std::size_t>(hidden), static_cast<std::size_t>(num_tags), rng)),
      bias_(task_param(name + ".bias", {static_cast<std::size_t>(num_tags)}, nullptr, false)) {}

Var TaggerHead::forward(Graph& g, Var embeddings) {
  return g.add_row(g.matmul(embeddings, g.param(*weight_)), g.param(*bias_));
}

Var biaffine_arcs(Graph& g, Var head_repr, Var dep_repr, Var u, Var bias) {
  const Var bilinear = g.matmul_nt(g.matmul(dep_repr, u), head_repr);  // n x (n+1)
  return g.add_row(bilinear, g.matmul_nt(bias, head_repr));
}

Var biaffine_labels(Graph& g, Var head_repr, Var dep_repr, Var bilinear, Var linear, Var bias) {
  const Var bi = g.blocked_row_dot(g.matmul(dep_repr, bilinear), head_repr);
  const Var both[] = {dep_repr, head_repr};
  const Var lin = g.matmul(g.concat_cols(both), linear);
  return g.add_row(g.add(bi, lin), bias);
}

BiaffineParser::BiaffineParser(const std::string& name, int hidden, ParserDims dims, int num_labels, Rng& rng) {
  const auto h = static_cast<std::size_t>(hidden);
  const auto a = static_cast<std::size_t>(dims.arc);
  const auto t = static_cast<std::size_t>(dims.tag);
  const auto k = static_cast<std::size_t>(num_labels);
  root_ = task_param(name + ".root", {h}, &rng);
  arc_head_w_ = xavier(name + ".arc_head.weight", h, a, rng);
  arc_head_b_ = task_param(name + ".arc_head.bias", {a}, nullptr, false);
  arc_dep_w_ = xavier(name + ".arc_dep.weight", h, a, rng);
  arc_dep_b_ = task_param(name + ".arc_dep.bias", {a}, nullptr, false);
  rel_head_w_ = xavier(name + ".rel_head.weight", h, t, rng);
  rel_head_b_ = task_param(name + ".rel_head.bias", {t}, nullptr, false);
  rel_dep_w_ = xavier(name + ".rel_dep.weight", h, t, rng);
  rel_dep_b_ = task_param(name + ".rel_dep.bias", {t}, nullptr, false);
  arc_u_ = xavier(name + ".arc.bilinear", a, a, rng);
  arc_bias_ = task_param(name + ".arc.head_bias", {a}, nullptr, false);
  label_bilinear_ = task_param(name + ".label.bilinear", {t, k * t}, &rng);
  label_linear_ = xavier(name + ".label.linear", 2 * t, k, rng);
  label_bias_ = task_param(name + ".label.bias", {k}, nullptr, false);
}

std::vector<Parameter*> BiaffineParser::parameters() {
  return {root_.get(),       arc_head_w_.get(), arc_head_b_.get(),     arc_dep_w_.get(),
          arc_dep_b_.get(),  rel_head_w_.get(), rel_head_b_.get(),     rel_dep_w_.get(),
          rel_dep_b_.get(),  arc_u_.get(),      arc_bias_.get(),       label_bilinear_.get(),
          label_linear_.get(), label_bias_.get()};
}

BiaffineParser::Projected BiaffineParser::project(Graph& g, Var embeddings) {
  const Var with_root_parts[] = {g.param(*root_), embeddings};
  const Var with_root = g.concat_rows(with_root_parts);
  auto ff = [&](Var in, Parameter& w, Parameter& b) {
    return g.gelu(g.add_row(g.matmul(in, g.param(w)), g.param(b)));
  };
  return {ff(with_root, *arc_head_w_, *arc_head_b_), ff(embeddings, *arc_dep_w_, *arc_dep_b_),
          ff(with_root, *rel_head_w_, *rel_head_b_), ff(embeddings, *rel_dep_w_, *rel_dep_b_)};
}

Var BiaffineParser::arc_scores(Graph& g, const Projected& p) {
  return biaffine_arcs(g, p.arc_head, p.arc_dep, g.param(*arc_u_), g.param(*arc_bias_));
}

Var BiaffineParser::label_scores(Graph& g, const Projected& p, std::span<const int> heads) {
  const auto n = g.value(p.rel_dep).rows();
  if (static_cast<Eigen::Index>(heads.size()) != n) {
    throw std::invalid_argument("label_scores: " + std::to_string(heads.size()) + " heads for " +
                                std::to_string(n) + " words");
  }
  for (int h : heads) {
    if (h < 0 || h > n) throw std::out_of_range("label_scores: head " + std::to_string(h) + " out of range");
  }
  const Var chosen = g.gather_rows(p.rel_head, heads);
  return biaffine_labels(g, chosen, p.rel_dep, g.param(*label_bilinear_), g.param(*label_linear_),
                         g.param(*label_bias_));
}

Matrix head_major(const Matrix& dependent_major) { return dependent_major.transpose(); }

Matrix arc_candidate_mask(Eigen::Index n) {
  Matrix mask = Matrix::Ones(n, n + 1);
  for (Eigen::Index j = 0; j < n; ++j) mask(j, j + 1) = 0.0;
  return mask;
}

TaskLosses multitask_loss(Graph& g, const TaskLogits& logits, const TaskGold& gold, double eps) {
  const auto n = static_cast<std::size_t>(g.value(logits.upos).rows());
  auto check = [&](const std::vector<int>& v, const char* field) {
    if (v.size() != n) {
      throw std::invalid_argument(std::string("gold ") + field + " has " + std::to_string(v.size()) +
                                  " entries for " + std::to_string(n) + " words");
    }
  };
  check(gold.upos, "upos");
  check(gold.feats, "feats");
  check(gold.lemma, "lemma");
  check(gold.heads, "head");
  check(gold.deprels, "deprel");
  TaskLosses out;
  out.upos = g.cross_entropy(logits.upos, gold.upos, eps);
  out.feats = g.cross_entropy(logits.feats, gold.feats, eps);
  out.lemma = g.cross_entropy(logits.lemma, gold.lemma, eps);
  const Matrix mask = arc_candidate_mask(static_cast<Eigen::Index>(n));
  out.arcs = g.cross_entropy(logits.arcs, gold.heads, eps, &mask);
  out.labels = g.cross_entropy(logits.labels, gold.deprels, eps);
  const Var parts[] = {out.upos, out.feats, out.lemma, out.arcs, out.labels};
  out.total = g.add_n(parts);
  return out;
}

}  // namespace udkit
