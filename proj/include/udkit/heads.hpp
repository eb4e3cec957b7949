#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "udkit/autodiff.hpp"
#include "udkit/rng.hpp"
#include "udkit/tensor.hpp"

namespace udkit {

// Closed tag inventory with index 0 reserved for unknown strings. Decoding
// the unknown index yields the most frequent training string.
class TagVocab {
 public:
  static constexpr int kUnknown = 0;
  static constexpr const char* kUnknownName = "<unk>";

  TagVocab() : tags_{kUnknownName} {}
  // Builds from training occurrences; tags are ordered by first occurrence.
  static TagVocab build(std::span<const std::string> occurrences);
  // Tags in index order (excluding the unknown slot) plus the fallback.
  static TagVocab from_list(std::vector<std::string> tags, std::string fallback);

  int size() const { return static_cast<int>(tags_.size()); }
  int index(const std::string& tag) const;
  const std::string& decode(int index) const;
  const std::string& fallback() const { return fallback_; }
  // Tags in index order, excluding the unknown slot.
  std::vector<std::string> known() const { return {tags_.begin() + 1, tags_.end()}; }

 private:
  std::vector<std::string> tags_;
  std::unordered_map<std::string, int> index_;
  std::string fallback_;
};

// Index of the largest entry in each row; ties go to the lowest index.
std::vector<int> argmax_rows(const Matrix& m);

class TaggerHead {
 public:
  TaggerHead(const std::string& name, int hidden, int num_tags, Rng& init_rng);

  Var forward(Graph& g, Var embeddings);
  std::vector<Parameter*> parameters() { return {weight_.get(), bias_.get()}; }
  Parameter& weight() { return *weight_; }
  Parameter& bias() { return *bias_; }

 private:
  std::unique_ptr<Parameter> weight_;
  std::unique_ptr<Parameter> bias_;
};

struct ParserDims {
  int arc = 768;
  int tag = 256;

  static ParserDims table_preset() { return {768, 256}; }
  static ParserDims prose_preset() { return {800, 300}; }
};

// s(i, j) = dep_j U head_i^T + bias . head_i for projected head rows (n+1)
// and dependent rows (n). Returned dependent-major: out(j, i) = s(i, j).
Var biaffine_arcs(Graph& g, Var head_repr, Var dep_repr, Var u, Var bias);

// out(j, l) = dep_j W_l head_j^T + [dep_j, head_j] . lin_l + b_l, where
// `bilinear` stacks the W_l side by side (tag x labels * tag).
Var biaffine_labels(Graph& g, Var head_repr, Var dep_repr, Var bilinear, Var linear, Var bias);

class BiaffineParser {
 public:
  BiaffineParser(const std::string& name, int hidden, ParserDims dims, int num_labels, Rng& init_rng);

  struct Projected {
    Var arc_head;  // (n + 1) x arc, row 0 is the root
    Var arc_dep;   // n x arc
    Var rel_head;  // (n + 1) x tag
    Var rel_dep;   // n x tag
  };

  Projected project(Graph& g, Var embeddings);
  // Dependent-major arc scores: n x (n + 1).
  Var arc_scores(Graph& g, const Projected& p);
  // heads[j] in [0, n] for word j + 1; returns n x labels.
  Var label_scores(Graph& g, const Projected& p, std::span<const int> heads);

  int num_labels() const { return static_cast<int>(label_bias_->value.cols()); }
  std::vector<Parameter*> parameters();

  Parameter& root() { return *root_; }
  Parameter& arc_u() { return *arc_u_; }
  Parameter& arc_bias() { return *arc_bias_; }

 private:
  std::unique_ptr<Parameter> root_;
  std::unique_ptr<Parameter> arc_head_w_, arc_head_b_, arc_dep_w_, arc_dep_b_;
  std::unique_ptr<Parameter> rel_head_w_, rel_head_b_, rel_dep_w_, rel_dep_b_;
  std::unique_ptr<Parameter> arc_u_, arc_bias_;
  std::unique_ptr<Parameter> label_bilinear_, label_linear_, label_bias_;
};

// (n + 1) x n view of dependent-major arc scores.
Matrix head_major(const Matrix& dependent_major);

// Valid head candidates per dependent row of an n x (n + 1) matrix: every
// column except the word itself.
Matrix arc_candidate_mask(Eigen::Index n);

struct TaskGold {
  std::vector<int> upos;
  std::vector<int> feats;
  std::vector<int> lemma;
  std::vector<int> heads;
  std::vector<int> deprels;
};

struct TaskLogits {
  Var upos;
  Var feats;
  Var lemma;
  Var arcs;    // dependent-major n x (n + 1)
  Var labels;  // n x labels, scored at the gold heads
};

struct TaskLosses {
  Var upos, feats, lemma, arcs, labels, total;
};

// Unweighted sum of label-smoothed cross entropies; the arc loss excludes
// self-arcs.
TaskLosses multitask_loss(Graph& g, const TaskLogits& logits, const TaskGold& gold, double eps);

}  // namespace udkit
