#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "udkit/autodiff.hpp"
#include "udkit/rng.hpp"
#include "udkit/subword.hpp"
#include "udkit/tensor.hpp"

namespace udkit {

struct EncoderConfig {
  int num_layers = 4;
  int num_heads = 4;
  int hidden = 64;
  int feedforward = 256;
  int max_positions = 512;
  int vocab_size = 0;
  double attention_dropout = 0.2;
  double hidden_dropout = 0.2;

  // Throws std::invalid_argument when inconsistent.
  void validate() const;
};

// Post-layer-norm transformer in the BERT layout. Parameters are named
// "encoder.*" and belong to ParamGroup::kEncoder.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, Rng& init_rng);

  const EncoderConfig& config() const { return config_; }
  std::vector<Parameter*> parameters();

  // All L layer outputs (each length x hidden) for one window of piece ids.
  // `trainable` = false keeps the encoder out of the gradient.
  std::vector<Var> forward(Graph& g, std::span<const int> ids, bool trainable = true);

  // Encodes a full segmented sentence ([CLS] ... [SEP]) and returns, per
  // layer, the rows of the inner pieces only (pieces.size() - 2 rows). Long
  // inputs are split per seg.window_plan, each window wrapped in its own
  // [CLS]/[SEP].
  std::vector<Var> forward_sentence(Graph& g, const subword::Segmentation& seg,
                                    const subword::Vocab& vocab, bool trainable = true);

  // Eval-mode layer outputs as plain matrices.
  std::vector<Matrix> encode(std::span<const int> ids);

  void save(const std::filesystem::path& path);
  // Loads "encoder.*" arrays; other arrays in the file are ignored.
  void load(const std::filesystem::path& path);

 private:
  struct Layer {
    std::unique_ptr<Parameter> q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
    std::unique_ptr<Parameter> ln1_g, ln1_b, ff1_w, ff1_b, ff2_w, ff2_b, ln2_g, ln2_b;
  };

  Var layer_forward(Graph& g, const Layer& layer, Var x, bool trainable);

  EncoderConfig config_;
  std::unique_ptr<Parameter> word_emb_, pos_emb_, emb_ln_g_, emb_ln_b_;
  std::vector<Layer> layers_;
};

// Per-task scalar mix of encoder layers: e = c * sum_i softmax(w')_i H_i,
// where w'_i = -inf for layers dropped this step.
class LayerAttention {
 public:
  LayerAttention(const std::string& name, int num_layers);

  int num_layers() const { return static_cast<int>(w_->value.cols()); }
  Parameter& w() { return *w_; }
  Parameter& c() { return *c_; }
  std::vector<Parameter*> parameters() { return {w_.get(), c_.get()}; }

  // `dropped` has one flag per layer and must leave at least one layer.
  Var forward(Graph& g, std::span<const Var> states, const std::vector<bool>& dropped);

  // softmax(w') as a plain row, for inspection.
  Matrix mixing_weights(const std::vector<bool>& dropped) const;

 private:
  std::unique_ptr<Parameter> w_;
  std::unique_ptr<Parameter> c_;
};

// Drops each layer independently with probability `prob`; a mask dropping
// every layer is redrawn.
std::vector<bool> sample_layer_dropout(int num_layers, double prob, Rng& rng);

}  // namespace udkit
