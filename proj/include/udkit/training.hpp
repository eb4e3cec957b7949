#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "udkit/conllu.hpp"
#include "udkit/heads.hpp"
#include "udkit/metrics.hpp"
#include "udkit/model.hpp"
#include "udkit/rng.hpp"
#include "udkit/subword.hpp"

namespace udkit {

struct TrainConfig {
  double base_lr = 1e-3;
  double encoder_lr = 5e-5;
  long warmup_steps = 8000;
  std::size_t batch_size = 32;
  int epochs = 80;
  double mask_prob = 0.2;
  double label_smoothing = 0.03;
  double dropout = 0.5;          // on encoder layer outputs before layer attention
  double encoder_dropout = 0.2;  // inside the encoder
  double layer_dropout = 0.1;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double grad_clip = 5.0;
  double length_fuzz = 0.1;
  std::uint64_t seed = 13;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// peak * min(step / warmup, sqrt(warmup / step)); step >= 1.
double noam_lr(long step, long warmup, double peak);

// The encoder is frozen during epoch 1 only.
bool encoder_trainable(int epoch);

struct GroupRates {
  double encoder = 0.0;
  double task = 0.0;
};

// Learning rates for one update. During epoch 1 the task rate is held at
// base_lr and the encoder rate is 0; afterwards both follow the Noam factor
// with `schedule_step` counted from the first unfrozen update (1-based).
GroupRates group_rates(const TrainConfig& config, int epoch, long schedule_step);

struct ParamGroups {
  std::vector<Parameter*> encoder;
  std::vector<Parameter*> task;
};

// Throws std::invalid_argument for a parameter without a group.
ParamGroups param_groups(std::span<Parameter* const> params);

struct MaskedInput {
  std::vector<int> ids;
  std::vector<std::size_t> positions;  // indices that were replaced
};

// Each non-special piece becomes the mask piece with probability `prob`.
MaskedInput mask_inputs(std::span<const int> ids, const subword::Vocab& vocab, double prob, Rng& rng);

using BatchPlan = std::vector<std::vector<std::size_t>>;

// Shuffle, stable-sort by length * (1 + U(-fuzz, fuzz)), cut into
// consecutive batches of batch_size, then shuffle the batch order.
BatchPlan bucket_batches(std::span<const std::size_t> lengths, std::size_t batch_size, double fuzz, Rng& rng);

// A training sentence with cached segmentation and gold indices.
struct Example {
  std::vector<std::string> words;
  subword::Segmentation seg;
  TaskGold gold;
  std::string treebank;
  std::string sent_id;
};

std::vector<Example> prepare_examples(const conllu::Dataset& dataset, const Model& model);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // mean per-sentence training loss
  std::optional<metrics::EvalReport> dev;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Summed multi-task loss of one example under `opts`.
Var example_loss(Graph& g, Model& model, const Example& ex, const subword::Segmentation& seg,
                 const ForwardOptions& opts, double label_smoothing);

// Runs the full recipe and writes into out_dir (which must exist):
// metrics.tsv, best.udk, last.udk, model.meta, vocab.txt. Without a dev set,
// best.udk holds the final weights.
TrainResult train(Model& model, const std::vector<Example>& examples,
                  const std::vector<conllu::Sentence>* dev, const TrainConfig& config,
                  const std::filesystem::path& out_dir,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

std::string format_epoch_line(const EpochRecord& record);

}  // namespace udkit
