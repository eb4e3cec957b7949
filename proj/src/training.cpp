#include "udkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "udkit/optim.hpp"

namespace udkit {
namespace {

void require_prob(double p, const char* name) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument(std::string(name) + " must be in [0, 1)");
}

std::string sent_id_of(const conllu::Sentence& s) {
  for (const auto& c : s.comments) {
    const auto pos = c.find("sent_id");
    if (pos == std::string::npos) continue;
    const auto eq = c.find('=', pos);
    if (eq == std::string::npos) continue;
    auto v = c.substr(eq + 1);
    v.erase(0, v.find_first_not_of(' '));
    return v;
  }
  return {};
}

}  // namespace

void TrainConfig::validate() const {
  require_prob(mask_prob, "mask_prob");
  require_prob(label_smoothing, "label_smoothing");
  require_prob(dropout, "dropout");
  require_prob(encoder_dropout, "encoder_dropout");
  require_prob(layer_dropout, "layer_dropout");
  require_prob(length_fuzz, "length_fuzz");
  require_prob(beta1, "beta1");
  require_prob(beta2, "beta2");
  if (warmup_steps < 1) throw std::invalid_argument("warmup_steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(base_lr > 0.0) || !(encoder_lr >= 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
}

double noam_lr(long step, long warmup, double peak) {
  if (step < 1 || warmup < 1) throw std::invalid_argument("noam_lr needs step >= 1 and warmup >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

bool encoder_trainable(int epoch) {
  if (epoch < 1) throw std::invalid_argument("epochs are numbered from 1");
  return epoch >= 2;
}

GroupRates group_rates(const TrainConfig& config, int epoch, long schedule_step) {
  if (!encoder_trainable(epoch)) return {0.0, config.base_lr};
  const double factor = noam_lr(schedule_step, config.warmup_steps, 1.0);
  return {config.encoder_lr * factor, config.base_lr * factor};
}

ParamGroups param_groups(std::span<Parameter* const> params) {
  ParamGroups out;
  for (Parameter* p : params) {
    switch (p->group()) {
      case ParamGroup::kEncoder:
        out.encoder.push_back(p);
        break;
      case ParamGroup::kTask:
        out.task.push_back(p);
        break;
      case ParamGroup::kUnassigned:
        throw std::invalid_argument("parameter " + p->name() + " has no optimizer group");
    }
  }
  return out;
}

MaskedInput mask_inputs(std::span<const int> ids, const subword::Vocab& vocab, double prob, Rng& rng) {
  if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("mask probability must be in [0, 1]");
  MaskedInput out{std::vector<int>(ids.begin(), ids.end()), {}};
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    if (vocab.is_special(out.ids[i])) continue;
    if (rng.bernoulli(prob)) {
      out.ids[i] = vocab.mask_id();
      out.positions.push_back(i);
    }
  }
  return out;
}

BatchPlan bucket_batches(std::span<const std::size_t> lengths, std::size_t batch_size, double fuzz, Rng& rng) {
  if (lengths.empty()) throw std::invalid_argument("cannot batch an empty dataset");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(order.size());
  for (std::size_t i : order) {
    keyed.emplace_back(static_cast<double>(lengths[i]) * (1.0 + rng.uniform(-fuzz, fuzz)), i);
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  BatchPlan plan;
  for (std::size_t i = 0; i < keyed.size(); i += batch_size) {
    std::vector<std::size_t> batch;
    for (std::size_t j = i; j < std::min(keyed.size(), i + batch_size); ++j) batch.push_back(keyed[j].second);
    plan.push_back(std::move(batch));
  }
  rng.shuffle(plan.begin(), plan.end());
  return plan;
}

std::vector<Example> prepare_examples(const conllu::Dataset& dataset, const Model& model) {
  const auto& v = model.vocabs();
  std::vector<Example> out;
  out.reserve(dataset.size());
  for (const auto& ts : dataset.sentences) {
    const auto& s = ts.sentence;
    if (!conllu::fully_annotated(s)) {
      throw std::invalid_argument("treebank " + ts.treebank + " sentence '" + sent_id_of(s) +
                                  "' is not fully annotated");
    }
    Example ex;
    ex.words = s.forms();
    ex.seg = model.segment(ex.words);
    ex.treebank = ts.treebank;
    ex.sent_id = sent_id_of(s);
    for (const auto& t : s.tokens) {
      ex.gold.upos.push_back(v.upos.index(*t.upos));
      ex.gold.feats.push_back(v.feats.index(t.feats));
      ex.gold.lemma.push_back(v.lemma.index(lemma_tag(t.form, *t.lemma)));
      ex.gold.heads.push_back(*t.head);
      ex.gold.deprels.push_back(v.deprel.index(*t.deprel));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

Var example_loss(Graph& g, Model& model, const Example& ex, const subword::Segmentation& seg,
                 const ForwardOptions& opts, double label_smoothing) {
  const auto out = model.forward(g, seg, opts);
  TaskLogits logits{out.upos, out.feats, out.lemma, out.arcs,
                    model.parser().label_scores(g, out.parse, ex.gold.heads)};
  return multitask_loss(g, logits, ex.gold, label_smoothing).total;
}

std::string format_epoch_line(const EpochRecord& r) {
  char loss[64];
  std::snprintf(loss, sizeof loss, "%.6f", r.loss);
  std::string line = std::to_string(r.epoch) + "\t" + loss;
  const metrics::Score empty;
  for (const metrics::Score* s : {r.dev ? &r.dev->upos : &empty, r.dev ? &r.dev->ufeats : &empty,
                                  r.dev ? &r.dev->lemmas : &empty, r.dev ? &r.dev->uas : &empty,
                                  r.dev ? &r.dev->las : &empty}) {
    line += "\t" + metrics::format_percent(*s);
  }
  return line;
}

TrainResult train(Model& model, const std::vector<Example>& examples, const std::vector<conllu::Sentence>* dev,
                  const TrainConfig& config, const std::filesystem::path& out_dir,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (examples.empty()) throw std::invalid_argument("no training sentences");
  const auto all_params = model.parameters();
  const ParamGroups groups = param_groups(all_params);
  AdamW optimizer({config.beta1, config.beta2, 1e-8, config.weight_decay});
  Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);

  model.save_meta(out_dir);
  const auto log_path = out_dir / "metrics.tsv";
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  log << "# seed\t" << config.seed << '\n';
  log.flush();

  std::vector<std::size_t> lengths;
  for (const auto& ex : examples) lengths.push_back(ex.words.size());

  TrainResult result;
  std::optional<std::size_t> best_las;
  long unfrozen_steps = 0;
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const bool enc_on = encoder_trainable(epoch);
    ForwardOptions opts{true, enc_on, config.dropout, config.layer_dropout, &rng};
    double loss_sum = 0.0;
    for (const auto& batch : bucket_batches(lengths, config.batch_size, config.length_fuzz, rng)) {
      ++step;
      for (Parameter* p : all_params) p->zero_grad();
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (std::size_t idx : batch) {
        const Example& ex = examples[idx];
        subword::Segmentation seg = ex.seg;
        seg.pieces = mask_inputs(ex.seg.pieces, model.vocab(), config.mask_prob, rng).ids;
        Graph g(true, &rng);
        const Var loss = example_loss(g, model, ex, seg, opts, config.label_smoothing);
        const double value = g.value(loss)(0, 0);
        if (!std::isfinite(value)) {
          throw TrainingError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                              std::to_string(epoch) + ") on treebank " + ex.treebank + " sentence " +
                              std::to_string(idx) + (ex.sent_id.empty() ? "" : " '" + ex.sent_id + "'"));
        }
        loss_sum += value;
        g.backward(g.scale(loss, inv));
      }
      clip_gradients(all_params, config.grad_clip);
      if (enc_on) ++unfrozen_steps;
      const GroupRates rates = group_rates(config, epoch, std::max(1L, unfrozen_steps));
      for (Parameter* p : groups.task) optimizer.step(*p, rates.task);
      if (enc_on) {
        for (Parameter* p : groups.encoder) optimizer.step(*p, rates.encoder);
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.loss = loss_sum / static_cast<double>(examples.size());
    if (dev != nullptr && !dev->empty()) {
      std::vector<conllu::Sentence> predicted;
      predicted.reserve(dev->size());
      for (const auto& s : *dev) predicted.push_back(model.annotate(s));
      record.dev = metrics::evaluate(*dev, predicted);
      if (!best_las || record.dev->las.correct > *best_las) {
        best_las = record.dev->las.correct;
        result.best_epoch = epoch;
        model.save_weights(out_dir / "best.udk");
      }
    }
    log << format_epoch_line(record) << '\n';
    log.flush();
    result.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  model.save_weights(out_dir / "last.udk");
  if (!best_las) {
    result.best_epoch = config.epochs;
    model.save_weights(out_dir / "best.udk");
  }
  return result;
}

}  // namespace udkit
