// udkit command-line driver.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "udkit/conllu.hpp"
#include "udkit/lemma_script.hpp"
#include "udkit/metrics.hpp"
#include "udkit/model.hpp"
#include "udkit/run_config.hpp"
#include "udkit/subword.hpp"
#include "udkit/training.hpp"

namespace fs = std::filesystem;
using namespace udkit;

namespace {

int cmd_train(const std::string& config_path) {
  RunConfig rc = load_run_config(config_path);
  if (const char* env = std::getenv("UDKIT_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      rc.train.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("UDKIT_SEED is not an integer: ") + env);
    }
  }
  for (const auto& f : rc.train_files) {
    if (!fs::is_regular_file(f)) throw ConfigError("train file not found: " + f.string());
  }
  if (rc.dev_file && !fs::is_regular_file(*rc.dev_file)) {
    throw ConfigError("dev file not found: " + rc.dev_file->string());
  }
  if (!fs::is_regular_file(rc.vocab_file)) throw ConfigError("vocab file not found: " + rc.vocab_file.string());

  std::vector<std::pair<std::string, std::vector<conllu::Sentence>>> treebanks;
  std::vector<conllu::Sentence> all;
  for (const auto& f : rc.train_files) {
    auto sents = conllu::read_file(f.string());
    all.insert(all.end(), sents.begin(), sents.end());
    treebanks.emplace_back(f.stem().string(), std::move(sents));
  }
  const conllu::Dataset dataset = conllu::concat_treebanks(std::move(treebanks));
  std::vector<conllu::Sentence> dev;
  if (rc.dev_file) dev = conllu::read_file(rc.dev_file->string());

  Model model(rc.model, subword::Vocab::load(rc.vocab_file), build_vocabs(all), rc.train.seed);
  const auto examples = prepare_examples(dataset, model);
  fs::create_directories(rc.output_dir);
  std::cerr << "training on " << examples.size() << " sentences, seed " << rc.train.seed << '\n';
  const auto result = train(model, examples, rc.dev_file ? &dev : nullptr, rc.train, rc.output_dir,
                            [](const EpochRecord& r) { std::cerr << format_epoch_line(r) << '\n'; });
  std::cerr << "best epoch " << result.best_epoch << "; checkpoints in " << rc.output_dir.string() << '\n';
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& input, const std::string& output) {
  auto model = Model::load(ckpt);
  const auto sentences = conllu::read_file(input);
  std::vector<conllu::Sentence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(model->annotate(s));
  conllu::write_file(output, out);
  return 0;
}

int cmd_evaluate(const std::string& gold, const std::string& system, bool strip, bool machine) {
  const auto report = metrics::evaluate(conllu::read_file(gold), conllu::read_file(system), {strip});
  std::cout << metrics::format_report(report);
  if (machine) std::cout << metrics::format_machine(report);
  return 0;
}

int cmd_vocab_counts(const std::vector<std::string>& files) {
  std::vector<std::pair<std::string, std::vector<conllu::Sentence>>> treebanks;
  for (const auto& f : files) treebanks.emplace_back(f, conllu::read_file(f));
  const auto counts = conllu::vocab_counts(conllu::concat_treebanks(std::move(treebanks)));
  std::cout << "forms\t" << counts.forms << '\n'
            << "upos\t" << counts.upos << '\n'
            << "ufeats\t" << counts.ufeats << '\n'
            << "lemma_scripts\t" << counts.lemma_scripts << '\n'
            << "deprels\t" << counts.deprels << '\n';
  return 0;
}

int cmd_tokenize(const std::string& vocab_path, const std::string& word) {
  const auto vocab = subword::Vocab::load(vocab_path);
  const auto ids = subword::tokenize_word(word, vocab);
  for (std::size_t i = 0; i < ids.size(); ++i) std::cout << (i ? " " : "") << vocab.piece(ids[i]);
  std::cout << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task Universal Dependencies tagger, lemmatizer and parser"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("config", config_path, "Run configuration")->required();

  std::string ckpt, input, output;
  auto* predict_cmd = app.add_subcommand("predict", "Annotate a CoNLL-U file");
  predict_cmd->add_option("checkpoint", ckpt)->required();
  predict_cmd->add_option("input", input)->required();
  predict_cmd->add_option("output", output)->required();

  std::string gold, system;
  bool strip = false, machine = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a system file against gold");
  eval_cmd->add_option("gold", gold)->required();
  eval_cmd->add_option("system", system)->required();
  eval_cmd->add_flag("--strip-subtypes", strip, "Compare deprels on the main type only");
  eval_cmd->add_flag("--machine", machine, "Also print metric<TAB>value lines");

  auto* lemma_cmd = app.add_subcommand("lemma-script", "Encode or apply lemma edit scripts");
  lemma_cmd->require_subcommand(1);
  std::string form, lemma_str, tag;
  auto* encode_cmd = lemma_cmd->add_subcommand("encode", "Print the script tag for FORM LEMMA");
  encode_cmd->add_option("form", form)->required();
  encode_cmd->add_option("lemma", lemma_str)->required();
  auto* apply_cmd = lemma_cmd->add_subcommand("apply", "Print the lemma for TAG FORM");
  apply_cmd->add_option("tag", tag)->required();
  apply_cmd->add_option("form", form)->required();

  std::vector<std::string> files;
  auto* counts_cmd = app.add_subcommand("vocab-counts", "Count label inventories of CoNLL-U files");
  counts_cmd->add_option("files", files)->required();

  std::string vocab_path, word;
  auto* tok_cmd = app.add_subcommand("tokenize", "Split a word into wordpieces");
  tok_cmd->add_option("vocab", vocab_path)->required();
  tok_cmd->add_option("word", word)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version come through here with code 0
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) return cmd_train(config_path);
    if (*predict_cmd) return cmd_predict(ckpt, input, output);
    if (*eval_cmd) return cmd_evaluate(gold, system, strip, machine);
    if (*encode_cmd) {
      std::cout << lemma::encode_tag(lemma::compute_lemma_script(std::string_view(form), std::string_view(lemma_str)))
                << '\n';
      return 0;
    }
    if (*apply_cmd) {
      std::cout << lemma::apply_lemma_script(lemma::decode_tag(tag), form).lemma << '\n';
      return 0;
    }
    if (*counts_cmd) return cmd_vocab_counts(files);
    if (*tok_cmd) return cmd_tokenize(vocab_path, word);
  } catch (const TrainingError& e) {
    std::cerr << "udkit: training aborted: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "udkit: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
