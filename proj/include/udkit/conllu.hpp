#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace udkit::conllu {

// One syntactic word. Unset columns ("_") are empty optionals; FEATS, XPOS,
// DEPS and MISC are kept verbatim.
struct Token {
  int id = 0;
  std::string form;
  std::optional<std::string> lemma;
  std::optional<std::string> upos;
  std::string xpos = "_";
  std::string feats = "_";
  std::optional<int> head;
  std::optional<std::string> deprel;
  std::string deps = "_";
  std::string misc = "_";

  friend bool operator==(const Token&, const Token&) = default;
};

// Multiword token range line ("3-4"), emitted before word `first`.
struct MultiwordToken {
  int first = 0;
  int last = 0;
  std::string form;
  std::string line;  // the raw line

  friend bool operator==(const MultiwordToken&, const MultiwordToken&) = default;
};

// Empty node line ("5.1"), emitted after word `after` (0 = before word 1).
struct EmptyNode {
  int after = 0;
  std::string line;

  friend bool operator==(const EmptyNode&, const EmptyNode&) = default;
};

struct Sentence {
  std::vector<std::string> comments;
  std::vector<Token> tokens;
  std::vector<MultiwordToken> multiword_tokens;
  std::vector<EmptyNode> empty_nodes;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::string> forms() const;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& detail, const std::string& source = {})
      : std::runtime_error((source.empty() ? "line " : source + ":") + std::to_string(line) + ": " +
                           detail),
        line_(line),
        detail_(detail) {}
  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

std::vector<Sentence> parse_document(std::string_view text);
std::vector<Sentence> read_file(const std::string& path);

std::string serialize_document(const std::vector<Sentence>& sentences);
// Writes through a temporary file and renames, so readers never see a
// truncated document.
void write_file(const std::string& path, const std::vector<Sentence>& sentences);

enum class ViolationKind {
  kIdSequence,
  kHeadOutOfRange,
  kSelfLoop,
  kMultipleRoots,
  kNoRoot,
  kCycle,
};

struct Violation {
  ViolationKind kind;
  int token_id;
  std::string message;
};

std::vector<Violation> validate_sentence(const Sentence& sentence);

// True when every word has UPOS, lemma, head and deprel set.
bool fully_annotated(const Sentence& sentence);

struct TreebankSentence {
  Sentence sentence;
  std::string treebank;
};

struct Dataset {
  std::vector<TreebankSentence> sentences;
  // Per-treebank sentence counts, in input order.
  std::vector<std::pair<std::string, std::size_t>> counts;

  std::size_t size() const { return sentences.size(); }
};

// Throws std::invalid_argument on a duplicate treebank id.
Dataset concat_treebanks(std::vector<std::pair<std::string, std::vector<Sentence>>> treebanks);

struct VocabCounts {
  std::size_t forms = 0;
  std::size_t upos = 0;
  std::size_t ufeats = 0;
  std::size_t lemma_scripts = 0;
  std::size_t deprels = 0;
};

VocabCounts vocab_counts(const Dataset& dataset);

}  // namespace udkit::conllu
