#include "udkit/conllu.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "udkit/lemma_script.hpp"

namespace udkit::conllu {
namespace {

constexpr std::size_t kColumns = 10;

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

std::optional<int> parse_int(std::string_view s) {
  int value = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

std::optional<std::string> optional_column(std::string_view col) {
  if (col == "_") return std::nullopt;
  return std::string(col);
}

struct PendingHead {
  std::size_t token_index;
  std::size_t line;
};

class DocumentParser {
 public:
  std::vector<Sentence> run(std::string_view text) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      std::string_view line = text.substr(pos, nl - pos);
      pos = nl + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      handle_line(line, line_no);
    }
    finish_sentence(line_no);
    return std::move(sentences_);
  }

 private:
  void handle_line(std::string_view line, std::size_t line_no) {
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      finish_sentence(line_no);
      return;
    }
    if (line.front() == '#') {
      if (!current_.tokens.empty() || !current_.multiword_tokens.empty() ||
          !current_.empty_nodes.empty()) {
        throw ParseError(line_no, "comment line inside a sentence");
      }
      current_.comments.emplace_back(line);
      open_ = true;
      return;
    }
    open_ = true;
    last_line_ = line_no;
    const auto cols = split_tabs(line);
    if (cols.size() != kColumns) {
      throw ParseError(line_no, "expected 10 tab-separated columns, found " +
                                    std::to_string(cols.size()));
    }
    const std::string_view id = cols[0];
    const int next_id = static_cast<int>(current_.tokens.size()) + 1;

    if (const auto dash = id.find('-'); dash != std::string_view::npos) {
      const auto first = parse_int(id.substr(0, dash));
      const auto last = parse_int(id.substr(dash + 1));
      if (!first || !last || *first > *last) {
        throw ParseError(line_no, "malformed multiword token range '" + std::string(id) + "'");
      }
      if (*first != next_id) {
        throw ParseError(line_no, "multiword token range '" + std::string(id) +
                                      "' does not start at word " + std::to_string(next_id));
      }
      current_.multiword_tokens.push_back({*first, *last, std::string(cols[1]), std::string(line)});
      return;
    }
    if (const auto dot = id.find('.'); dot != std::string_view::npos) {
      const auto major = parse_int(id.substr(0, dot));
      const auto minor = parse_int(id.substr(dot + 1));
      if (!major || !minor || *major != next_id - 1) {
        throw ParseError(line_no, "malformed or misplaced empty node id '" + std::string(id) + "'");
      }
      current_.empty_nodes.push_back({*major, std::string(line)});
      return;
    }

    const auto word_id = parse_int(id);
    if (!word_id) throw ParseError(line_no, "malformed word id '" + std::string(id) + "'");
    if (*word_id != next_id) {
      throw ParseError(line_no, "non-consecutive word id " + std::to_string(*word_id) +
                                    ", expected " + std::to_string(next_id));
    }

    Token token;
    token.id = *word_id;
    token.form = std::string(cols[1]);
    if (cols[2] == "_" && cols[1] == "_") {
      token.lemma = "_";
    } else {
      token.lemma = optional_column(cols[2]);
    }
    token.upos = optional_column(cols[3]);
    token.xpos = std::string(cols[4]);
    token.feats = std::string(cols[5]);
    if (cols[6] != "_") {
      const auto head = parse_int(cols[6]);
      if (!head || *head < 0) {
        throw ParseError(line_no, "malformed head '" + std::string(cols[6]) + "'");
      }
      token.head = *head;
      pending_heads_.push_back({current_.tokens.size(), line_no});
    }
    token.deprel = optional_column(cols[7]);
    token.deps = std::string(cols[8]);
    token.misc = std::string(cols[9]);
    current_.tokens.push_back(std::move(token));
  }

  void finish_sentence(std::size_t line_no) {
    if (!open_) return;
    if (current_.tokens.empty()) {
      throw ParseError(line_no, "sentence without words");
    }
    const int n = static_cast<int>(current_.tokens.size());
    for (const auto& pending : pending_heads_) {
      const int head = *current_.tokens[pending.token_index].head;
      if (head > n) {
        throw ParseError(pending.line, "head " + std::to_string(head) +
                                           " out of range for sentence of " + std::to_string(n) +
                                           " words");
      }
    }
    for (const auto& mwt : current_.multiword_tokens) {
      if (mwt.last > n) {
        throw ParseError(last_line_, "multiword token range ends past the last word");
      }
    }
    sentences_.push_back(std::move(current_));
    current_ = Sentence{};
    pending_heads_.clear();
    open_ = false;
  }

  std::vector<Sentence> sentences_;
  Sentence current_;
  std::vector<PendingHead> pending_heads_;
  std::size_t last_line_ = 0;
  bool open_ = false;
};

void append_token(std::string& out, const Token& t) {
  out += std::to_string(t.id);
  out += '\t';
  out += t.form;
  out += '\t';
  out += t.lemma.value_or("_");
  out += '\t';
  out += t.upos.value_or("_");
  out += '\t';
  out += t.xpos;
  out += '\t';
  out += t.feats;
  out += '\t';
  out += t.head ? std::to_string(*t.head) : std::string("_");
  out += '\t';
  out += t.deprel.value_or("_");
  out += '\t';
  out += t.deps;
  out += '\t';
  out += t.misc;
  out += '\n';
}

}  // namespace

std::vector<std::string> Sentence::forms() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.form);
  return out;
}

std::vector<Sentence> parse_document(std::string_view text) { return DocumentParser{}.run(text); }

std::vector<Sentence> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_document(buffer.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

std::string serialize_document(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    for (const auto& c : s.comments) {
      out += c;
      out += '\n';
    }
    auto emit_empty_after = [&](int id) {
      for (const auto& e : s.empty_nodes) {
        if (e.after == id) {
          out += e.line;
          out += '\n';
        }
      }
    };
    emit_empty_after(0);
    for (const auto& t : s.tokens) {
      for (const auto& m : s.multiword_tokens) {
        if (m.first == t.id) {
          out += m.line;
          out += '\n';
        }
      }
      append_token(out, t);
      emit_empty_after(t.id);
    }
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::vector<Sentence>& sentences) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << serialize_document(sentences);
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<Violation> validate_sentence(const Sentence& sentence) {
  std::vector<Violation> out;
  const int n = static_cast<int>(sentence.tokens.size());
  for (int i = 0; i < n; ++i) {
    if (sentence.tokens[i].id != i + 1) {
      out.push_back({ViolationKind::kIdSequence, sentence.tokens[i].id,
                     "word " + std::to_string(i + 1) + " has id " +
                         std::to_string(sentence.tokens[i].id)});
    }
  }

  bool all_heads = n > 0;
  std::vector<int> heads(n, -1);
  for (int i = 0; i < n; ++i) {
    const auto& t = sentence.tokens[i];
    if (!t.head) {
      all_heads = false;
      continue;
    }
    const int h = *t.head;
    if (h < 0 || h > n) {
      out.push_back({ViolationKind::kHeadOutOfRange, i + 1,
                     "head " + std::to_string(h) + " outside [0, " + std::to_string(n) + "]"});
      all_heads = false;
      continue;
    }
    if (h == i + 1) {
      out.push_back({ViolationKind::kSelfLoop, i + 1, "word is its own head"});
      continue;
    }
    heads[i] = h;
  }

  if (all_heads) {
    std::vector<int> roots;
    for (int i = 0; i < n; ++i) {
      if (heads[i] == 0) roots.push_back(i + 1);
    }
    if (roots.empty()) {
      out.push_back({ViolationKind::kNoRoot, 0, "no word attaches to the root"});
    } else if (roots.size() > 1) {
      out.push_back({ViolationKind::kMultipleRoots, roots[1],
                     std::to_string(roots.size()) + " words attach to the root"});
    }
  }

  // Cycles among resolved heads: 0 = unvisited, 1 = on current path, 2 = done.
  std::vector<int> state(n + 1, 0);
  for (int start = 1; start <= n; ++start) {
    if (state[start] != 0) continue;
    std::vector<int> path;
    int v = start;
    while (v > 0 && state[v] == 0 && heads[v - 1] > 0) {
      state[v] = 1;
      path.push_back(v);
      v = heads[v - 1];
    }
    if (v > 0 && state[v] == 1) {
      const auto it = std::find(path.begin(), path.end(), v);
      const int smallest = *std::min_element(it, path.end());
      out.push_back({ViolationKind::kCycle, smallest,
                     "head cycle through word " + std::to_string(smallest)});
    }
    for (int p : path) state[p] = 2;
    if (v > 0) state[v] = std::max(state[v], 2);
  }
  return out;
}

bool fully_annotated(const Sentence& sentence) {
  return std::all_of(sentence.tokens.begin(), sentence.tokens.end(), [](const Token& t) {
    return t.lemma && t.upos && t.head && t.deprel;
  });
}

Dataset concat_treebanks(std::vector<std::pair<std::string, std::vector<Sentence>>> treebanks) {
  Dataset dataset;
  std::unordered_set<std::string> seen;
  for (auto& [id, sentences] : treebanks) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("duplicate treebank id '" + id + "'");
    }
    dataset.counts.emplace_back(id, sentences.size());
    for (auto& s : sentences) dataset.sentences.push_back({std::move(s), id});
  }
  return dataset;
}

VocabCounts vocab_counts(const Dataset& dataset) {
  std::set<std::string> forms, upos, ufeats, scripts, deprels;
  for (const auto& [sentence, treebank] : dataset.sentences) {
    for (const auto& t : sentence.tokens) {
      forms.insert(t.form);
      if (t.upos) upos.insert(*t.upos);
      ufeats.insert(t.feats);
      if (t.lemma) scripts.insert(lemma::encode_tag(lemma::compute_lemma_script(t.form, *t.lemma)));
      if (t.deprel) deprels.insert(*t.deprel);
    }
  }
  return {forms.size(), upos.size(), ufeats.size(), scripts.size(), deprels.size()};
}

}  // namespace udkit::conllu
