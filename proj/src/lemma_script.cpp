#include "udkit/lemma_script.hpp"

#include <algorithm>

#include "udkit/utf8.hpp"

namespace udkit::lemma {

CommonSpan longest_common_substring(std::u32string_view a, std::u32string_view b) {
  CommonSpan best;
  // run[j + 1] = length of the common suffix of a[..i] and b[..j].
  std::vector<std::size_t> prev(b.size() + 1, 0), run(b.size() + 1, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      run[j + 1] = a[i] == b[j] ? prev[j] + 1 : 0;
      const std::size_t len = run[j + 1];
      if (len == 0) continue;
      const std::size_t sa = i + 1 - len;
      const std::size_t sb = j + 1 - len;
      if (len > best.length || (len == best.length && (sa < best.start_a ||
                                                        (sa == best.start_a && sb < best.start_b)))) {
        best = {sa, sb, len};
      }
    }
    std::swap(prev, run);
  }
  return best;
}

EditOps shortest_edit_script(std::u32string_view source, std::u32string_view target) {
  const std::size_t n = source.size();
  const std::size_t m = target.size();
  // cost[i][j]: edits turning source[i..] into target[j..].
  thread_local std::vector<std::size_t> cost;  // reused; this runs once per word pair
  cost.assign((n + 1) * (m + 1), 0);
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = n + 1; i-- > 0;) {
    for (std::size_t j = m + 1; j-- > 0;) {
      if (i == n) {
        cost[at(i, j)] = m - j;
      } else if (j == m) {
        cost[at(i, j)] = n - i;
      } else {
        std::size_t c = std::min(cost[at(i + 1, j)], cost[at(i, j + 1)]) + 1;
        c = std::min(c, cost[at(i + 1, j + 1)] + (source[i] == target[j] ? 0 : 1));
        cost[at(i, j)] = c;
      }
    }
  }

  EditOps ops;
  ops.reserve(n + m);
  std::size_t i = 0, j = 0;
  while (i < n || j < m) {
    const std::size_t here = cost[at(i, j)];
    if (i < n && j < m && source[i] == target[j] && cost[at(i + 1, j + 1)] == here) {
      ops.push_back({OpKind::kKeep, 0});
      ++i, ++j;
    } else if (i < n && j < m && cost[at(i + 1, j + 1)] + 1 == here) {
      ops.push_back({OpKind::kSubstitute, target[j]});
      ++i, ++j;
    } else if (i < n && cost[at(i + 1, j)] + 1 == here) {
      ops.push_back({OpKind::kDelete, 0});
      ++i;
    } else {
      ops.push_back({OpKind::kInsert, target[j]});
      ++j;
    }
  }
  return ops;
}

std::size_t edit_cost(const EditOps& ops) {
  return static_cast<std::size_t>(
      std::count_if(ops.begin(), ops.end(), [](const EditOp& op) { return op.kind != OpKind::kKeep; }));
}

std::size_t consumed_length(const EditOps& ops) {
  return static_cast<std::size_t>(std::count_if(
      ops.begin(), ops.end(), [](const EditOp& op) { return op.kind != OpKind::kInsert; }));
}

EditScript compute_lemma_script(std::u32string_view form, std::u32string_view lemma) {
  EditScript script;
  if (form.empty() && lemma.empty()) return script;
  const CommonSpan lcs = longest_common_substring(form, lemma);
  if (lcs.length == 0) {
    script.lcs_present = false;
    script.replacement = std::u32string(lemma);
    return script;
  }
  script.prefix_ops = shortest_edit_script(form.substr(0, lcs.start_a), lemma.substr(0, lcs.start_b));
  script.suffix_ops = shortest_edit_script(form.substr(lcs.start_a + lcs.length),
                                           lemma.substr(lcs.start_b + lcs.length));
  return script;
}

EditScript compute_lemma_script(std::string_view form, std::string_view lemma) {
  return compute_lemma_script(utf8::decode(form), utf8::decode(lemma));
}

namespace {

// Applies ops to exactly consumed_length(ops) characters of `part`.
void run_ops(const EditOps& ops, std::u32string_view part, std::u32string& out) {
  std::size_t pos = 0;
  for (const auto& op : ops) {
    switch (op.kind) {
      case OpKind::kKeep:
        out.push_back(part[pos++]);
        break;
      case OpKind::kDelete:
        ++pos;
        break;
      case OpKind::kSubstitute:
        out.push_back(op.ch);
        ++pos;
        break;
      case OpKind::kInsert:
        out.push_back(op.ch);
        break;
    }
  }
}

}  // namespace

std::u32string apply_lemma_script(const EditScript& script, std::u32string_view form, bool* fallback) {
  if (fallback) *fallback = false;
  if (!script.lcs_present) return script.replacement;
  const std::size_t head = consumed_length(script.prefix_ops);
  const std::size_t tail = consumed_length(script.suffix_ops);
  if (head + tail > form.size()) {
    if (fallback) *fallback = true;
    return std::u32string(form);
  }
  std::u32string out;
  out.reserve(form.size() + 8);
  run_ops(script.prefix_ops, form.substr(0, head), out);
  out.append(form.substr(head, form.size() - head - tail));
  run_ops(script.suffix_ops, form.substr(form.size() - tail), out);
  return out;
}

AppliedLemma apply_lemma_script(const EditScript& script, std::string_view form) {
  bool fallback = false;
  auto lemma = apply_lemma_script(script, utf8::decode(form), &fallback);
  return {utf8::encode(lemma), fallback};
}

namespace {

void encode_ops(const EditOps& ops, std::string& out) {
  for (const auto& op : ops) {
    out.push_back(static_cast<char>(op.kind));
    if (op.kind == OpKind::kSubstitute || op.kind == OpKind::kInsert) out += utf8::encode(op.ch);
  }
}

// Parses ops from `text` starting at `pos` until `stop` (or end when stop is 0).
EditOps decode_ops(const std::u32string& text, std::size_t& pos, char32_t stop) {
  EditOps ops;
  while (pos < text.size() && !(stop != 0 && text[pos] == stop)) {
    const char32_t code = text[pos++];
    switch (code) {
      case U'k':
        ops.push_back({OpKind::kKeep, 0});
        break;
      case U'd':
        ops.push_back({OpKind::kDelete, 0});
        break;
      case U's':
      case U'i':
        if (pos >= text.size()) throw TagError("edit tag ends inside an operation");
        ops.push_back({code == U's' ? OpKind::kSubstitute : OpKind::kInsert, text[pos++]});
        break;
      default:
        throw TagError("unknown edit operation in tag");
    }
  }
  return ops;
}

}  // namespace

std::string encode_tag(const EditScript& script) {
  if (!script.lcs_present) return "r:" + utf8::encode(script.replacement);
  std::string out = "p:";
  encode_ops(script.prefix_ops, out);
  out += "|s:";
  encode_ops(script.suffix_ops, out);
  return out;
}

EditScript decode_tag(std::string_view tag) {
  std::u32string text;
  try {
    text = utf8::decode(tag);
  } catch (const std::invalid_argument& e) {
    throw TagError(std::string("edit tag is not valid UTF-8: ") + e.what());
  }
  EditScript script;
  if (text.starts_with(U"r:")) {
    script.lcs_present = false;
    script.replacement = text.substr(2);
    return script;
  }
  if (!text.starts_with(U"p:")) throw TagError("edit tag must start with 'p:' or 'r:'");
  std::size_t pos = 2;
  script.prefix_ops = decode_ops(text, pos, U'|');
  if (text.compare(pos, 3, U"|s:") != 0) throw TagError("edit tag lacks the '|s:' separator");
  pos += 3;
  script.suffix_ops = decode_ops(text, pos, 0);
  return script;
}

}  // namespace udkit::lemma
