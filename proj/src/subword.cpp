#include "udkit/subword.hpp"

#include <fstream>

#include "udkit/utf8.hpp"

namespace udkit::subword {

Vocab::Vocab(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (!index_.emplace(pieces_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary piece '" + pieces_[i] + "'");
    }
  }
  auto require = [this](std::string_view name) {
    auto id = find(name);
    if (!id) throw std::invalid_argument("vocabulary lacks special piece " + std::string(name));
    return *id;
  };
  unknown_id_ = require(kUnknownPiece);
  mask_id_ = require(kMaskPiece);
  start_id_ = require(kStartPiece);
  end_id_ = require(kEndPiece);
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> pieces;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pieces.push_back(line);
  }
  return Vocab(std::move(pieces));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (const auto& p : pieces_) out << p << '\n';
}

std::optional<int> Vocab::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> tokenize_word(std::string_view word, const Vocab& vocab) {
  const std::u32string chars = utf8::decode(word);
  if (chars.empty() || chars.size() > kMaxWordChars) return {vocab.unknown_id()};
  std::vector<int> out;
  std::size_t start = 0;
  while (start < chars.size()) {
    std::optional<int> match;
    std::size_t end = chars.size();
    for (; end > start; --end) {
      std::string candidate = start > 0 ? std::string(kContinuation) : std::string();
      candidate += utf8::encode(std::u32string_view(chars).substr(start, end - start));
      if ((match = vocab.find(candidate))) break;
    }
    if (!match) return {vocab.unknown_id()};
    out.push_back(*match);
    start = end;
  }
  return out;
}

WindowPlan window_long_sequence(std::size_t length, std::size_t max_len, std::size_t overlap) {
  if (!(max_len > overlap && overlap > 0)) {
    throw std::invalid_argument("window sizes need max_len > overlap > 0 (got " +
                                std::to_string(max_len) + ", " + std::to_string(overlap) + ")");
  }
  const std::size_t stride = max_len - overlap;
  WindowPlan plan;
  std::size_t start = 0;
  while (start + max_len < length) {
    plan.push_back({start, start + max_len, start, start + stride});
    start += stride;
  }
  plan.push_back({start, length, start, length});
  return plan;
}

Matrix recombine_windows(std::span<const Matrix> window_outputs, const WindowPlan& plan) {
  if (window_outputs.size() != plan.size()) {
    throw std::invalid_argument("recombine_windows: " + std::to_string(window_outputs.size()) +
                                " window outputs for a plan of " + std::to_string(plan.size()));
  }
  if (plan.empty()) return Matrix(0, 0);
  const Eigen::Index cols = window_outputs.front().cols();
  Matrix out(static_cast<Eigen::Index>(plan.back().keep_end), cols);
  for (std::size_t w = 0; w < plan.size(); ++w) {
    const auto& win = plan[w];
    const auto& m = window_outputs[w];
    if (m.rows() != static_cast<Eigen::Index>(win.end - win.begin) || m.cols() != cols) {
      throw std::invalid_argument("recombine_windows: window " + std::to_string(w) + " has shape (" +
                                  std::to_string(m.rows()) + ", " + std::to_string(m.cols()) +
                                  "), plan expects (" + std::to_string(win.end - win.begin) + ", " +
                                  std::to_string(cols) + ")");
    }
    const auto keep = static_cast<Eigen::Index>(win.keep_end - win.keep_begin);
    out.middleRows(static_cast<Eigen::Index>(win.keep_begin), keep) =
        m.middleRows(static_cast<Eigen::Index>(win.keep_begin - win.begin), keep);
  }
  return out;
}

Segmentation segment_sentence(std::span<const std::string> words, const Vocab& vocab,
                              std::size_t max_len, std::size_t overlap) {
  if (max_len < 3) throw std::invalid_argument("max_len must leave room for one piece");
  Segmentation seg;
  seg.pieces.push_back(vocab.start_id());
  for (const auto& w : words) {
    seg.first_piece_index.push_back(seg.pieces.size());
    const auto ids = tokenize_word(w, vocab);
    seg.pieces.insert(seg.pieces.end(), ids.begin(), ids.end());
  }
  seg.pieces.push_back(vocab.end_id());
  if (seg.pieces.size() > max_len) {
    seg.window_plan = window_long_sequence(seg.pieces.size() - 2, max_len - 2, overlap);
  }
  return seg;
}

}  // namespace udkit::subword
