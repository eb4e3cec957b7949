#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace udkit::subword {

inline constexpr std::string_view kContinuation = "##";
inline constexpr std::string_view kUnknownPiece = "[UNK]";
inline constexpr std::string_view kMaskPiece = "[MASK]";
inline constexpr std::string_view kStartPiece = "[CLS]";
inline constexpr std::string_view kEndPiece = "[SEP]";

// Words longer than this (in code points) become the unknown piece.
inline constexpr std::size_t kMaxWordChars = 100;

// Fixed wordpiece inventory; piece id is its line number in the vocab file.
class Vocab {
 public:
  // Throws std::invalid_argument on duplicate pieces or missing specials.
  explicit Vocab(std::vector<std::string> pieces);

  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<int> find(std::string_view piece) const;
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(pieces_.size()); }
  const std::vector<std::string>& pieces() const { return pieces_; }

  int unknown_id() const { return unknown_id_; }
  int mask_id() const { return mask_id_; }
  int start_id() const { return start_id_; }
  int end_id() const { return end_id_; }
  bool is_special(int id) const {
    return id == unknown_id_ || id == mask_id_ || id == start_id_ || id == end_id_;
  }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
  int unknown_id_ = -1;
  int mask_id_ = -1;
  int start_id_ = -1;
  int end_id_ = -1;
};

// Greedy longest-match-first. Any unmatched position turns the whole word
// into the unknown piece.
std::vector<int> tokenize_word(std::string_view word, const Vocab& vocab);

// One window over a piece sequence. [begin, end) is encoded; [keep_begin,
// keep_end) is the part whose outputs are used.
struct Window {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t keep_begin = 0;
  std::size_t keep_end = 0;

  friend bool operator==(const Window&, const Window&) = default;
};

using WindowPlan = std::vector<Window>;

// Windows of max_len advancing by (max_len - overlap). Each window keeps its
// first (max_len - overlap) positions; the last window keeps the rest.
// Requires max_len > overlap > 0; throws std::invalid_argument otherwise.
WindowPlan window_long_sequence(std::size_t length, std::size_t max_len, std::size_t overlap);

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Stitches per-window row vectors back into one row per original position.
Matrix recombine_windows(std::span<const Matrix> window_outputs, const WindowPlan& plan);

struct Segmentation {
  // [start] pieces... [end]
  std::vector<int> pieces;
  // Position in `pieces` of each word's first piece.
  std::vector<std::size_t> first_piece_index;
  // Plan over the inner pieces (positions 1..pieces.size()-2, offset by one);
  // empty when the sentence fits in one encoder pass.
  WindowPlan window_plan;
};

inline constexpr std::size_t kDefaultMaxLength = 512;
inline constexpr std::size_t kDefaultOverlap = 256;

// max_len counts the start and end pieces; each window gets its own pair.
Segmentation segment_sentence(std::span<const std::string> words, const Vocab& vocab,
                              std::size_t max_len = kDefaultMaxLength,
                              std::size_t overlap = kDefaultOverlap);

}  // namespace udkit::subword
