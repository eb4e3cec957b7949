#include "udkit/graph_decode.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace udkit::decode {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Dense = std::vector<std::vector<double>>;  // s[h][d] over nodes 0..N-1

void check_scores(const Matrix& scores) {
  const Eigen::Index n = scores.cols();
  if (n < 1 || scores.rows() != n + 1) {
    throw std::invalid_argument("arc score matrix must be (n + 1) x n with n >= 1, got " +
                                shape_string(scores));
  }
  if (!scores.allFinite()) throw std::invalid_argument("arc score matrix has non-finite entries");
}

// Chu-Liu/Edmonds on a dense graph rooted at node 0. Entries of -inf are
// missing arcs; every non-root node must have a finite incoming arc.
std::vector<int> edmonds(const Dense& s) {
  const int N = static_cast<int>(s.size());
  std::vector<int> best(static_cast<std::size_t>(N), -1);
  for (int d = 1; d < N; ++d) {
    double top = kNegInf;
    for (int h = 0; h < N; ++h) {
      if (h != d && s[h][d] > top) {
        top = s[h][d];
        best[d] = h;
      }
    }
    if (best[d] < 0) throw std::logic_error("node without a finite incoming arc");
  }

  // Find a cycle among the greedy choices.
  std::vector<int> color(static_cast<std::size_t>(N), 0);  // 0 new, 1 on stack, 2 done
  std::vector<int> cycle;
  for (int start = 1; start < N && cycle.empty(); ++start) {
    if (color[start]) continue;
    std::vector<int> path;
    int v = start;
    while (v != 0 && color[v] == 0) {
      color[v] = 1;
      path.push_back(v);
      v = best[v];
    }
    if (v != 0 && color[v] == 1) {
      for (auto it = path.rbegin(); it != path.rend(); ++it) {
        cycle.push_back(*it);
        if (*it == v) break;
      }
    }
    for (int u : path) color[u] = 2;
  }
  if (cycle.empty()) return best;

  std::vector<bool> in_cycle(static_cast<std::size_t>(N), false);
  for (int v : cycle) in_cycle[v] = true;
  std::vector<int> new_id(static_cast<std::size_t>(N), -1);
  std::vector<int> old_id;
  for (int v = 0; v < N; ++v) {
    if (!in_cycle[v]) {
      new_id[v] = static_cast<int>(old_id.size());
      old_id.push_back(v);
    }
  }
  const int c = static_cast<int>(old_id.size());
  const int M = c + 1;
  Dense t(static_cast<std::size_t>(M), std::vector<double>(static_cast<std::size_t>(M), kNegInf));
  std::vector<int> enter_at(static_cast<std::size_t>(N), -1);  // for u outside: cycle node it enters
  std::vector<int> leave_from(static_cast<std::size_t>(N), -1);  // for v outside: cycle node it leaves
  for (int u = 0; u < N; ++u) {
    if (in_cycle[u]) continue;
    for (int v = 0; v < N; ++v) {
      if (in_cycle[v] || u == v) continue;
      t[new_id[u]][new_id[v]] = s[u][v];
    }
    double top = kNegInf;
    for (int v : cycle) {
      const double gain = s[u][v] - s[best[v]][v];
      if (gain > top || (gain == top && enter_at[u] >= 0 && v < enter_at[u])) {
        top = gain;
        enter_at[u] = v;
      }
    }
    t[new_id[u]][c] = top;
  }
  for (int v = 0; v < N; ++v) {
    if (in_cycle[v] || v == 0) continue;
    double top = kNegInf;
    for (int u : cycle) {
      if (s[u][v] > top || (s[u][v] == top && leave_from[v] >= 0 && u < leave_from[v])) {
        top = s[u][v];
        leave_from[v] = u;
      }
    }
    t[c][new_id[v]] = top;
  }

  const std::vector<int> sub = edmonds(t);
  std::vector<int> heads(static_cast<std::size_t>(N), -1);
  for (int v = 1; v < N; ++v) {
    if (in_cycle[v]) {
      heads[v] = best[v];
    } else {
      const int h = sub[new_id[v]];
      heads[v] = h == c ? leave_from[v] : old_id[h];
    }
  }
  const int entering_src = old_id[sub[c]];
  heads[enter_at[entering_src]] = entering_src;
  return heads;
}

Dense to_dense(const Matrix& scores) {
  const int n = static_cast<int>(scores.cols());
  Dense s(static_cast<std::size_t>(n + 1), std::vector<double>(static_cast<std::size_t>(n + 1), kNegInf));
  for (int h = 0; h <= n; ++h) {
    for (int d = 1; d <= n; ++d) {
      if (h != d) s[h][d] = scores(h, d - 1);
    }
  }
  return s;
}

std::vector<int> strip_root(const std::vector<int>& heads) {
  return std::vector<int>(heads.begin() + 1, heads.end());
}

}  // namespace

double tree_score(const Matrix& scores, const std::vector<int>& heads) {
  double total = 0.0;
  for (std::size_t d = 0; d < heads.size(); ++d) total += scores(heads[d], static_cast<Eigen::Index>(d));
  return total;
}

bool is_single_rooted_tree(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  int roots = 0;
  for (int d = 1; d <= n; ++d) {
    const int h = heads[static_cast<std::size_t>(d - 1)];
    if (h < 0 || h > n || h == d) return false;
    if (h == 0) ++roots;
  }
  if (roots != 1) return false;
  for (int d = 1; d <= n; ++d) {
    int v = d;
    for (int steps = 0; v != 0; ++steps) {
      if (steps > n) return false;
      v = heads[static_cast<std::size_t>(v - 1)];
    }
  }
  return true;
}

std::vector<int> max_arborescence(const Matrix& scores) {
  check_scores(scores);
  const int n = static_cast<int>(scores.cols());
  if (n == 1) return {0};
  Dense s = to_dense(scores);
  std::vector<int> heads = strip_root(edmonds(s));
  int root_children = 0;
  for (int h : heads) root_children += h == 0;
  if (root_children == 1) return heads;

  std::vector<int> best_heads;
  double best_total = kNegInf;
  for (int r = 1; r <= n; ++r) {
    Dense restricted = s;
    for (int d = 1; d <= n; ++d) {
      if (d != r) restricted[0][d] = kNegInf;
    }
    std::vector<int> candidate = strip_root(edmonds(restricted));
    const double total = tree_score(scores, candidate);
    if (best_heads.empty() || total > best_total) {
      best_total = total;
      best_heads = std::move(candidate);
    }
  }
  return best_heads;
}

std::vector<int> brute_force_arborescence(const Matrix& scores) {
  check_scores(scores);
  const int n = static_cast<int>(scores.cols());
  if (n > 7) throw std::invalid_argument("brute-force arborescence refuses n = " + std::to_string(n) + " > 7");
  std::vector<int> heads(static_cast<std::size_t>(n), 0);
  std::vector<int> best;
  double best_total = kNegInf;
  // Lexicographic enumeration with strict improvement keeps the smallest
  // head sequence among equal scores.
  for (;;) {
    if (is_single_rooted_tree(heads)) {
      const double total = tree_score(scores, heads);
      if (best.empty() || total > best_total) {
        best_total = total;
        best = heads;
      }
    }
    int pos = n - 1;
    while (pos >= 0 && heads[static_cast<std::size_t>(pos)] == n) heads[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
    ++heads[static_cast<std::size_t>(pos)];
  }
  return best;
}

}  // namespace udkit::decode
