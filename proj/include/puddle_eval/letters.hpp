#pragma once

// Compact letter display: groups share a letter exactly when they are not
// significantly different.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace puddle_eval {

/// Adjacency matrix of the "not significantly different" relation.
using NonsigGraph = std::vector<std::vector<bool>>;

namespace detail {

using GroupSet = std::uint64_t;

inline bool contains(GroupSet s, std::size_t i) { return (s >> i) & 1u; }

// Insert-and-absorb: split every letter that holds a significant pair, then
// drop letters contained in others. The survivors are the maximal cliques
// of the nonsignificance graph.
inline std::vector<GroupSet> insert_absorb(const NonsigGraph& g) {
  const std::size_t k = g.size();
  std::vector<GroupSet> letters = {k == 64 ? ~GroupSet{0} : (GroupSet{1} << k) - 1};
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (g[i][j]) continue;
      std::vector<GroupSet> next;
      for (GroupSet L : letters) {
        if (contains(L, i) && contains(L, j)) {
          next.push_back(L & ~(GroupSet{1} << i));
          next.push_back(L & ~(GroupSet{1} << j));
        } else {
          next.push_back(L);
        }
      }
      std::sort(next.begin(), next.end());
      next.erase(std::unique(next.begin(), next.end()), next.end());
      letters.clear();
      for (GroupSet L : next) {
        const bool absorbed = std::any_of(next.begin(), next.end(), [&](GroupSet M) {
          return M != L && (L & M) == L;
        });
        if (!absorbed && L != 0) letters.push_back(L);
      }
    }
  }
  return letters;
}

inline bool covers(const NonsigGraph& g, std::span<const GroupSet> letters) {
  const std::size_t k = g.size();
  for (std::size_t i = 0; i < k; ++i) {
    bool seen = false;
    for (GroupSet L : letters) seen = seen || contains(L, i);
    if (!seen) return false;
    for (std::size_t j = i + 1; j < k; ++j) {
      if (!g[i][j]) continue;
      bool shared = false;
      for (GroupSet L : letters) shared = shared || (contains(L, i) && contains(L, j));
      if (!shared) return false;
    }
  }
  return true;
}

// Smallest subset of the maximal cliques that still covers every vertex and
// every nonsignificant pair. Exhaustive up to 20 candidates (first feasible
// combination in lexicographic order), otherwise a sweep that drops
// redundant letters in order.
inline std::vector<GroupSet> minimal_cover(const NonsigGraph& g, std::vector<GroupSet> cliques) {
  const std::size_t n = cliques.size();
  if (n <= 20) {
    std::vector<GroupSet> pick;
    for (std::size_t r = 1; r <= n; ++r) {
      std::vector<std::size_t> idx(r);
      for (std::size_t i = 0; i < r; ++i) idx[i] = i;
      while (true) {
        pick.clear();
        for (std::size_t i : idx) pick.push_back(cliques[i]);
        if (covers(g, pick)) return pick;
        std::size_t pos = r;
        while (pos > 0 && idx[pos - 1] == n - r + pos - 1) --pos;
        if (pos == 0) break;
        ++idx[pos - 1];
        for (std::size_t i = pos; i < r; ++i) idx[i] = idx[i - 1] + 1;
      }
    }
    return cliques;
  }
  for (std::size_t i = 0; i < cliques.size();) {
    std::vector<GroupSet> without = cliques;
    without.erase(without.begin() + static_cast<std::ptrdiff_t>(i));
    if (covers(g, without)) {
      cliques = std::move(without);
    } else {
      ++i;
    }
  }
  return cliques;
}

inline char letter_symbol(std::size_t i) {
  if (i < 26) return static_cast<char>('a' + i);
  if (i < 52) return static_cast<char>('A' + (i - 26));
  throw std::length_error("compact letters: more than 52 letters required");
}

}  // namespace detail

/// Letters per group, indexed like the graph. Letters are handed out in
/// order of the lowest group index they contain, so the first group always
/// receives "a".
inline std::vector<std::string> compact_letters(const NonsigGraph& nonsig) {
  const std::size_t k = nonsig.size();
  if (k == 0) return {};
  if (k > 64) throw std::invalid_argument("compact letters: at most 64 groups");
  for (std::size_t i = 0; i < k; ++i) {
    if (nonsig[i].size() != k) throw std::invalid_argument("compact letters: graph is not square");
    for (std::size_t j = 0; j < k; ++j)
      if (i != j && nonsig[i][j] != nonsig[j][i])
        throw std::invalid_argument("compact letters: graph is not symmetric");
  }

  auto letters = detail::minimal_cover(nonsig, detail::insert_absorb(nonsig));
  std::sort(letters.begin(), letters.end(), [](detail::GroupSet a, detail::GroupSet b) {
    // Lexicographic on ascending member lists.
    while (a && b) {
      const int la = std::countr_zero(a);
      const int lb = std::countr_zero(b);
      if (la != lb) return la < lb;
      a &= a - 1;
      b &= b - 1;
    }
    return a == 0 && b != 0;
  });

  std::vector<std::string> out(k);
  for (std::size_t l = 0; l < letters.size(); ++l)
    for (std::size_t i = 0; i < k; ++i)
      if (detail::contains(letters[l], i)) out[i].push_back(detail::letter_symbol(l));
  return out;
}

/// Name-keyed form; groups are ordered by name before letters are assigned.
/// `nonsig_pairs` lists unordered pairs of groups that do not differ.
inline std::map<std::string, std::string> compact_letters(
    std::vector<std::string> groups,
    std::span<const std::pair<std::string, std::string>> nonsig_pairs) {
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  const auto index = [&](const std::string& name) {
    auto it = std::lower_bound(groups.begin(), groups.end(), name);
    if (it == groups.end() || *it != name)
      throw std::invalid_argument("compact letters: unknown group '" + name + "'");
    return static_cast<std::size_t>(it - groups.begin());
  };
  NonsigGraph g(groups.size(), std::vector<bool>(groups.size(), false));
  for (std::size_t i = 0; i < groups.size(); ++i) g[i][i] = true;
  for (const auto& [a, b] : nonsig_pairs) {
    g[index(a)][index(b)] = true;
    g[index(b)][index(a)] = true;
  }
  const auto letters = compact_letters(g);
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < groups.size(); ++i) out[groups[i]] = letters[i];
  return out;
}

}  // namespace puddle_eval
