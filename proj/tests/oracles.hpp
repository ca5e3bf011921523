#pragma once

// Independent reference implementations used to cross-check the library.
// Nothing here calls into the code under test.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <set>
#include <vector>

namespace flex::testing {

// Two-valued vector logic over the basis s = (1,0), n = (0,1).
namespace matrix_logic {

using Vec2 = std::array<double, 2>;
using Vec4 = std::array<double, 4>;
using Mat2 = std::array<std::array<double, 2>, 2>;
using Mat24 = std::array<std::array<double, 4>, 2>;

inline constexpr Vec2 kS{1.0, 0.0};
inline constexpr Vec2 kN{0.0, 1.0};

inline Vec2 truth(double alpha) { return {alpha * kS[0] + (1 - alpha) * kN[0],
                                          alpha * kS[1] + (1 - alpha) * kN[1]}; }

inline Vec4 kron(const Vec2& u, const Vec2& v) {
  return {u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1]};
}

// M = sum over the four classical input pairs of out(a, b) (a ⊗ b)^T.
inline Mat24 dyadic(const std::function<bool(bool, bool)>& table) {
  Mat24 m{};
  for (bool a : {true, false}) {
    for (bool b : {true, false}) {
      const Vec2 out = table(a, b) ? kS : kN;
      const Vec4 in = kron(a ? kS : kN, b ? kS : kN);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 4; ++c) m[r][c] += out[r] * in[c];
      }
    }
  }
  return m;
}

// N = n s^T + s n^T
inline Mat2 negation() {
  Mat2 m{};
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) m[r][c] = kN[r] * kS[c] + kS[r] * kN[c];
  }
  return m;
}

inline Mat24 conjunction() { return dyadic([](bool a, bool b) { return a && b; }); }
inline Mat24 disjunction() { return dyadic([](bool a, bool b) { return a || b; }); }
inline Mat24 implication() { return dyadic([](bool a, bool b) { return !a || b; }); }
inline Mat24 exclusive_or() { return dyadic([](bool a, bool b) { return a != b; }); }

// s^T M (u ⊗ v)
inline double apply(const Mat24& m, double a, double b) {
  const Vec4 x = kron(truth(a), truth(b));
  double out = 0.0;
  for (int r = 0; r < 2; ++r) {
    double y = 0.0;
    for (int c = 0; c < 4; ++c) y += m[r][c] * x[c];
    out += kS[r] * y;
  }
  return out;
}

inline double apply(const Mat2& m, double a) {
  const Vec2 x = truth(a);
  double out = 0.0;
  for (int r = 0; r < 2; ++r) out += kS[r] * (m[r][0] * x[0] + m[r][1] * x[1]);
  return out;
}

}  // namespace matrix_logic

// Sum over nonempty subsets S of (-1)^{|S|+1} prod_{i in S} x_i.
inline double inclusion_exclusion(const std::vector<double>& x) {
  const std::size_t n = x.size();
  double total = 0.0;
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    double prod = 1.0;
    int bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) {
        prod *= x[i];
        ++bits;
      }
    }
    total += (bits % 2 == 1) ? prod : -prod;
  }
  return total;
}

// Rank of every answer by full sort: position among {answer} ∪ non-answers,
// counting non-answers with distance <= the answer's as ahead of it.
inline std::vector<std::size_t> sorted_ranks(const std::vector<double>& dist,
                                             const std::vector<std::size_t>& hard,
                                             const std::vector<std::size_t>& all_answers) {
  std::vector<bool> is_answer(dist.size(), false);
  for (std::size_t a : all_answers) is_answer[a] = true;
  std::vector<std::size_t> out;
  for (std::size_t h : hard) {
    // candidates: h plus non-answers; sort by (distance, answer last on ties)
    std::vector<std::pair<double, int>> pool{{dist[h], 1}};
    for (std::size_t e = 0; e < dist.size(); ++e) {
      if (!is_answer[e]) pool.push_back({dist[e], 0});
    }
    std::sort(pool.begin(), pool.end());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool[i].second == 1) out.push_back(i + 1);
    }
  }
  return out;
}

// Set semantics by scanning the raw triple list; shares no code with the
// library's indexed evaluation.
template <class Graph, class Node>
std::set<int> scan_answer(const Graph& kg, const Node& q) {
  using K = decltype(q.kind);
  switch (q.kind) {
    case K::kAnchor:
      return {q.id};
    case K::kProjection: {
      const std::set<int> in = scan_answer(kg, q.children[0]);
      std::set<int> out;
      for (const auto& t : kg.triples()) {
        if (t.relation == q.id && in.count(t.head)) out.insert(t.tail);
      }
      return out;
    }
    case K::kAnd: {
      std::set<int> acc = scan_answer(kg, q.children[0]);
      for (std::size_t i = 1; i < q.children.size(); ++i) {
        const std::set<int> next = scan_answer(kg, q.children[i]);
        std::set<int> keep;
        for (int x : acc) {
          if (next.count(x)) keep.insert(x);
        }
        acc = std::move(keep);
      }
      return acc;
    }
    case K::kOr: {
      std::set<int> acc;
      for (const auto& c : q.children) {
        for (int x : scan_answer(kg, c)) acc.insert(x);
      }
      return acc;
    }
    case K::kNot: {
      const std::set<int> inner = scan_answer(kg, q.children[0]);
      std::set<int> out;
      for (int e = 0; e < static_cast<int>(kg.num_entities()); ++e) {
        if (!inner.count(e)) out.insert(e);
      }
      return out;
    }
  }
  return {};
}

}  // namespace flex::testing
