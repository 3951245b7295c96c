#pragma once

// Finite-domain constraint satisfaction: variables with enumerated domains and
// constraints of any arity, each a scope plus a relation (predicate or table).
// Solved by chronological backtracking with forward checking.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "plexisim/core.hpp"

namespace plexisim::csp {

template <typename Value>
struct Constraint {
  std::string name;
  std::vector<std::size_t> scope;
  // Receives the values of the scope variables, in scope order.
  std::function<bool(std::span<const Value>)> relation;
};

// Extensional constraint: the relation is the set of admissible tuples.
template <typename Value>
Constraint<Value> table_constraint(std::string name, std::vector<std::size_t> scope,
                                   std::set<std::vector<Value>> admissible) {
  return {std::move(name), std::move(scope),
          [tuples = std::move(admissible)](std::span<const Value> values) {
            return tuples.contains(std::vector<Value>(values.begin(), values.end()));
          }};
}

template <typename Value>
struct Instance {
  std::vector<std::string> variables;
  std::vector<std::vector<Value>> domains;
  std::vector<Constraint<Value>> constraints;

  std::size_t size() const { return variables.size(); }

  void validate() const {
    if (domains.size() != variables.size())
      throw ValidationError("every variable needs exactly one domain");
    for (const auto& c : constraints) {
      if (!c.relation) throw ValidationError("constraint '" + c.name + "' has no relation");
      for (auto v : c.scope)
        if (v >= variables.size())
          throw ValidationError("constraint '" + c.name + "' scope outside the variable set");
    }
  }
};

template <typename Value>
using Solution = std::vector<Value>;

template <typename Value>
bool evaluate(const Constraint<Value>& c, std::span<const Value> assignment) {
  std::vector<Value> tuple;
  tuple.reserve(c.scope.size());
  for (auto v : c.scope) tuple.push_back(assignment[v]);
  return c.relation(tuple);
}

// Direct evaluation of a total assignment.
template <typename Value>
bool satisfies(const Instance<Value>& inst, std::span<const Value> assignment) {
  if (assignment.size() != inst.size()) return false;
  for (std::size_t v = 0; v < inst.size(); ++v)
    if (std::find(inst.domains[v].begin(), inst.domains[v].end(), assignment[v]) ==
        inst.domains[v].end())
      return false;
  return std::all_of(inst.constraints.begin(), inst.constraints.end(),
                     [&](const auto& c) { return evaluate(c, assignment); });
}

struct SolveStats {
  std::size_t nodes = 0;
  std::size_t prunings = 0;
};

namespace detail {

template <typename Value>
class Solver {
 public:
  explicit Solver(const Instance<Value>& inst) : inst_(inst) {
    inst_.validate();
    const auto n = inst.size();
    alive_.resize(n);
    for (std::size_t v = 0; v < n; ++v) alive_[v].assign(inst.domains[v].size(), true);
    watching_.resize(n);
    for (std::size_t ci = 0; ci < inst.constraints.size(); ++ci) {
      std::set<std::size_t> vars(inst.constraints[ci].scope.begin(), inst.constraints[ci].scope.end());
      for (auto v : vars) watching_[v].push_back(ci);
    }
    values_.resize(n);
  }

  std::optional<Solution<Value>> run(SolveStats* stats) {
    bool ok = root_consistency();
    if (ok) ok = search(0);
    if (stats) *stats = stats_;
    if (!ok) return std::nullopt;
    return values_;
  }

 private:
  struct Pruned {
    std::size_t var;
    std::size_t value;
  };

  // Empty-scope constraints and unary constraints are settled before search.
  bool root_consistency() {
    for (const auto& c : inst_.constraints) {
      if (c.scope.empty() && !c.relation(std::span<const Value>{})) return false;
    }
    for (std::size_t v = 0; v < inst_.size(); ++v) {
      for (std::size_t d = 0; d < inst_.domains[v].size(); ++d) {
        values_[v] = inst_.domains[v][d];
        for (auto ci : watching_[v]) {
          const auto& c = inst_.constraints[ci];
          bool unary = std::all_of(c.scope.begin(), c.scope.end(), [&](auto s) { return s == v; });
          if (unary && !evaluate(c, std::span<const Value>(values_))) {
            alive_[v][d] = false;
            ++stats_.prunings;
            break;
          }
        }
      }
      if (std::none_of(alive_[v].begin(), alive_[v].end(), [](bool b) { return b; })) return false;
    }
    return true;
  }

  // Variables are assigned in index order, so "unassigned" means index > depth.
  bool search(std::size_t depth) {
    if (depth == inst_.size()) return true;
    for (std::size_t d = 0; d < inst_.domains[depth].size(); ++d) {
      if (!alive_[depth][d]) continue;
      ++stats_.nodes;
      values_[depth] = inst_.domains[depth][d];
      std::vector<Pruned> trail;
      if (propagate(depth, trail) && search(depth + 1)) return true;
      for (const auto& p : trail) alive_[p.var][p.value] = true;
    }
    return false;
  }

  bool propagate(std::size_t depth, std::vector<Pruned>& trail) {
    for (auto ci : watching_[depth]) {
      const auto& c = inst_.constraints[ci];
      std::set<std::size_t> distinct_future;
      for (auto s : c.scope)
        if (s > depth) distinct_future.insert(s);
      const auto open = distinct_future.size();
      if (open == 0) {
        if (!evaluate(c, std::span<const Value>(values_))) return false;
        continue;
      }
      if (open > 1) continue;
      // Forward check the single remaining variable.
      const auto future = *distinct_future.begin();
      bool any = false;
      for (std::size_t d = 0; d < inst_.domains[future].size(); ++d) {
        if (!alive_[future][d]) continue;
        values_[future] = inst_.domains[future][d];
        if (evaluate(c, std::span<const Value>(values_))) {
          any = true;
        } else {
          alive_[future][d] = false;
          trail.push_back({future, d});
          ++stats_.prunings;
        }
      }
      if (!any) return false;
    }
    return true;
  }

  const Instance<Value>& inst_;
  std::vector<std::vector<bool>> alive_;
  std::vector<std::vector<std::size_t>> watching_;
  std::vector<Value> values_;
  SolveStats stats_;
};

}  // namespace detail

// Returns the first satisfying total assignment in (variable index, domain
// order) lexicographic order, or nullopt when none exists.
template <typename Value>
std::optional<Solution<Value>> solve(const Instance<Value>& inst, SolveStats* stats = nullptr) {
  return detail::Solver<Value>(inst).run(stats);
}

}  // namespace plexisim::csp
