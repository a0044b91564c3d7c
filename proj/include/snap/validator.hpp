#pragma once

// Consistency passes over a task specification.

#include <vector>

#include "snap/diagnostic.hpp"
#include "snap/task_model.hpp"

namespace snap::validator {

struct ExpansionResult {
  std::vector<task::IURow> expanded_rows;  // renumbered 1..n
  // Groups of expanded row indices whose rows cover one identical state set
  // with different behaviours.
  std::vector<std::vector<int>> needs_probability;
  bool changed = false;  // some row had to be split
};

// Structural checks plus ability cycles, sensor normalization, missing goal,
// rows whose behaviour has no effects, and partial overlaps between rows of
// one behaviour.
Diagnostics check_integrity(const task::SpecDocument& spec);

// Pairs of same-behaviour rows where one row's states contain the other's.
Diagnostics detect_subsumption(const task::SpecDocument& spec);

ExpansionResult expand_overlaps(const task::SpecDocument& spec);

// Per shared group: probabilities present and summing to 1 (errors). Per
// behaviour: probabilities summing to 1 (warnings).
Diagnostics check_beh_prob(const task::SpecDocument& spec);

// Shared-state groups of the rows as they stand (no expansion).
std::vector<std::vector<int>> shared_groups(const task::SpecDocument& spec);

// Greedy factoring of a set of full task states into partial states.
std::vector<task::PartialState> factor_states(const task::SpecDocument& spec,
                                              const std::vector<task::TaskState>& states);

struct Report {
  Diagnostics diagnostics;
  ExpansionResult expansion;
  task::SpecDocument expanded;  // input with expanded rows substituted
};

// check_integrity and detect_subsumption on the input, then expansion and
// check_beh_prob on the expanded rows.
Report validate(const task::SpecDocument& spec);

task::SpecDocument with_rows(task::SpecDocument spec, std::vector<task::IURow> rows);

}  // namespace snap::validator
