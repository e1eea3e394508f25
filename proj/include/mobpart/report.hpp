#pragma once

#include "mobpart/data.hpp"
#include "mobpart/tree.hpp"

#include <iosfwd>
#include <string>

namespace mobpart {

// Canonical JSON: sorted keys, two-space indent, reals rounded to 12
// significant digits, non-finite reals as null. Deserializing and
// re-serializing reproduces the text byte for byte.
std::string tree_to_json(const Tree& tree);
Tree tree_from_json(const std::string& text);

// Graphviz description: inner nodes show the split variable and adjusted
// p-value, leaves show n and the treatment estimates with intervals.
std::string tree_to_dot(const Tree& tree);

std::string tree_to_text(const Tree& tree);

// One row per leaf and treatment parameter.
void write_subgroups_csv(std::ostream& out, const Tree& tree);

// Dataset row (1-based) to leaf id; NA for rows excluded from the analysis.
void write_membership_csv(std::ostream& out, const Tree& tree, const Dataset& data);

}  // namespace mobpart
