#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "evogood/graph.hpp"

namespace evogood {

// EVG1 dataset text format (whitespace-delimited, UTF-8):
//
//   EVG1 <N> <T> <d> <kind>          kind: none | link | node
//   #t <t>                           one block per snapshot, t = 1..T
//   E <u> <v>                        undirected edge, u < v, sorted
//   X <v> <f1> ... <fd>              feature row, sorted by v, all N rows present
//   #labels [C]                      C = class count for kind=node
//   L <u> <v> <t>                    link label, sorted by (t, u, v)
//   Y <v> <t> <c>                    class label, sorted by (t, v)
//
// Reals are written in shortest round-trip form, so write/read is bit-exact.

void write_dataset(std::ostream& out, const DynamicGraph& g);
DynamicGraph read_dataset(std::istream& in);

void save_dataset(const std::filesystem::path& path, const DynamicGraph& g);
DynamicGraph load_dataset(const std::filesystem::path& path);

/// An edge's origin: which generative factor produced it (block pair, hidden
/// variable id, base vs sampled). Used by OOD filter rules.
struct TaggedEdge {
  int t = 0;
  int u = 0;
  int v = 0;
  std::string tag;
  friend bool operator==(const TaggedEdge&, const TaggedEdge&) = default;
  friend auto operator<=>(const TaggedEdge&, const TaggedEdge&) = default;
};

struct Provenance {
  std::vector<TaggedEdge> edges;  // sorted by (t, u, v)

  /// Tag for edge (u, v) at t; empty string when untagged.
  std::string tag_of(int t, int u, int v) const;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// Sidecar format: header `EVP1 <count>` then `P <t> <u> <v> <tag>` lines.
void write_provenance(std::ostream& out, const Provenance& p);
Provenance read_provenance(std::istream& in);
void save_provenance(const std::filesystem::path& path, const Provenance& p);
Provenance load_provenance(const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_real(double x);
double parse_real(const std::string& token, int line);

}  // namespace evogood
