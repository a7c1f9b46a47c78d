#include "evogood/graph_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <tuple>

#include "evogood/errors.hpp"

namespace evogood {

std::string format_real(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_real(const std::string& token, int line) {
  double x = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && token[0] == '+') ++first;
  auto res = std::from_chars(first, last, x);
  if (res.ec != std::errc{} || res.ptr != last) throw ParseError(line, "bad real '" + token + "'");
  return x;
}

namespace {

int parse_int(const std::string& token, int line) {
  int x = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), x);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
    throw ParseError(line, "bad integer '" + token + "'");
  return x;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

const char* kind_name(LabelKind k) {
  switch (k) {
    case LabelKind::link_occurrence: return "link";
    case LabelKind::node_class: return "node";
    default: return "none";
  }
}

}  // namespace

void write_dataset(std::ostream& out, const DynamicGraph& g) {
  out << "EVG1 " << g.node_count << ' ' << g.num_timestamps() << ' ' << g.feature_dim << ' '
      << kind_name(g.labels.kind) << '\n';
  for (const Snapshot& s : g.snapshots) {
    out << "#t " << s.timestamp() << '\n';
    for (const Edge& e : s.edges()) out << "E " << e.u << ' ' << e.v << '\n';
    for (int v = 0; v < s.features().rows(); ++v) {
      out << "X " << v;
      for (int j = 0; j < s.features().cols(); ++j) out << ' ' << format_real(s.features()(v, j));
      out << '\n';
    }
  }
  if (g.labels.kind != LabelKind::none) {
    out << "#labels";
    if (g.labels.kind == LabelKind::node_class) out << ' ' << g.labels.num_classes;
    out << '\n';
    auto links = g.labels.links;
    std::sort(links.begin(), links.end(),
              [](const LinkLabel& a, const LinkLabel& b) {
                return std::tie(a.t, a.u, a.v) < std::tie(b.t, b.u, b.v);
              });
    for (const auto& l : links) out << "L " << l.u << ' ' << l.v << ' ' << l.t << '\n';
    auto classes = g.labels.classes;
    std::sort(classes.begin(), classes.end(), [](const ClassLabel& a, const ClassLabel& b) {
      return std::tie(a.t, a.v) < std::tie(b.t, b.v);
    });
    for (const auto& c : classes) out << "Y " << c.v << ' ' << c.t << ' ' << c.c << '\n';
  }
}

DynamicGraph read_dataset(std::istream& in) {
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError(1, "empty dataset");
  ++lineno;
  auto head = split(line);
  if (head.size() != 5 || head[0] != "EVG1") throw ParseError(1, "expected 'EVG1 N T d kind' header");
  DynamicGraph g;
  g.node_count = parse_int(head[1], 1);
  const int T = parse_int(head[2], 1);
  g.feature_dim = parse_int(head[3], 1);
  if (head[4] == "link") g.labels.kind = LabelKind::link_occurrence;
  else if (head[4] == "node") g.labels.kind = LabelKind::node_class;
  else if (head[4] == "none") g.labels.kind = LabelKind::none;
  else throw ParseError(1, "unknown label kind '" + head[4] + "'");
  if (g.node_count < 0 || T < 0 || g.feature_dim < 0) throw ParseError(1, "negative dimension");

  int current_t = 0;
  bool in_labels = false;
  std::vector<Edge> edges;
  Matrix features;
  std::vector<char> seen;
  auto flush = [&](int line_at) {
    if (current_t == 0) return;
    for (char c : seen)
      if (!c) throw ParseError(line_at, "snapshot " + std::to_string(current_t) + " misses feature rows");
    g.snapshots.emplace_back(current_t, g.node_count, edges, std::move(features));
    edges.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = split(line);
    if (tok.empty()) continue;
    if (tok[0] == "#t") {
      if (in_labels) throw ParseError(lineno, "snapshot after labels block");
      if (tok.size() != 2) throw ParseError(lineno, "expected '#t <t>'");
      flush(lineno);
      current_t = parse_int(tok[1], lineno);
      if (current_t != g.num_timestamps() + 1) throw ParseError(lineno, "timestamps must be consecutive from 1");
      features = Matrix::Zero(g.node_count, g.feature_dim);
      seen.assign(static_cast<std::size_t>(g.node_count), 0);
    } else if (tok[0] == "#labels") {
      flush(lineno);
      current_t = 0;
      in_labels = true;
      if (tok.size() == 2) g.labels.num_classes = parse_int(tok[1], lineno);
      else if (tok.size() != 1) throw ParseError(lineno, "expected '#labels [C]'");
    } else if (tok[0] == "E") {
      if (current_t == 0 || tok.size() != 3) throw ParseError(lineno, "misplaced or malformed edge line");
      int u = parse_int(tok[1], lineno), v = parse_int(tok[2], lineno);
      if (u < 0 || v < 0 || u >= g.node_count || v >= g.node_count || u == v)
        throw ParseError(lineno, "invalid edge endpoints");
      edges.push_back({u, v});
    } else if (tok[0] == "X") {
      if (current_t == 0 || static_cast<int>(tok.size()) != 2 + g.feature_dim)
        throw ParseError(lineno, "misplaced or malformed feature line");
      int v = parse_int(tok[1], lineno);
      if (v < 0 || v >= g.node_count) throw ParseError(lineno, "feature row index out of range");
      for (int j = 0; j < g.feature_dim; ++j) features(v, j) = parse_real(tok[2 + j], lineno);
      seen[static_cast<std::size_t>(v)] = 1;
    } else if (tok[0] == "L") {
      if (!in_labels || tok.size() != 4) throw ParseError(lineno, "misplaced or malformed link label");
      g.labels.links.push_back(
          {parse_int(tok[1], lineno), parse_int(tok[2], lineno), parse_int(tok[3], lineno)});
    } else if (tok[0] == "Y") {
      if (!in_labels || tok.size() != 4) throw ParseError(lineno, "misplaced or malformed class label");
      g.labels.classes.push_back(
          {parse_int(tok[1], lineno), parse_int(tok[2], lineno), parse_int(tok[3], lineno)});
    } else {
      throw ParseError(lineno, "unknown record '" + tok[0] + "'");
    }
  }
  flush(lineno);
  if (g.num_timestamps() != T)
    throw ParseError(lineno, "header declares " + std::to_string(T) + " snapshots, found " +
                                 std::to_string(g.num_timestamps()));
  return g;
}

void save_dataset(const std::filesystem::path& path, const DynamicGraph& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_dataset(out, g);
}

DynamicGraph load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  return read_dataset(in);
}

std::string Provenance::tag_of(int t, int u, int v) const {
  TaggedEdge key{t, std::min(u, v), std::max(u, v), {}};
  auto it = std::lower_bound(edges.begin(), edges.end(), key, [](const TaggedEdge& a, const TaggedEdge& b) {
    return std::tie(a.t, a.u, a.v) < std::tie(b.t, b.u, b.v);
  });
  if (it != edges.end() && it->t == t && it->u == key.u && it->v == key.v) return it->tag;
  return {};
}

void write_provenance(std::ostream& out, const Provenance& p) {
  out << "EVP1 " << p.edges.size() << '\n';
  for (const auto& e : p.edges) out << "P " << e.t << ' ' << e.u << ' ' << e.v << ' ' << e.tag << '\n';
}

Provenance read_provenance(std::istream& in) {
  std::string line;
  int lineno = 1;
  if (!std::getline(in, line)) throw ParseError(1, "empty provenance file");
  auto head = split(line);
  if (head.size() != 2 || head[0] != "EVP1") throw ParseError(1, "expected 'EVP1 <count>' header");
  Provenance p;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = split(line);
    if (tok.empty()) continue;
    if (tok.size() != 5 || tok[0] != "P") throw ParseError(lineno, "expected 'P t u v tag'");
    p.edges.push_back({parse_int(tok[1], lineno), parse_int(tok[2], lineno), parse_int(tok[3], lineno), tok[4]});
  }
  if (static_cast<int>(p.edges.size()) != parse_int(head[1], 1))
    throw ParseError(lineno, "provenance count mismatch");
  std::sort(p.edges.begin(), p.edges.end());
  return p;
}

void save_provenance(const std::filesystem::path& path, const Provenance& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_provenance(out, p);
}

Provenance load_provenance(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  return read_provenance(in);
}

}  // namespace evogood
