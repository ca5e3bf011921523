#include "flex/query.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

namespace flex {

std::string_view kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::kAnchor: return "anchor";
    case NodeKind::kProjection: return "projection";
    case NodeKind::kAnd: return "and";
    case NodeKind::kOr: return "or";
    case NodeKind::kNot: return "not";
  }
  return "unknown";
}

namespace {

class Parser {
 public:
  Parser(std::string_view text, const Vocabulary& entities,
         const Vocabulary& relations)
      : text_(text), entities_(entities), relations_(relations) {}

  QueryNode parse() {
    QueryNode q = node();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return q;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what, pos_);
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
            text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool accept(std::string_view token) {
    skip_ws();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  void expect(std::string_view token) {
    if (!accept(token)) fail("expected '" + std::string(token) + "'");
  }

  std::string name() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ',' || c == '(' || c == ')' || c == ' ' || c == '\t' ||
          c == '\n' || c == '\r') {
        break;
      }
      ++pos_;
    }
    if (pos_ == start) fail("expected a name");
    return std::string(text_.substr(start, pos_ - start));
  }

  std::vector<QueryNode> operands(const char* op) {
    std::vector<QueryNode> children;
    children.push_back(node());
    while (accept(",")) children.push_back(node());
    const std::size_t close_at = pos_;
    expect(")");
    if (children.size() < 2) {
      throw ParseError(std::string(op) + " needs at least 2 operands",
                       close_at);
    }
    return children;
  }

  QueryNode node() {
    skip_ws();
    const std::size_t start = pos_;
    if (accept("e:")) {
      const std::string n = name();
      const auto id = entities_.find(n);
      if (!id) throw ParseError("unknown entity '" + n + "'", start);
      return QueryNode::anchor(*id);
    }
    if (accept("P(")) {
      expect("r:");
      const std::size_t rel_at = pos_;
      const std::string n = name();
      const auto id = relations_.find(n);
      if (!id) throw ParseError("unknown relation '" + n + "'", rel_at);
      expect(",");
      QueryNode child = node();
      expect(")");
      return QueryNode::projection(*id, std::move(child));
    }
    if (accept("AND(")) return QueryNode::conjunction(operands("AND"));
    if (accept("OR(")) return QueryNode::disjunction(operands("OR"));
    if (accept("NOT(")) {
      QueryNode child = node();
      expect(")");
      return QueryNode::negation(std::move(child));
    }
    fail("expected one of e:, P(, AND(, OR(, NOT(");
  }

  std::string_view text_;
  const Vocabulary& entities_;
  const Vocabulary& relations_;
  std::size_t pos_ = 0;
};

void print_into(const QueryNode& q, const Vocabulary& ents,
                const Vocabulary& rels, std::string& out) {
  auto list = [&](const char* head) {
    out += head;
    for (std::size_t i = 0; i < q.children.size(); ++i) {
      if (i > 0) out += ", ";
      print_into(q.children[i], ents, rels, out);
    }
    out += ")";
  };
  switch (q.kind) {
    case NodeKind::kAnchor:
      out += "e:" + ents.name(q.id);
      break;
    case NodeKind::kProjection:
      out += "P(r:" + rels.name(q.id) + ", ";
      print_into(q.children.at(0), ents, rels, out);
      out += ")";
      break;
    case NodeKind::kAnd:
      list("AND(");
      break;
    case NodeKind::kOr:
      list("OR(");
      break;
    case NodeKind::kNot:
      out += "NOT(";
      print_into(q.children.at(0), ents, rels, out);
      out += ")";
      break;
  }
}

void validate_node(const QueryNode& q, const QueryNode* parent,
                   bool under_not) {
  switch (q.kind) {
    case NodeKind::kAnchor:
      if (!q.children.empty()) throw QueryError("anchor with children");
      return;
    case NodeKind::kProjection:
      if (q.children.size() != 1) {
        throw QueryError("projection needs exactly one operand");
      }
      break;
    case NodeKind::kAnd:
    case NodeKind::kOr:
      if (q.children.size() < 2) {
        throw QueryError(std::string(kind_name(q.kind)) +
                         " needs at least 2 operands");
      }
      if (q.kind == NodeKind::kOr && under_not) {
        throw QueryError("disjunction beneath negation is not supported");
      }
      break;
    case NodeKind::kNot:
      if (q.children.size() != 1) {
        throw QueryError("negation needs exactly one operand");
      }
      if (parent == nullptr || parent->kind != NodeKind::kAnd) {
        throw QueryError("negation may only appear as a conjunct");
      }
      break;
  }
  for (const QueryNode& c : q.children) {
    validate_node(c, &q, under_not || q.kind == NodeKind::kNot);
  }
}

bool any_kind(const QueryNode& q, NodeKind kind) {
  if (q.kind == kind) return true;
  return std::any_of(q.children.begin(), q.children.end(),
                     [kind](const QueryNode& c) { return any_kind(c, kind); });
}

std::vector<QueryNode> dnf(const QueryNode& q, std::size_t cap) {
  auto check = [cap](std::size_t n) {
    if (n > cap) {
      throw QueryError("DNF expansion exceeds " + std::to_string(cap) +
                       " disjuncts");
    }
  };
  switch (q.kind) {
    case NodeKind::kAnchor:
      return {q};
    case NodeKind::kProjection: {
      std::vector<QueryNode> out;
      for (QueryNode& c : dnf(q.children[0], cap)) {
        out.push_back(QueryNode::projection(q.id, std::move(c)));
      }
      return out;
    }
    case NodeKind::kNot:
      if (has_disjunction(q.children[0])) {
        throw QueryError("disjunction beneath negation is not supported");
      }
      return {q};
    case NodeKind::kOr: {
      std::vector<QueryNode> out;
      for (const QueryNode& c : q.children) {
        auto part = dnf(c, cap);
        check(out.size() + part.size());
        std::move(part.begin(), part.end(), std::back_inserter(out));
      }
      return out;
    }
    case NodeKind::kAnd: {
      std::vector<std::vector<QueryNode>> partial{{}};
      for (const QueryNode& c : q.children) {
        const auto options = dnf(c, cap);
        check(partial.size() * options.size());
        std::vector<std::vector<QueryNode>> next;
        for (const auto& prefix : partial) {
          for (const QueryNode& o : options) {
            auto extended = prefix;
            extended.push_back(o);
            next.push_back(std::move(extended));
          }
        }
        partial = std::move(next);
      }
      std::vector<QueryNode> out;
      for (auto& children : partial) {
        out.push_back(QueryNode::conjunction(std::move(children)));
      }
      return out;
    }
  }
  return {};
}

EntitySet intersect_sets(const EntitySet& a, const EntitySet& b) {
  EntitySet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return out;
}

EntitySet union_sets(const EntitySet& a, const EntitySet& b) {
  EntitySet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return out;
}

std::string signature(const QueryNode& q) {
  auto grouped = [&](const char* head) {
    std::vector<std::string> parts;
    for (const QueryNode& c : q.children) parts.push_back(signature(c));
    std::sort(parts.begin(), parts.end());
    std::string s = head;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i > 0) s += ",";
      s += parts[i];
    }
    return s + ")";
  };
  switch (q.kind) {
    case NodeKind::kAnchor: return "e";
    case NodeKind::kProjection: return "p(" + signature(q.children[0]) + ")";
    case NodeKind::kAnd: return grouped("i(");
    case NodeKind::kOr: return grouped("u(");
    case NodeKind::kNot: return "n(" + signature(q.children[0]) + ")";
  }
  return "?";
}

QueryNode p(QueryNode c) { return QueryNode::projection(-1, std::move(c)); }
QueryNode e() { return QueryNode::anchor(-1); }
QueryNode i(std::vector<QueryNode> cs) {
  return QueryNode::conjunction(std::move(cs));
}
QueryNode u(std::vector<QueryNode> cs) {
  return QueryNode::disjunction(std::move(cs));
}
QueryNode n(QueryNode c) { return QueryNode::negation(std::move(c)); }

const std::vector<std::pair<std::string, QueryNode>>& templates() {
  static const std::vector<std::pair<std::string, QueryNode>> table = {
      {"1p", p(e())},
      {"2p", p(p(e()))},
      {"3p", p(p(p(e())))},
      {"2i", i({p(e()), p(e())})},
      {"3i", i({p(e()), p(e()), p(e())})},
      {"2in", i({p(e()), n(p(e()))})},
      {"3in", i({p(e()), p(e()), n(p(e()))})},
      {"inp", p(i({p(e()), n(p(e()))}))},
      {"pin", i({p(p(e())), n(p(e()))})},
      {"pni", i({n(p(p(e()))), p(e())})},
      {"ip", p(i({p(e()), p(e())}))},
      {"pi", i({p(p(e())), p(e())})},
      {"2u", u({p(e()), p(e())})},
      {"up", p(u({p(e()), p(e())}))},
  };
  return table;
}

}  // namespace

QueryNode parse_query(std::string_view text, const Vocabulary& entities,
                      const Vocabulary& relations) {
  QueryNode q = Parser(text, entities, relations).parse();
  validate(q);
  return q;
}

std::string print_query(const QueryNode& q, const Vocabulary& entities,
                        const Vocabulary& relations) {
  std::string out;
  print_into(q, entities, relations, out);
  return out;
}

void validate(const QueryNode& q) { validate_node(q, nullptr, false); }

bool has_disjunction(const QueryNode& q) { return any_kind(q, NodeKind::kOr); }
bool has_negation(const QueryNode& q) { return any_kind(q, NodeKind::kNot); }

std::vector<QueryNode> to_dnf(const QueryNode& q, std::size_t max_disjuncts) {
  validate(q);
  return dnf(q, max_disjuncts);
}

EntitySet oracle_answer(const KnowledgeGraph& kg, const QueryNode& q) {
  switch (q.kind) {
    case NodeKind::kAnchor:
      if (q.id < 0 || static_cast<std::size_t>(q.id) >= kg.num_entities()) {
        throw QueryError("anchor id " + std::to_string(q.id) +
                         " outside the entity vocabulary");
      }
      return {q.id};
    case NodeKind::kProjection:
      return project_set(kg, oracle_answer(kg, q.children[0]), q.id);
    case NodeKind::kNot:
      return complement_set(kg, oracle_answer(kg, q.children[0]));
    case NodeKind::kAnd: {
      EntitySet acc = oracle_answer(kg, q.children[0]);
      for (std::size_t k = 1; k < q.children.size(); ++k) {
        acc = intersect_sets(acc, oracle_answer(kg, q.children[k]));
      }
      return acc;
    }
    case NodeKind::kOr: {
      EntitySet acc;
      for (const QueryNode& c : q.children) {
        acc = union_sets(acc, oracle_answer(kg, c));
      }
      return acc;
    }
  }
  return {};
}

const std::vector<std::string>& all_structures() {
  static const std::vector<std::string> tags = [] {
    std::vector<std::string> out;
    for (const auto& [tag, _] : templates()) out.push_back(tag);
    return out;
  }();
  return tags;
}

bool is_structure(std::string_view tag) {
  const auto& tags = all_structures();
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

QueryNode structure_template(std::string_view tag) {
  for (const auto& [t, q] : templates()) {
    if (t == tag) return q;
  }
  throw QueryError("unknown query structure '" + std::string(tag) + "'");
}

std::string classify_structure(const QueryNode& q) {
  static const std::map<std::string, std::string> by_signature = [] {
    std::map<std::string, std::string> m;
    for (const auto& [tag, shape] : templates()) m.emplace(signature(shape), tag);
    return m;
  }();
  auto it = by_signature.find(signature(q));
  return it == by_signature.end() ? "other" : it->second;
}

EntitySet QueryRecord::all_answers() const {
  return union_sets(answers_easy, answers_hard);
}

std::string record_to_json(const QueryRecord& r, const Vocabulary& entities,
                           const Vocabulary& relations) {
  nlohmann::ordered_json j;
  j["tag"] = r.tag;
  j["query"] = print_query(r.query, entities, relations);
  j["answers_easy"] = r.answers_easy;
  j["answers_hard"] = r.answers_hard;
  return j.dump();
}

QueryRecord record_from_json(std::string_view line, const Vocabulary& entities,
                             const Vocabulary& relations) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& ex) {
    throw QueryError(std::string("malformed query record: ") + ex.what());
  }
  auto read_set = [&](const char* key) {
    EntitySet s = j.at(key).get<EntitySet>();
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (EntityId id : s) {
      if (id < 0 || static_cast<std::size_t>(id) >= entities.size()) {
        throw QueryError(std::string("answer id out of range in ") + key);
      }
    }
    return s;
  };
  try {
    QueryRecord r;
    r.tag = j.at("tag").get<std::string>();
    r.query = parse_query(j.at("query").get<std::string>(), entities, relations);
    r.answers_easy = read_set("answers_easy");
    r.answers_hard = read_set("answers_hard");
    return r;
  } catch (const nlohmann::json::exception& ex) {
    throw QueryError(std::string("malformed query record: ") + ex.what());
  }
}

void write_records(const std::filesystem::path& path,
                   std::span<const QueryRecord> records,
                   const Vocabulary& entities, const Vocabulary& relations) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw QueryError("cannot write " + path.string());
  for (const QueryRecord& r : records) {
    out << record_to_json(r, entities, relations) << '\n';
  }
}

std::vector<QueryRecord> read_records(const std::filesystem::path& path,
                                      const Vocabulary& entities,
                                      const Vocabulary& relations) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw QueryError("cannot open " + path.string());
  std::vector<QueryRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(line, entities, relations));
    } catch (const QueryError& ex) {
      throw QueryError(path.string() + ":" + std::to_string(lineno) + ": " +
                       ex.what());
    }
  }
  return out;
}

}  // namespace flex
