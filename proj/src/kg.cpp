#include "flex/kg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace flex {

std::int32_t Vocabulary::intern(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::optional<std::int32_t> Vocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const std::string& n : names_) {
    for (char c : n) mix(static_cast<unsigned char>(c));
    mix(0);
  }
  return h;
}

bool KnowledgeGraph::add(const Triple& t) {
  if (t.head < 0 || static_cast<std::size_t>(t.head) >= entities_.size() ||
      t.tail < 0 || static_cast<std::size_t>(t.tail) >= entities_.size() ||
      t.relation < 0 ||
      static_cast<std::size_t>(t.relation) >= relations_.size()) {
    throw KgError("triple (" + std::to_string(t.head) + ", " +
                  std::to_string(t.relation) + ", " + std::to_string(t.tail) +
                  ") references an id outside the vocabulary");
  }
  auto& tails = out_index_[key(t.head, t.relation)];
  auto pos = std::lower_bound(tails.begin(), tails.end(), t.tail);
  if (pos != tails.end() && *pos == t.tail) return false;
  tails.insert(pos, t.tail);
  in_index_[t.tail].emplace_back(t.relation, t.head);
  triples_.push_back(t);
  return true;
}

bool KnowledgeGraph::contains(const Triple& t) const {
  const auto ts = tails(t.head, t.relation);
  return std::binary_search(ts.begin(), ts.end(), t.tail);
}

std::span<const EntityId> KnowledgeGraph::tails(EntityId head,
                                                RelationId relation) const {
  auto it = out_index_.find(key(head, relation));
  if (it == out_index_.end()) return {};
  return it->second;
}

std::span<const std::pair<RelationId, EntityId>> KnowledgeGraph::in_edges(
    EntityId tail) const {
  auto it = in_index_.find(tail);
  if (it == in_index_.end()) return {};
  return it->second;
}

namespace {

std::vector<RawTriple> read_raw(const std::filesystem::path& path,
                                LoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw KgError("cannot open triple file " + path.string());
  std::vector<RawTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() ||
        fields[2].empty()) {
      throw KgError(path.string() + ":" + std::to_string(lineno) +
                    ": expected 3 tab-separated fields, got " +
                    std::to_string(fields.size()));
    }
    out.push_back({fields[0], fields[1], fields[2]});
  }
  if (report != nullptr) report->lines = lineno;
  return out;
}

Triple intern(Vocabulary& ents, Vocabulary& rels, const RawTriple& raw) {
  const EntityId h = ents.intern(raw.head);
  const RelationId r = rels.intern(raw.relation);
  const EntityId t = ents.intern(raw.tail);
  return {h, r, t};
}

}  // namespace

KnowledgeGraph load_triples(const std::filesystem::path& path,
                            LoadReport* report) {
  LoadReport local;
  const auto raw = read_raw(path, &local);
  Vocabulary ents, rels;
  std::vector<Triple> ids;
  ids.reserve(raw.size());
  for (const auto& r : raw) ids.push_back(intern(ents, rels, r));
  KnowledgeGraph kg(std::move(ents), std::move(rels));
  for (const Triple& t : ids) {
    if (!kg.add(t)) ++local.duplicates;
  }
  local.triples = kg.triples().size();
  if (report != nullptr) *report = local;
  return kg;
}

void save_triples(const KnowledgeGraph& kg, std::span<const Triple> triples,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw KgError("cannot write triple file " + path.string());
  for (const Triple& t : triples) {
    out << kg.entities().name(t.head) << '\t'
        << kg.relations().name(t.relation) << '\t' << kg.entities().name(t.tail)
        << '\n';
  }
}

void save_triples(const KnowledgeGraph& kg, const std::filesystem::path& path) {
  save_triples(kg, kg.triples(), path);
}

const KnowledgeGraph& GraphSplits::by_name(std::string_view split) const {
  if (split == "train") return train;
  if (split == "valid") return valid;
  if (split == "test") return test;
  throw KgError("unknown split '" + std::string(split) + "'");
}

GraphSplits build_splits(std::span<const RawTriple> train,
                         std::span<const RawTriple> valid,
                         std::span<const RawTriple> test) {
  Vocabulary ents, rels;
  std::vector<Triple> t_train, t_valid, t_test;
  for (const auto& r : train) t_train.push_back(intern(ents, rels, r));
  for (const auto& r : valid) t_valid.push_back(intern(ents, rels, r));
  for (const auto& r : test) t_test.push_back(intern(ents, rels, r));

  GraphSplits s{KnowledgeGraph(ents, rels), KnowledgeGraph(ents, rels),
                KnowledgeGraph(ents, rels)};
  for (const Triple& t : t_train) {
    s.train.add(t);
    s.valid.add(t);
    s.test.add(t);
  }
  for (const Triple& t : t_valid) {
    s.valid.add(t);
    s.test.add(t);
  }
  for (const Triple& t : t_test) s.test.add(t);
  return s;
}

GraphSplits load_splits(const std::filesystem::path& dir) {
  const auto train = read_raw(dir / "train.txt", nullptr);
  const auto valid = read_raw(dir / "valid.txt", nullptr);
  const auto test = read_raw(dir / "test.txt", nullptr);
  return build_splits(train, valid, test);
}

std::vector<Triple> new_triples(const KnowledgeGraph& inner,
                                const KnowledgeGraph& outer) {
  std::vector<Triple> out;
  for (const Triple& t : outer.triples()) {
    if (!inner.contains(t)) out.push_back(t);
  }
  return out;
}

EntitySet project_set(const KnowledgeGraph& kg, const EntitySet& s,
                      RelationId r) {
  if (r < 0 || static_cast<std::size_t>(r) >= kg.num_relations()) {
    throw KgError("project_set: unknown relation id " + std::to_string(r));
  }
  EntitySet out;
  for (EntityId v : s) {
    const auto ts = kg.tails(v, r);
    out.insert(out.end(), ts.begin(), ts.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

EntitySet complement_set(const KnowledgeGraph& kg, const EntitySet& s) {
  EntitySet out;
  out.reserve(kg.num_entities() - std::min(kg.num_entities(), s.size()));
  std::size_t j = 0;
  for (EntityId v = 0; static_cast<std::size_t>(v) < kg.num_entities(); ++v) {
    while (j < s.size() && s[j] < v) ++j;
    if (j < s.size() && s[j] == v) continue;
    out.push_back(v);
  }
  return out;
}

}  // namespace flex
