#include "gridner/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gridner {

using nlohmann::json;

LabelSet::LabelSet(std::vector<std::string> entity_types) {
    std::sort(entity_types.begin(), entity_types.end());
    entity_types.erase(std::unique(entity_types.begin(), entity_types.end()),
                       entity_types.end());
    entity_types_ = entity_types;
    for (const auto& t : entity_types_) {
        if (index_.count(t))
            throw validation_error("entity type collides with a reserved label: " + t);
        index_[t] = static_cast<int>(names_.size());
        names_.push_back(t);
    }
}

const std::string& LabelSet::name_of(int id) const {
    if (id < 0 || id >= size())
        throw validation_error("label id out of range: " + std::to_string(id));
    return names_[static_cast<std::size_t>(id)];
}

int LabelSet::id_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw validation_error("unknown label: " + name);
    return it->second;
}

namespace {

std::string describe(const EntityMention& m) {
    std::ostringstream os;
    os << m.entity_type << " [";
    for (std::size_t k = 0; k < m.fragments.size(); ++k) {
        if (k) os << ",";
        os << "[" << m.fragments[k].start << "," << m.fragments[k].end << "]";
    }
    os << "]";
    return os.str();
}

}  // namespace

void validate_example(const AnnotatedExample& example, const std::string& where) {
    const std::string at = where.empty() ? std::string() : where + ": ";
    const int n = example.sentence.size();
    if (n < 1) throw validation_error(at + "sentence has no tokens");
    for (const auto& tok : example.sentence.tokens)
        if (tok.empty()) throw validation_error(at + "empty token string");

    std::set<EntityMention> seen;
    for (const auto& m : example.entities) {
        if (m.entity_type.empty())
            throw validation_error(at + "entity with empty type");
        if (m.fragments.empty())
            throw validation_error(at + "entity " + m.entity_type + " has no fragments");
        for (const auto& f : m.fragments) {
            if (f.start > f.end)
                throw validation_error(at + "entity " + describe(m) + ": start > end");
            if (f.start < 0 || f.end >= n)
                throw validation_error(at + "entity " + describe(m) +
                                       ": fragment outside sentence of length " +
                                       std::to_string(n));
        }
        for (std::size_t k = 1; k < m.fragments.size(); ++k) {
            // Non-adjacent: the next fragment must start at least two past the
            // previous end, leaving a gap of >= 1 token.
            if (m.fragments[k].start < m.fragments[k - 1].end + 2)
                throw validation_error(at + "entity " + describe(m) +
                                       ": fragments must be ordered and separated by a gap");
        }
        if (!seen.insert(m).second)
            throw validation_error(at + "duplicate entity mention " + describe(m));
    }
}

namespace {

AnnotatedExample record_from_json(const json& j, const std::string& source,
                                  std::size_t line_no) {
    AnnotatedExample example;
    if (!j.is_object()) throw parse_error(source, line_no, "record is not a JSON object");
    if (j.contains("id")) {
        if (!j["id"].is_string()) throw parse_error(source, line_no, "\"id\" must be a string");
        example.sentence.id = j["id"].get<std::string>();
    }
    if (!j.contains("tokens") || !j["tokens"].is_array())
        throw parse_error(source, line_no, "missing \"tokens\" array");
    for (const auto& t : j["tokens"]) {
        if (!t.is_string()) throw parse_error(source, line_no, "token is not a string");
        example.sentence.tokens.push_back(t.get<std::string>());
    }
    if (j.contains("entities")) {
        if (!j["entities"].is_array())
            throw parse_error(source, line_no, "\"entities\" must be an array");
        for (const auto& e : j["entities"]) {
            EntityMention m;
            if (!e.is_object() || !e.contains("type") || !e["type"].is_string())
                throw parse_error(source, line_no, "entity missing string \"type\"");
            m.entity_type = e["type"].get<std::string>();
            if (!e.contains("spans") || !e["spans"].is_array())
                throw parse_error(source, line_no, "entity missing \"spans\" array");
            for (const auto& s : e["spans"]) {
                if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() ||
                    !s[1].is_number_integer())
                    throw parse_error(source, line_no, "span is not a pair of integers");
                m.fragments.push_back({s[0].get<int>(), s[1].get<int>()});
            }
            example.entities.push_back(std::move(m));
        }
    }
    try {
        validate_example(example);
    } catch (const validation_error& err) {
        throw parse_error(source, line_no, err.what());
    }
    return example;
}

}  // namespace

std::vector<AnnotatedExample> parse_corpus(std::istream& in, const std::string& source_name) {
    std::vector<AnnotatedExample> corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& err) {
            throw parse_error(source_name, line_no, err.what());
        }
        corpus.push_back(record_from_json(j, source_name, line_no));
    }
    return corpus;
}

std::vector<AnnotatedExample> parse_corpus(const std::filesystem::path& path, CorpusFormat) {
    std::ifstream in(path);
    if (!in) throw error("cannot open corpus file: " + path.string());
    return parse_corpus(in, path.string());
}

std::string to_jsonl_record(const AnnotatedExample& example) {
    json j = json::object();
    if (!example.sentence.id.empty()) j["id"] = example.sentence.id;
    j["tokens"] = example.sentence.tokens;
    j["entities"] = json::array();
    for (const auto& m : example.entities) {
        json e;
        e["type"] = m.entity_type;
        e["spans"] = json::array();
        for (const auto& f : m.fragments) e["spans"].push_back({f.start, f.end});
        j["entities"].push_back(e);
    }
    return j.dump();
}

void write_corpus(const std::vector<AnnotatedExample>& corpus, std::ostream& out) {
    for (const auto& ex : corpus) out << to_jsonl_record(ex) << "\n";
}

void write_corpus(const std::vector<AnnotatedExample>& corpus,
                  const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw error("cannot open for writing: " + path.string());
    write_corpus(corpus, out);
}

LabelSet derive_label_set(const std::vector<AnnotatedExample>& corpus) {
    std::vector<std::string> types;
    for (const auto& ex : corpus)
        for (const auto& m : ex.entities) types.push_back(m.entity_type);
    return LabelSet(std::move(types));
}

std::set<EntityMention> entity_set(const AnnotatedExample& example) {
    return {example.entities.begin(), example.entities.end()};
}

std::vector<std::vector<std::vector<double>>> load_token_vectors(
    const std::filesystem::path& path, const std::vector<AnnotatedExample>& corpus) {
    std::ifstream in(path);
    if (!in) throw error("cannot open vectors file: " + path.string());
    std::vector<std::vector<std::vector<double>>> all;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& err) {
            throw parse_error(path.string(), line_no, err.what());
        }
        if (!j.is_object() || !j.contains("vectors") || !j["vectors"].is_array())
            throw parse_error(path.string(), line_no, "missing \"vectors\" array");
        std::vector<std::vector<double>> rows;
        for (const auto& row : j["vectors"]) {
            if (!row.is_array()) throw parse_error(path.string(), line_no, "vector row is not an array");
            rows.push_back(row.get<std::vector<double>>());
        }
        const std::size_t index = all.size();
        if (index < corpus.size()) {
            const auto& ex = corpus[index];
            if (j.contains("id") && j["id"].is_string() && !ex.sentence.id.empty() &&
                j["id"].get<std::string>() != ex.sentence.id)
                throw parse_error(path.string(), line_no,
                                  "vector id does not match corpus id " + ex.sentence.id);
            if (static_cast<int>(rows.size()) != ex.sentence.size())
                throw parse_error(path.string(), line_no,
                                  "expected " + std::to_string(ex.sentence.size()) +
                                      " token vectors, got " + std::to_string(rows.size()));
            for (const auto& row : rows)
                if (row.size() != rows.front().size())
                    throw parse_error(path.string(), line_no, "ragged vector widths");
        }
        all.push_back(std::move(rows));
    }
    if (all.size() != corpus.size())
        throw validation_error("vectors file has " + std::to_string(all.size()) +
                               " records for a corpus of " + std::to_string(corpus.size()));
    return all;
}

}  // namespace gridner
