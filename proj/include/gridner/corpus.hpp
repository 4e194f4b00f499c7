#pragma once

#include <compare>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gridner/errors.hpp"

namespace gridner {

// Inclusive token index range [start, end].
struct TokenSpan {
    int start = 0;
    int end = 0;

    int length() const { return end - start + 1; }
    bool contains(int token) const { return start <= token && token <= end; }
    auto operator<=>(const TokenSpan&) const = default;
};

struct Sentence {
    std::vector<std::string> tokens;
    std::string id;  // empty when the record carried no id

    int size() const { return static_cast<int>(tokens.size()); }
};

// An entity mention: one fragment means a continuous entity, two or more a
// discontinuous one. Fragments are strictly ordered and non-adjacent (each
// consecutive pair is separated by a gap of at least one token).
struct EntityMention {
    std::string entity_type;
    std::vector<TokenSpan> fragments;

    bool discontinuous() const { return fragments.size() > 1; }
    int head() const { return fragments.front().start; }
    int tail() const { return fragments.back().end; }
    auto operator<=>(const EntityMention&) const = default;
};

struct AnnotatedExample {
    Sentence sentence;
    std::vector<EntityMention> entities;  // duplicate-free, kept in file order
};

// The grid label set C = [None, Frag, Gap] ++ sorted entity types.
class LabelSet {
public:
    static constexpr int kNone = 0;
    static constexpr int kFrag = 1;
    static constexpr int kGap = 2;

    LabelSet() = default;
    explicit LabelSet(std::vector<std::string> entity_types);

    int size() const { return static_cast<int>(names_.size()); }
    const std::string& name_of(int id) const;
    int id_of(const std::string& name) const;  // throws validation_error on unknown
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    bool is_entity_type(int id) const { return id >= 3 && id < size(); }
    const std::vector<std::string>& entity_types() const { return entity_types_; }
    bool operator==(const LabelSet&) const = default;

private:
    std::vector<std::string> names_{"None", "Frag", "Gap"};
    std::vector<std::string> entity_types_;
    std::map<std::string, int> index_{{"None", 0}, {"Frag", 1}, {"Gap", 2}};
};

enum class CorpusFormat { jsonl };

// Throws validation_error if any invariant fails; `where` prefixes the message.
void validate_example(const AnnotatedExample& example, const std::string& where = {});

std::vector<AnnotatedExample> parse_corpus(const std::filesystem::path& path,
                                           CorpusFormat format = CorpusFormat::jsonl);
std::vector<AnnotatedExample> parse_corpus(std::istream& in, const std::string& source_name);

std::string to_jsonl_record(const AnnotatedExample& example);
void write_corpus(const std::vector<AnnotatedExample>& corpus, std::ostream& out);
void write_corpus(const std::vector<AnnotatedExample>& corpus, const std::filesystem::path& path);

LabelSet derive_label_set(const std::vector<AnnotatedExample>& corpus);

std::set<EntityMention> entity_set(const AnnotatedExample& example);

// Per-token external representations ("vectors" records aligned with a corpus).
// Each row i is the vector for token i of the matching sentence.
std::vector<std::vector<std::vector<double>>> load_token_vectors(
    const std::filesystem::path& path, const std::vector<AnnotatedExample>& corpus);

}  // namespace gridner
