#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace medsearch::query {

enum class EntryKind { Term, Stopword };

struct RelatedTerm {
    std::string term;
    std::string label;

    bool operator==(const RelatedTerm&) const = default;
};

struct DictionaryEntry {
    std::string term;      // lowercase
    std::string language;  // e.g. "en", "bg"
    EntryKind kind = EntryKind::Term;
    std::vector<std::string> synonyms;
    std::vector<RelatedTerm> related;
    std::set<std::string> categories;
};

/// Immutable multilingual term storage indexed by (language, term).
class Dictionary {
public:
    void add(DictionaryEntry entry);

    const DictionaryEntry* find(const std::string& language, const std::string& term) const;
    const std::map<std::string, DictionaryEntry>* language_index(const std::string& language) const;
    std::vector<std::string> languages() const;
    std::size_t size() const;

    const std::string& default_language() const { return default_language_; }
    void set_default_language(std::string lang) { default_language_ = std::move(lang); }

private:
    // language -> term -> entry
    std::map<std::string, std::map<std::string, DictionaryEntry>> index_;
    std::string default_language_ = "en";
};

// Dictionary file format: tab-separated
//   term<TAB>language<TAB>kind<TAB>synonyms(comma)<TAB>related(term:label comma)<TAB>categories(comma)
// with '#' comment lines, UTF-8.
Dictionary load_dictionary(const std::filesystem::path& file);
Dictionary parse_dictionary(const std::string& text);
std::string format_dictionary(const Dictionary& dict);

/// The bilingual fixture the module ships with: the shared symptom
/// vocabulary across all 13 categories, symmetric synonym pairs, term
/// relations and the stoplists.
Dictionary builtin_fixture_dictionary();

struct AnnotatedTerm {
    std::string surface;
    std::string corrected;
    std::vector<std::string> synonyms;
    std::set<std::string> categories;
};

struct TermRelation {
    std::string a;
    std::string b;
    std::string label;
};

struct AnnotatedQuery {
    std::string raw;
    std::string language;
    std::vector<AnnotatedTerm> terms;
    std::vector<TermRelation> relations;
    std::vector<std::string> removed_stopwords;
    std::set<std::string> target_categories;
    // Filled by personalization::enrich_query.
    std::map<std::string, double> category_weights;
    std::vector<std::string> context_terms;

    nlohmann::ordered_json to_json() const;
    std::string canonical_serialization() const;

    /// Corrected terms, their synonyms, then context terms; deduplicated,
    /// order-stable. These are the probes submitted to site search forms.
    std::vector<std::string> probe_terms() const;
};

struct PipelineOptions {
    std::size_t max_edit_distance = 2;
};

std::string detect_language(const std::string& raw, const Dictionary& dict);

std::vector<std::string> tokenize(const std::string& raw);

std::string spellcheck(const std::string& term, const Dictionary& dict, const std::string& language,
                       const PipelineOptions& opts = {});

std::vector<std::string> expand_synonyms(const std::string& term, const Dictionary& dict,
                                         const std::string& language);

struct StopwordSplit {
    std::vector<std::string> kept;
    std::vector<std::string> removed;
};
StopwordSplit filter_stopwords(const std::vector<std::string>& terms, const Dictionary& dict,
                               const std::string& language);

struct Classification {
    std::vector<std::set<std::string>> per_term_categories;
    std::vector<TermRelation> relations;
};
Classification classify_terms(const std::vector<std::string>& terms, const Dictionary& dict,
                              const std::string& language);

/// Profile-derived retry terms; kept decoupled from the personalization
/// module so the pipeline depends only on plain strings.
using ProfileTerms = std::vector<std::string>;

AnnotatedQuery annotate(const std::string& raw, const Dictionary& dict,
                        const std::optional<ProfileTerms>& profile_terms = std::nullopt,
                        const PipelineOptions& opts = {});

} // namespace medsearch::query
