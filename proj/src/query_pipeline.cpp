#include "medsearch/query_pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "medsearch/errors.hpp"
#include "medsearch/taxonomy.hpp"
#include "medsearch/text_util.hpp"

namespace medsearch::query {

void Dictionary::add(DictionaryEntry entry) {
    if (entry.term.empty()) raise(ErrorCode::InvalidArgument, "dictionary term must be nonempty");
    if (entry.kind == EntryKind::Stopword &&
        (!entry.synonyms.empty() || !entry.related.empty() || !entry.categories.empty())) {
        raise(ErrorCode::InvalidArgument, "stopword entries carry no synonyms/related/categories: " + entry.term);
    }
    // Synonym lists never include the entry itself.
    entry.synonyms.erase(std::remove(entry.synonyms.begin(), entry.synonyms.end(), entry.term),
                         entry.synonyms.end());
    for (const auto& cat : entry.categories) {
        if (!is_category(cat)) raise(ErrorCode::InvalidArgument, "unknown category: " + cat);
    }
    auto lang = entry.language;
    auto term = entry.term;
    index_[lang][term] = std::move(entry);
}

const DictionaryEntry* Dictionary::find(const std::string& language, const std::string& term) const {
    auto lang_it = index_.find(language);
    if (lang_it == index_.end()) return nullptr;
    auto it = lang_it->second.find(term);
    return it == lang_it->second.end() ? nullptr : &it->second;
}

const std::map<std::string, DictionaryEntry>* Dictionary::language_index(const std::string& language) const {
    auto it = index_.find(language);
    return it == index_.end() ? nullptr : &it->second;
}

std::vector<std::string> Dictionary::languages() const {
    std::vector<std::string> out;
    for (const auto& [lang, _] : index_) out.push_back(lang);
    return out;
}

std::size_t Dictionary::size() const {
    std::size_t n = 0;
    for (const auto& [_, terms] : index_) n += terms.size();
    return n;
}

static EntryKind parse_kind(const std::string& s) {
    if (s == "TERM") return EntryKind::Term;
    if (s == "STOPWORD") return EntryKind::Stopword;
    raise(ErrorCode::ParseError, "unknown dictionary entry kind: " + s);
}

Dictionary parse_dictionary(const std::string& text) {
    Dictionary dict;
    std::size_t line_no = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto fields = split(line, '\t');
        if (fields.size() != 6) {
            raise(ErrorCode::ParseError,
                  "dictionary line " + std::to_string(line_no) + ": expected 6 tab-separated fields");
        }
        DictionaryEntry entry;
        entry.term = trim(fields[0]);
        entry.language = trim(fields[1]);
        entry.kind = parse_kind(trim(fields[2]));
        entry.synonyms = split_nonempty(fields[3], ',');
        for (const auto& rel : split_nonempty(fields[4], ',')) {
            auto colon = rel.find(':');
            if (colon == std::string::npos) {
                raise(ErrorCode::ParseError,
                      "dictionary line " + std::to_string(line_no) + ": related needs term:label");
            }
            entry.related.push_back({trim(rel.substr(0, colon)), trim(rel.substr(colon + 1))});
        }
        for (const auto& cat : split_nonempty(fields[5], ',')) entry.categories.insert(cat);
        dict.add(std::move(entry));
    }
    return dict;
}

Dictionary load_dictionary(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) raise(ErrorCode::ConfigError, "cannot open dictionary file: " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_dictionary(buf.str());
}

std::string format_dictionary(const Dictionary& dict) {
    std::string out = "# term\tlanguage\tkind\tsynonyms\trelated\tcategories\n";
    for (const auto& lang : dict.languages()) {
        for (const auto& [term, entry] : *dict.language_index(lang)) {
            std::vector<std::string> rels;
            for (const auto& r : entry.related) rels.push_back(r.term + ":" + r.label);
            std::vector<std::string> cats(entry.categories.begin(), entry.categories.end());
            out += term;
            out += '\t';
            out += entry.language;
            out += '\t';
            out += entry.kind == EntryKind::Term ? "TERM" : "STOPWORD";
            out += '\t';
            out += join(entry.synonyms, ",");
            out += '\t';
            out += join(rels, ",");
            out += '\t';
            out += join(cats, ",");
            out += '\n';
        }
    }
    return out;
}

Dictionary builtin_fixture_dictionary() {
    Dictionary dict;

    auto relations_for = [](const std::string& term) {
        std::vector<RelatedTerm> out;
        for (const auto& rel : vocab::term_relations()) {
            if (term == rel.a) out.push_back({rel.b, rel.label});
        }
        return out;
    };

    for (const auto& cat : vocab::category_vocab()) {
        const std::string category(cat.category);
        for (const auto& spec : cat.terms) {
            DictionaryEntry entry;
            entry.term = spec.term;
            entry.language = "en";
            entry.kind = EntryKind::Term;
            if (spec.synonym) entry.synonyms.push_back(spec.synonym);
            entry.related = relations_for(entry.term);
            entry.categories.insert(category);
            dict.add(entry);

            if (spec.synonym) {
                DictionaryEntry syn;
                syn.term = spec.synonym;
                syn.language = "en";
                syn.kind = EntryKind::Term;
                syn.synonyms.push_back(spec.term);
                syn.related = relations_for(syn.term);
                syn.categories.insert(category);
                dict.add(syn);
            }
            if (spec.bulgarian) {
                DictionaryEntry bg;
                bg.term = spec.bulgarian;
                bg.language = "bg";
                bg.kind = EntryKind::Term;
                bg.categories.insert(category);
                dict.add(bg);
            }
        }
    }
    for (const char* w : vocab::english_stopwords()) {
        dict.add({w, "en", EntryKind::Stopword, {}, {}, {}});
    }
    for (const char* w : vocab::bulgarian_stopwords()) {
        dict.add({w, "bg", EntryKind::Stopword, {}, {}, {}});
    }
    dict.set_default_language("en");
    return dict;
}

std::vector<std::string> tokenize(const std::string& raw) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            tokens.push_back(to_lower_ascii(cur));
            cur.clear();
        }
    };
    for (unsigned char c : raw) {
        // ASCII letters/digits and all non-ASCII bytes (UTF-8 sequences) are
        // word characters; ASCII whitespace and punctuation separate tokens.
        const bool word_char = (c >= 0x80) || std::isalnum(c);
        if (word_char) {
            cur.push_back(static_cast<char>(c));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

std::string detect_language(const std::string& raw, const Dictionary& dict) {
    const auto langs = dict.languages();
    if (langs.empty()) raise(ErrorCode::InvalidArgument, "dictionary has no languages");
    const auto tokens = tokenize(raw);
    std::string best = dict.default_language();
    std::size_t best_count = 0;
    for (const auto& lang : langs) {
        std::size_t count = 0;
        for (const auto& tok : tokens) {
            if (dict.find(lang, tok)) ++count;
        }
        if (count > best_count) {
            best = lang;
            best_count = count;
        }
    }
    return best_count == 0 ? dict.default_language() : best;
}

std::string spellcheck(const std::string& term, const Dictionary& dict, const std::string& language,
                       const PipelineOptions& opts) {
    if (dict.find(language, term)) return term;
    const auto* index = dict.language_index(language);
    if (!index) return term;
    std::string best = term;
    std::size_t best_dist = opts.max_edit_distance + 1;
    for (const auto& [candidate, _] : *index) {
        const std::size_t d = edit_distance(term, candidate);
        // Ties break lexicographically; the index iterates in sorted order,
        // so the first candidate at a given distance wins.
        if (d < best_dist) {
            best_dist = d;
            best = candidate;
        }
    }
    return best_dist <= opts.max_edit_distance ? best : term;
}

std::vector<std::string> expand_synonyms(const std::string& term, const Dictionary& dict,
                                         const std::string& language) {
    const auto* entry = dict.find(language, term);
    return entry ? entry->synonyms : std::vector<std::string>{};
}

StopwordSplit filter_stopwords(const std::vector<std::string>& terms, const Dictionary& dict,
                               const std::string& language) {
    StopwordSplit out;
    for (const auto& term : terms) {
        const auto* entry = dict.find(language, term);
        if (entry && entry->kind == EntryKind::Stopword) {
            out.removed.push_back(term);
        } else {
            out.kept.push_back(term);
        }
    }
    return out;
}

Classification classify_terms(const std::vector<std::string>& terms, const Dictionary& dict,
                              const std::string& language) {
    Classification out;
    out.per_term_categories.reserve(terms.size());
    for (const auto& term : terms) {
        const auto* entry = dict.find(language, term);
        out.per_term_categories.push_back(entry ? entry->categories : std::set<std::string>{});
    }
    // Relations restricted to pairs where both endpoints are in the query.
    for (const auto& term : terms) {
        const auto* entry = dict.find(language, term);
        if (!entry) continue;
        for (const auto& rel : entry->related) {
            if (std::find(terms.begin(), terms.end(), rel.term) != terms.end()) {
                out.relations.push_back({term, rel.term, rel.label});
            }
        }
    }
    return out;
}

namespace {

AnnotatedQuery run_pipeline(const std::string& raw, const std::vector<std::string>& tokens,
                            const Dictionary& dict, const std::string& language,
                            const PipelineOptions& opts) {
    AnnotatedQuery ann;
    ann.raw = raw;
    ann.language = language;

    std::vector<std::string> corrected;
    corrected.reserve(tokens.size());
    for (const auto& tok : tokens) corrected.push_back(spellcheck(tok, dict, language, opts));

    auto splitres = filter_stopwords(corrected, dict, language);
    ann.removed_stopwords = splitres.removed;

    auto classified = classify_terms(splitres.kept, dict, language);
    ann.relations = classified.relations;

    // Kept terms preserve token order, so walking the tokens and skipping
    // stopwords recovers each kept term's surface form.
    std::size_t kept_idx = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto* entry = dict.find(language, corrected[i]);
        if (entry && entry->kind == EntryKind::Stopword) continue;
        AnnotatedTerm term;
        term.surface = tokens[i];
        term.corrected = corrected[i];
        term.synonyms = expand_synonyms(term.corrected, dict, language);
        term.categories = classified.per_term_categories[kept_idx];
        ann.target_categories.insert(term.categories.begin(), term.categories.end());
        ann.terms.push_back(std::move(term));
        ++kept_idx;
    }
    return ann;
}

bool any_term_in_dictionary(const AnnotatedQuery& ann, const Dictionary& dict) {
    for (const auto& term : ann.terms) {
        if (dict.find(ann.language, term.corrected)) return true;
    }
    return false;
}

} // namespace

AnnotatedQuery annotate(const std::string& raw, const Dictionary& dict,
                        const std::optional<ProfileTerms>& profile_terms, const PipelineOptions& opts) {
    const std::string language = detect_language(raw, dict);
    const auto tokens = tokenize(raw);
    AnnotatedQuery ann = run_pipeline(raw, tokens, dict, language, opts);

    const bool unmatched = ann.terms.empty() || !any_term_in_dictionary(ann, dict);
    if (unmatched && profile_terms && !profile_terms->empty()) {
        std::vector<std::string> retry_tokens = tokens;
        for (const auto& cond : *profile_terms) {
            for (const auto& tok : tokenize(cond)) retry_tokens.push_back(tok);
        }
        ann = run_pipeline(raw, retry_tokens, dict, language, opts);
    }
    if (ann.terms.empty()) {
        raise(ErrorCode::EmptyQuery, "empty query after stopword removal");
    }
    return ann;
}

nlohmann::ordered_json AnnotatedQuery::to_json() const {
    nlohmann::ordered_json j;
    j["raw"] = raw;
    j["language"] = language;
    j["terms"] = nlohmann::ordered_json::array();
    for (const auto& t : terms) {
        nlohmann::ordered_json jt;
        jt["surface"] = t.surface;
        jt["corrected"] = t.corrected;
        jt["synonyms"] = t.synonyms;
        jt["categories"] = std::vector<std::string>(t.categories.begin(), t.categories.end());
        j["terms"].push_back(std::move(jt));
    }
    j["relations"] = nlohmann::ordered_json::array();
    for (const auto& r : relations) j["relations"].push_back({r.a, r.b, r.label});
    j["removed_stopwords"] = removed_stopwords;
    j["target_categories"] = std::vector<std::string>(target_categories.begin(), target_categories.end());
    j["category_weights"] = nlohmann::ordered_json::object();
    for (const auto& [cat, w] : category_weights) j["category_weights"][cat] = w;
    j["context_terms"] = context_terms;
    return j;
}

std::string AnnotatedQuery::canonical_serialization() const { return to_json().dump(); }

std::vector<std::string> AnnotatedQuery::probe_terms() const {
    std::vector<std::string> probes;
    auto push = [&](const std::string& p) {
        if (std::find(probes.begin(), probes.end(), p) == probes.end()) probes.push_back(p);
    };
    for (const auto& t : terms) {
        push(t.corrected);
        for (const auto& s : t.synonyms) push(s);
    }
    for (const auto& c : context_terms) push(c);
    return probes;
}

} // namespace medsearch::query
