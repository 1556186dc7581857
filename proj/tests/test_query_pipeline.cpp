#include <doctest.h>

#include <random>

#include "medsearch/errors.hpp"
#include "medsearch/query_pipeline.hpp"
#include "medsearch/taxonomy.hpp"
#include "medsearch/text_util.hpp"

using namespace medsearch;
using namespace medsearch::query;

namespace {

// Independent oracle: recursive Levenshtein with memoization, deliberately a
// different algorithm from the production DP.
std::size_t oracle_distance(const std::string& a, const std::string& b) {
    std::vector<std::vector<int>> memo(a.size() + 1, std::vector<int>(b.size() + 1, -1));
    std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i,
                                                                  std::size_t j) -> std::size_t {
        if (i == a.size()) return b.size() - j;
        if (j == b.size()) return a.size() - i;
        if (memo[i][j] >= 0) return static_cast<std::size_t>(memo[i][j]);
        std::size_t best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
        best = std::min(best, go(i + 1, j) + 1);
        best = std::min(best, go(i, j + 1) + 1);
        memo[i][j] = static_cast<int>(best);
        return best;
    };
    return go(0, 0);
}

// Exhaustive minimum-distance search over the dictionary, ties broken
// lexicographically, bound 2.
std::string oracle_spellcheck(const std::string& term, const Dictionary& dict,
                              const std::string& language) {
    if (dict.find(language, term)) return term;
    const auto* index = dict.language_index(language);
    if (!index) return term;
    std::size_t best_dist = 3;
    std::vector<std::string> at_best;
    for (const auto& [candidate, _] : *index) {
        const std::size_t d = oracle_distance(term, candidate);
        if (d < best_dist) {
            best_dist = d;
            at_best = {candidate};
        } else if (d == best_dist) {
            at_best.push_back(candidate);
        }
    }
    if (best_dist > 2 || at_best.empty()) return term;
    return *std::min_element(at_best.begin(), at_best.end());
}

std::string mutate(const std::string& term, std::mt19937_64& rng, int edits) {
    static const char* alphabet = "abcdefghijklmnopqrstuvwxyz";
    std::string out = term;
    for (int e = 0; e < edits; ++e) {
        if (out.empty()) break;
        const auto op = pick(rng, 3);
        const std::size_t pos = pick(rng, out.size());
        if (op == 0 && out.size() > 1) {
            out.erase(pos, 1);
        } else if (op == 1) {
            out[pos] = alphabet[pick(rng, 26)];
        } else {
            out.insert(pos, 1, alphabet[pick(rng, 26)]);
        }
    }
    return out;
}

} // namespace

TEST_CASE("fixture dictionary shape") {
    const Dictionary dict = builtin_fixture_dictionary();
    CHECK(dict.size() >= 200);
    CHECK(dict.languages() == std::vector<std::string>{"bg", "en"});
    // the three stopwords the stoplist is seeded with
    for (const char* w : {"between", "do", "on"}) {
        const auto* entry = dict.find("en", w);
        REQUIRE(entry != nullptr);
        CHECK(entry->kind == EntryKind::Stopword);
    }
    // every category has vocabulary
    for (const auto& cat : kCategories) {
        bool seen = false;
        for (const auto& [term, entry] : *dict.language_index("en")) {
            if (entry.categories.count(std::string(cat))) seen = true;
        }
        CHECK_MESSAGE(seen, std::string(cat));
    }
}

TEST_CASE("dictionary file format round-trips") {
    const Dictionary dict = builtin_fixture_dictionary();
    const std::string text = format_dictionary(dict);
    const Dictionary reparsed = parse_dictionary(text);
    CHECK(reparsed.size() == dict.size());
    CHECK(format_dictionary(reparsed) == text);

    // comment lines and blank lines are ignored
    const Dictionary with_noise = parse_dictionary("# comment\n\n" + text);
    CHECK(with_noise.size() == dict.size());
}

TEST_CASE("dictionary parse failures") {
    CHECK_THROWS_AS(parse_dictionary("only\tthree\tfields\n"), Error);
    CHECK_THROWS_AS(parse_dictionary("term\ten\tBADKIND\t\t\t\n"), Error);
    CHECK_THROWS_AS(parse_dictionary("term\ten\tTERM\t\tfever-no-label\t\n"), Error);
}

TEST_CASE("tokenize") {
    CHECK(tokenize("Chest pain") == std::vector<std::string>{"chest", "pain"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("pain, between ribs!") == std::vector<std::string>{"pain", "between", "ribs"});
    CHECK(tokenize("треска и кашлица") == std::vector<std::string>{"треска", "и", "кашлица"});

    // oracle: a character-class split must agree
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        std::string s;
        const std::size_t len = pick(rng, 24);
        for (std::size_t k = 0; k < len; ++k) {
            const auto c = pick(rng, 40);
            if (c < 26) {
                s.push_back(static_cast<char>('a' + c));
            } else if (c < 30) {
                s.push_back(static_cast<char>('A' + (c - 26)));
            } else {
                s.push_back(" ,.!?;:-"[c - 30]);
            }
        }
        std::vector<std::string> expected;
        std::string cur;
        for (char c : s) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            } else if (!cur.empty()) {
                expected.push_back(cur);
                cur.clear();
            }
        }
        if (!cur.empty()) expected.push_back(cur);
        CHECK(tokenize(s) == expected);
    }
}

TEST_CASE("language detection by vocabulary overlap") {
    const Dictionary dict = builtin_fixture_dictionary();
    CHECK(detect_language("chest pain", dict) == "en");
    CHECK(detect_language("треска и кашлица", dict) == "bg");
    CHECK(detect_language("", dict) == "en");            // fallback
    CHECK(detect_language("zzz qqq", dict) == "en");     // no overlap -> default
}

TEST_CASE("spellcheck identity and correction") {
    const Dictionary dict = builtin_fixture_dictionary();
    CHECK(spellcheck("fever", dict, "en") == "fever");
    CHECK(spellcheck("fevr", dict, "en") == "fever");
    CHECK(spellcheck("xqzt", dict, "en") == "xqzt");  // nothing within distance 2
}

TEST_CASE("spellcheck equals exhaustive minimum-distance search on fuzzed misspellings") {
    const Dictionary dict = builtin_fixture_dictionary();
    std::vector<std::string> terms;
    for (const auto& [term, entry] : *dict.language_index("en")) {
        if (entry.kind == EntryKind::Term) terms.push_back(term);
    }
    std::mt19937_64 rng(42);
    for (int i = 0; i < 1000; ++i) {
        const std::string& base = terms[pick(rng, terms.size())];
        const std::string typo = mutate(base, rng, 1 + static_cast<int>(pick(rng, 2)));
        CHECK(spellcheck(typo, dict, "en") == oracle_spellcheck(typo, dict, "en"));
    }
}

TEST_CASE("spellcheck is idempotent") {
    const Dictionary dict = builtin_fixture_dictionary();
    std::mt19937_64 rng(11);
    std::vector<std::string> terms;
    for (const auto& [term, _] : *dict.language_index("en")) terms.push_back(term);
    for (int i = 0; i < 300; ++i) {
        const std::string typo = mutate(terms[pick(rng, terms.size())], rng, 1);
        const std::string once = spellcheck(typo, dict, "en");
        CHECK(spellcheck(once, dict, "en") == once);
    }
}

TEST_CASE("synonym expansion is symmetric in the fixture") {
    const Dictionary dict = builtin_fixture_dictionary();
    CHECK(expand_synonyms("fever", dict, "en") == std::vector<std::string>{"pyrexia"});
    CHECK(expand_synonyms("pyrexia", dict, "en") == std::vector<std::string>{"fever"});
    CHECK(expand_synonyms("zzznot", dict, "en").empty());

    for (const auto& [term, entry] : *dict.language_index("en")) {
        for (const auto& syn : entry.synonyms) {
            const auto* other = dict.find("en", syn);
            REQUIRE_MESSAGE(other != nullptr, (term + " -> " + syn));
            CHECK(std::find(other->synonyms.begin(), other->synonyms.end(), term) !=
                  other->synonyms.end());
        }
    }
}

TEST_CASE("stopword filtering") {
    const Dictionary dict = builtin_fixture_dictionary();
    const auto split = filter_stopwords({"pain", "between", "ribs"}, dict, "en");
    CHECK(split.kept == std::vector<std::string>{"pain", "ribs"});
    CHECK(split.removed == std::vector<std::string>{"between"});

    const auto empty = filter_stopwords({}, dict, "en");
    CHECK(empty.kept.empty());
    CHECK(empty.removed.empty());

    const auto degenerate = filter_stopwords({"do", "on"}, dict, "en");
    CHECK(degenerate.kept.empty());
    CHECK(degenerate.removed == std::vector<std::string>{"do", "on"});
}

TEST_CASE("classification and relations") {
    const Dictionary dict = builtin_fixture_dictionary();
    const auto single = classify_terms({"chest"}, dict, "en");
    REQUIRE(single.per_term_categories.size() == 1);
    CHECK(single.per_term_categories[0] ==
          std::set<std::string>{"respiratory and chest symptom"});
    CHECK(single.relations.empty());

    const auto pair = classify_terms({"fever", "cough"}, dict, "en");
    bool found = false;
    for (const auto& rel : pair.relations) {
        if (rel.a == "fever" && rel.b == "cough" && rel.label == "co-symptom") found = true;
    }
    CHECK(found);
}

TEST_CASE("annotate composes the stages") {
    const Dictionary dict = builtin_fixture_dictionary();
    const auto ann = annotate("fevr and cough", dict);
    REQUIRE(ann.terms.size() == 2);
    CHECK(ann.terms[0].surface == "fevr");
    CHECK(ann.terms[0].corrected == "fever");
    CHECK(ann.terms[1].corrected == "cough");
    CHECK(ann.removed_stopwords == std::vector<std::string>{"and"});
    CHECK(ann.language == "en");
    CHECK(ann.target_categories ==
          std::set<std::string>{"hemic and immune system symptom",
                                "respiratory and chest symptom"});
    // stage-by-stage recomputation
    std::set<std::string> expected_cats;
    for (const auto& term : {"fever", "cough"}) {
        const auto* entry = dict.find("en", term);
        REQUIRE(entry);
        expected_cats.insert(entry->categories.begin(), entry->categories.end());
    }
    CHECK(ann.target_categories == expected_cats);
    // the fever<->cough relation is in the annotation
    REQUIRE(ann.relations.size() == 2);
    CHECK(ann.relations[0].label == "co-symptom");

    const auto probes = ann.probe_terms();
    CHECK(std::find(probes.begin(), probes.end(), "pyrexia") != probes.end());
    CHECK(std::find(probes.begin(), probes.end(), "tussis") != probes.end());
}

TEST_CASE("annotate raises EmptyQuery on all-stopword input without profile") {
    const Dictionary dict = builtin_fixture_dictionary();
    try {
        annotate("do on between", dict);
        FAIL("expected EmptyQuery");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyQuery);
        CHECK(std::string(e.what()) == "empty query after stopword removal");
    }
}

TEST_CASE("annotate retries with profile terms when nothing matches") {
    const Dictionary dict = builtin_fixture_dictionary();
    const ProfileTerms conditions{"asthma"};
    const auto ann = annotate("zzzunknownzzz", dict, conditions);
    bool has_asthma = false;
    for (const auto& t : ann.terms) {
        if (t.corrected == "asthma") has_asthma = true;
    }
    CHECK(has_asthma);
    CHECK(ann.target_categories.count("respiratory and chest symptom") == 1);
}

TEST_CASE("stopwords never survive annotation") {
    const Dictionary dict = builtin_fixture_dictionary();
    std::mt19937_64 rng(5);
    std::vector<std::string> vocab;
    for (const auto& [term, _] : *dict.language_index("en")) vocab.push_back(term);
    for (int i = 0; i < 200; ++i) {
        std::string raw;
        const std::size_t n = 1 + pick(rng, 5);
        for (std::size_t k = 0; k < n; ++k) {
            if (!raw.empty()) raw += ' ';
            raw += vocab[pick(rng, vocab.size())];
        }
        try {
            const auto ann = annotate(raw, dict);
            for (const auto& t : ann.terms) {
                const auto* entry = dict.find("en", t.corrected);
                if (entry) CHECK(entry->kind == EntryKind::Term);
            }
            // removed + kept partitions the token list
            CHECK(ann.terms.size() + ann.removed_stopwords.size() == tokenize(raw).size());
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyQuery);
        }
    }
}

TEST_CASE("annotation is deterministic byte-for-byte") {
    const Dictionary dict = builtin_fixture_dictionary();
    const auto a = annotate("fevr and cough", dict).canonical_serialization();
    const auto b = annotate("fevr and cough", dict).canonical_serialization();
    CHECK(a == b);
}

TEST_CASE("category closure: target equals independent union fold") {
    const Dictionary dict = builtin_fixture_dictionary();
    const auto ann = annotate("fever rash diabetes", dict);
    std::set<std::string> folded;
    for (const auto& t : ann.terms) folded.insert(t.categories.begin(), t.categories.end());
    CHECK(ann.target_categories == folded);
}
