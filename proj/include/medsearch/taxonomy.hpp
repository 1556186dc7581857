#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace medsearch {

/// The fixed 13-category symptom taxonomy. Every site, dictionary entry and
/// query category must come from this set; order is the canonical order used
/// for deterministic iteration.
inline constexpr std::array<std::string_view, 13> kCategories = {
    "abdominal symptom",
    "cardiovascular system symptom",
    "digestive system symptom",
    "head and neck symptom",
    "hemic and immune system symptom",
    "musculoskeleton system symptom",
    "nervous system symptom",
    "neurological and physiological symptom",
    "nutrition metabolism and development symptom",
    "reproductive system symptom",
    "respiratory and chest symptom",
    "skin and intergumentary tissue symptom",
    "urinary system symptom",
};

bool is_category(std::string_view name);

std::vector<std::string> all_categories();

namespace vocab {

/// One symptom/disease term of the shared fixture vocabulary. `synonym` and
/// `bulgarian` are optional (nullptr when absent). Synonyms are materialized
/// as symmetric dictionary entries of the same category.
struct TermSpec {
    const char* term;
    const char* synonym;
    const char* bulgarian;
};

struct CategoryVocab {
    std::string_view category;
    std::array<TermSpec, 8> terms;
};

struct RelationSpec {
    const char* a;
    const char* b;
    const char* label;
};

const std::array<CategoryVocab, 13>& category_vocab();
const std::vector<RelationSpec>& term_relations();
const std::vector<const char*>& english_stopwords();
const std::vector<const char*>& bulgarian_stopwords();
const std::vector<const char*>& drug_name_pool();

} // namespace vocab

} // namespace medsearch
