#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "medsearch/query_pipeline.hpp"
#include "medsearch/site_corpus.hpp"

namespace medsearch::personal {

struct FeedbackEvent {
    enum class Kind { Explicit, Implicit };
    Kind kind = Kind::Explicit;
    std::string record_id;
    int rating = 0;              // -1 / 0 / +1 for explicit events
    std::string marker;          // "click" for implicit events
    std::int64_t timestamp_ms = 0;
};

struct UserProfile {
    std::string user_id;
    std::map<std::string, std::string> common_info;
    std::map<std::string, std::string> medical_info;
    std::vector<std::string> health_conditions;
    std::map<std::string, double> preferences;  // category -> weight in [0,1]
    std::vector<FeedbackEvent> feedback_history;

    nlohmann::ordered_json to_json() const;
    static UserProfile from_json(const nlohmann::json& j);

    /// Values that must never reach a site-bound payload: everything in
    /// common_info and medical_info. Health conditions are query vocabulary
    /// and stay usable as anonymous terms.
    std::vector<std::string> identity_values() const;

    bool empty() const;
};

/// Whole-document atomic profile persistence, one document per user.
/// Writes per user are serialized; no field-level merging.
class ProfileStore {
public:
    explicit ProfileStore(std::filesystem::path dir);
    ~ProfileStore();

    std::optional<UserProfile> load(const std::string& user_id) const;
    UserProfile load_or_create(const std::string& user_id) const;
    void save(const UserProfile& profile);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Applies a form of field assignments to the user's profile and persists
/// it. Field keys: common_info.K, medical_info.K, preferences.CATEGORY
/// (clamped to [0,1]), health_conditions (comma-joined list).
UserProfile create_or_update_profile(ProfileStore& store, const std::string& user_id,
                                     const std::map<std::string, std::string>& form);

struct ResultItem {
    corpus::SiteRecord record;
    std::string source_location;
    std::vector<std::string> sources;  // all contributing locations
    int source_assurance = 0;          // max across sources
    std::set<std::string> matched_terms;
    std::set<std::string> categories;  // union of source site categories
    std::vector<std::string> constituent_record_ids;
    double score = 0.0;
};

query::AnnotatedQuery enrich_query(query::AnnotatedQuery annotated, const UserProfile& profile);

/// Same disease with nonempty disjoint drug lists is a conflict; the higher
/// assurance source wins, ties keep both.
std::vector<ResultItem> resolve_conflicts(std::vector<ResultItem> items);

/// Merges items with equal disease and description token-Jaccard >= 0.8
/// (inclusive) into one item carrying the union of sources and drugs.
std::vector<ResultItem> merge_similar(std::vector<ResultItem> items);

/// score = |matched_terms| + sum of profile weights over item categories;
/// descending score, then assurance descending, then record_id.
std::vector<ResultItem> rank_and_sort(std::vector<ResultItem> items, const UserProfile& profile);

UserProfile apply_feedback(UserProfile profile, const FeedbackEvent& event, const ResultItem& item);

double description_jaccard(const std::string& a, const std::string& b);

} // namespace medsearch::personal
