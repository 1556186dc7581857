#include "medsearch/personalization.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

#include "medsearch/errors.hpp"
#include "medsearch/taxonomy.hpp"
#include "medsearch/text_util.hpp"

namespace medsearch::personal {

namespace {

double clamp_weight(double w) { return std::clamp(w, 0.0, 1.0); }

} // namespace

nlohmann::ordered_json UserProfile::to_json() const {
    nlohmann::ordered_json j;
    j["user_id"] = user_id;
    j["common_info"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : common_info) j["common_info"][k] = v;
    j["medical_info"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : medical_info) j["medical_info"][k] = v;
    j["health_conditions"] = health_conditions;
    j["preferences"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : preferences) j["preferences"][k] = v;
    j["feedback_history"] = nlohmann::ordered_json::array();
    for (const auto& ev : feedback_history) {
        nlohmann::ordered_json je;
        je["kind"] = ev.kind == FeedbackEvent::Kind::Explicit ? "EXPLICIT" : "IMPLICIT";
        je["record_id"] = ev.record_id;
        if (ev.kind == FeedbackEvent::Kind::Explicit) {
            je["rating"] = ev.rating;
        } else {
            je["marker"] = ev.marker;
        }
        je["timestamp_ms"] = ev.timestamp_ms;
        j["feedback_history"].push_back(std::move(je));
    }
    return j;
}

UserProfile UserProfile::from_json(const nlohmann::json& j) {
    UserProfile p;
    try {
        p.user_id = j.at("user_id").get<std::string>();
        const nlohmann::json common = j.value("common_info", nlohmann::json::object());
        for (const auto& [k, v] : common.items()) {
            p.common_info[k] = v.get<std::string>();
        }
        const nlohmann::json medical = j.value("medical_info", nlohmann::json::object());
        for (const auto& [k, v] : medical.items()) {
            p.medical_info[k] = v.get<std::string>();
        }
        p.health_conditions =
            j.value("health_conditions", std::vector<std::string>{});
        const nlohmann::json prefs = j.value("preferences", nlohmann::json::object());
        for (const auto& [k, v] : prefs.items()) {
            p.preferences[k] = clamp_weight(v.get<double>());
        }
        const nlohmann::json history = j.value("feedback_history", nlohmann::json::array());
        for (const auto& je : history) {
            FeedbackEvent ev;
            ev.kind = je.value("kind", "EXPLICIT") == "EXPLICIT" ? FeedbackEvent::Kind::Explicit
                                                                 : FeedbackEvent::Kind::Implicit;
            ev.record_id = je.value("record_id", "");
            ev.rating = je.value("rating", 0);
            ev.marker = je.value("marker", "");
            ev.timestamp_ms = je.value("timestamp_ms", std::int64_t{0});
            p.feedback_history.push_back(std::move(ev));
        }
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ParseError, std::string("bad profile document: ") + e.what());
    }
    return p;
}

std::vector<std::string> UserProfile::identity_values() const {
    std::vector<std::string> out;
    for (const auto& [_, v] : common_info) {
        if (!v.empty()) out.push_back(v);
    }
    for (const auto& [_, v] : medical_info) {
        if (!v.empty()) out.push_back(v);
    }
    return out;
}

bool UserProfile::empty() const {
    return common_info.empty() && medical_info.empty() && health_conditions.empty() &&
           preferences.empty() && feedback_history.empty();
}

struct ProfileStore::Impl {
    std::filesystem::path dir;
    std::mutex mu;  // serializes writes across users; whole-document atomic either way
};

ProfileStore::ProfileStore(std::filesystem::path dir) : impl_(std::make_unique<Impl>()) {
    impl_->dir = std::move(dir);
    std::filesystem::create_directories(impl_->dir);
}

ProfileStore::~ProfileStore() = default;

namespace {
std::filesystem::path profile_path(const std::filesystem::path& dir, const std::string& user_id) {
    return dir / ("profile_" + user_id + ".json");
}
} // namespace

std::optional<UserProfile> ProfileStore::load(const std::string& user_id) const {
    std::ifstream in(profile_path(impl_->dir, user_id), std::ios::binary);
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ParseError, std::string("corrupt profile document: ") + e.what());
    }
    return UserProfile::from_json(j);
}

UserProfile ProfileStore::load_or_create(const std::string& user_id) const {
    if (auto p = load(user_id)) return *p;
    UserProfile p;
    p.user_id = user_id;
    return p;
}

void ProfileStore::save(const UserProfile& profile) {
    if (profile.user_id.empty()) raise(ErrorCode::InvalidArgument, "profile needs a user_id");
    std::lock_guard<std::mutex> lk(impl_->mu);
    const auto path = profile_path(impl_->dir, profile.user_id);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) raise(ErrorCode::ConfigError, "cannot write profile: " + tmp);
        out << profile.to_json().dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

UserProfile create_or_update_profile(ProfileStore& store, const std::string& user_id,
                                     const std::map<std::string, std::string>& form) {
    UserProfile profile = store.load_or_create(user_id);
    for (const auto& [key, value] : form) {
        if (key.rfind("common_info.", 0) == 0) {
            profile.common_info[key.substr(12)] = value;
        } else if (key.rfind("medical_info.", 0) == 0) {
            profile.medical_info[key.substr(13)] = value;
        } else if (key.rfind("preferences.", 0) == 0) {
            const std::string category = key.substr(12);
            if (!is_category(category)) {
                raise(ErrorCode::InvalidArgument, "unknown preference category: " + category);
            }
            double w = 0.0;
            try {
                w = std::stod(value);
            } catch (const std::exception&) {
                raise(ErrorCode::InvalidArgument, "preference weight must be numeric: " + value);
            }
            profile.preferences[category] = clamp_weight(w);
        } else if (key == "health_conditions") {
            profile.health_conditions = split_nonempty(value, ',');
        } else {
            raise(ErrorCode::InvalidArgument, "unknown profile field: " + key);
        }
    }
    store.save(profile);
    return profile;
}

query::AnnotatedQuery enrich_query(query::AnnotatedQuery annotated, const UserProfile& profile) {
    if (profile.empty()) return annotated;
    for (const auto& cat : annotated.target_categories) {
        double w = 1.0;
        if (auto it = profile.preferences.find(cat); it != profile.preferences.end()) {
            w += it->second;
        }
        annotated.category_weights[cat] = w;
    }
    for (const auto& cond : profile.health_conditions) {
        bool present = false;
        for (const auto& t : annotated.terms) {
            if (t.corrected == cond) present = true;
        }
        if (!present && std::find(annotated.context_terms.begin(), annotated.context_terms.end(),
                                  cond) == annotated.context_terms.end()) {
            annotated.context_terms.push_back(cond);
        }
    }
    return annotated;
}

namespace {

bool drugs_disjoint(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return false;
    for (const auto& x : a) {
        if (std::find(b.begin(), b.end(), x) != b.end()) return false;
    }
    return true;
}

bool same_disease(const ResultItem& a, const ResultItem& b) {
    return to_lower_ascii(a.record.disease) == to_lower_ascii(b.record.disease);
}

} // namespace

std::vector<ResultItem> resolve_conflicts(std::vector<ResultItem> items) {
    std::vector<bool> dominated(items.size(), false);
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = 0; j < items.size(); ++j) {
            if (i == j) continue;
            if (same_disease(items[i], items[j]) &&
                drugs_disjoint(items[i].record.drugs, items[j].record.drugs) &&
                items[j].source_assurance > items[i].source_assurance) {
                dominated[i] = true;
                break;
            }
        }
    }
    std::vector<ResultItem> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!dominated[i]) out.push_back(std::move(items[i]));
    }
    return out;
}

double description_jaccard(const std::string& a, const std::string& b) {
    const auto ta = query::tokenize(a);
    const auto tb = query::tokenize(b);
    const std::set<std::string> sa(ta.begin(), ta.end());
    const std::set<std::string> sb(tb.begin(), tb.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : sa) inter += sb.count(t);
    const std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<ResultItem> merge_similar(std::vector<ResultItem> items) {
    const std::size_t n = items.size();
    // Single-link clustering over (same disease, Jaccard >= 0.8) so the pass
    // is idempotent: representatives keep their original descriptions.
    std::vector<std::size_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (same_disease(items[i], items[j]) &&
                description_jaccard(items[i].record.description, items[j].record.description) >= 0.8) {
                parent[find(i)] = find(j);
            }
        }
    }
    std::map<std::size_t, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters[find(i)].push_back(i);

    std::vector<ResultItem> out;
    std::vector<bool> emitted(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t root = find(i);
        if (emitted[root]) continue;
        emitted[root] = true;
        const auto& member_idx = clusters[root];
        // Primary: highest assurance, then lexicographically smallest id.
        std::size_t primary = member_idx[0];
        for (const std::size_t m : member_idx) {
            if (items[m].source_assurance > items[primary].source_assurance ||
                (items[m].source_assurance == items[primary].source_assurance &&
                 items[m].record.record_id < items[primary].record.record_id)) {
                primary = m;
            }
        }
        ResultItem merged = items[primary];
        std::set<std::string> drugs(merged.record.drugs.begin(), merged.record.drugs.end());
        std::set<std::string> sources(merged.sources.begin(), merged.sources.end());
        std::set<std::string> constituents(merged.constituent_record_ids.begin(),
                                           merged.constituent_record_ids.end());
        for (const std::size_t m : member_idx) {
            if (m == primary) continue;
            const ResultItem& other = items[m];
            drugs.insert(other.record.drugs.begin(), other.record.drugs.end());
            sources.insert(other.sources.begin(), other.sources.end());
            constituents.insert(other.constituent_record_ids.begin(),
                                other.constituent_record_ids.end());
            merged.matched_terms.insert(other.matched_terms.begin(), other.matched_terms.end());
            merged.categories.insert(other.categories.begin(), other.categories.end());
            merged.source_assurance = std::max(merged.source_assurance, other.source_assurance);
            merged.score = std::max(merged.score, other.score);
        }
        merged.record.drugs.assign(drugs.begin(), drugs.end());
        merged.sources.assign(sources.begin(), sources.end());
        merged.constituent_record_ids.assign(constituents.begin(), constituents.end());
        out.push_back(std::move(merged));
    }
    return out;
}

std::vector<ResultItem> rank_and_sort(std::vector<ResultItem> items, const UserProfile& profile) {
    for (auto& item : items) {
        double score = static_cast<double>(item.matched_terms.size());
        for (const auto& cat : item.categories) {
            if (auto it = profile.preferences.find(cat); it != profile.preferences.end()) {
                score += it->second;
            }
        }
        item.score = score;
    }
    std::stable_sort(items.begin(), items.end(), [](const ResultItem& a, const ResultItem& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.source_assurance != b.source_assurance) return a.source_assurance > b.source_assurance;
        return a.record.record_id < b.record.record_id;
    });
    return items;
}

UserProfile apply_feedback(UserProfile profile, const FeedbackEvent& event, const ResultItem& item) {
    const auto& ids = item.constituent_record_ids;
    const bool known = event.record_id == item.record.record_id ||
                       std::find(ids.begin(), ids.end(), event.record_id) != ids.end();
    if (!known) raise(ErrorCode::UnknownResult, "feedback references unknown result: " + event.record_id);

    double delta = 0.0;
    if (event.kind == FeedbackEvent::Kind::Explicit) {
        delta = 0.1 * static_cast<double>(event.rating);
    } else if (event.marker == "click") {
        delta = 0.02;
    }
    for (const auto& cat : item.categories) {
        const double current =
            profile.preferences.count(cat) ? profile.preferences.at(cat) : 0.0;
        profile.preferences[cat] = clamp_weight(current + delta);
    }
    profile.feedback_history.push_back(event);
    return profile;
}

} // namespace medsearch::personal
