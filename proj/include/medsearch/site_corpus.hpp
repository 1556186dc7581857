#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace medsearch::corpus {

struct SiteRecord {
    std::string record_id;
    std::string disease;
    std::string description;
    std::vector<std::string> drugs;

    bool operator==(const SiteRecord&) const = default;
};

struct SiteManifest {
    std::string site_id;
    std::string category;  // one of the 13 taxonomy categories
    int assurance_level = 0;
    double collect_latency_ms = 0.0;  // simulated per-request work
    std::vector<SiteRecord> records;
};

struct Corpus {
    std::vector<SiteManifest> sites;

    const SiteManifest* find(const std::string& site_id) const;
    SiteManifest* find(const std::string& site_id);
};

/// Deterministic synthetic corpus: 13 * sites_per_category sites, every
/// category represented, disease names built from the shared vocabulary so
/// the fixture dictionary's terms actually hit records.
Corpus generate_corpus(std::uint64_t seed, int sites_per_category, int records_per_site);

// Persistence: one JSON document per site plus an index file listing the
// site files in order.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);
std::string site_manifest_to_string(const SiteManifest& site);
SiteManifest site_manifest_from_string(const std::string& text);

/// Case-insensitive substring match on the disease field — the single
/// matching rule shared by the site service and every oracle.
bool disease_matches(const std::string& disease, const std::string& term);

std::vector<std::string> drug_lookup(const std::string& disease, const Corpus& corpus);

struct SearchFormSpec {
    std::string form_element_id = "disease-search-form";
    std::string query_attribute_name = "q";
    std::string submit_button_id = "search-submit";
};

std::string html_escape(const std::string& s);
std::string html_unescape(const std::string& s);

std::string render_form_page(const SiteManifest& site, const SearchFormSpec& spec = {});
std::string render_result_page(const SiteManifest& site, const std::string& term,
                               const SearchFormSpec& spec = {});

// --- minimal HTML document model (the module's own parser) ---

struct HtmlNode {
    std::string tag;   // empty for text nodes
    std::string text;  // set for text nodes
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<HtmlNode> children;

    const std::string* attribute(const std::string& name) const;
    const HtmlNode* find_by_id(const std::string& id) const;
    const HtmlNode* find_first(const std::string& tag_name) const;
    void collect_with_attribute(const std::string& attr, std::vector<const HtmlNode*>& out) const;
    std::string text_content() const;
};

/// Parses the subset of HTML the site service emits. Throws ParseError on
/// malformed input.
HtmlNode parse_html(const std::string& html);

std::vector<SiteRecord> parse_result_page(const std::string& html);

/// Transport boundary: both the in-process corpus and the loopback HTTP
/// service answer the same paths:
///   GET /site/{id}            -> form page
///   GET /site/{id}/search?q=… -> result page (delayed by collect_latency_ms)
class SiteFetcher {
public:
    virtual ~SiteFetcher() = default;
    virtual std::string fetch(const std::string& path) = 0;
};

/// Sleep hook so the in-process transport works against either the real
/// clock or a virtual one.
using SleepFn = std::function<void(double)>;

class InProcessFetcher : public SiteFetcher {
public:
    explicit InProcessFetcher(const Corpus& corpus, SleepFn sleep = {});

    std::string fetch(const std::string& path) override;

    /// Contention multiplier applied to the site's collect latency; set by
    /// the static coordinator from (1 + kappa * n_agents).
    void set_latency_scale(double scale) { latency_scale_ = scale; }

    /// Marks a site as unreachable (fetch throws FetchError). Test hook for
    /// the skip-and-continue itinerary path.
    void set_broken(const std::string& site_id, bool broken);

private:
    const Corpus* corpus_;
    SleepFn sleep_;
    double latency_scale_ = 1.0;
    std::vector<std::string> broken_sites_;
};

class HttpFetcher : public SiteFetcher {
public:
    HttpFetcher(std::string host, int port);
    ~HttpFetcher() override;

    std::string fetch(const std::string& path) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Algorithm-1 form scrape: fetch the form page, locate the form element,
/// read the query input's name and the form action, verify the submit
/// button, submit, and parse the result page into records.
std::vector<SiteRecord> get_results(SiteFetcher& fetcher, const std::string& site_id,
                                    const std::string& search_term, const SearchFormSpec& spec = {});

/// Quick reachability probe (short timeout): true when an HTTP site service
/// answers GET /site/{site_id} at host:port.
bool probe_site_service(const std::string& host, int port, const std::string& site_id);

/// Loopback HTTP site service backed by a corpus.
class SiteService {
public:
    explicit SiteService(Corpus corpus);
    ~SiteService();

    /// Binds and serves on a background thread. Port 0 picks a free port;
    /// returns the bound port. Throws ServeError on bind failure.
    int start(const std::string& host, int port);
    void stop();
    int port() const;
    const Corpus& corpus() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace medsearch::corpus
