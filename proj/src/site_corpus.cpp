#include "medsearch/site_corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "medsearch/errors.hpp"
#include "medsearch/taxonomy.hpp"
#include "medsearch/text_util.hpp"

namespace medsearch::corpus {

const SiteManifest* Corpus::find(const std::string& site_id) const {
    for (const auto& s : sites) {
        if (s.site_id == site_id) return &s;
    }
    return nullptr;
}

SiteManifest* Corpus::find(const std::string& site_id) {
    for (auto& s : sites) {
        if (s.site_id == site_id) return &s;
    }
    return nullptr;
}

namespace {

const std::vector<std::string>& disease_modifiers() {
    static const std::vector<std::string> mods = {"acute",     "chronic", "mild",
                                                  "severe",    "recurrent", "seasonal",
                                                  "persistent", "atypical"};
    return mods;
}

const std::vector<std::string>& disease_suffixes() {
    static const std::vector<std::string> sufs = {"syndrome", "disorder", "condition", "episode"};
    return sufs;
}

} // namespace

Corpus generate_corpus(std::uint64_t seed, int sites_per_category, int records_per_site) {
    if (sites_per_category <= 0 || records_per_site <= 0) {
        raise(ErrorCode::InvalidArgument, "generate_corpus arguments must be positive");
    }
    std::mt19937_64 rng(seed);
    Corpus corpus;
    const auto& vocab = vocab::category_vocab();
    const auto& drugs = vocab::drug_name_pool();

    int site_no = 0;
    for (int k = 0; k < sites_per_category; ++k) {
        for (const auto& cat : vocab) {
            SiteManifest site;
            ++site_no;
            char idbuf[16];
            std::snprintf(idbuf, sizeof(idbuf), "s%03d", site_no);
            site.site_id = idbuf;
            site.category = std::string(cat.category);
            site.assurance_level = static_cast<int>(pick(rng, 4));
            site.collect_latency_ms = 10.0 + static_cast<double>(pick(rng, 31));

            for (int r = 0; r < records_per_site; ++r) {
                SiteRecord rec;
                rec.record_id = site.site_id + "-r" + std::to_string(r + 1);
                const auto& term = cat.terms[pick(rng, cat.terms.size())];
                const auto& mod = disease_modifiers()[pick(rng, disease_modifiers().size())];
                std::string disease = mod + " " + term.term;
                if (pick(rng, 2) == 0) {
                    disease += " " + disease_suffixes()[pick(rng, disease_suffixes().size())];
                }
                rec.disease = disease;
                const auto& other = cat.terms[pick(rng, cat.terms.size())];
                rec.description = "Patients with " + disease + " often report " +
                                  std::string(other.term) + " in the " + site.category + " group.";
                const std::size_t n_drugs = 1 + pick(rng, 3);
                std::set<std::string> chosen;
                while (chosen.size() < n_drugs) chosen.insert(drugs[pick(rng, drugs.size())]);
                rec.drugs.assign(chosen.begin(), chosen.end());
                site.records.push_back(std::move(rec));
            }
            corpus.sites.push_back(std::move(site));
        }
    }
    return corpus;
}

// --- persistence ---

std::string site_manifest_to_string(const SiteManifest& site) {
    nlohmann::ordered_json j;
    j["site_id"] = site.site_id;
    j["category"] = site.category;
    j["assurance_level"] = site.assurance_level;
    j["collect_latency_ms"] = site.collect_latency_ms;
    j["records"] = nlohmann::ordered_json::array();
    for (const auto& rec : site.records) {
        nlohmann::ordered_json jr;
        jr["record_id"] = rec.record_id;
        jr["disease"] = rec.disease;
        jr["description"] = rec.description;
        jr["drugs"] = rec.drugs;
        j["records"].push_back(std::move(jr));
    }
    return j.dump(2) + "\n";
}

SiteManifest site_manifest_from_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ParseError, std::string("bad site manifest: ") + e.what());
    }
    SiteManifest site;
    try {
        site.site_id = j.at("site_id").get<std::string>();
        site.category = j.at("category").get<std::string>();
        site.assurance_level = j.at("assurance_level").get<int>();
        site.collect_latency_ms = j.at("collect_latency_ms").get<double>();
        for (const auto& jr : j.at("records")) {
            SiteRecord rec;
            rec.record_id = jr.at("record_id").get<std::string>();
            rec.disease = jr.at("disease").get<std::string>();
            rec.description = jr.at("description").get<std::string>();
            rec.drugs = jr.at("drugs").get<std::vector<std::string>>();
            site.records.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ParseError, std::string("bad site manifest field: ") + e.what());
    }
    if (!is_category(site.category)) raise(ErrorCode::ParseError, "unknown category: " + site.category);
    return site;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string index;
    for (const auto& site : corpus.sites) {
        const std::string filename = "site_" + site.site_id + ".json";
        std::ofstream out(dir / filename, std::ios::binary);
        if (!out) raise(ErrorCode::ConfigError, "cannot write " + (dir / filename).string());
        out << site_manifest_to_string(site);
        index += filename + "\n";
    }
    std::ofstream idx(dir / "index.txt", std::ios::binary);
    if (!idx) raise(ErrorCode::ConfigError, "cannot write corpus index");
    idx << index;
}

Corpus load_corpus(const std::filesystem::path& dir) {
    std::ifstream idx(dir / "index.txt");
    if (!idx) raise(ErrorCode::ConfigError, "cannot open corpus index: " + (dir / "index.txt").string());
    Corpus corpus;
    std::string line;
    while (std::getline(idx, line)) {
        const std::string name = trim(line);
        if (name.empty()) continue;
        std::ifstream in(dir / name, std::ios::binary);
        if (!in) raise(ErrorCode::ConfigError, "missing site file: " + name);
        std::stringstream buf;
        buf << in.rdbuf();
        corpus.sites.push_back(site_manifest_from_string(buf.str()));
    }
    return corpus;
}

bool disease_matches(const std::string& disease, const std::string& term) {
    return !term.empty() && contains_ci(disease, term);
}

std::vector<std::string> drug_lookup(const std::string& disease, const Corpus& corpus) {
    std::set<std::string> out;
    const std::string wanted = to_lower_ascii(disease);
    for (const auto& site : corpus.sites) {
        for (const auto& rec : site.records) {
            if (to_lower_ascii(rec.disease) == wanted) {
                out.insert(rec.drugs.begin(), rec.drugs.end());
            }
        }
    }
    return {out.begin(), out.end()};
}

// --- HTML ---

std::string html_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string html_unescape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out.push_back(s[i]);
            continue;
        }
        auto matches = [&](std::string_view ent) { return s.compare(i, ent.size(), ent) == 0; };
        if (matches("&amp;")) {
            out.push_back('&');
            i += 4;
        } else if (matches("&lt;")) {
            out.push_back('<');
            i += 3;
        } else if (matches("&gt;")) {
            out.push_back('>');
            i += 3;
        } else if (matches("&quot;")) {
            out.push_back('"');
            i += 5;
        } else if (matches("&apos;")) {
            out.push_back('\'');
            i += 5;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

std::string render_form_page(const SiteManifest& site, const SearchFormSpec& spec) {
    std::ostringstream out;
    out << "<!DOCTYPE html>\n<html>\n<head><title>" << html_escape(site.site_id)
        << "</title></head>\n<body>\n";
    out << "<h1>" << html_escape(site.site_id) << " &mdash; " << html_escape(site.category)
        << "</h1>\n";
    out << "<form id=\"" << spec.form_element_id << "\" method=\"get\" action=\"/site/"
        << html_escape(site.site_id) << "/search\">\n";
    out << "  <input type=\"text\" name=\"" << spec.query_attribute_name
        << "\" id=\"disease-query\" value=\"\">\n";
    out << "  <button id=\"" << spec.submit_button_id << "\" type=\"submit\">Search</button>\n";
    out << "</form>\n</body>\n</html>\n";
    return out.str();
}

std::string render_result_page(const SiteManifest& site, const std::string& term,
                               const SearchFormSpec& spec) {
    std::ostringstream out;
    out << "<!DOCTYPE html>\n<html>\n<head><title>" << html_escape(site.site_id)
        << " results</title></head>\n<body>\n";
    out << "<h1>Results for " << html_escape(term) << "</h1>\n";
    out << "<ol class=\"results\">\n";
    for (const auto& rec : site.records) {
        if (!disease_matches(rec.disease, term)) continue;
        out << "<li class=\"result\" data-record-id=\"" << html_escape(rec.record_id) << "\">\n";
        out << "  <span class=\"disease\">" << html_escape(rec.disease) << "</span>\n";
        out << "  <span class=\"description\">" << html_escape(rec.description) << "</span>\n";
        out << "  <ul class=\"drugs\">";
        for (const auto& d : rec.drugs) out << "<li class=\"drug\">" << html_escape(d) << "</li>";
        out << "</ul>\n";
        out << "</li>\n";
    }
    out << "</ol>\n</body>\n</html>\n";
    (void)spec;
    return out.str();
}

// --- parser ---

namespace {

const std::set<std::string>& void_elements() {
    static const std::set<std::string> v = {"input", "br", "hr", "img", "meta", "link"};
    return v;
}

struct HtmlScanner {
    const std::string& src;
    std::size_t pos = 0;

    bool eof() const { return pos >= src.size(); }
    char peek() const { return src[pos]; }

    void skip_ws() {
        while (!eof() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }

    std::string read_name() {
        std::size_t start = pos;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '-' ||
                          src[pos] == '_')) {
            ++pos;
        }
        return to_lower_ascii(src.substr(start, pos - start));
    }

    // Parses one element starting at '<'. Returns false for a closing tag
    // (name written to close_name).
    bool parse_element(HtmlNode& out, std::string& close_name);

    void parse_children(HtmlNode& parent, const std::string& parent_tag);
};

bool HtmlScanner::parse_element(HtmlNode& out, std::string& close_name) {
    // pos on '<'
    ++pos;
    if (!eof() && peek() == '/') {
        ++pos;
        close_name = read_name();
        skip_ws();
        if (eof() || peek() != '>') raise(ErrorCode::ParseError, "malformed closing tag");
        ++pos;
        return false;
    }
    // doctype or comment
    if (!eof() && peek() == '!') {
        while (!eof() && peek() != '>') ++pos;
        if (eof()) raise(ErrorCode::ParseError, "unterminated declaration");
        ++pos;
        out.tag = "!";
        return true;
    }
    out.tag = read_name();
    if (out.tag.empty()) raise(ErrorCode::ParseError, "empty tag name");
    for (;;) {
        skip_ws();
        if (eof()) raise(ErrorCode::ParseError, "unterminated tag: " + out.tag);
        if (peek() == '>') {
            ++pos;
            break;
        }
        if (peek() == '/') {
            ++pos;
            skip_ws();
            if (eof() || peek() != '>') raise(ErrorCode::ParseError, "malformed self-closing tag");
            ++pos;
            return true;  // self-closed: no children
        }
        std::string attr = read_name();
        if (attr.empty()) raise(ErrorCode::ParseError, "malformed attribute in <" + out.tag + ">");
        std::string value;
        skip_ws();
        if (!eof() && peek() == '=') {
            ++pos;
            skip_ws();
            if (eof() || (peek() != '"' && peek() != '\'')) {
                raise(ErrorCode::ParseError, "unquoted attribute value");
            }
            const char quote = peek();
            ++pos;
            std::size_t start = pos;
            while (!eof() && peek() != quote) ++pos;
            if (eof()) raise(ErrorCode::ParseError, "unterminated attribute value");
            value = html_unescape(src.substr(start, pos - start));
            ++pos;
        }
        out.attributes.emplace_back(std::move(attr), std::move(value));
    }
    if (void_elements().count(out.tag)) return true;
    parse_children(out, out.tag);
    return true;
}

void HtmlScanner::parse_children(HtmlNode& parent, const std::string& parent_tag) {
    std::string text;
    auto flush_text = [&] {
        const std::string t = trim(text);
        if (!t.empty()) {
            HtmlNode node;
            node.text = html_unescape(t);
            parent.children.push_back(std::move(node));
        }
        text.clear();
    };
    while (!eof()) {
        if (peek() == '<') {
            flush_text();
            HtmlNode child;
            std::string close_name;
            if (!parse_element(child, close_name)) {
                if (close_name != parent_tag) {
                    raise(ErrorCode::ParseError,
                          "mismatched closing tag: expected </" + parent_tag + ">, got </" +
                              close_name + ">");
                }
                return;
            }
            if (child.tag != "!") parent.children.push_back(std::move(child));
        } else {
            text.push_back(peek());
            ++pos;
        }
    }
    if (!parent_tag.empty()) {
        raise(ErrorCode::ParseError, "unclosed element: <" + parent_tag + ">");
    }
    flush_text();
}

} // namespace

HtmlNode parse_html(const std::string& html) {
    HtmlScanner scanner{html};
    HtmlNode root;
    scanner.parse_children(root, "");
    return root;
}

const std::string* HtmlNode::attribute(const std::string& name) const {
    for (const auto& [k, v] : attributes) {
        if (k == name) return &v;
    }
    return nullptr;
}

const HtmlNode* HtmlNode::find_by_id(const std::string& id) const {
    if (const auto* v = attribute("id"); v && *v == id) return this;
    for (const auto& child : children) {
        if (const auto* found = child.find_by_id(id)) return found;
    }
    return nullptr;
}

const HtmlNode* HtmlNode::find_first(const std::string& tag_name) const {
    if (tag == tag_name) return this;
    for (const auto& child : children) {
        if (const auto* found = child.find_first(tag_name)) return found;
    }
    return nullptr;
}

void HtmlNode::collect_with_attribute(const std::string& attr, std::vector<const HtmlNode*>& out) const {
    if (attribute(attr)) out.push_back(this);
    for (const auto& child : children) child.collect_with_attribute(attr, out);
}

std::string HtmlNode::text_content() const {
    if (!text.empty()) return text;
    std::string out;
    for (const auto& child : children) {
        const std::string t = child.text_content();
        if (!t.empty()) {
            if (!out.empty()) out += ' ';
            out += t;
        }
    }
    return out;
}

namespace {

const HtmlNode* find_by_class(const HtmlNode& node, const std::string& cls) {
    if (const auto* v = node.attribute("class"); v && *v == cls) return &node;
    for (const auto& child : node.children) {
        if (const auto* found = find_by_class(child, cls)) return found;
    }
    return nullptr;
}

void collect_by_class(const HtmlNode& node, const std::string& cls, std::vector<const HtmlNode*>& out) {
    if (const auto* v = node.attribute("class"); v && *v == cls) out.push_back(&node);
    for (const auto& child : node.children) collect_by_class(child, cls, out);
}

} // namespace

std::vector<SiteRecord> parse_result_page(const std::string& html) {
    const HtmlNode root = parse_html(html);
    std::vector<const HtmlNode*> entries;
    root.collect_with_attribute("data-record-id", entries);
    std::vector<SiteRecord> records;
    for (const auto* entry : entries) {
        SiteRecord rec;
        rec.record_id = *entry->attribute("data-record-id");
        if (const auto* n = find_by_class(*entry, "disease")) rec.disease = n->text_content();
        if (const auto* n = find_by_class(*entry, "description")) rec.description = n->text_content();
        std::vector<const HtmlNode*> drug_nodes;
        collect_by_class(*entry, "drug", drug_nodes);
        for (const auto* d : drug_nodes) rec.drugs.push_back(d->text_content());
        if (rec.disease.empty()) raise(ErrorCode::ParseError, "result entry without disease field");
        records.push_back(std::move(rec));
    }
    return records;
}

// --- transports ---

namespace {

struct ParsedPath {
    std::string site_id;
    bool is_search = false;
    std::string query;
};

ParsedPath parse_site_path(const std::string& path) {
    // /site/{id} or /site/{id}/search?q=…
    if (path.rfind("/site/", 0) != 0) raise(ErrorCode::FetchError, "unknown path: " + path);
    std::string rest = path.substr(6);
    ParsedPath out;
    const auto slash = rest.find('/');
    if (slash == std::string::npos) {
        out.site_id = rest;
        return out;
    }
    out.site_id = rest.substr(0, slash);
    std::string tail = rest.substr(slash + 1);
    const auto qmark = tail.find('?');
    std::string endpoint = qmark == std::string::npos ? tail : tail.substr(0, qmark);
    if (endpoint != "search") raise(ErrorCode::FetchError, "unknown endpoint: " + path);
    out.is_search = true;
    if (qmark != std::string::npos) {
        for (const auto& kv : split(tail.substr(qmark + 1), '&')) {
            const auto eq = kv.find('=');
            if (eq != std::string::npos && kv.substr(0, eq) == "q") {
                out.query = percent_decode(kv.substr(eq + 1));
            }
        }
    }
    return out;
}

} // namespace

InProcessFetcher::InProcessFetcher(const Corpus& corpus, SleepFn sleep)
    : corpus_(&corpus), sleep_(std::move(sleep)) {}

void InProcessFetcher::set_broken(const std::string& site_id, bool broken) {
    auto it = std::find(broken_sites_.begin(), broken_sites_.end(), site_id);
    if (broken && it == broken_sites_.end()) broken_sites_.push_back(site_id);
    if (!broken && it != broken_sites_.end()) broken_sites_.erase(it);
}

std::string InProcessFetcher::fetch(const std::string& path) {
    const ParsedPath parsed = parse_site_path(path);
    if (std::find(broken_sites_.begin(), broken_sites_.end(), parsed.site_id) != broken_sites_.end()) {
        raise(ErrorCode::FetchError, "site unreachable: " + parsed.site_id);
    }
    const SiteManifest* site = corpus_->find(parsed.site_id);
    if (!site) raise(ErrorCode::FetchError, "no such site: " + parsed.site_id);
    if (!parsed.is_search) return render_form_page(*site);
    const double delay = site->collect_latency_ms * latency_scale_;
    if (delay > 0) {
        if (sleep_) {
            sleep_(delay);
        } else {
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
        }
    }
    return render_result_page(*site, parsed.query);
}

std::vector<SiteRecord> get_results(SiteFetcher& fetcher, const std::string& site_id,
                                    const std::string& search_term, const SearchFormSpec& spec) {
    const std::string form_html = fetcher.fetch("/site/" + site_id);
    const HtmlNode root = parse_html(form_html);

    const HtmlNode* form = root.find_by_id(spec.form_element_id);
    if (!form) raise(ErrorCode::ParseError, "search form not found on " + site_id);
    const std::string* action = form->attribute("action");
    if (!action) raise(ErrorCode::ParseError, "search form has no action on " + site_id);
    const HtmlNode* input = form->find_first("input");
    if (!input) raise(ErrorCode::ParseError, "search form has no input element on " + site_id);
    const std::string* param = input->attribute("name");
    if (!param || *param != spec.query_attribute_name) {
        raise(ErrorCode::ParseError, "query input attribute mismatch on " + site_id);
    }
    const HtmlNode* button = form->find_by_id(spec.submit_button_id);
    if (!button) raise(ErrorCode::ParseError, "submit button not found on " + site_id);

    const std::string submit_url = *action + "?" + *param + "=" + percent_encode(search_term);
    const std::string result_html = fetcher.fetch(submit_url);
    return parse_result_page(result_html);
}

} // namespace medsearch::corpus
