#include <atomic>
#include <chrono>
#include <thread>

#include <httplib.h>

#include "medsearch/errors.hpp"
#include "medsearch/site_corpus.hpp"

namespace medsearch::corpus {

struct HttpFetcher::Impl {
    httplib::Client client;
    Impl(const std::string& host, int port) : client(host, port) {
        client.set_connection_timeout(5, 0);
        client.set_read_timeout(120, 0);
    }
};

HttpFetcher::HttpFetcher(std::string host, int port) : impl_(std::make_unique<Impl>(host, port)) {}

HttpFetcher::~HttpFetcher() = default;

std::string HttpFetcher::fetch(const std::string& path) {
    auto res = impl_->client.Get(path);
    if (!res) raise(ErrorCode::FetchError, "transport failure on " + path);
    if (res->status != 200) {
        raise(ErrorCode::FetchError, "status " + std::to_string(res->status) + " on " + path);
    }
    return res->body;
}

bool probe_site_service(const std::string& host, int port, const std::string& site_id) {
    httplib::Client client(host, port);
    client.set_connection_timeout(0, 300000);  // 300 ms
    client.set_read_timeout(1, 0);
    auto res = client.Get("/site/" + site_id);
    return res && res->status == 200;
}

struct SiteService::Impl {
    Corpus corpus;
    httplib::Server server;
    std::thread worker;
    int bound_port = 0;
    std::atomic<bool> running{false};

    explicit Impl(Corpus c) : corpus(std::move(c)) {
        server.Get(R"(/site/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const SiteManifest* site = corpus.find(req.matches[1]);
            if (!site) {
                res.status = 404;
                return;
            }
            res.set_content(render_form_page(*site), "text/html");
        });
        server.Get(R"(/site/([A-Za-z0-9_-]+)/search)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       const SiteManifest* site = corpus.find(req.matches[1]);
                       if (!site) {
                           res.status = 404;
                           return;
                       }
                       if (site->collect_latency_ms > 0) {
                           std::this_thread::sleep_for(
                               std::chrono::duration<double, std::milli>(site->collect_latency_ms));
                       }
                       const std::string term = req.get_param_value("q");
                       res.set_content(render_result_page(*site, term), "text/html");
                   });
    }
};

SiteService::SiteService(Corpus corpus) : impl_(std::make_unique<Impl>(std::move(corpus))) {}

SiteService::~SiteService() { stop(); }

int SiteService::start(const std::string& host, int port) {
    if (port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(host);
        if (impl_->bound_port <= 0) raise(ErrorCode::ServeError, "cannot bind " + host);
    } else {
        if (!impl_->server.bind_to_port(host, port)) {
            raise(ErrorCode::ServeError, "cannot bind " + host + ":" + std::to_string(port));
        }
        impl_->bound_port = port;
    }
    impl_->running = true;
    impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->bound_port;
}

void SiteService::stop() {
    if (impl_ && impl_->running.exchange(false)) {
        impl_->server.stop();
        if (impl_->worker.joinable()) impl_->worker.join();
    }
}

int SiteService::port() const { return impl_->bound_port; }

const Corpus& SiteService::corpus() const { return impl_->corpus; }

} // namespace medsearch::corpus
