#pragma once

// Endpoint-backed annotation. Split from annotate.hpp so the pure softmax
// path does not drag in the HTTP client.

#include <chrono>
#include <future>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "affectflow/annotate.hpp"
#include "affectflow/common.hpp"

namespace affectflow::annotate {

namespace detail {

struct ParsedUrl {
    std::string host_port;  // scheme://host[:port], what httplib::Client wants
    std::string base_path;  // path prefix, possibly empty
};

inline ParsedUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw input_error("endpoint url must start with http:// or https://: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string path = url.substr(path_start);
    if (path == "/") path.clear();
    return {url.substr(0, path_start), path};
}

inline std::vector<LogitVector> parse_annotate_response(const std::string& body,
                                                        std::size_t expected,
                                                        const std::string& context) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw input_error(context + ": invalid JSON response: " + e.what());
    }
    if (!doc.contains("labels") || !doc.contains("logits"))
        throw input_error(context + ": response missing 'labels' or 'logits'");
    const auto& labels = doc["labels"];
    if (labels.size() != kNumEmotions)
        throw input_error(context + ": expected 6 labels");
    for (std::size_t j = 0; j < kNumEmotions; ++j) {
        if (labels[j].get<std::string>() != kEmotionLabels[j])
            throw input_error(context + ": label order mismatch at index " + std::to_string(j) +
                              " ('" + labels[j].get<std::string>() + "' != '" +
                              kEmotionLabels[j] + "')");
    }
    const auto& logits = doc["logits"];
    if (logits.size() != expected)
        throw input_error(context + ": got " + std::to_string(logits.size()) +
                          " logit rows for " + std::to_string(expected) + " texts");
    std::vector<LogitVector> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        if (logits[i].size() != kNumEmotions)
            throw input_error(context + ": logit row " + std::to_string(i) + " is not 6-wide");
        for (std::size_t j = 0; j < kNumEmotions; ++j)
            out[i].z[j] = logits[i][j].get<double>();
    }
    return out;
}

// POST {url}/v1/annotate with {"texts": [...]}; 3 attempts with exponential
// backoff before giving up.
inline std::vector<LogitVector> fetch_batch(const AnnotationConfig& config,
                                            const std::vector<std::string>& texts,
                                            std::size_t batch_index) {
    const ParsedUrl url = split_url(config.endpoint_url);
    const std::string context = "annotate batch " + std::to_string(batch_index);

    nlohmann::json request;
    request["texts"] = texts;
    const std::string body = request.dump();

    std::string last_failure = "no attempt made";
    for (int attempt = 0; attempt < 3; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(100 << (attempt - 1)));
        httplib::Client client(url.host_port);
        client.set_read_timeout(std::chrono::seconds(30));
        httplib::Headers headers;
        if (!config.api_token.empty())
            headers.emplace("Authorization", "Bearer " + config.api_token);
        auto res = client.Post(url.base_path + "/v1/annotate", headers, body, "application/json");
        if (!res) {
            last_failure = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_failure = "HTTP status " + std::to_string(res->status);
            continue;
        }
        return parse_annotate_response(res->body, texts.size(), context);
    }
    throw input_error(context + ": endpoint failed after 3 attempts (" + last_failure + ")");
}

}  // namespace detail

// Sends record texts to the inference endpoint in batches, applies the
// configured temperature softmax, and returns vectors in input order. Up to
// max_concurrent batches are in flight at once; ordering is restored by
// batch index so the result is deterministic.
template <class Record>
inline std::vector<EmotionVector> annotate_from_endpoint(const std::vector<Record>& records,
                                                         const AnnotationConfig& config) {
    if (config.batch_size < 1) throw std::invalid_argument("annotate: batch_size must be >= 1");
    if (config.max_concurrent < 1)
        throw std::invalid_argument("annotate: max_concurrent must be >= 1");
    if (config.endpoint_url.empty()) throw input_error("annotate: endpoint_url not set");

    std::vector<std::vector<std::string>> batches;
    std::vector<std::string> current;
    for (const auto& rec : records) {
        current.push_back(rec.text);
        if (current.size() == static_cast<std::size_t>(config.batch_size)) {
            batches.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) batches.push_back(std::move(current));

    std::vector<std::vector<LogitVector>> results(batches.size());
    for (std::size_t group = 0; group < batches.size();
         group += static_cast<std::size_t>(config.max_concurrent)) {
        const std::size_t end =
            std::min(batches.size(), group + static_cast<std::size_t>(config.max_concurrent));
        std::vector<std::future<std::vector<LogitVector>>> inflight;
        for (std::size_t i = group; i < end; ++i) {
            inflight.push_back(std::async(std::launch::async, [&, i] {
                return detail::fetch_batch(config, batches[i], i);
            }));
        }
        for (std::size_t i = group; i < end; ++i) results[i] = inflight[i - group].get();
    }

    std::vector<EmotionVector> out;
    out.reserve(records.size());
    for (const auto& batch : results)
        for (const auto& logits : batch) out.push_back(temperature_softmax(logits, config.delta));
    return out;
}

}  // namespace affectflow::annotate
