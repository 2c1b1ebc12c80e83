#include "grainkit/replay_backend.hpp"

#include "grainkit/digest.hpp"
#include "grainkit/error.hpp"

#include <fstream>
#include <mutex>
#include <sstream>

namespace grainkit {

using nlohmann::json;

ReplayCache::ReplayCache(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path ReplayCache::record_path(const std::string& image_digest,
                                               const std::string& prompt_digest) const {
    return root_ / image_digest / (prompt_digest + ".json");
}

std::optional<std::vector<ScoredMask>> ReplayCache::lookup(const std::string& image_digest,
                                                           const std::string& prompt_digest) const {
    std::shared_lock lock(mutex_);
    const auto path = record_path(image_digest, prompt_digest);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    json record;
    try {
        record = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CacheCorrupt, path.string() + ": " + e.what());
    }
    if (!record.contains("response") || !record.contains("content_digest"))
        throw Error(ErrorKind::CacheCorrupt, path.string() + ": missing fields");
    const std::string body = record["response"].dump();
    if (sha256_hex(body) != record["content_digest"].get<std::string>())
        throw Error(ErrorKind::CacheCorrupt, path.string() + ": content digest mismatch");
    try {
        return scored_masks_from_json(record["response"]);
    } catch (const Error& e) {
        throw Error(ErrorKind::CacheCorrupt, path.string() + ": " + e.what());
    }
}

void ReplayCache::store(const std::string& image_digest, const std::string& prompt_digest,
                        const std::vector<ScoredMask>& response) {
    const json body = scored_masks_to_json(response);
    json record{{"image_digest", image_digest},
                {"prompt_digest", prompt_digest},
                {"response", body},
                {"content_digest", sha256_hex(body.dump())}};
    std::unique_lock lock(mutex_);
    const auto path = record_path(image_digest, prompt_digest);
    if (std::filesystem::exists(path)) return; // append-only
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + path.parent_path().string());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp);
        out << record.dump() << '\n';
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot rename " + tmp);
}

ReplayBackend::ReplayBackend(std::filesystem::path root, ReplayMode mode, std::shared_ptr<Backend> live)
    : cache_(std::move(root)), mode_(mode), live_(std::move(live)) {
    if (mode_ == ReplayMode::Record && !live_)
        throw Error(ErrorKind::InvalidConfig, "record mode needs a live backend");
}

std::vector<ScoredMask> ReplayBackend::predict(const ImageRef& image, const Prompt& prompt) {
    validate_prompt(prompt, image.width(), image.height());
    const std::string pd = prompt_digest(prompt);
    if (auto hit = cache_.lookup(image.image_id, pd)) return std::move(*hit);
    if (mode_ == ReplayMode::ReplayOnly)
        throw Error(ErrorKind::CacheMiss, "no record for image " + image.image_id + " prompt " + pd);
    auto response = live_->predict(image, prompt);
    cache_.store(image.image_id, pd, response);
    // Serve what a later replay would see.
    return *cache_.lookup(image.image_id, pd);
}

} // namespace grainkit
