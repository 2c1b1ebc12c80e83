#pragma once

#include "grainkit/backend.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>

namespace grainkit {

/// Append-only directory of recorded responses:
/// <root>/<image_digest>/<prompt_digest>.json, each record carrying the
/// SHA-256 of its serialized response.
class ReplayCache {
  public:
    explicit ReplayCache(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path record_path(const std::string& image_digest, const std::string& prompt_digest) const;

    /// Recorded response, or nullopt on a miss. Throws CacheCorrupt when the
    /// stored digest does not match the stored response.
    std::optional<std::vector<ScoredMask>> lookup(const std::string& image_digest,
                                                  const std::string& prompt_digest) const;
    void store(const std::string& image_digest, const std::string& prompt_digest,
               const std::vector<ScoredMask>& response);

  private:
    std::filesystem::path root_;
    mutable std::shared_mutex mutex_;
};

enum class ReplayMode { ReplayOnly, Record };

/// Serves predictions from a ReplayCache. In Record mode a miss is forwarded
/// to the live backend and persisted before being returned; in ReplayOnly mode
/// a miss raises CacheMiss and no live backend is ever touched.
class ReplayBackend : public Backend {
  public:
    ReplayBackend(std::filesystem::path root, ReplayMode mode, std::shared_ptr<Backend> live = nullptr);

    std::string id() const override { return "replay"; }
    std::vector<ScoredMask> predict(const ImageRef& image, const Prompt& prompt) override;

    ReplayCache& cache() { return cache_; }

  private:
    ReplayCache cache_;
    ReplayMode mode_;
    std::shared_ptr<Backend> live_;
};

} // namespace grainkit
