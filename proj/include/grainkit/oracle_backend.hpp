#pragma once

#include "grainkit/backend.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>

namespace grainkit {

/// Error modes injected into ground-truth masks. All probabilities are per
/// returned mask.
struct CorruptionConfig {
    double p_merge_low_contrast = 0.0;
    double p_split_texture = 0.0;
    double p_miss = 0.0;
    int boundary_jitter = 0; ///< px
    bool asymmetric_merge = false;
    double predicted_iou_noise = 0.0; ///< stddev added to the true IoU
    uint64_t rng_seed = 0;
    /// When false, a foreground point on a boundary pixel is an error rather
    /// than an ambiguous prompt.
    bool resolve_ambiguity = true;

    void validate() const;
};

/// Per-labelmap lookup tables: grain masks and adjacency across boundaries.
class OracleIndex {
  public:
    /// Grains closer than this (Chebyshev px) count as adjacent.
    static constexpr int kAdjacencyRadius = 3;

    explicit OracleIndex(LabelMap labels);

    const LabelMap& labels() const { return labels_; }
    int grain_count() const { return static_cast<int>(grains_.size()); }
    const BitMask& grain(int id) const { return grains_[id - 1]; }
    const std::vector<int>& neighbors(int id) const { return neighbors_[id - 1]; }
    /// Neighbor with the largest area (ties: lower id), or 0 if isolated.
    int largest_neighbor(int id) const;
    /// A and B together with the boundary pixels lying between them.
    BitMask merged(int a, int b) const;

  private:
    LabelMap labels_;
    std::vector<BitMask> grains_;
    std::vector<std::vector<int>> neighbors_;
};

/// Ground-truth driven prediction with configurable corruption. `salt`
/// extends the RNG key (backends pass the image id).
std::vector<ScoredMask> oracle_predict(const OracleIndex& index, const Prompt& prompt, const CorruptionConfig& cfg,
                                       const std::string& salt = "");
std::vector<ScoredMask> oracle_predict(const LabelMap& lm, const Prompt& prompt, const CorruptionConfig& cfg);

class OracleBackend : public Backend {
  public:
    OracleBackend(LabelMap labels, CorruptionConfig cfg);

    std::string id() const override { return "oracle"; }
    std::vector<ScoredMask> predict(const ImageRef& image, const Prompt& prompt) override;

    const CorruptionConfig& config() const { return cfg_; }
    const OracleIndex& full_index() const { return *full_; }

  private:
    std::shared_ptr<const OracleIndex> index_for(const ImageRef& image);

    CorruptionConfig cfg_;
    std::shared_ptr<const OracleIndex> full_;
    std::mutex crop_mutex_;
    std::map<std::string, std::shared_ptr<const OracleIndex>> crops_;
};

} // namespace grainkit
