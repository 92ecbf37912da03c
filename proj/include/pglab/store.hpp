#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pglab/errors.hpp"
#include "pglab/network.hpp"

namespace pglab {

/// Load-time failure with a distinct reason per malformed-file class.
struct StoreFormatError : IoError {
    enum class Kind { kBadMagic, kBadVersion, kTruncated, kChecksum };
    StoreFormatError(Kind kind, const std::string& what) : IoError(what), kind(kind) {}
    Kind kind;
};

struct LayerShape {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    bool has_bias = false;

    bool operator==(const LayerShape&) const = default;
};

struct ChainMeta {
    double accept_rate = 0.0;
    int warmup_steps = 0;
    std::string init_kind;
    bool failed = false;
};

/// Multi-chain archive of flat weight samples.
///
/// On disk (all integers little-endian):
///   magic "BNNS" | u32 version=1 | u32 L | per layer {u32 rows, u32 cols, u8 has_bias}
///   | u32 K | u64 S | u64 seed | 32-byte config hash
///   | payload: K*S*d doubles, chain-major then sample-major, each sample in the
///     flat layer-major layout of WeightVector
///   | u64 FNV-1a checksum of the payload bytes.
///
/// Chain metadata (acceptance rates etc.) is runtime-only and is persisted
/// separately by the CLI, not in this format.
class SampleStore {
public:
    SampleStore() = default;
    SampleStore(std::vector<LayerShape> shapes, int n_chains, std::int64_t samples_per_chain,
                std::uint64_t seed, std::array<std::uint8_t, 32> config_hash);

    static std::vector<LayerShape> shapes_of(const NetworkSpec& spec);

    int dim() const { return dim_; }
    int n_chains() const { return n_chains_; }
    std::int64_t samples_per_chain() const { return samples_per_chain_; }
    std::int64_t total_samples() const { return n_chains_ * samples_per_chain_; }
    std::uint64_t seed() const { return seed_; }
    const std::array<std::uint8_t, 32>& config_hash() const { return config_hash_; }
    const std::vector<LayerShape>& shapes() const { return shapes_; }

    bool matches(const NetworkSpec& spec) const { return shapes_ == shapes_of(spec); }

    Eigen::Map<const Eigen::VectorXd> sample(int chain, std::int64_t s) const {
        return {payload_.data() + offset(chain, s), dim_};
    }
    void set_sample(int chain, std::int64_t s, const Eigen::VectorXd& flat);
    WeightVector sample_weights(const NetworkSpec& spec, int chain, std::int64_t s) const;

    /// Start of the chain's disjoint payload region (samples_per_chain * dim doubles).
    double* chain_data(int chain) { return payload_.data() + offset(chain, 0); }

    std::vector<ChainMeta>& chain_meta() { return chain_meta_; }
    const std::vector<ChainMeta>& chain_meta() const { return chain_meta_; }

    const std::vector<double>& payload() const { return payload_; }

    void save(const std::filesystem::path& path) const;
    static SampleStore load(const std::filesystem::path& path);

    /// Header byte count implied by the format (handy for size checks).
    std::size_t header_bytes() const { return 12 + 9 * shapes_.size() + 4 + 8 + 8 + 32; }

    bool same_contents(const SampleStore& other) const;

private:
    std::int64_t offset(int chain, std::int64_t s) const {
        return (static_cast<std::int64_t>(chain) * samples_per_chain_ + s) * dim_;
    }

    std::vector<LayerShape> shapes_;
    int n_chains_ = 0;
    std::int64_t samples_per_chain_ = 0;
    std::uint64_t seed_ = 0;
    std::array<std::uint8_t, 32> config_hash_{};
    int dim_ = 0;
    std::vector<double> payload_;
    std::vector<ChainMeta> chain_meta_;
};

}  // namespace pglab
