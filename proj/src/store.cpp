#include "pglab/store.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "pglab/hash.hpp"

namespace pglab {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

struct Reader {
    std::ifstream in;
    explicit Reader(const std::filesystem::path& path)
        : in(path, std::ios::binary) {
        if (!in) throw IoError("cannot open " + path.string());
    }
    void bytes(void* dst, std::size_t n) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw StoreFormatError(StoreFormatError::Kind::kTruncated,
                                   "file ends inside a field");
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
               std::uint32_t(b[3]) << 24;
    }
    std::uint64_t u64() {
        std::uint8_t b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }
};

static_assert(sizeof(double) == 8);

}  // namespace

SampleStore::SampleStore(std::vector<LayerShape> shapes, int n_chains,
                         std::int64_t samples_per_chain, std::uint64_t seed,
                         std::array<std::uint8_t, 32> config_hash)
    : shapes_(std::move(shapes)),
      n_chains_(n_chains),
      samples_per_chain_(samples_per_chain),
      seed_(seed),
      config_hash_(config_hash) {
    if (n_chains_ < 1 || samples_per_chain_ < 1)
        throw ShapeError("store needs at least one chain and one sample");
    for (const auto& s : shapes_) dim_ += static_cast<int>(s.rows * s.cols + (s.has_bias ? s.rows : 0));
    if (dim_ == 0) throw ShapeError("store dimension is zero");
    payload_.assign(static_cast<std::size_t>(total_samples()) * dim_, 0.0);
    chain_meta_.resize(static_cast<std::size_t>(n_chains_));
}

std::vector<LayerShape> SampleStore::shapes_of(const NetworkSpec& spec) {
    std::vector<LayerShape> out;
    for (int l = 0; l < spec.n_affine(); ++l)
        out.push_back({static_cast<std::uint32_t>(spec.layer_out(l)),
                       static_cast<std::uint32_t>(spec.layer_in(l)), spec.has_bias(l)});
    return out;
}

void SampleStore::set_sample(int chain, std::int64_t s, const Eigen::VectorXd& flat) {
    if (flat.size() != dim_)
        throw ShapeError("sample has " + std::to_string(flat.size()) + " entries, store holds " +
                         std::to_string(dim_));
    std::memcpy(payload_.data() + offset(chain, s), flat.data(), sizeof(double) * dim_);
}

WeightVector SampleStore::sample_weights(const NetworkSpec& spec, int chain,
                                         std::int64_t s) const {
    if (!matches(spec)) throw ShapeError("store shapes do not match the network");
    Eigen::VectorXd flat = sample(chain, s);
    return WeightVector::from_flat(spec, flat);
}

void SampleStore::save(const std::filesystem::path& path) const {
    std::string header;
    header.reserve(header_bytes());
    header += "BNNS";
    put_u32(header, 1);
    put_u32(header, static_cast<std::uint32_t>(shapes_.size()));
    for (const auto& s : shapes_) {
        put_u32(header, s.rows);
        put_u32(header, s.cols);
        header.push_back(s.has_bias ? '\x01' : '\x00');
    }
    put_u32(header, static_cast<std::uint32_t>(n_chains_));
    put_u64(header, static_cast<std::uint64_t>(samples_per_chain_));
    put_u64(header, seed_);
    header.append(reinterpret_cast<const char*>(config_hash_.data()), config_hash_.size());

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    const std::size_t payload_bytes = payload_.size() * sizeof(double);
    std::uint64_t checksum;
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(payload_.data()),
                  static_cast<std::streamsize>(payload_bytes));
        checksum = fnv1a64_bytes(payload_.data(), payload_bytes);
    } else {
        std::string buf;
        buf.reserve(payload_bytes);
        for (double v : payload_) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_u64(buf, bits);
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        checksum = fnv1a64_bytes(buf.data(), buf.size());
    }
    std::string tail;
    put_u64(tail, checksum);
    out.write(tail.data(), 8);
    if (!out) throw IoError("write failed for " + path.string());
}

SampleStore SampleStore::load(const std::filesystem::path& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "BNNS", 4) != 0)
        throw StoreFormatError(StoreFormatError::Kind::kBadMagic, "not a BNNS store");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw StoreFormatError(StoreFormatError::Kind::kBadVersion,
                               "unsupported version " + std::to_string(version));
    const std::uint32_t n_layers = r.u32();
    std::vector<LayerShape> shapes(n_layers);
    for (auto& s : shapes) {
        s.rows = r.u32();
        s.cols = r.u32();
        std::uint8_t flag;
        r.bytes(&flag, 1);
        s.has_bias = flag != 0;
    }
    const std::uint32_t k = r.u32();
    const std::uint64_t spc = r.u64();
    const std::uint64_t seed = r.u64();
    std::array<std::uint8_t, 32> hash;
    r.bytes(hash.data(), hash.size());

    SampleStore store(std::move(shapes), static_cast<int>(k), static_cast<std::int64_t>(spc),
                      seed, hash);
    const std::size_t payload_bytes = store.payload_.size() * sizeof(double);
    std::uint64_t checksum;
    if constexpr (std::endian::native == std::endian::little) {
        r.bytes(store.payload_.data(), payload_bytes);
        checksum = fnv1a64_bytes(store.payload_.data(), payload_bytes);
    } else {
        std::vector<std::uint8_t> buf(payload_bytes);
        r.bytes(buf.data(), payload_bytes);
        checksum = fnv1a64_bytes(buf.data(), buf.size());
        for (std::size_t i = 0; i < store.payload_.size(); ++i) {
            std::uint64_t bits = 0;
            for (int j = 0; j < 8; ++j) bits |= std::uint64_t(buf[8 * i + j]) << (8 * j);
            std::memcpy(&store.payload_[i], &bits, 8);
        }
    }
    const std::uint64_t stored = r.u64();
    if (stored != checksum)
        throw StoreFormatError(StoreFormatError::Kind::kChecksum, "payload checksum mismatch");
    char extra;
    r.in.read(&extra, 1);
    if (r.in.gcount() != 0) throw IoError("trailing bytes after checksum in " + path.string());
    return store;
}

bool SampleStore::same_contents(const SampleStore& other) const {
    return shapes_ == other.shapes_ && n_chains_ == other.n_chains_ &&
           samples_per_chain_ == other.samples_per_chain_ && seed_ == other.seed_ &&
           config_hash_ == other.config_hash_ &&
           std::memcmp(payload_.data(), other.payload_.data(),
                       payload_.size() * sizeof(double)) == 0;
}

}  // namespace pglab
