#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace pglab {

/// SHA-256 over a byte stream; used to content-address run configurations.
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t len);
    void update(std::string_view s) { update(s.data(), s.size()); }
    std::array<std::uint8_t, 32> finish();

    static std::array<std::uint8_t, 32> digest(std::string_view s);

private:
    void process_block(const std::uint8_t* block);

    std::array<std::uint32_t, 8> state_;
    std::uint64_t total_len_ = 0;
    std::array<std::uint8_t, 64> buffer_{};
    std::size_t buffer_len_ = 0;
};

std::string hex_string(const std::uint8_t* data, std::size_t len);

inline std::string hex_string(const std::array<std::uint8_t, 32>& d) {
    return hex_string(d.data(), d.size());
}

std::uint64_t fnv1a64_bytes(const void* data, std::size_t len);

}  // namespace pglab
