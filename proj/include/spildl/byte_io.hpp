#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spildl {

using Bytes = std::vector<std::uint8_t>;

/// Raised on malformed binary input (truncation, bad tags, checksum or
/// version mismatches).
class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// CRC-32 (IEEE 802.3 polynomial), as computed by zlib.
std::uint32_t crc32(std::span<const std::uint8_t> data);

/// Maps IEEE-754 bits to an unsigned key whose natural order matches the
/// numeric order of non-NaN doubles (with -0 < +0).
constexpr std::uint64_t ordered_bits(double v) noexcept {
    const auto b = std::bit_cast<std::uint64_t>(v);
    return (b >> 63) ? ~b : (b | (std::uint64_t{1} << 63));
}

/// Big-endian append-only writer.
class ByteWriter {
public:
    ByteWriter() = default;
    explicit ByteWriter(Bytes& out) : out_(&out) {}

    void u8(std::uint8_t v) { buf().push_back(v); }
    void u16(std::uint16_t v) { put_be(v); }
    void u32(std::uint32_t v) { put_be(v); }
    void u64(std::uint64_t v) { put_be(v); }
    void f64(double v) { put_be(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::span<const std::uint8_t> b) { buf().insert(buf().end(), b.begin(), b.end()); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf().insert(buf().end(), s.begin(), s.end());
    }

    Bytes& buf() { return out_ ? *out_ : own_; }
    Bytes take() { return std::move(buf()); }

private:
    template <class T>
    void put_be(T v) {
        for (int shift = (sizeof(T) - 1) * 8; shift >= 0; shift -= 8)
            buf().push_back(static_cast<std::uint8_t>(v >> shift));
    }

    Bytes* out_ = nullptr;
    Bytes own_;
};

/// Big-endian cursor over a byte span. Every read throws DecodeError on
/// truncation.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return get_be<std::uint8_t>(); }
    std::uint16_t u16() { return get_be<std::uint16_t>(); }
    std::uint32_t u32() { return get_be<std::uint32_t>(); }
    std::uint64_t u64() { return get_be<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(get_be<std::uint64_t>()); }

    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::string str() {
        const auto n = u32();
        auto s = bytes(n);
        return std::string(s.begin(), s.end());
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n)
            throw DecodeError("truncated input at byte " + std::to_string(pos_));
    }

    template <class T>
    T get_be() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v = static_cast<T>((v << 8) | data_[pos_ + i]);
        pos_ += sizeof(T);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace spildl
