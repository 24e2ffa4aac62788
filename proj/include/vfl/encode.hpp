#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

#include "vfl/bytes.hpp"

namespace vfl {

// Canonical binary encoding shared by every signed or hashed structure:
// fixed field order, big-endian integers, IEEE-754 bit patterns for doubles,
// u32 length prefixes for variable-size data. Signature validity and block
// digests depend on these bytes, never on in-memory layout.
class Encoder {
  public:
    void put_u8(std::uint8_t v) { buf_.push_back(v); }

    void put_u32(std::uint32_t v) {
        for (int shift = 24; shift >= 0; shift -= 8)
            buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    }

    void put_u64(std::uint64_t v) {
        for (int shift = 56; shift >= 0; shift -= 8)
            buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    }

    void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

    void put_bytes(ByteView b) {
        put_u32(static_cast<std::uint32_t>(b.size()));
        buf_.insert(buf_.end(), b.begin(), b.end());
    }

    void put_string(std::string_view s) {
        put_bytes(ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }

    // Fixed-width field, no length prefix.
    void put_raw(ByteView b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

  private:
    Bytes buf_;
};

class DecodeError : public std::runtime_error {
  public:
    explicit DecodeError(const std::string& what) : std::runtime_error(what) {}
};

class Decoder {
  public:
    explicit Decoder(ByteView data) : data_(data) {}

    std::uint8_t get_u8() {
        need(1);
        return data_[pos_++];
    }

    std::uint32_t get_u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_++];
        return v;
    }

    std::uint64_t get_u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_++];
        return v;
    }

    double get_f64() { return std::bit_cast<double>(get_u64()); }

    Bytes get_bytes() {
        std::uint32_t n = get_u32();
        need(n);
        Bytes out(data_.begin() + pos_, data_.begin() + pos_ + n);
        pos_ += n;
        return out;
    }

    std::string get_string() {
        Bytes b = get_bytes();
        return std::string(b.begin(), b.end());
    }

    void get_raw(std::span<std::uint8_t> out) {
        need(out.size());
        std::memcpy(out.data(), data_.data() + pos_, out.size());
        pos_ += out.size();
    }

    bool exhausted() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

  private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw DecodeError("truncated input");
    }

    ByteView data_;
    std::size_t pos_ = 0;
};

}  // namespace vfl
