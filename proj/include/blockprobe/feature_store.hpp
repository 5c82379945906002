#pragma once

#include "embedding.hpp"
#include "error.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

/**
 * @file feature_store.hpp
 *
 * @brief Binary container for an embedding matrix.
 *
 * Layout, all little-endian:
 *
 *     offset  size  field
 *     0       4     magic "VAFS"
 *     4       4     version (u32, = 1)
 *     8       1     block index (u8)
 *     9       4     dim (u32)
 *     13      8     count (u64)
 *     21      ...   count records of
 *                     u16 id length, id bytes (UTF-8),
 *                     u16 label length, label bytes (UTF-8),
 *                     dim float32 values
 *
 * See docs/feature_store_format.md for the full reference.
 */

namespace blockprobe {

inline constexpr std::array<char, 4> store_magic{'V', 'A', 'F', 'S'};
inline constexpr std::uint32_t store_version = 1;
inline constexpr std::size_t store_header_size = 4 + 4 + 1 + 4 + 8;

namespace detail {

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) {
        auto c = static_cast<const unsigned char*>(p);
        buffer_.insert(buffer_.end(), c, c + n);
    }

    template <typename Int_>
    void little(Int_ v) {
        for (std::size_t i = 0; i < sizeof(Int_); ++i) {
            buffer_.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
        }
    }

    void f32(float v) { little(std::bit_cast<std::uint32_t>(v)); }

    void text(const std::string& s, const char* what) {
        if (s.size() > 0xffff) {
            throw InvalidValueError(std::string(what) + " longer than 65535 bytes");
        }
        little(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }

    std::vector<unsigned char>& buffer() { return buffer_; }

private:
    std::vector<unsigned char> buffer_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const unsigned char> data) : data_(data) {}

    void need(std::size_t n, const char* what) {
        if (data_.size() - pos_ < n) {
            throw TruncationError("file ends inside " + std::string(what) + " at byte " + std::to_string(pos_));
        }
    }

    template <typename Int_>
    Int_ little(const char* what) {
        need(sizeof(Int_), what);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(Int_); ++i) {
            v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        }
        pos_ += sizeof(Int_);
        return static_cast<Int_>(v);
    }

    float f32(const char* what) { return std::bit_cast<float>(little<std::uint32_t>(what)); }

    std::string text(const char* what) {
        auto len = little<std::uint16_t>(what);
        need(len, what);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), len);
        pos_ += len;
        return s;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::span<const unsigned char> data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/**
 * Serializes `matrix` to the store layout.
 * The matrix is validated first; non-finite values and duplicate ids are refused.
 */
inline std::vector<unsigned char> encode_store(const EmbeddingMatrix& matrix) {
    matrix.validate();
    if (matrix.block_index < 0 || matrix.block_index > 255) {
        throw InvalidValueError("block index " + std::to_string(matrix.block_index) + " does not fit in u8");
    }
    if (matrix.dim > 0xffffffffULL) {
        throw InvalidValueError("dim does not fit in u32");
    }

    detail::ByteWriter w;
    w.bytes(store_magic.data(), store_magic.size());
    w.little(store_version);
    w.little(static_cast<std::uint8_t>(matrix.block_index));
    w.little(static_cast<std::uint32_t>(matrix.dim));
    w.little(static_cast<std::uint64_t>(matrix.rows()));
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        w.text(matrix.ids[r], "image id");
        w.text(matrix.labels[r], "label");
        for (float v : matrix.row(r)) {
            w.f32(v);
        }
    }
    return std::move(w.buffer());
}

/**
 * Parses and fully validates a store image. Nothing is returned unless the
 * magic, version, every record length, id uniqueness and value finiteness
 * all check out.
 */
inline EmbeddingMatrix decode_store(std::span<const unsigned char> data) {
    detail::ByteReader r(data);
    r.need(store_magic.size(), "magic");
    if (std::memcmp(data.data(), store_magic.data(), store_magic.size()) != 0) {
        throw FormatError("bad magic: not a feature store file");
    }
    for (std::size_t i = 0; i < store_magic.size(); ++i) {
        r.little<std::uint8_t>("magic");
    }
    auto version = r.little<std::uint32_t>("version");
    if (version != store_version) {
        throw VersionError("unsupported store version " + std::to_string(version));
    }
    const int block = r.little<std::uint8_t>("block index");
    const std::size_t dim = r.little<std::uint32_t>("dim");
    EmbeddingMatrix out(block, dim);
    auto count = r.little<std::uint64_t>("count");

    // Each record takes at least 4 + 4*dim bytes; reject impossible counts before allocating.
    std::uint64_t min_record = 4 + 4 * static_cast<std::uint64_t>(out.dim);
    if (count > r.remaining() / min_record) {
        throw TruncationError("header declares " + std::to_string(count) + " records but only " +
                              std::to_string(r.remaining()) + " bytes follow");
    }
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        out.ids.push_back(r.text("image id"));
        out.labels.push_back(r.text("label"));
        r.need(4 * out.dim, "vector");
        for (std::size_t j = 0; j < out.dim; ++j) {
            out.values.push_back(r.f32("vector"));
        }
    }
    if (r.remaining() != 0) {
        throw FormatError(std::to_string(r.remaining()) + " trailing bytes after the last record");
    }
    out.validate();
    return out;
}

inline void write_store(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
    auto bytes = encode_store(matrix);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) {
        throw IoError("write to '" + path.string() + "' failed");
    }
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline EmbeddingMatrix read_store(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return decode_store(bytes);
}

}  // namespace blockprobe
