#include "data/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace sfd {

namespace {

constexpr uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t read_u32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[5], const std::vector<uint8_t>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_u32(out, crc);
}

}  // namespace

std::vector<uint8_t> png_encode(const Image& img) {
    if (img.h <= 0 || img.w <= 0 || (img.ch != 1 && img.ch != 3))
        throw ContractError(cat("png_encode: bad image ", img.h, "x", img.w, "x", img.ch));

    // raw scanlines, each with a leading filter byte 0
    const size_t stride = static_cast<size_t>(img.w) * img.ch;
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.h) * (stride + 1));
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);
        const uint8_t* row = img.px.data() + static_cast<size_t>(y) * stride;
        raw.insert(raw.end(), row, row + stride);
    }
    uLongf clen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> compressed(clen);
    if (compress2(compressed.data(), &clen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("png_encode: deflate failed");
    compressed.resize(clen);

    std::vector<uint8_t> out(kSignature, kSignature + 8);
    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.w));
    put_u32(ihdr, static_cast<uint32_t>(img.h));
    ihdr.push_back(8);                                    // bit depth
    ihdr.push_back(img.ch == 3 ? 2 : 0);                  // color type
    ihdr.push_back(0);                                    // compression
    ihdr.push_back(0);                                    // filter
    ihdr.push_back(0);                                    // interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", compressed);
    put_chunk(out, "IEND", {});
    return out;
}

Image png_decode(const std::vector<uint8_t>& bytes, const std::string& origin) {
    auto fail = [&origin](const std::string& why) -> ParseError {
        return ParseError(cat("png ", origin, ": ", why));
    };
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw fail("bad signature");

    int w = 0, h = 0, ch = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    bool saw_end = false;
    while (pos + 12 <= bytes.size() && !saw_end) {
        const uint32_t len = read_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw fail("truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* data = bytes.data() + pos + 8;
        const uint32_t stored_crc = read_u32(data + len);
        const uint32_t crc = static_cast<uint32_t>(
            crc32(0L, bytes.data() + pos + 4, static_cast<uInt>(len + 4)));
        if (crc != stored_crc) throw fail("chunk crc mismatch");
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw fail("bad IHDR length");
            w = static_cast<int>(read_u32(data));
            h = static_cast<int>(read_u32(data + 4));
            const int depth = data[8], color = data[9], interlace = data[12];
            if (depth != 8) throw fail(cat("unsupported bit depth ", depth));
            if (color == 0)
                ch = 1;
            else if (color == 2)
                ch = 3;
            else
                throw fail(cat("unsupported color type ", color));
            if (interlace != 0) throw fail("interlaced images unsupported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_end = true;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0 || ch == 0) throw fail("missing IHDR");
    if (!saw_end) throw fail("missing IEND");

    const size_t stride = static_cast<size_t>(w) * ch;
    std::vector<uint8_t> raw(static_cast<size_t>(h) * (stride + 1));
    uLongf rlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rlen, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        rlen != raw.size())
        throw fail("inflate failed or size mismatch");

    Image img(h, w, ch);
    for (int y = 0; y < h; ++y) {
        const uint8_t* line = raw.data() + static_cast<size_t>(y) * (stride + 1);
        if (line[0] != 0) throw fail(cat("unsupported filter type ", int(line[0])));
        std::memcpy(img.px.data() + static_cast<size_t>(y) * stride, line + 1, stride);
    }
    return img;
}

void png_write(const std::string& path, const Image& img) {
    const std::vector<uint8_t> bytes = png_encode(img);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(cat("cannot open for write: ", path));
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError(cat("short write: ", path));
}

Image png_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(cat("cannot open for read: ", path));
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return png_decode(bytes, path);
}

}  // namespace sfd
