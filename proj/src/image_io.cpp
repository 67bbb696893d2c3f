#include "vamkit/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "vamkit/error.hpp"

namespace vamkit {

namespace {

unsigned char quantize(float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::string encode_pnm(const Tensor& t, std::size_t channels, const char* magic) {
    const Shape s = t.shape();
    if (s.n != 1 || s.c != channels) throw Error(std::string(magic) + " encoder: unexpected shape " + s.str());
    std::string out = std::string(magic) + "\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
    out.reserve(out.size() + s.count());
    for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j)
            for (std::size_t c = 0; c < channels; ++c) out.push_back(static_cast<char>(quantize(t.at(0, c, i, j))));
    return out;
}

// Parses the next whitespace-delimited header integer; comments start with '#'.
std::size_t header_int(std::string_view bytes, std::size_t& pos, std::string_view source) {
    for (;;) {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (pos < bytes.size() && bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    std::size_t value = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
        value = value * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
    if (pos == start) throw IoError(std::string(source) + ": malformed header");
    return value;
}

Tensor decode_pnm(std::string_view bytes, std::string_view source, std::size_t channels, std::string_view magic) {
    if (bytes.size() < 2 || bytes.substr(0, 2) != magic)
        throw IoError(std::string(source) + ": expected " + std::string(magic) + " image");
    std::size_t pos = 2;
    const std::size_t w = header_int(bytes, pos, source);
    const std::size_t h = header_int(bytes, pos, source);
    const std::size_t maxval = header_int(bytes, pos, source);
    if (maxval != 255) throw IoError(std::string(source) + ": only 8-bit images are supported");
    if (w == 0 || h == 0) throw IoError(std::string(source) + ": zero image extent");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw IoError(std::string(source) + ": short read in header");
    ++pos;
    const std::size_t need = w * h * channels;
    if (bytes.size() - pos < need) throw IoError(std::string(source) + ": short read in pixel data");
    Tensor t(Shape{1, channels, h, w});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
            for (std::size_t c = 0; c < channels; ++c)
                t.at(0, c, i, j) = static_cast<float>(static_cast<unsigned char>(bytes[pos++])) / 255.0f;
    return t;
}

}  // namespace

std::string encode_ppm(const Tensor& image) { return encode_pnm(image, 3, "P6"); }
std::string encode_pgm(const Tensor& mask) { return encode_pnm(mask, 1, "P5"); }

Tensor decode_ppm(std::string_view bytes, std::string_view source) { return decode_pnm(bytes, source, 3, "P6"); }
Tensor decode_pgm(std::string_view bytes, std::string_view source) { return decode_pnm(bytes, source, 1, "P5"); }

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace vamkit
