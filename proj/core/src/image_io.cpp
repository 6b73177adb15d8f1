#include "shiftmae/image_io.hpp"

#include "shiftmae/errors.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

namespace shiftmae {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for reading: " + path.string());
    return in;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    // c is the single whitespace terminating the token (or EOF); it is consumed.
    if (tok.empty()) throw HeaderError("unexpected end of image header");
    return tok;
}

int parse_positive(const std::string& tok, const char* what) {
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
        throw HeaderError(std::string("malformed ") + what + " in image header: '" + tok + "'");
    }
    long v = 0;
    try {
        v = std::stol(tok);
    } catch (const std::exception&) {
        throw HeaderError(std::string("out-of-range ") + what + " in image header");
    }
    if (v <= 0 || v > (1 << 16)) throw HeaderError(std::string("invalid ") + what + " " + tok);
    return static_cast<int>(v);
}

}  // namespace

std::uint8_t quantize_u8(float v) {
    const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
    auto out = open_out(path);
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    std::vector<std::uint8_t> bytes(image.size());
    std::transform(image.data.begin(), image.data.end(), bytes.begin(), quantize_u8);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

void write_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
    auto out = open_out(path);
    out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
    std::vector<std::uint8_t> bytes(mask.size());
    std::transform(mask.data.begin(), mask.data.end(), bytes.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

Raster<std::uint8_t> read_pgm_bytes(std::istream& in) {
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '5') throw HeaderError("not a binary PGM (P5)");
    const int c = in.peek();
    if (c == EOF || !std::isspace(c)) throw HeaderError("malformed PGM magic");
    const int width = parse_positive(header_token(in), "width");
    const int height = parse_positive(header_token(in), "height");
    const int maxval = parse_positive(header_token(in), "maxval");
    if (maxval != 255) throw HeaderError("unsupported PGM maxval " + std::to_string(maxval) + " (expected 255)");
    Raster<std::uint8_t> r(height, width);
    in.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.size()));
    if (static_cast<std::size_t>(in.gcount()) != r.size()) throw TruncatedError("truncated PGM pixel data");
    return r;
}

Raster<std::uint8_t> read_pgm_bytes(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_pgm_bytes(in);
}

Image read_pgm(const std::filesystem::path& path) {
    const auto bytes = read_pgm_bytes(path);
    Image img(bytes.height, bytes.width);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = static_cast<float>(bytes.data[i]) / 255.0f;
    return img;
}

BinaryMask read_pgm_mask(const std::filesystem::path& path) {
    auto bytes = read_pgm_bytes(path);
    for (auto& v : bytes.data) v = v >= 128 ? 1 : 0;
    return bytes;
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
    static_assert(std::endian::native == std::endian::little, "PFM writer assumes a little-endian host");
    auto out = open_out(path);
    out << "Pf\n" << image.width << ' ' << image.height << "\n-1.0\n";
    for (int y = image.height - 1; y >= 0; --y) {
        out.write(reinterpret_cast<const char*>(&image.data[static_cast<std::size_t>(y) * image.width]),
                  static_cast<std::streamsize>(sizeof(float) * image.width));
    }
    if (!out) throw DataError("write failed: " + path.string());
}

Image read_pfm(std::istream& in) {
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != 'f') throw HeaderError("not a grayscale PFM (Pf)");
    const int c = in.peek();
    if (c == EOF || !std::isspace(c)) throw HeaderError("malformed PFM magic");
    const int width = parse_positive(header_token(in), "width");
    const int height = parse_positive(header_token(in), "height");
    const auto scale_tok = header_token(in);
    double scale = 0.0;
    try {
        std::size_t used = 0;
        scale = std::stod(scale_tok, &used);
        if (used != scale_tok.size()) throw HeaderError("malformed PFM scale");
    } catch (const std::invalid_argument&) {
        throw HeaderError("malformed PFM scale '" + scale_tok + "'");
    } catch (const std::out_of_range&) {
        throw HeaderError("malformed PFM scale '" + scale_tok + "'");
    }
    if (scale == 0.0 || !std::isfinite(scale)) throw HeaderError("PFM scale must be nonzero");
    const bool big_endian = scale > 0.0;
    Image img(height, width);
    for (int y = height - 1; y >= 0; --y) {
        auto* row = reinterpret_cast<char*>(&img.data[static_cast<std::size_t>(y) * width]);
        in.read(row, static_cast<std::streamsize>(sizeof(float) * width));
        if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * width)) {
            throw TruncatedError("truncated PFM pixel data");
        }
    }
    if (big_endian != (std::endian::native == std::endian::big)) {
        for (auto& v : img.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            bits = ((bits & 0xFF) << 24) | ((bits & 0xFF00) << 8) | ((bits >> 8) & 0xFF00) | (bits >> 24);
            std::memcpy(&v, &bits, 4);
        }
    }
    return img;
}

Image read_pfm(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_pfm(in);
}

}  // namespace shiftmae
